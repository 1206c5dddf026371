"""Run configuration.

This module handles run configuration with validation, loading from flat
JSON files or dictionaries, ``key=value`` overrides and a fingerprint
stamped into every artifact.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Iterable

# keys that locate a run on disk without changing what it computes
LOCATION_KEYS = ("output_dir", "log_file", "log_level")


@dataclass
class ModelConfig:
    """Estimator architecture."""
    width: int = 32
    use_refine: bool = True
    refine_mode: str = "deformable"


@dataclass
class LossConfig:
    """Loss coefficients and ablation switches."""
    lambda_reid: float = 5000.0
    lambda_style: float = 0.4
    lambda_face: float = 0.01
    lambda_cycle: float = 0.1
    lambda_url: float = 1e-3
    multi_view: bool = True
    use_url: bool = True
    use_cycle: bool = True
    cycle_stopgrad: bool = False
    use_intermediate: bool = True
    face_bank_size: int = 20


@dataclass
class DataConfig:
    """Dataset location and geometry."""
    dataset_dir: str = "data/mannequins"
    num_identities: int = 32
    num_views: int = 8
    image_height: int = 128
    image_width: int = 64
    texture_size: int = 128
    test_fraction: float = 0.25
    camera_jitter_deg: float = 0.0


@dataclass
class TrainConfig:
    """Optimization schedule."""
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    max_steps: int = 0
    val_every: int = 200
    checkpoint_every: int = 500


@dataclass
class RunConfig:
    """Main run configuration."""

    seed: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    # Output
    output_dir: str = "runs/default"

    # Logging
    log_file: str = "texture_refine.log"
    log_level: str = "INFO"

    def __post_init__(self):
        """Validate configuration after initialization."""
        self._validate()

    def _validate(self):
        """Validate configuration values."""
        if self.model.width < 1:
            raise ValueError("width must be at least 1")
        if self.model.refine_mode not in ("deformable", "conv"):
            raise ValueError("refine_mode must be 'deformable' or 'conv'")

        for name in ("lambda_reid", "lambda_style", "lambda_face", "lambda_cycle", "lambda_url"):
            if getattr(self.loss, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.loss.face_bank_size < 1:
            raise ValueError("face_bank_size must be at least 1")

        data = self.data
        if data.num_identities < 1:
            raise ValueError("num_identities must be at least 1")
        if data.num_views < 2:
            raise ValueError("num_views must be at least 2")
        if data.image_height % 16 or data.image_width % 16:
            raise ValueError("image_height and image_width must be multiples of 16")
        if data.texture_size % 8 or data.texture_size < 16:
            raise ValueError("texture_size must be a multiple of 8 and at least 16")
        if not 0.0 <= data.test_fraction < 1.0:
            raise ValueError("test_fraction must be in [0, 1)")
        if data.camera_jitter_deg < 0 or data.camera_jitter_deg > 45:
            raise ValueError("camera_jitter_deg must be between 0 and 45")

        train = self.train
        if train.epochs < 1 or train.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if train.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= train.beta1 < 1.0 and 0.0 <= train.beta2 < 1.0):
            raise ValueError("betas must be in [0, 1)")
        if train.max_steps < 0 or train.val_every < 0 or train.checkpoint_every < 0:
            raise ValueError("max_steps, val_every and checkpoint_every must be non-negative")

        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ValueError("log_level must be DEBUG, INFO, WARNING or ERROR")
        if self.log_file:
            log_path = os.path.abspath(self.log_file)
            if not log_path.startswith(os.path.abspath(os.getcwd())):
                logging.warning(f"Log file path outside working directory: {log_path}")

    def to_dict(self) -> Dict[str, Any]:
        """Flat dictionary, the same shape ``from_dict`` reads."""
        flat: Dict[str, Any] = {"seed": self.seed}
        for section in (self.model, self.loss, self.data, self.train):
            flat.update(asdict(section))
        flat.update(output_dir=self.output_dir, log_file=self.log_file, log_level=self.log_level)
        return flat

    def fingerprint(self) -> str:
        """First 12 hex chars of the sha256 of the canonical configuration."""
        semantic = {k: v for k, v in self.to_dict().items() if k not in LOCATION_KEYS}
        payload = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Create RunConfig from a flat dictionary.

        Args:
            data: Configuration dictionary; missing keys take defaults

        Returns:
            RunConfig instance

        Raises:
            ValueError: On unknown keys or invalid values
        """
        unknown = sorted(set(data) - set(cls().to_dict()))
        if unknown:
            raise ValueError(f"Unknown configuration keys: {', '.join(unknown)}")

        def section(kind):
            return kind(**{f.name: data[f.name] for f in fields(kind) if f.name in data})

        return cls(
            seed=data.get("seed", 1),
            model=section(ModelConfig),
            loss=section(LossConfig),
            data=section(DataConfig),
            train=section(TrainConfig),
            output_dir=data.get("output_dir", "runs/default"),
            log_file=data.get("log_file", "texture_refine.log"),
            log_level=data.get("log_level", "INFO"),
        )

    @classmethod
    def from_file(cls, filepath: str) -> "RunConfig":
        """Load configuration from JSON file.

        Args:
            filepath: Path to JSON configuration file

        Returns:
            RunConfig instance

        Raises:
            FileNotFoundError: If file doesn't exist
            json.JSONDecodeError: If file is not valid JSON
        """
        with open(filepath, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return cls.from_dict(data)

    def with_overrides(self, overrides: Iterable[str]) -> "RunConfig":
        """Apply ``key=value`` overrides; they win over the loaded values."""
        data = self.to_dict()
        for item in overrides:
            key, sep, raw = item.partition("=")
            key = key.strip().lstrip("-").replace("-", "_")
            if not sep:
                raise ValueError(f"Override '{item}' is not of the form key=value")
            if key not in data:
                raise ValueError(f"Unknown configuration key '{key}'")
            data[key] = _coerce(raw.strip(), data[key], key)
        return RunConfig.from_dict(data)


def _coerce(raw: str, current: Any, key: str) -> Any:
    """Convert an override string to the type of the current value."""
    try:
        if isinstance(current, bool):
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError as e:
        raise ValueError(f"Invalid value '{raw}' for '{key}'") from e
    return raw

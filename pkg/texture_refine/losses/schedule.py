"""Loss coefficients and the intermediate-supervision schedule."""

from dataclasses import dataclass, fields

from texture_refine.domain.errors import ContractViolation


@dataclass
class LossWeights:
    reid: float = 5000.0
    style: float = 0.4
    face: float = 0.01
    cycle: float = 0.1
    url: float = 1e-3

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ContractViolation(f"loss weight '{f.name}' must be >= 0")


def intermediate_weight(step: int, total_steps: int) -> float:
    """w_int(t) = max(0, 1 - 2t/T): linear decay reaching zero halfway through training."""
    if total_steps <= 0:
        return 0.0
    return max(0.0, 1.0 - 2.0 * step / total_steps)

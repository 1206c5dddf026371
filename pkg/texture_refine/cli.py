"""Command-line interface for texture estimation.

This module handles CLI argument parsing and the application entry point.
Every subcommand accepts ``--key=value`` configuration overrides, which win
over the values in ``--config``.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

from texture_refine.domain.errors import TextureRefineError
from texture_refine.infrastructure.config import RunConfig
from texture_refine.infrastructure.logging import setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='texture_refine',
        description='Texture estimation with deformable refinement on synthetic mannequins',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Render a dataset
  python -m texture_refine gen --n 32 --seed 1 --out data/mannequins

  # Train with the desk preset, overriding a switch
  python -m texture_refine train --config configs/desk.json --use_url=false

  # Evaluate, infer, visualize offsets
  python -m texture_refine eval --ckpt runs/desk/checkpoint --split test
  python -m texture_refine infer --ckpt runs/desk/checkpoint --image-dir data/mannequins/id_0000/views/0
  python -m texture_refine offsets --ckpt runs/desk/checkpoint --image data/mannequins/id_0000/views/0 --uv-points "0.25,0.25;0.75,0.25"

  # Ablation table over three seeds
  python -m texture_refine ablate --config configs/desk.json --dataset data/mannequins --seeds 1,2,3
        """
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='JSON config file path')
    common.add_argument('--log-file', help='Log file path')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Log level')
    common.add_argument('--quiet', '-q', action='store_true', help='Hide progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', parents=[common], help='Render a synthetic dataset')
    gen.add_argument('--n', type=int, help='Number of identities (default: num_identities)')
    gen.add_argument('--seed', type=int, help='Dataset seed (default: seed)')
    gen.add_argument('--out', help='Output directory (default: dataset_dir)')

    train = sub.add_parser('train', parents=[common], help='Train a model')
    train.add_argument('--resume', help='Checkpoint directory to resume from')

    ev = sub.add_parser('eval', parents=[common], help='Evaluate a checkpoint (SV/NV)')
    ev.add_argument('--ckpt', required=True, help='Checkpoint directory')
    ev.add_argument('--dataset', help='Dataset directory (default: the training dataset)')
    ev.add_argument('--split', default='test', choices=['train', 'test', 'all'])
    ev.add_argument('--out', help='Report directory (default: <ckpt>/eval_<split>)')

    infer = sub.add_parser('infer', parents=[common], help='Estimate the texture of one view')
    infer.add_argument('--ckpt', required=True, help='Checkpoint directory')
    infer.add_argument('--image-dir', required=True, help='View directory <id>/views/<k>')
    infer.add_argument('--out', help='Output directory (default: <ckpt>/infer/<id>_<k>)')

    offsets = sub.add_parser('offsets', parents=[common], help='Draw deformable sampling positions')
    offsets.add_argument('--ckpt', required=True, help='Checkpoint directory')
    offsets.add_argument('--image', required=True, help='View directory <id>/views/<k>')
    offsets.add_argument('--uv-points', required=True, help='UV points "u,v;u,v" in [0, 1]')
    offsets.add_argument('--out', help='Output PNG (default: <ckpt>/offsets.png)')

    ablate = sub.add_parser('ablate', parents=[common], help='Run the ablation table')
    ablate.add_argument('--dataset', help='Dataset directory (default: dataset_dir)')
    ablate.add_argument('--seeds', default='1,2,3', help='Comma-separated seeds')
    ablate.add_argument('--out', help='Output directory (default: <output_dir>/ablation)')
    return parser


def split_overrides(extra: List[str]) -> List[str]:
    """Keep ``--key=value`` tokens; anything else is an error."""
    overrides = []
    for token in extra:
        if not token.startswith('--') or '=' not in token:
            raise ValueError(f"Unrecognized argument '{token}' (overrides use --key=value)")
        overrides.append(token[2:])
    return overrides


def load_config(args: argparse.Namespace, overrides: List[str]) -> RunConfig:
    if args.config:
        try:
            config = RunConfig.from_file(args.config)
        except OSError as e:
            raise ValueError(f"Failed to load config file: {e}") from e
    else:
        config = RunConfig()
    if args.log_file:
        overrides = overrides + [f"log_file={args.log_file}"]
    if args.log_level:
        overrides = overrides + [f"log_level={args.log_level}"]
    return config.with_overrides(overrides)


def _view_label(view_dir: str) -> str:
    parts = os.path.normpath(view_dir).split(os.sep)
    return f"{parts[-3]}_{parts[-1]}" if len(parts) >= 3 else parts[-1]


def run_command(args: argparse.Namespace, config: RunConfig) -> int:
    from texture_refine.presentation.console import ConsoleDisplay
    from texture_refine.services.model_service import ModelService

    console = ConsoleDisplay()
    progress = not args.quiet
    models = ModelService()

    if args.command == 'gen':
        from texture_refine.data.dataset import render_dataset
        from texture_refine.data.generator import GeneratorSettings

        data = config.data
        settings = GeneratorSettings(
            num_views=data.num_views,
            image_height=data.image_height,
            image_width=data.image_width,
            texture_size=data.texture_size,
        )
        out = args.out or data.dataset_dir
        manifest = render_dataset(
            args.n if args.n is not None else data.num_identities,
            args.seed if args.seed is not None else config.seed,
            out,
            settings,
            test_fraction=data.test_fraction,
            progress=progress,
        )
        console.display_dataset(manifest, out)

    elif args.command == 'train':
        from texture_refine.data.dataset import Dataset
        from texture_refine.services.training_service import TrainingService

        bundle = models.build(config)
        trainer = TrainingService(bundle, Dataset(config.data.dataset_dir), models, progress=progress)
        if args.resume:
            trainer.resume(args.resume)
        result = trainer.train()
        console.display_training(result.steps, result.last_losses, result.checkpoint_dir, result.interrupted)

    elif args.command == 'eval':
        from texture_refine.services.evaluation_service import EvaluationService

        report = EvaluationService(models).evaluate_checkpoint(args.ckpt, args.dataset, args.split, args.out)
        console.display_report(report)

    elif args.command == 'infer':
        from texture_refine.services.inference_service import InferenceService

        bundle, _ = models.load(args.ckpt)
        out = args.out or os.path.join(args.ckpt, 'infer', _view_label(args.image_dir))
        result = InferenceService(bundle).run(args.image_dir, out)
        console.display_paths(f"Inference outputs ({len(result.paths)} images)", result.paths)

    elif args.command == 'offsets':
        from texture_refine.services.offsets_service import OffsetsService, parse_uv_points

        bundle, _ = models.load(args.ckpt)
        out = args.out or os.path.join(args.ckpt, 'offsets.png')
        marks = OffsetsService(bundle).run(args.image, parse_uv_points(args.uv_points), out)
        console.display_paths(f"Offsets for {len(marks)} UV points", [out])

    elif args.command == 'ablate':
        from texture_refine.services.ablation_service import AblationService

        try:
            seeds = [int(s) for s in args.seeds.split(',') if s.strip()]
        except ValueError as e:
            raise ValueError(f"Invalid --seeds '{args.seeds}'") from e
        if not seeds:
            raise ValueError("--seeds needs at least one seed")
        out = args.out or os.path.join(config.output_dir, 'ablation')
        result = AblationService(models, progress=progress).run(
            config, args.dataset or config.data.dataset_dir, seeds, out
        )
        with open(result.paths['markdown'], 'r', encoding='utf-8') as f:
            console.display_text("Ablation", f.read())

    return 0


def parse_args(argv: Optional[List[str]] = None) -> Tuple[argparse.Namespace, List[str]]:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = split_overrides(extra)
    except ValueError as e:
        parser.error(str(e))
    return args, overrides


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; exits with status 1 and a single ERROR line on failure."""
    args, overrides = parse_args(argv)
    try:
        config = load_config(args, overrides)
        setup_logging(config.log_file, config.log_level)
        logging.getLogger(__name__).debug(f"Command {args.command} with config {config.fingerprint()}")
        return run_command(args, config)
    except (TextureRefineError, ValueError, OSError) as e:
        print(f"ERROR: {type(e).__name__}: {e}")
        sys.exit(1)


if __name__ == "__main__":
    sys.exit(main())

"""
Console output for the command-line tools.

Short summaries printed after each command; detailed progress goes
through logging and tqdm.
"""

from typing import Any, Dict, Sequence

from texture_refine.domain.models import MetricReport
from texture_refine.presentation.formatters import format_report


class ConsoleDisplay:
    """Prints command summaries to stdout."""

    def __init__(self, width: int = 70):
        self.width = width

    def _banner(self, title: str):
        print("=" * self.width)
        print(title)
        print("=" * self.width)

    def display_dataset(self, manifest: Dict[str, Any], out_dir: str):
        self._banner(f"Dataset written to {out_dir}")
        print(f"  Identities: {manifest['num_identities']} x {manifest['num_views']} views")
        print(f"  Images: {manifest['image_height']}x{manifest['image_width']}, "
              f"texture {manifest['texture_size']}x{manifest['texture_size']}")
        print(f"  Split: {len(manifest['splits']['train'])} train / {len(manifest['splits']['test'])} test")
        print("=" * self.width)

    def display_training(self, steps: int, losses: Dict[str, float], checkpoint_dir: str, interrupted: bool):
        self._banner("Training interrupted" if interrupted else "Training finished")
        print(f"  Steps: {steps}")
        if losses:
            print(f"  Last total loss: {losses['total']:.6g}")
            for term, value in losses.items():
                if term != "total" and value:
                    print(f"    {term}: {value:.6g}")
        print(f"  Checkpoint: {checkpoint_dir}")
        print("=" * self.width)

    def display_report(self, report: MetricReport):
        self._banner("Evaluation")
        print(format_report(report))

    def display_paths(self, title: str, paths: Sequence[str]):
        self._banner(title)
        for path in paths:
            print(f"  {path}")
        print("=" * self.width)

    def display_text(self, title: str, text: str):
        self._banner(title)
        print(text)

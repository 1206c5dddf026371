"""
Text formatting for metric reports and ablation tables.

Markdown for humans, CSV for round trips. Values in CSV are written with
``repr`` so they parse back to the same floats.
"""

from __future__ import annotations

import csv
import io
from typing import Dict, List, Mapping, Sequence

from texture_refine.domain.models import MetricReport

ABLATION_METRICS = ("ssim_sv", "ssim_nv", "pdist_sv", "pdist_nv", "cossim_sv", "cossim_nv")


def markdown_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    lines.extend("| " + " | ".join(str(cell) for cell in row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def format_report(report: MetricReport) -> str:
    """Two-row Markdown table (SV, NV) of one report."""
    summary = report.summary()
    rows = [
        [kind.upper()] + [f"{summary[f'{name}_{kind}']:.4f}" for name in ("ssim", "psnr", "cossim", "pdist")]
        for kind in ("sv", "nv")
    ]
    table = markdown_table(["View", "SSIM", "PSNR", "CosSim", "PDist"], rows)
    return (
        f"Split '{report.split}' ({report.num_inputs} inputs, {report.num_novel} novel comparisons), "
        f"config {report.fingerprint}\n\n{table}\nInvisible-texel MSE: {report.inv_mse:.6f}\n"
    )


def ablation_columns(seeds: Sequence[int]) -> List[str]:
    columns = []
    for metric in ABLATION_METRICS:
        columns.extend(f"{metric}@s{seed}" for seed in seeds)
        columns.append(f"{metric}@mean")
    return columns


def ablation_markdown(
    table: Mapping[str, Mapping[str, float]],
    seeds: Sequence[int],
    fingerprints: Mapping[str, Sequence[str]],
) -> str:
    """Mean table followed by one table per seed."""
    sections = ["## Mean over seeds " + ", ".join(str(s) for s in seeds) + "\n"]
    headers = ["Method"] + list(ABLATION_METRICS)
    sections.append(markdown_table(
        headers,
        [[name] + [f"{values[f'{m}@mean']:.4f}" for m in ABLATION_METRICS] for name, values in table.items()],
    ))
    for seed in seeds:
        sections.append(f"\n## Seed {seed}\n")
        sections.append(markdown_table(
            headers,
            [[name] + [f"{values[f'{m}@s{seed}']:.4f}" for m in ABLATION_METRICS] for name, values in table.items()],
        ))
    sections.append("\n## Configurations\n")
    sections.append(markdown_table(
        ["Method"] + [f"seed {s}" for s in seeds],
        [[name] + list(fingerprints[name]) for name in table],
    ))
    return "".join(sections)


def ablation_csv(
    table: Mapping[str, Mapping[str, float]],
    seeds: Sequence[int],
    fingerprints: Mapping[str, Sequence[str]],
) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    columns = ablation_columns(seeds)
    writer.writerow(["method", "fingerprints"] + columns)
    for name, values in table.items():
        writer.writerow([name, ";".join(fingerprints[name])] + [repr(float(values[c])) for c in columns])
    return out.getvalue()


def parse_ablation_csv(text: str) -> Dict[str, Dict[str, float]]:
    reader = csv.DictReader(io.StringIO(text))
    table: Dict[str, Dict[str, float]] = {}
    for record in reader:
        name = record.pop("method")
        record.pop("fingerprints", None)
        table[name] = {k: float(v) for k, v in record.items()}
    return table

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from selftrain_mt.common import InputError, logger
from selftrain_mt.formatter import TsvFormatter
from selftrain_mt.pipeline.pipeline_config import METHODS
from selftrain_mt.pipeline.pipeline_manifest import RunManifest, StageRecord
from selftrain_mt.pipeline.pipeline_service import BASELINE

REPORT_HEADER = ("method", "monolingual_quantity", "pretrain_bleu", "finetune_bleu")
REPORT_TSV = "report.tsv"
REPORT_SVG = "report.svg"


@dataclass(slots=True, frozen=True)
class ReportRow:
    method: str
    quantity: int  # synthetic pairs used for pre-training; 0 for the baseline
    pretrain_bleu: Optional[float]
    finetune_bleu: float

    def cells(self) -> Tuple[str, int, Optional[float], float]:
        # unrounded, so the table carries the manifest values exactly
        return (self.method, self.quantity, self.pretrain_bleu, self.finetune_bleu)


def _sort_key(record: StageRecord) -> Tuple[int, int, int]:
    if record.method == BASELINE:
        return (0, 0, 0)
    rank = METHODS.index(record.method) + 1 if record.method in METHODS else len(METHODS) + 1
    # iterations come after single rounds; within SL+DS+QE larger kept sets first
    return (rank, record.iteration or 0, -record.cumulative_kept)


def report_rows(manifests: Sequence[RunManifest]) -> List[ReportRow]:
    """One row per stage, baseline first, later stages with the same name replacing earlier ones."""
    by_stage = {record.stage: record for manifest in manifests for record in manifest.stages}
    if not by_stage:
        raise InputError("No stages to report")
    ordered = sorted(by_stage.values(), key=_sort_key)
    return [
        ReportRow(
            method=record.stage,
            quantity=record.cumulative_kept,
            pretrain_bleu=record.pretrain_bleu,
            finetune_bleu=record.finetune_bleu,
        )
        for record in ordered
    ]


def report_tsv(rows: Sequence[ReportRow]) -> str:
    return TsvFormatter.to_tsv(REPORT_HEADER, [row.cells() for row in rows])


def plot_report(rows: Sequence[ReportRow], path: str | Path) -> Path:
    """Bars for the monolingual quantity (left axis), BLEU after pre-training and fine-tuning (right axis)."""
    path = Path(path)
    positions = list(range(len(rows)))
    fig, quantity_axis = plt.subplots(figsize=(max(6.0, 1.2 * len(rows)), 4.5))
    try:
        quantity_axis.bar(positions, [row.quantity for row in rows], color="#c9d6e3", label="monolingual sentences")
        quantity_axis.set_ylabel("monolingual sentences")
        quantity_axis.set_xticks(positions)
        quantity_axis.set_xticklabels([row.method for row in rows], rotation=30, ha="right")

        bleu_axis = quantity_axis.twinx()
        pretrain = [(i, row.pretrain_bleu) for i, row in zip(positions, rows) if row.pretrain_bleu is not None]
        if pretrain:
            bleu_axis.plot(
                [i for i, _ in pretrain], [b for _, b in pretrain], marker="s", color="#8c564b", label="pre-trained"
            )
        bleu_axis.plot(positions, [row.finetune_bleu for row in rows], marker="o", color="#1f77b4", label="fine-tuned")
        bleu_axis.set_ylabel("BLEU")

        handles, labels = quantity_axis.get_legend_handles_labels()
        more_handles, more_labels = bleu_axis.get_legend_handles_labels()
        bleu_axis.legend(handles + more_handles, labels + more_labels, loc="upper left", fontsize="small")
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path


def emit_report(manifests: Sequence[RunManifest], out_dir: str | Path) -> Tuple[Path, Path]:
    """Write report.tsv and report.svg; the TSV is also logged."""
    out_dir = Path(out_dir)
    rows = report_rows(manifests)
    table = report_tsv(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv_path = out_dir / REPORT_TSV
    tsv_path.write_text(table, encoding="utf-8")
    for line in table.splitlines():
        logger.info(line.replace("\t", " | "))
    svg_path = plot_report(rows, out_dir / REPORT_SVG)
    return tsv_path, svg_path

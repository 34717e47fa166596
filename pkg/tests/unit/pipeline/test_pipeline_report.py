from pathlib import Path
from typing import Optional

import pytest

from selftrain_mt.common import InputError
from selftrain_mt.formatter import TsvFormatter
from selftrain_mt.pipeline.pipeline_manifest import RunManifest, StageRecord
from selftrain_mt.pipeline.pipeline_report import REPORT_HEADER, ReportRow, emit_report, report_rows, report_tsv


def _record(
    stage: str,
    method: str,
    cumulative_kept: int,
    finetune_bleu: float,
    pretrain_bleu: Optional[float] = None,
    iteration: Optional[int] = None,
) -> StageRecord:
    return StageRecord(
        stage=stage,
        method=method,
        parallel_size=100,
        mono_size=400,
        selected=cumulative_kept,
        kept=cumulative_kept,
        cumulative_kept=cumulative_kept,
        finetune_bleu=finetune_bleu,
        best_bleu=finetune_bleu,
        best_step=100,
        pretrain_bleu=pretrain_bleu,
        iteration=iteration,
    )


@pytest.fixture
def grid_manifest() -> RunManifest:
    manifest = RunManifest(config={})
    for record in [
        _record("SL+DS+QE(25)", "SL+DS+QE", 25, 15.0, 6.0),
        _record("SL", "SL", 400, 12.0, 8.5),
        _record("SL+DS+QE(100)", "SL+DS+QE", 100, 16.25, 9.0),
        _record("baseline", "baseline", 0, 10.0),
        _record("SL+DS+QE(50)", "SL+DS+QE", 50, 17.5, 7.0),
        _record("SL+QE", "SL+QE", 134, 14.0, 8.0),
        _record("SL+DS", "SL+DS", 134, 13.0, 9.5),
    ]:
        manifest.add(record)
    return manifest


class TestReportRows:
    def test_canonical_order(self, grid_manifest: RunManifest) -> None:
        rows = report_rows([grid_manifest])
        assert [row.method for row in rows] == [
            "baseline",
            "SL",
            "SL+DS",
            "SL+QE",
            "SL+DS+QE(100)",
            "SL+DS+QE(50)",
            "SL+DS+QE(25)",
        ]

    def test_baseline_row_has_no_pretrain_score(self, grid_manifest: RunManifest) -> None:
        baseline = report_rows([grid_manifest])[0]
        assert baseline == ReportRow("baseline", 0, None, 10.0)
        assert baseline.cells() == ("baseline", 0, None, 10.0)

    def test_iterations_follow_single_rounds(self) -> None:
        manifest = RunManifest(config={})
        manifest.add(_record("SL+DS+QE iteration 2", "SL+DS+QE", 200, 18.0, 9.0, iteration=2))
        manifest.add(_record("SL+DS+QE iteration 1", "SL+DS+QE", 100, 17.0, 8.0, iteration=1))
        manifest.add(_record("SL+DS+QE(50)", "SL+DS+QE", 50, 16.0, 7.0))
        assert [row.method for row in report_rows([manifest])] == [
            "SL+DS+QE(50)",
            "SL+DS+QE iteration 1",
            "SL+DS+QE iteration 2",
        ]

    def test_later_manifests_replace_stages(self, grid_manifest: RunManifest) -> None:
        rerun = RunManifest(config={})
        rerun.add(_record("SL", "SL", 400, 12.5, 8.0))
        rows = report_rows([grid_manifest, rerun])
        assert len(rows) == 7
        assert rows[1].finetune_bleu == 12.5

    def test_no_stages(self) -> None:
        with pytest.raises(InputError):
            report_rows([RunManifest(config={})])


def test_tsv_values(grid_manifest: RunManifest) -> None:
    lines = report_tsv(report_rows([grid_manifest])).splitlines()
    assert lines[0] == "\t".join(REPORT_HEADER)
    assert lines[2] == "SL\t400\t8.5\t12.0"
    assert lines[7] == "SL+DS+QE(25)\t25\t6.0\t15.0"



def test_tsv_values_equal_manifest_values_exactly() -> None:
    """BLEU values are written unrounded and read back bit-identical."""
    # Arrange
    manifest = RunManifest(config={})
    manifest.add(_record("baseline", "baseline", 0, 5.14159))
    manifest.add(_record("SL+DS+QE(50)", "SL+DS+QE", 50, 23.784512, 0.1 + 0.2))

    # Act
    rows = TsvFormatter.parse_tsv(report_tsv(report_rows([manifest])))

    # Assert
    assert [float(row["finetune_bleu"]) for row in rows] == [5.14159, 23.784512]
    assert rows[0]["pretrain_bleu"] == ""
    assert float(rows[1]["pretrain_bleu"]) == 0.1 + 0.2
    assert [int(row["monolingual_quantity"]) for row in rows] == [0, 50]

def test_emit_report_writes_table_and_figure(grid_manifest: RunManifest, tmp_path: Path) -> None:
    tsv_path, svg_path = emit_report([grid_manifest], tmp_path / "report")

    assert tsv_path.read_text(encoding="utf-8") == report_tsv(report_rows([grid_manifest]))
    svg = svg_path.read_text(encoding="utf-8")
    assert svg_path.name == "report.svg"
    assert "<svg" in svg

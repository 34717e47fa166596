from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from selftrain_mt import __version__
from selftrain_mt.common import CorpusError
from selftrain_mt.formatter import canonical_json

MANIFEST_FILE = "manifest.json"
STOP_RULE = "stop when max(dev BLEU of last window) - max(dev BLEU before the window) < threshold"


@dataclass
class StageRecord:
    stage: str
    method: str
    parallel_size: int  # A
    mono_size: int  # B
    selected: int  # n
    kept: int  # m
    cumulative_kept: int
    finetune_bleu: float
    best_bleu: float
    best_step: int
    pretrain_bleu: Optional[float] = None
    phase_boundary: Optional[int] = None
    iteration: Optional[int] = None
    empty_translations: int = 0
    checkpoints: List[str] = field(default_factory=list)  # relative to the run directory
    averaged_steps: List[int] = field(default_factory=list)
    data_hashes: Dict[str, str] = field(default_factory=dict)

    @staticmethod
    def from_dict(values: Dict[str, Any]) -> StageRecord:
        names = {f.name for f in dataclasses.fields(StageRecord)}
        return StageRecord(**{k: v for k, v in values.items() if k in names})


@dataclass
class RunManifest:
    config: Dict[str, Any]
    stages: List[StageRecord] = field(default_factory=list)
    # sha256 of input corpora and shared artifacts (merges, vocabulary)
    data_hashes: Dict[str, str] = field(default_factory=dict)
    # wall-clock seconds per stage; not part of the deterministic content
    timings: Dict[str, float] = field(default_factory=dict)
    stop_rule: str = STOP_RULE
    version: str = __version__

    def add(self, record: StageRecord) -> StageRecord:
        self.stages.append(record)
        return record

    def stage(self, name: str) -> StageRecord:
        for record in self.stages:
            if record.stage == name:
                return record
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": dict(self.config),
            "stages": [dataclasses.asdict(s) for s in self.stages],
            "data_hashes": dict(self.data_hashes),
            "timings": dict(self.timings),
            "stop_rule": self.stop_rule,
            "version": self.version,
        }

    def deterministic_view(self) -> Dict[str, Any]:
        """Manifest content that must be identical for two runs of the same config and seed."""
        view = self.to_dict()
        del view["timings"]
        del view["version"]
        view["config"].pop("output_dir", None)
        return view

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @staticmethod
    def load(path: str | Path) -> RunManifest:
        path = Path(path)
        if not path.is_file():
            raise CorpusError(f"Manifest not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            return RunManifest(
                config=data["config"],
                stages=[StageRecord.from_dict(s) for s in data["stages"]],
                data_hashes=data.get("data_hashes", {}),
                timings=data.get("timings", {}),
                stop_rule=data.get("stop_rule", STOP_RULE),
                version=data.get("version", __version__),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusError(f"{path}: malformed manifest ({e})") from e

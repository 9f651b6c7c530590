"""
Line-delimited JSON training log.
"""
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union
import json
import logging

EPOCH = "epoch"
STAGE = "stage"
CHECKPOINT = "checkpoint"
SOLVER = "nash"
SCHEDULE = "schedule"
SKIP = "skip"


class TrainLog:
    """Structured training records, mirrored to a ``.jsonl`` file when a path is given.

    Epoch indices must increase within a stage.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.logger = logging.getLogger(self.__class__.__name__)
        self._records: List[Dict[str, Any]] = []
        self._last_epoch: Dict[str, int] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                self._records = [json.loads(line) for line in f if line.strip()]
            for record in self._records:
                if record["type"] == EPOCH:
                    self._last_epoch[record["stage"]] = record["epoch"]

    def _get_timestamp(self) -> str:
        return datetime.now().isoformat()

    def append(self, kind: str, **fields: Any) -> Dict[str, Any]:
        if kind == EPOCH:
            stage, epoch = fields["stage"], fields["epoch"]
            if epoch <= self._last_epoch.get(stage, -1):
                raise ValueError(f"Epoch {epoch} of stage {stage} is not after {self._last_epoch[stage]}")
            self._last_epoch[stage] = epoch
        record = {"type": kind, **fields, "timestamp": self._get_timestamp()}
        self._records.append(record)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, ensure_ascii=False, default=str) + "\n")
        self.logger.debug(f"{kind}: {fields}")
        return record

    def epoch(self, stage: str, epoch: int, **metrics: Any) -> Dict[str, Any]:
        return self.append(EPOCH, stage=stage, epoch=epoch, **metrics)

    def stage_transition(self, stage: str, **fields: Any) -> Dict[str, Any]:
        return self.append(STAGE, stage=stage, **fields)

    def checkpoint(self, stage: str, path: Union[str, Path], **fields: Any) -> Dict[str, Any]:
        return self.append(CHECKPOINT, stage=stage, path=str(path), **fields)

    def solver(self, stage: str, step: int, **diagnostics: Any) -> Dict[str, Any]:
        return self.append(SOLVER, stage=stage, step=step, **diagnostics)

    def records(self, kind: Optional[str] = None) -> List[Dict[str, Any]]:
        return [dict(r) for r in self._records if kind is None or r["type"] == kind]

    def metrics(self) -> List[Dict[str, Any]]:
        """Records without timestamps or file paths, for run-to-run comparison."""
        return [
            {k: v for k, v in record.items() if k not in ("timestamp", "path")}
            for record in self._records if record["type"] in (EPOCH, SOLVER)
        ]

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self.records())

    def __len__(self) -> int:
        return len(self._records)

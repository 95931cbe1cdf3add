"""Load/validate the line-delimited meme dataset and read/write prediction CSVs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

PathLike = Union[str, Path]

DECISION_THRESHOLD = 0.5


class DatasetError(ValueError):
    """Fatal dataset problem (missing file, duplicate id, malformed record)."""


@dataclass(frozen=True)
class MemeRecord:
    """One meme: id, image path, caption, optional binary label (1 = hateful)."""

    id: int
    img: str
    text: str
    label: Optional[int] = None

    def __post_init__(self):
        if self.id < 0:
            raise DatasetError(f"id must be non-negative, got {self.id}")
        if not self.text.strip():
            raise DatasetError(f"record {self.id}: text empty after trim")
        if self.label is not None and self.label not in (0, 1):
            raise DatasetError(f"record {self.id}: label must be 0 or 1")


@dataclass(frozen=True)
class PredictionRow:
    id: int
    proba: float
    label: int

    def __post_init__(self):
        if not 0.0 <= self.proba <= 1.0:
            raise DatasetError(
                f"prediction for id {self.id}: proba {self.proba} outside [0, 1]")


def prediction_row(meme_id: int, proba: float,
                   threshold: float = DECISION_THRESHOLD) -> PredictionRow:
    """Build a row with the label column derived from the threshold."""
    return PredictionRow(meme_id, proba, int(proba >= threshold))


def load_records(path: PathLike) -> List[MemeRecord]:
    """Parse one JSON record per line, preserving file order.

    Raises DatasetError naming the line number for malformed lines and the
    offending id for duplicates.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    records: List[MemeRecord] = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                rec = MemeRecord(
                    id=int(obj["id"]),
                    img=str(obj["img"]),
                    text=str(obj["text"]),
                    label=None if obj.get("label") is None else int(obj["label"]),
                )
            except KeyError as exc:
                raise DatasetError(
                    f"{path}:{lineno}: missing required field {exc}") from exc
            if rec.id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate id {rec.id}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_predictions(rows: List[PredictionRow], path: PathLike) -> None:
    """Write the submission CSV: header id,proba,label; proba with 6 decimals.

    Validates every row before any byte is written.
    """
    for row in rows:
        if not 0.0 <= row.proba <= 1.0:
            raise DatasetError(
                f"prediction for id {row.id}: proba {row.proba} outside [0, 1]")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "proba", "label"])
        for row in rows:
            writer.writerow([row.id, f"{row.proba:.6f}", row.label])


def read_predictions(path: PathLike) -> List[PredictionRow]:
    """Reload a prediction CSV written by write_predictions."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"prediction file not found: {path}")
    rows: List[PredictionRow] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["id", "proba", "label"]:
            raise DatasetError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            rows.append(PredictionRow(int(rec["id"]), float(rec["proba"]),
                                      int(rec["label"])))
    return rows

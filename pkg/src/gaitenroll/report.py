"""Evaluation reports, per-probe score files, and curve exports.

Every metric in a report is recomputable from the per-probe scores CSV
("id,walk,label,score,decision"), which is always emitted alongside. Floats
are serialized with shortest round-trip repr, so recomputation is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import DataFormatError
from .fileio import atomic_write_text
from .metrics import Confusion, pr_points, roc_points


@dataclass(frozen=True)
class EvalReport:
    name: str
    mcc: float
    auc: float
    f1: float
    ap: float
    threshold: float
    confusion: Confusion
    n_probes: int
    scenario_spec: dict
    digests: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "metrics": {"mcc": self.mcc, "auc": self.auc, "f1": self.f1, "ap": self.ap},
            "threshold": self.threshold,
            "confusion": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tn": self.confusion.tn,
            },
            "n_probes": self.n_probes,
            "scenario_spec": self.scenario_spec,
            "digests": self.digests,
        }


def save_report(path: str | Path, report: EvalReport) -> None:
    atomic_write_text(path, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")


def load_report(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    for key in ("name", "metrics", "threshold", "confusion", "n_probes"):
        if key not in obj:
            raise DataFormatError(f"{path}: missing report key '{key}'")
    return obj


def scores_csv(
    rows: Sequence[tuple[str, str, int, float, int]],
) -> str:
    """Per-probe scores, sorted by (id, walk): id,walk,label,score,decision."""
    lines = ["id,walk,label,score,decision"]
    for pid, walk, label, score, decision in sorted(rows):
        lines.append(f"{pid},{walk},{label},{score!r},{decision}")
    return "\n".join(lines) + "\n"


def parse_scores_csv(text: str) -> list[tuple[str, str, int, float, int]]:
    lines = text.strip().splitlines()
    if not lines or lines[0] != "id,walk,label,score,decision":
        raise DataFormatError("bad scores CSV header")
    out = []
    for line in lines[1:]:
        pid, walk, label, score, decision = line.split(",")
        out.append((pid, walk, int(label), float(score), int(decision)))
    return out


def roc_csv(scores: Sequence[float], labels: Sequence[int]) -> str:
    lines = ["threshold,fpr,tpr"]
    for t, fpr, tpr in roc_points(scores, labels):
        lines.append(f"{t!r},{fpr!r},{tpr!r}")
    return "\n".join(lines) + "\n"


def pr_csv(scores: Sequence[float], labels: Sequence[int]) -> str:
    lines = ["threshold,recall,precision"]
    for t, recall, precision in pr_points(scores, labels):
        lines.append(f"{t!r},{recall!r},{precision!r}")
    return "\n".join(lines) + "\n"


_TABLE_COLUMNS = ("name", "mcc", "auc", "f1", "ap", "threshold", "n_probes")


def comparison_table(reports: Sequence[dict]) -> tuple[str, str]:
    """(csv_text, aligned_text) across report dicts, in the order given."""
    rows = []
    for obj in reports:
        rows.append(
            (
                str(obj["name"]),
                f"{obj['metrics']['mcc']:.6f}",
                f"{obj['metrics']['auc']:.6f}",
                f"{obj['metrics']['f1']:.6f}",
                f"{obj['metrics']['ap']:.6f}",
                f"{obj['threshold']!r}",
                str(obj["n_probes"]),
            )
        )
    csv_lines = [",".join(_TABLE_COLUMNS)]
    csv_lines.extend(",".join(row) for row in rows)
    widths = [
        max(len(_TABLE_COLUMNS[i]), *(len(row[i]) for row in rows)) if rows else len(_TABLE_COLUMNS[i])
        for i in range(len(_TABLE_COLUMNS))
    ]
    aligned = ["  ".join(name.ljust(widths[i]) for i, name in enumerate(_TABLE_COLUMNS))]
    aligned.extend(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows
    )
    return "\n".join(csv_lines) + "\n", "\n".join(aligned) + "\n"

"""Attack result records: JSONL persistence and summary tables."""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .attack import AttackConfig, AttackResult


def config_hash(cfg: AttackConfig) -> str:
    """Stable hash of a config's canonical JSON form."""
    text = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ResultRecord:
    """One attack outcome, flattened for delimited output."""

    source_id: str
    y_true: int
    adv_label: int
    success: bool
    d_chamfer: float
    d_hausdorff: float
    d_norm: float
    max_deviation: float
    combined: float
    queries: int
    rounds_executed: int
    truncated: bool
    epsilon_violated: bool
    seed: int
    config_hash: str
    error: str = ""

    @classmethod
    def from_attack(cls, source_id: str, y_true: int, result: AttackResult,
                    seed: int, cfg_hash: str) -> "ResultRecord":
        return cls(
            source_id=source_id,
            y_true=y_true,
            adv_label=result.adv_label,
            success=result.success,
            d_chamfer=result.metrics["chamfer"],
            d_hausdorff=result.metrics["hausdorff"],
            d_norm=result.metrics["l2_norm"],
            max_deviation=result.metrics["max_deviation"],
            combined=result.metrics["combined"],
            queries=result.queries_used,
            rounds_executed=result.rounds_executed,
            truncated=result.truncated,
            epsilon_violated=result.epsilon_violated,
            seed=seed,
            config_hash=cfg_hash,
        )

    @classmethod
    def from_failure(cls, source_id: str, y_true: int, seed: int, cfg_hash: str,
                     error: str) -> "ResultRecord":
        return cls(
            source_id=source_id, y_true=y_true, adv_label=-1, success=False,
            d_chamfer=float("nan"), d_hausdorff=float("nan"),
            d_norm=float("nan"), max_deviation=float("nan"),
            combined=float("nan"), queries=0, rounds_executed=0,
            truncated=False, epsilon_violated=False, seed=seed,
            config_hash=cfg_hash, error=error,
        )


class JsonlWriter:
    """Append-only JSONL sink; writes are serialized through one lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: ResultRecord) -> None:
        payload = asdict(record)
        line = json.dumps(payload, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def read_jsonl(path: str | Path) -> list[ResultRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        records.append(ResultRecord(**json.loads(line)))
    return records


def summarize(records: list[ResultRecord]) -> dict[str, float]:
    """Batch summary: attack success rate and mean metrics over successes."""
    total = len(records)
    succ = [r for r in records if r.success]
    def mean(key):
        vals = [getattr(r, key) for r in succ]
        return float(np.mean(vals)) if vals else float("nan")
    return {
        "runs": total,
        "successes": len(succ),
        "asr": 100.0 * len(succ) / total if total else float("nan"),
        "mean_d_hausdorff": mean("d_hausdorff"),
        "mean_d_chamfer": mean("d_chamfer"),
        "mean_d_norm": mean("d_norm"),
        "mean_queries": float(np.mean([r.queries for r in records])) if records else float("nan"),
    }


def format_summary_table(summary: dict[str, float], title: str) -> str:
    """Fixed-width summary in the usual ASR / D_h / D_c / D_norm layout."""
    header = f"{'setting':<24}{'ASR (%)':>10}{'D_h':>12}{'D_c':>12}{'D_norm':>12}{'queries':>10}"
    row = (f"{title:<24}{summary['asr']:>10.1f}{summary['mean_d_hausdorff']:>12.4f}"
           f"{summary['mean_d_chamfer']:>12.6f}{summary['mean_d_norm']:>12.4f}"
           f"{summary['mean_queries']:>10.0f}")
    return header + "\n" + row


def write_summary_csv(path: str | Path, rows: list[dict], field_order: list[str]) -> None:
    """Small delimited writer; all sweep and summary tables go through it."""
    lines = [",".join(field_order)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in field_order))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)

"""Localization recall and trajectory RMSE."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import EmptyInput, InconsistentConfig, ValidationError
from .floorplan import Pose

DEFAULT_THRESHOLDS = (0.1, 0.5, 1.0)
DEFAULT_ANGLE_BOUND = math.radians(30.0)
SUCCESS_RULE = ("a sequence succeeds if its final estimate is within the success threshold; "
                "RMSE(S) pools the steps of successful sequences from the first step "
                "inside the threshold onward")


@dataclass(frozen=True)
class PosePair:
    predicted: Pose
    truth: Pose

    @property
    def position_error(self) -> float:
        return math.hypot(self.predicted.x - self.truth.x, self.predicted.y - self.truth.y)

    @property
    def angular_error(self) -> float:
        """Wrapped absolute heading difference in [0, pi]."""
        return abs(math.remainder(self.predicted.theta - self.truth.theta, 2.0 * math.pi))


@dataclass(frozen=True)
class Recall:
    at: dict[float, float]
    angular: float | None = None


def _flatten(pairs) -> list[PosePair]:
    if pairs and not isinstance(pairs[0], PosePair):
        return [p for seq in pairs for p in seq]
    return list(pairs)


def _sequences(pairs) -> list[list[PosePair]]:
    if pairs and isinstance(pairs[0], PosePair):
        return [list(pairs)]
    return [list(s) for s in pairs]


def recall(pairs, thresholds_m: Sequence[float] = DEFAULT_THRESHOLDS,
           angle_bound: float | None = None, angle_threshold_m: float = 1.0) -> Recall:
    """Percent of pairs within each positional threshold (<=).

    With ``angle_bound`` the angular variant also requires a heading error
    strictly below the bound, at ``angle_threshold_m``.
    """
    flat = _flatten(pairs)
    if not flat:
        raise EmptyInput("recall needs at least one pose pair")
    if any(not t > 0 for t in thresholds_m):
        raise ValidationError("thresholds must be positive")
    n = len(flat)
    errs = [p.position_error for p in flat]
    at = {float(t): 100.0 * sum(e <= t for e in errs) / n for t in thresholds_m}
    ang = None
    if angle_bound is not None:
        ang = 100.0 * sum(p.position_error <= angle_threshold_m and p.angular_error < angle_bound
                          for p in flat) / n
    return Recall(at, ang)


def rmse(pairs, success_threshold_m: float = 1.0) -> tuple[float | None, float]:
    """(RMSE over successful sequences or None, RMSE over everything)."""
    seqs = [s for s in _sequences(pairs) if s]
    if not seqs:
        raise EmptyInput("rmse needs at least one pose pair")
    all_err = [p.position_error for s in seqs for p in s]
    rmse_a = math.sqrt(math.fsum(e * e for e in all_err) / len(all_err))
    ok = []
    for s in seqs:
        errs = [p.position_error for p in s]
        if errs[-1] <= success_threshold_m:
            first = next(i for i, e in enumerate(errs) if e <= success_threshold_m)
            ok.extend(errs[first:])
    rmse_s = math.sqrt(math.fsum(e * e for e in ok) / len(ok)) if ok else None
    return rmse_s, rmse_a


@dataclass
class MetricReport:
    recall_at: dict[float, float]
    recall_1m_30deg: float | None
    rmse_success: float | None
    rmse_all: float
    success_rule: str = SUCCESS_RULE

    def to_dict(self) -> dict:
        return {"r_at": {_key(t): v for t, v in sorted(self.recall_at.items())},
                "r_1m_30": self.recall_1m_30deg,
                "rmse_s": self.rmse_success,
                "rmse_a": self.rmse_all}


def _key(t: float) -> str:
    return f"{t:g}"


@dataclass
class Run:
    name: str
    sequences: list
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    angle_bound: float | None = DEFAULT_ANGLE_BOUND
    success_threshold: float = 1.0
    extra: dict = field(default_factory=dict)


def evaluate(sequences, thresholds=DEFAULT_THRESHOLDS, angle_bound=DEFAULT_ANGLE_BOUND,
             success_threshold=1.0) -> MetricReport:
    r = recall(sequences, thresholds, angle_bound)
    rs, ra = rmse(sequences, success_threshold)
    return MetricReport(r.at, r.angular, rs, ra)


def report(runs: Sequence[Run]) -> tuple[dict, str]:
    """Per-run and pooled metrics as a JSON-ready dict plus a text table."""
    if not runs:
        raise EmptyInput("report needs at least one run")
    cfg = (tuple(runs[0].thresholds), runs[0].angle_bound, runs[0].success_threshold)
    for r in runs[1:]:
        if (tuple(r.thresholds), r.angle_bound, r.success_threshold) != cfg:
            raise InconsistentConfig(f"run {r.name!r} uses different metric settings")
    per_run = []
    pooled = []
    for r in runs:
        seqs = _sequences(r.sequences)
        pooled.extend(seqs)
        m = evaluate(seqs, *cfg)
        per_run.append({"name": r.name, **m.to_dict(), **r.extra})
    agg = evaluate(pooled, *cfg)
    doc = {
        "config": {"thresholds_m": list(cfg[0]),
                   "angle_bound_deg": None if cfg[1] is None else math.degrees(cfg[1]),
                   "success_threshold_m": cfg[2],
                   "success_rule": SUCCESS_RULE},
        "per_run": per_run,
        "aggregate": agg.to_dict(),
    }
    return doc, format_table(doc)


def format_table(doc: dict) -> str:
    thr = doc["config"]["thresholds_m"]
    ang = doc["config"]["angle_bound_deg"]
    cols = [f"R@{t:g} m" for t in thr]
    if ang is not None:
        cols.append(f"R@1 m {ang:g}deg")
    cols += ["RMSE(S)", "RMSE(A)"]

    def row(name, m):
        vals = [f"{m['r_at'][_key(t)]:.1f}" for t in thr]
        if ang is not None:
            vals.append(f"{m['r_1m_30']:.1f}")
        vals.append("-" if m["rmse_s"] is None else f"{m['rmse_s']:.3f}")
        vals.append(f"{m['rmse_a']:.3f}")
        return [name] + vals

    rows = [["run"] + cols] + [row(r["name"], r) for r in doc["per_run"]]
    rows.append(row("aggregate", doc["aggregate"]))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    return "\n".join(lines) + "\n"


def dump_report(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"

"""Future-window targets, prediction errors and summary statistics.

Index conventions (0-based arrays, trace of length N):

* ``predictions[i]`` is the filter output after consuming outcome ``i``.
* ``targets[i]`` is the mean of outcomes ``i+1 .. i+n_future``; there are
  ``N - n_future`` targets.
* Errors are evaluated for ``i = n_skip .. N - n_future - 1``, i.e.
  ``N - n_skip - n_future`` values.

Statistics use the population standard deviation (divide by n) and
nearest-rank percentiles: the p-th percentile of n sorted values is the one
at 1-based rank ``ceil(p * n / 100)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .trace import OutcomeTrace

DEFAULT_N_FUTURE = 3600
DEFAULT_N_SKIP = 3600
PERCENTILES = (5, 90, 95, 99)
KINDS = ("e", "abs_e", "e2")


@dataclass(frozen=True)
class TargetSeries:
    values: np.ndarray
    n_future: int
    sample_period_us: int

    def __len__(self):
        return int(self.values.size)

    @property
    def horizon(self) -> float:
        """Width of the future window in seconds."""
        return self.n_future * self.sample_period_us * 1e-6


def compute_targets(trace: OutcomeTrace, n_future: int = DEFAULT_N_FUTURE) -> TargetSeries:
    n_future = int(n_future)
    if n_future < 1:
        raise ValueError("n_future must be >= 1")
    n = len(trace)
    if n <= n_future:
        raise ValueError(f"trace of length {n} is too short for n_future={n_future}")
    csum = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(trace.outcomes, dtype=np.int64, out=csum[1:])
    counts = csum[n_future + 1:] - csum[1:n - n_future + 1]
    values = counts / n_future
    values.flags.writeable = False
    return TargetSeries(values, n_future, trace.sample_period_us)


def evaluation_window(n_targets: int, n_skip: int) -> slice:
    if n_skip < 0:
        raise ValueError("n_skip must be >= 0")
    if n_skip >= n_targets:
        raise ValueError(
            f"empty evaluation window: n_skip={n_skip} with only {n_targets} targets")
    return slice(n_skip, n_targets)


def _aligned(predictions, targets: TargetSeries) -> np.ndarray:
    y = np.asarray(predictions, dtype=np.float64)
    m = len(targets)
    # accept either exactly one prediction per target, or the full per-outcome series
    if y.shape == (m,) or y.shape == (m + targets.n_future,):
        return y[:m]
    raise ValueError(
        f"predictions of length {y.shape} do not align with {m} targets "
        f"(n_future={targets.n_future})")


def error_series(predictions, targets: TargetSeries, n_skip: int = DEFAULT_N_SKIP):
    """Return ``(e, |e|, e^2)`` over the evaluation window, ``e = t - y``."""
    y = _aligned(predictions, targets)
    win = evaluation_window(len(targets), n_skip)
    e = targets.values[win] - y[win]
    return e, np.abs(e), e * e


def mse(predictions, targets: TargetSeries, n_skip: int = DEFAULT_N_SKIP) -> float:
    y = _aligned(predictions, targets)
    win = evaluation_window(len(targets), n_skip)
    e = targets.values[win] - y[win]
    return float(np.dot(e, e) / e.size)


def nearest_rank(sorted_values: np.ndarray, pct: int) -> float:
    n = sorted_values.size
    rank = max(1, -(-pct * n // 100))
    return float(sorted_values[rank - 1])


@dataclass(frozen=True)
class ErrorReport:
    """Statistics of ``e``, ``|e|`` and ``e^2`` over one evaluation window.

    ``stats`` maps keys such as ``mu_e2``, ``sigma_abs_e``, ``e_p5`` or
    ``abs_e_max`` to floats; see :data:`STAT_KEYS`.
    """

    stats: dict
    evaluation_count: int
    n_skip: int
    n_future: int

    def __getitem__(self, key):
        return self.stats[key]

    @property
    def mse(self) -> float:
        return self.stats["mu_e2"]

    def to_dict(self) -> dict:
        out = {k: self.stats[k] for k in STAT_KEYS}
        out.update(evaluation_count=self.evaluation_count,
                   n_skip=self.n_skip, n_future=self.n_future)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        row = self.to_dict()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    @classmethod
    def from_dict(cls, doc: dict) -> "ErrorReport":
        return cls({k: float(doc[k]) for k in STAT_KEYS}, int(doc["evaluation_count"]),
                   int(doc["n_skip"]), int(doc["n_future"]))


def _stat_keys():
    keys = []
    for kind in KINDS:
        keys += [f"mu_{kind}", f"sigma_{kind}", f"{kind}_min"]
        keys += [f"{kind}_p{p}" for p in PERCENTILES]
        keys.append(f"{kind}_max")
    return tuple(keys)


STAT_KEYS = _stat_keys()


def _describe(kind: str, values: np.ndarray) -> dict:
    mu = float(np.mean(values))
    sigma = float(np.sqrt(np.mean((values - mu) ** 2)))
    s = np.sort(values)
    out = {f"mu_{kind}": mu, f"sigma_{kind}": sigma,
           f"{kind}_min": float(s[0]), f"{kind}_max": float(s[-1])}
    for p in PERCENTILES:
        out[f"{kind}_p{p}"] = nearest_rank(s, p)
    return out


def summarize(e, abs_e, sq_e, *, n_skip: int = 0, n_future: int = 0) -> ErrorReport:
    e, abs_e, sq_e = (np.asarray(v, dtype=np.float64) for v in (e, abs_e, sq_e))
    if e.size == 0:
        raise ValueError("cannot summarize an empty error series")
    if not (e.shape == abs_e.shape == sq_e.shape) or e.ndim != 1:
        raise ValueError("error series must be one-dimensional and of equal length")
    stats = {}
    for kind, vals in zip(KINDS, (e, abs_e, sq_e)):
        stats.update(_describe(kind, vals))
    return ErrorReport(stats, int(e.size), int(n_skip), int(n_future))


def report(predictions, targets: TargetSeries, n_skip: int = DEFAULT_N_SKIP) -> ErrorReport:
    e, a, s = error_series(predictions, targets, n_skip)
    return summarize(e, a, s, n_skip=n_skip, n_future=targets.n_future)


# Column order of the EMA vs ELC comparison table.
TABLE_COLUMNS = ("mu_e2", "e2_p95", "e2_max", "mu_abs_e", "sigma_abs_e", "abs_e_p90",
                 "abs_e_p95", "abs_e_p99", "abs_e_max", "e_min", "e_p5", "e_p95", "e_max")


def relative_reduction(baseline: float, candidate: float) -> float:
    """Percent reduction of ``candidate`` relative to ``baseline``."""
    if baseline == 0.0:
        return 0.0 if candidate == 0.0 else -math.inf
    return 100.0 * (baseline - candidate) / baseline


def table_rows(rows: Sequence[tuple[str, str, ErrorReport]]) -> list[dict]:
    out = []
    for model, params, rep in rows:
        row = {"model": model, "params": params}
        row.update({k: rep[k] for k in TABLE_COLUMNS})
        out.append(row)
    return out

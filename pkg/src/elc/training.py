"""Training of EMA and ELC predictors.

The ELC pipeline on a training trace:

1. ``alpha*``: the single EMA weight with the lowest training MSE.
2. A geometric starting sequence ``alpha* * r**n`` for ``n = -n_lower..n_upper``.
3. Combination coefficients minimizing the training MSE of the combined
   prediction over the probability simplex.
4. Pruning to the smallest set of filters whose coefficients add up to at
   least ``lambda_max``, then a second minimization over the survivors.

The MSE of a combination is a quadratic in the coefficients,
``lam @ G @ lam - 2 * b @ lam + c`` (see :class:`GramSystem`), so the bank is
filtered once and every solver iteration costs O(n_filters**2).
"""
from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .filters import DEFAULT_Y0, ElcModel, bank_chunks, check_alpha, check_y0, ema_run, predict_series
from .metrics import (DEFAULT_N_FUTURE, DEFAULT_N_SKIP, ErrorReport, TargetSeries, compute_targets,
                      evaluation_window, mse, report)
from .trace import OutcomeTrace

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class AlphaSearchConfig:
    grid_points_per_decade: int = 20
    alpha_min: float = 1e-6
    alpha_max: float = 1.0
    refine_tolerance: float = 1e-3

    def __post_init__(self):
        if self.grid_points_per_decade < 1:
            raise ValueError("grid_points_per_decade must be >= 1")
        if not (0.0 < self.alpha_min < self.alpha_max <= 1.0):
            raise ValueError("alpha search range must satisfy 0 < alpha_min < alpha_max <= 1")
        if not self.refine_tolerance > 0:
            raise ValueError("refine_tolerance must be positive")


@dataclass(frozen=True)
class QpConfig:
    objective_tolerance: float = 1e-12
    max_iterations: int = 20_000

    def __post_init__(self):
        if not self.objective_tolerance > 0:
            raise ValueError("objective_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    n_lower: int = 17
    n_upper: int = 17
    ratio: float = 1.5
    lambda_max: float = 0.75
    n_future: int = DEFAULT_N_FUTURE
    n_skip: int = DEFAULT_N_SKIP
    y0: float = DEFAULT_Y0
    alpha_search: AlphaSearchConfig = field(default_factory=AlphaSearchConfig)
    qp: QpConfig = field(default_factory=QpConfig)

    def __post_init__(self):
        if not self.ratio > 1.0:
            raise ValueError("ratio must be > 1")
        if self.n_lower < 0 or self.n_upper < 0:
            raise ValueError("n_lower and n_upper must be >= 0")
        if not (0.0 < self.lambda_max <= 1.0):
            raise ValueError("lambda_max must be in (0, 1]")
        if self.n_future < 1:
            raise ValueError("n_future must be >= 1")
        if self.n_skip < 0:
            raise ValueError("n_skip must be >= 0")
        check_y0(self.y0)

    @property
    def min_trace_length(self) -> int:
        return self.n_skip + self.n_future + 1

    # flat key=value representation, shared by config files and CLI flags
    _NESTED = {
        "grid_points_per_decade": ("alpha_search", "grid_points_per_decade"),
        "alpha_min": ("alpha_search", "alpha_min"),
        "alpha_max": ("alpha_search", "alpha_max"),
        "refine_tolerance": ("alpha_search", "refine_tolerance"),
        "qp_objective_tolerance": ("qp", "objective_tolerance"),
        "qp_max_iterations": ("qp", "max_iterations"),
    }

    def to_flat(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("n_lower", "n_upper", "ratio", "lambda_max", "n_future", "n_skip", "y0")}
        for key, (group, name) in self._NESTED.items():
            out[key] = getattr(getattr(self, group), name)
        return out

    @classmethod
    def flat_types(cls) -> dict:
        base = cls()
        return {k: type(v) for k, v in base.to_flat().items()}

    @classmethod
    def from_flat(cls, values: dict, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        base = base or cls()
        types = cls.flat_types()
        top, groups = {}, {"alpha_search": {}, "qp": {}}
        for key, raw in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            try:
                val = types[key](raw) if types[key] is not int else _parse_int(raw)
            except (TypeError, ValueError):
                raise ValueError(f"config key {key!r}: cannot parse {raw!r}") from None
            if key in cls._NESTED:
                group, name = cls._NESTED[key]
                groups[group][name] = val
            else:
                top[key] = val
        return dataclasses.replace(
            base,
            alpha_search=dataclasses.replace(base.alpha_search, **groups["alpha_search"]),
            qp=dataclasses.replace(base.qp, **groups["qp"]),
            **top)


def _parse_int(raw) -> int:
    if isinstance(raw, int):
        return raw
    f = float(raw)
    if not f.is_integer():
        raise ValueError(raw)
    return int(f)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = val.strip()
    return out


def load_config(path, base: Optional[TrainConfig] = None) -> TrainConfig:
    return TrainConfig.from_flat(parse_config_text(Path(path).read_text(encoding="utf-8")), base)


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in config.to_flat().items())


# --------------------------------------------------------------------------
# alpha* search

class _AlphaObjective:
    """Training MSE of a single EMA as a function of alpha (memoized)."""

    def __init__(self, trace: OutcomeTrace, config: TrainConfig):
        if len(trace) < config.min_trace_length:
            raise ValueError(
                f"trace of length {len(trace)} is too short: need at least "
                f"n_skip + n_future + 1 = {config.min_trace_length}")
        self.x = trace.as_float()
        self.targets = compute_targets(trace, config.n_future)
        self.n_skip = config.n_skip
        self.y0 = config.y0
        self.cache: dict[float, float] = {}

    def __call__(self, alpha: float) -> float:
        alpha = float(alpha)
        val = self.cache.get(alpha)
        if val is None:
            y = ema_run(alpha, self.y0, self.x)[:len(self.targets)]
            val = self.cache[alpha] = mse(y, self.targets, self.n_skip)
        return val


@dataclass(frozen=True)
class AlphaSearchResult:
    alpha: float
    mse: float
    grid: np.ndarray
    grid_mse: np.ndarray
    flat: bool


def alpha_grid(cfg: AlphaSearchConfig) -> np.ndarray:
    lo, hi = math.log10(cfg.alpha_min), math.log10(cfg.alpha_max)
    n = max(2, int(round((hi - lo) * cfg.grid_points_per_decade)) + 1)
    grid = np.logspace(lo, hi, n)
    grid[0], grid[-1] = cfg.alpha_min, cfg.alpha_max
    return grid


def golden_section(f, a: float, b: float, tol: float):
    """Minimize ``f`` on ``[a, b]``; returns every evaluated ``(x, f(x))``."""
    seen = []
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    seen += [(c, fc), (d, fd)]
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            seen.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            seen.append((d, fd))
    return seen


def search_alpha_star(trace: OutcomeTrace, config: TrainConfig = TrainConfig()) -> AlphaSearchResult:
    """Log-spaced grid scan followed by golden-section refinement in log(alpha)."""
    cfg = config.alpha_search
    obj = _AlphaObjective(trace, config)
    grid = alpha_grid(cfg)
    values = np.array([obj(a) for a in grid])
    k = int(np.argmin(values))
    if values.max() - values.min() <= 1e-15 * max(1.0, abs(values.min())):
        warnings.warn("alpha* objective is flat over the search range; returning grid minimum",
                      RuntimeWarning, stacklevel=2)
        return AlphaSearchResult(float(grid[k]), float(values[k]), grid, values, True)

    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, grid.size - 1)])
    best_a, best_v = float(grid[k]), float(values[k])
    for u, v in golden_section(lambda u: obj(math.exp(u)), lo, hi, cfg.refine_tolerance):
        if v < best_v:
            best_a, best_v = float(math.exp(u)), v
    best_a = min(max(best_a, cfg.alpha_min), cfg.alpha_max)
    return AlphaSearchResult(best_a, obj(best_a), grid, values, False)


def fit_alpha_star(trace: OutcomeTrace, config: TrainConfig = TrainConfig()) -> float:
    return search_alpha_star(trace, config).alpha


# --------------------------------------------------------------------------
# starting sequence

@dataclass(frozen=True)
class AlphaSequence:
    values: tuple
    origin: str = "starting"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("alpha sequence must be non-empty")
        for v in vals:
            check_alpha(v)
        if len(set(vals)) != len(vals):
            raise ValueError("alpha values must be pairwise distinct")
        if self.origin == "starting" and any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("starting sequence must be strictly increasing")
        if self.origin not in ("starting", "final"):
            raise ValueError(f"unknown origin {self.origin!r}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]


def build_starting_sequence(alpha_star: float, config: TrainConfig = TrainConfig()) -> AlphaSequence:
    if not (0.0 < alpha_star <= 1.0):
        raise ValueError(f"alpha* must be in (0, 1], got {alpha_star}")
    vals = [alpha_star * config.ratio ** n for n in range(-config.n_lower, config.n_upper + 1)]
    kept = [v for v in vals if v <= 1.0]
    if len(kept) < len(vals):
        warnings.warn(f"dropped {len(vals) - len(kept)} alpha values above 1 from the starting "
                      f"sequence", RuntimeWarning, stacklevel=2)
    return AlphaSequence(tuple(kept), "starting")


# --------------------------------------------------------------------------
# quadratic form of the combination MSE

@dataclass(frozen=True)
class GramSystem:
    """``MSE(lam) = lam @ gram @ lam - 2 * cross @ lam + target_energy``.

    All entries are averages over the ``count`` samples of the evaluation
    window.
    """

    gram: np.ndarray
    cross: np.ndarray
    target_energy: float
    count: int

    def __post_init__(self):
        g = np.asarray(self.gram, dtype=np.float64)
        b = np.asarray(self.cross, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or b.shape != (g.shape[0],):
            raise ValueError("gram must be square and cross must match its size")
        if not np.array_equal(g, g.T):
            raise ValueError("gram must be symmetric")
        if g.shape[0] and np.linalg.eigvalsh(g).min() < -1e-9:
            raise ValueError("gram is not positive semidefinite")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "cross", b)
        object.__setattr__(self, "target_energy", float(self.target_energy))

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    def objective(self, lambdas) -> float:
        lam = np.asarray(lambdas, dtype=np.float64)
        return float(lam @ self.gram @ lam - 2.0 * self.cross @ lam + self.target_energy)

    def gradient(self, lambdas) -> np.ndarray:
        return 2.0 * (self.gram @ lambdas - self.cross)

    def subsystem(self, indices: Sequence[int]) -> "GramSystem":
        idx = np.asarray(indices, dtype=np.intp)
        return GramSystem(self.gram[np.ix_(idx, idx)], self.cross[idx],
                          self.target_energy, self.count)


def _finish_gram(gsum, bsum, csum, count):
    gsum = 0.5 * (gsum + gsum.T)
    return GramSystem(gsum / count, bsum / count, csum / count, count)


def build_gram(bank_outputs, targets: TargetSeries, n_skip: int = DEFAULT_N_SKIP) -> GramSystem:
    """Gram system from a full prediction matrix (rows = filters)."""
    y = np.atleast_2d(np.asarray(bank_outputs, dtype=np.float64))
    m = len(targets)
    if y.shape[1] not in (m, m + targets.n_future):
        raise ValueError(f"bank outputs with {y.shape[1]} columns do not align with {m} targets")
    win = evaluation_window(m, n_skip)
    yw = y[:, :m][:, win]
    t = targets.values[win]
    return _finish_gram(yw @ yw.T, yw @ t, float(t @ t), t.size)


def gram_from_trace(alphas: Sequence[float], y0: float, trace: OutcomeTrace,
                    targets: TargetSeries, n_skip: int = DEFAULT_N_SKIP,
                    chunk: int = 1 << 18) -> GramSystem:
    """Same as ``build_gram(bank_run(...), ...)`` but streamed in chunks."""
    m = len(targets)
    win = evaluation_window(m, n_skip)
    n = len(alphas)
    gsum = np.zeros((n, n))
    bsum = np.zeros(n)
    t_all = targets.values
    for start, block in bank_chunks(alphas, y0, trace, chunk):
        lo = max(start, win.start)
        hi = min(start + block.shape[1], m)
        if hi <= lo:
            continue
        yb = block[:, lo - start:hi - start]
        tb = t_all[lo:hi]
        gsum += yb @ yb.T
        bsum += yb @ tb
    t = t_all[win]
    return _finish_gram(gsum, bsum, float(t @ t), t.size)


# --------------------------------------------------------------------------
# minimization over the probability simplex

@dataclass(frozen=True)
class LambdaSolution:
    lambdas: np.ndarray
    achieved_mse: float
    iterations: int
    converged: bool = True
    gap: float = 0.0


_PG_ROUND = 500
_F_NOISE = 1e-14


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= 0, sum(x) = 1}``."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _clean_simplex(lam: np.ndarray) -> np.ndarray:
    lam = np.clip(lam, 0.0, None)
    s = lam.sum()
    if not s > 0:
        return np.full(lam.size, 1.0 / lam.size)
    lam = lam / s
    if abs(lam.sum() - 1.0) > 1e-12:
        lam = project_simplex(lam)
    return np.minimum(lam, 1.0)


def duality_gap(system: GramSystem, lam: np.ndarray) -> float:
    """Frank-Wolfe gap; an upper bound on ``f(lam) - min f`` over the simplex."""
    g = system.gradient(lam)
    return max(0.0, float(g @ lam - g.min()))


def _accelerated_pg(system: GramSystem, lam: np.ndarray, tol: float, max_iter: int):
    """FISTA with objective restarts; returns the best iterate seen."""
    lmax = float(np.linalg.eigvalsh(system.gram).max())
    step = 1.0 / (2.0 * lmax) if lmax > 0 else 1.0
    f = system.objective(lam)
    y, t = lam.copy(), 1.0
    it = 0
    for it in range(1, max_iter + 1):
        new = project_simplex(y - step * system.gradient(y))
        fn = system.objective(new)
        if fn > f:
            # restart momentum from the last accepted point
            y, t = lam.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = new + ((t - 1.0) / t_next) * (new - lam)
        lam, f, t = new, fn, t_next
        if it % 10 == 0 and duality_gap(system, lam) <= tol:
            break
    return lam, it


def _kkt_solve(system: GramSystem, free: list[int]) -> np.ndarray:
    k = len(free)
    g = system.gram[np.ix_(free, free)]
    mat = np.zeros((k + 1, k + 1))
    mat[:k, :k] = 2.0 * g
    mat[:k, k] = 1.0
    mat[k, :k] = 1.0
    rhs = np.concatenate([2.0 * system.cross[free], [1.0]])
    sol = np.linalg.lstsq(mat, rhs, rcond=None)[0]
    return sol[:k]


def _active_set(system: GramSystem, lam: np.ndarray, tol: float, max_iter: int):
    """Primal active-set refinement starting from a feasible point."""
    n = system.size
    lam = lam.copy()
    free = [j for j in range(n) if lam[j] > 0.0]
    f = system.objective(lam)
    it = 0
    for it in range(1, max_iter + 1):
        target = _kkt_solve(system, free)
        cur = lam[free]
        direction = target - cur
        if np.max(np.abs(direction)) > 1e-15:
            neg = direction < 0
            ratios = np.full(len(free), np.inf)
            ratios[neg] = cur[neg] / -direction[neg]
            tau = min(1.0, float(ratios.min()))
            trial = lam.copy()
            trial[free] = cur + tau * direction
            blocking = [free[i] for i in np.flatnonzero(ratios <= tau)] if tau < 1.0 else []
            for j in blocking:
                trial[j] = 0.0
            trial = _clean_simplex(trial)
            ft = system.objective(trial)
            if ft > f + 1e-15:
                break
            lam, f = trial, ft
            if blocking:
                free = [j for j in free if j not in blocking and lam[j] > 0.0]
                if not free:
                    break
                continue
        # stationary on the current face: check multipliers of the bound constraints
        grad = system.gradient(lam)
        nu = float(np.mean(grad[free]))
        slack = grad - nu
        slack[free] = np.inf
        j = int(np.argmin(slack))
        if slack[j] >= -tol:
            break
        free = sorted(free + [j])
    return lam, it


def minimize_lambda(system: GramSystem, qp: QpConfig = QpConfig()) -> LambdaSolution:
    """Minimize the combination MSE over the probability simplex.

    Accelerated projected gradient from the uniform point, followed by an
    active-set polish on the identified support. The better of the two
    points is returned; it is always feasible.
    """
    n = system.size
    if n == 1:
        lam = np.ones(1)
        return LambdaSolution(lam, system.objective(lam), 0, True, 0.0)

    tol = qp.objective_tolerance
    lam = np.full(n, 1.0 / n)
    f = system.objective(lam)
    gap = duality_gap(system, lam)
    iterations = 0
    while gap > tol and iterations < qp.max_iterations:
        budget = min(_PG_ROUND, qp.max_iterations - iterations)
        lam, k = _accelerated_pg(system, lam, tol, budget)
        iterations += k
        f, gap = system.objective(lam), duality_gap(system, lam)
        if gap <= tol:
            break
        cand, k = _active_set(system, lam, tol * 1e-3, 10 * n + 50)
        iterations += k
        cand = _clean_simplex(cand)
        fc = system.objective(cand)
        # objective differences below _F_NOISE are evaluation roundoff
        if fc <= f + _F_NOISE:
            lam, f, gap = cand, fc, duality_gap(system, cand)
    lam = _clean_simplex(lam)
    f = system.objective(lam)
    converged = gap <= tol
    if not converged:
        log.warning("lambda minimization stopped with duality gap %.3g", gap)
    return LambdaSolution(lam, f, iterations, converged, gap)


# --------------------------------------------------------------------------
# pruning and the full pipeline

def lambda_order(lambdas) -> np.ndarray:
    """Indices sorted by decreasing lambda; ties keep ascending position."""
    lam = np.asarray(lambdas, dtype=np.float64)
    return np.argsort(-lam, kind="stable")


def n_alpha_for(lambdas, lambda_max: float) -> int:
    """Smallest prefix of the lambda-descending order whose mass reaches lambda_max."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if not (0.0 < lambda_max <= 1.0):
        raise ValueError("lambda_max must be in (0, 1]")
    if lambda_max >= 1.0:
        return lam.size
    cum = np.cumsum(lam[lambda_order(lam)])
    hits = np.flatnonzero(cum >= lambda_max - 1e-12)
    return int(hits[0]) + 1 if hits.size else lam.size


def select_final(alphas: AlphaSequence, solution: LambdaSolution,
                 lambda_max: float) -> AlphaSequence:
    if len(alphas) != solution.lambdas.size:
        raise ValueError("alphas and lambdas are not aligned")
    order = lambda_order(solution.lambdas)
    k = n_alpha_for(solution.lambdas, lambda_max)
    return AlphaSequence(tuple(alphas[i] for i in order[:k]), "final")


def _final_indices(solution: LambdaSolution, lambda_max: float) -> np.ndarray:
    return lambda_order(solution.lambdas)[:n_alpha_for(solution.lambdas, lambda_max)]


@dataclass(frozen=True)
class FitResult:
    model: ElcModel
    alpha_search: AlphaSearchResult
    starting: AlphaSequence
    system: GramSystem
    first: LambdaSolution
    final: AlphaSequence
    refit: LambdaSolution

    @property
    def alpha_star(self) -> float:
        return self.alpha_search.alpha

    @property
    def ema_mse(self) -> float:
        return self.alpha_search.mse

    def refit_mse(self, lambda_max: float, qp: QpConfig = QpConfig()) -> float:
        """Training MSE after pruning at ``lambda_max`` and re-minimizing."""
        if lambda_max >= 1.0:
            return self.first.achieved_mse
        idx = _final_indices(self.first, lambda_max)
        return minimize_lambda(self.system.subsystem(idx), qp).achieved_mse

    def sweep(self, lambda_maxes: Sequence[float], qp: QpConfig = QpConfig()) -> list[dict]:
        rows = []
        for lm in lambda_maxes:
            rows.append({"lambda_max": float(lm),
                         "n_alpha": n_alpha_for(self.first.lambdas, lm),
                         "mse": self.refit_mse(lm, qp)})
        return rows

    def report(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "ema_training_mse": self.ema_mse,
            "alpha_s": list(self.starting.values),
            "lambda_s": self.first.lambdas.tolist(),
            "alpha_f": list(self.final.values),
            "lambda_f": self.refit.lambdas.tolist(),
            "n_alpha": len(self.final),
            "first_training_mse": self.first.achieved_mse,
            "refit_training_mse": self.refit.achieved_mse,
            "first_iterations": self.first.iterations,
            "refit_iterations": self.refit.iterations,
            "first_converged": self.first.converged,
            "refit_converged": self.refit.converged,
        }


def trace_identity(trace: OutcomeTrace) -> dict:
    digest = hashlib.sha256(np.packbits(trace.outcomes, bitorder="little").tobytes())
    digest.update(str(len(trace)).encode())
    return {
        "channel_label": trace.channel_label,
        "length": len(trace),
        "sample_period_us": trace.sample_period_us,
        "origin": trace.origin,
        "seed": trace.seed,
        "sha256": digest.hexdigest(),
    }


def train_elc(train_trace: OutcomeTrace, config: TrainConfig = TrainConfig()) -> FitResult:
    search = search_alpha_star(train_trace, config)
    starting = build_starting_sequence(search.alpha, config)
    targets = compute_targets(train_trace, config.n_future)
    system = gram_from_trace(starting.values, config.y0, train_trace, targets, config.n_skip)
    first = minimize_lambda(system, config.qp)

    if config.lambda_max >= 1.0:
        # shortcut: keep every filter and reuse the first solution unchanged
        final = AlphaSequence(tuple(starting.values[i] for i in lambda_order(first.lambdas)),
                              "final")
        order = lambda_order(first.lambdas)
        refit = LambdaSolution(first.lambdas[order], first.achieved_mse, 0,
                               first.converged, first.gap)
    else:
        idx = _final_indices(first, config.lambda_max)
        final = AlphaSequence(tuple(starting.values[i] for i in idx), "final")
        refit = minimize_lambda(system.subsystem(idx), config.qp)

    provenance = {
        "tool": f"elc {__version__}",
        "config": config.to_flat(),
        "training_set": trace_identity(train_trace),
        "alpha_star": search.alpha,
        "ema_training_mse": search.mse,
        "alpha_s": list(starting.values),
        "lambda_s": first.lambdas.tolist(),
        "first_training_mse": first.achieved_mse,
        "refit_training_mse": refit.achieved_mse,
        "second_minimization": config.lambda_max < 1.0,
    }
    model = ElcModel(final.values, tuple(refit.lambdas.tolist()), config.y0, provenance)
    return FitResult(model, search, starting, system, first, final, refit)


def fit_elc(train_trace: OutcomeTrace, config: TrainConfig = TrainConfig()) -> ElcModel:
    return train_elc(train_trace, config).model


def evaluate(model: Union[ElcModel, float], test_trace: OutcomeTrace,
             config: TrainConfig = TrainConfig()) -> ErrorReport:
    """Error statistics of a model (or a plain EMA weight) on ``test_trace``."""
    if len(test_trace) < config.min_trace_length:
        raise ValueError(
            f"test trace of length {len(test_trace)} is too short: need at least "
            f"{config.min_trace_length}")
    targets = compute_targets(test_trace, config.n_future)
    y = predictions_for(model, test_trace, config)
    return report(y, targets, config.n_skip)


def predictions_for(model: Union[ElcModel, float], trace: OutcomeTrace,
                    config: TrainConfig = TrainConfig()) -> np.ndarray:
    if isinstance(model, ElcModel):
        return predict_series(model, trace)
    return ema_run(float(model), config.y0, trace)

"""Reproducible synthetic outcome traces.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``. Uniform
doubles are drawn with ``Generator.random`` and compared against success
probabilities; Gilbert-Elliott sojourn times come from
``Generator.geometric``. Keep both call patterns fixed: the golden traces in
the test suite depend on them.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .trace import DEFAULT_SAMPLE_PERIOD_US, OutcomeTrace


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _check_prob(name, p):
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class GilbertElliottParams:
    p_good_to_bad: float
    p_bad_to_good: float
    success_prob_good: float
    success_prob_bad: float
    seed: int = 0

    def __post_init__(self):
        for name in ("p_good_to_bad", "p_bad_to_good", "success_prob_good", "success_prob_bad"):
            _check_prob(name, getattr(self, name))
        if self.success_prob_good < self.success_prob_bad:
            raise ValueError("success_prob_good must be >= success_prob_bad")

    def stationary_good(self) -> float:
        """Stationary probability of the good state.

        A chain with no transitions at all starts (and stays) in the good state.
        """
        total = self.p_good_to_bad + self.p_bad_to_good
        if total == 0.0:
            return 1.0
        return self.p_bad_to_good / total

    def stationary_success(self) -> float:
        pg = self.stationary_good()
        return pg * self.success_prob_good + (1.0 - pg) * self.success_prob_bad


@dataclass(frozen=True)
class FdrProfile:
    """Piecewise-constant FDR: ``segments`` is a list of ``(length, fdr)``."""

    segments: tuple
    seed: int = 0

    def __post_init__(self):
        segs = tuple((int(n), float(p)) for n, p in self.segments)
        if not segs:
            raise ValueError("profile needs at least one segment")
        for n, p in segs:
            if n < 1:
                raise ValueError(f"segment length must be >= 1, got {n}")
            _check_prob("segment fdr", p)
        object.__setattr__(self, "segments", segs)

    @property
    def length(self) -> int:
        return sum(n for n, _ in self.segments)

    def fdr_series(self) -> np.ndarray:
        return np.repeat([p for _, p in self.segments], [n for n, _ in self.segments])


def gen_gilbert_elliott(params: GilbertElliottParams, n: int,
                        sample_period_us: int = DEFAULT_SAMPLE_PERIOD_US,
                        channel_label: str = "") -> OutcomeTrace:
    """Sample ``n`` outcomes from a two-state Gilbert-Elliott channel.

    The initial state is drawn from the stationary distribution. The chain is
    simulated by alternating geometric sojourn times, which is equivalent to a
    per-step transition draw but vectorizes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(params.seed)
    good = bool(rng.random() < params.stationary_good())
    leave = {True: params.p_good_to_bad, False: params.p_bad_to_good}

    state = np.empty(n, dtype=bool)
    pos = 0
    while pos < n:
        p = leave[good]
        # sojourn >= 1 steps; a zero exit probability means the chain never leaves
        stay = n - pos if p == 0.0 else int(min(rng.geometric(p), n - pos))
        state[pos:pos + stay] = good
        pos += stay
        good = not good

    success = np.where(state, params.success_prob_good, params.success_prob_bad)
    outcomes = (rng.random(n) < success).astype(np.uint8)
    return OutcomeTrace(outcomes, sample_period_us=sample_period_us,
                        channel_label=channel_label, origin="synthetic",
                        seed=params.seed, _checked=True)


def gen_from_profile(profile: FdrProfile,
                     sample_period_us: int = DEFAULT_SAMPLE_PERIOD_US,
                     channel_label: str = "") -> OutcomeTrace:
    """I.i.d. Bernoulli outcomes with the piecewise FDR of ``profile``."""
    rng = make_rng(profile.seed)
    outcomes = (rng.random(profile.length) < profile.fdr_series()).astype(np.uint8)
    return OutcomeTrace(outcomes, sample_period_us=sample_period_us,
                        channel_label=channel_label, origin="synthetic",
                        seed=profile.seed, _checked=True)


def parse_profile(text: str, seed: int) -> FdrProfile:
    """Parse ``length fdr`` lines (``#`` comments allowed)."""
    segments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"profile line {lineno}: expected 'length fdr', got {raw!r}")
        try:
            n, p = int(parts[0]), float(parts[1])
        except ValueError:
            raise ValueError(f"profile line {lineno}: cannot parse {raw!r}") from None
        segments.append((n, p))
    return FdrProfile(tuple(segments), seed=seed)


def load_profile(path, seed: int) -> FdrProfile:
    return parse_profile(Path(path).read_text(encoding="utf-8"), seed)


def regime_switching(n: int, seed: int, *, levels: Sequence[float] = (0.9, 0.75, 0.5),
                     mean_dwell: int = 20_000, sample_period_us: int = DEFAULT_SAMPLE_PERIOD_US,
                     channel_label: str = "") -> OutcomeTrace:
    """Slow FDR regime changes composed from hard-step profile segments.

    Dwell times are exponential with mean ``mean_dwell`` samples and each new
    level is drawn uniformly from ``levels``. Used by experiment scripts to
    mimic channels whose FDR drifts between plateaus.
    """
    rng = make_rng(seed)
    segments = []
    total = 0
    while total < n:
        dwell = max(1, int(rng.exponential(mean_dwell)))
        dwell = min(dwell, n - total)
        segments.append((dwell, float(levels[rng.integers(len(levels))])))
        total += dwell
    sub_seed = int(rng.integers(2**63))
    trace = gen_from_profile(FdrProfile(tuple(segments), seed=sub_seed),
                             sample_period_us=sample_period_us, channel_label=channel_label)
    return replace(trace, seed=seed, _checked=True)

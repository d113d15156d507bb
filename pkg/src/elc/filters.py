"""EMA filters, filter banks and their convex linear combination.

The EMA recurrence is ``y_i = alpha * x_i + (1 - alpha) * y_{i-1}``. Long
traces are filtered with :func:`scipy.signal.lfilter`, which evaluates the
same two products and one sum per sample as :func:`ema_step`; the results are
bit-identical to folding :func:`ema_step` over the trace.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from .trace import OutcomeTrace

DEFAULT_Y0 = 0.5
MODEL_FORMAT = "elc-model"
MODEL_VERSION = 1
SIMPLEX_ATOL = 1e-9


class ModelFormatError(ValueError):
    """A serialized model is malformed. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"model field {field!r}: {message}")
        self.field = field


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0) or math.isnan(alpha):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    return alpha


def check_y0(y0: float) -> float:
    y0 = float(y0)
    if not (0.0 <= y0 <= 1.0):
        raise ValueError(f"y0 must be in [0, 1], got {y0}")
    return y0


@dataclass(frozen=True)
class EmaState:
    alpha: float
    y: float = DEFAULT_Y0

    def __post_init__(self):
        check_alpha(self.alpha)
        check_y0(self.y)


def ema_step(state: EmaState, x: float) -> EmaState:
    a = state.alpha
    return EmaState(a, a * x + (1.0 - a) * state.y)


def _as_signal(trace) -> np.ndarray:
    if isinstance(trace, OutcomeTrace):
        return trace.as_float()
    return np.asarray(trace, dtype=np.float64)


def _ema_block(alpha: float, x: np.ndarray, y_prev: float) -> np.ndarray:
    y, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], x, zi=[(1.0 - alpha) * y_prev])
    return y


def ema_run(alpha: float, y0: float, trace) -> np.ndarray:
    """Predictions ``y_1 .. y_N``; ``y_i`` has consumed outcome ``x_i``."""
    alpha = check_alpha(alpha)
    y0 = check_y0(y0)
    return _ema_block(alpha, _as_signal(trace), y0)


def bank_run(alphas: Sequence[float], y0: float, trace) -> np.ndarray:
    """Run one EMA per alpha. Returns an array of shape ``(len(alphas), N)``."""
    alphas = [check_alpha(a) for a in alphas]
    if not alphas:
        raise ValueError("alphas must be non-empty")
    y0 = check_y0(y0)
    x = _as_signal(trace)
    out = np.empty((len(alphas), x.size))
    for j, a in enumerate(alphas):
        out[j] = _ema_block(a, x, y0)
    return out


def bank_chunks(alphas: Sequence[float], y0: float, trace,
                chunk: int = 1 << 18) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(start, block)`` pieces of :func:`bank_run` without holding it all.

    Filter state is carried across chunks, so the concatenation of the blocks
    equals ``bank_run`` bit for bit.
    """
    alphas = [check_alpha(a) for a in alphas]
    y0 = check_y0(y0)
    x = _as_signal(trace)
    last = np.full(len(alphas), y0)
    for start in range(0, x.size, chunk):
        xs = x[start:start + chunk]
        block = np.empty((len(alphas), xs.size))
        for j, a in enumerate(alphas):
            block[j] = _ema_block(a, xs, last[j])
        last = block[:, -1].copy()
        yield start, block


def combine(outputs: Sequence[float], lambdas: Sequence[float]) -> float:
    """Convex combination ``sum_j lambda_j * y_j`` (accumulated in order)."""
    if len(outputs) != len(lambdas):
        raise ValueError(f"length mismatch: {len(outputs)} outputs, {len(lambdas)} lambdas")
    if len(outputs) == 0:
        raise ValueError("nothing to combine")
    acc = lambdas[0] * outputs[0]
    for lam, y in zip(lambdas[1:], outputs[1:]):
        acc = acc + lam * y
    lo, hi = min(outputs), max(outputs)
    return float(min(max(acc, lo), hi))


@dataclass(frozen=True)
class ElcModel:
    """Final EMA weights ``alphas`` with combination coefficients ``lambdas``."""

    alphas: tuple
    lambdas: tuple
    y0: float = DEFAULT_Y0
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        lambdas = tuple(float(v) for v in self.lambdas)
        if len(alphas) < 1 or len(alphas) != len(lambdas):
            raise ValueError("alphas and lambdas must be non-empty and of equal length")
        for a in alphas:
            check_alpha(a)
        if len(set(alphas)) != len(alphas):
            raise ValueError("alphas must be pairwise distinct")
        if any(not (0.0 <= v <= 1.0) for v in lambdas):
            raise ValueError("every lambda must lie in [0, 1]")
        if abs(math.fsum(lambdas) - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"lambdas sum to {math.fsum(lambdas)!r}, expected 1")
        check_y0(self.y0)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "y0", float(self.y0))

    @classmethod
    def single(cls, alpha: float, y0: float = DEFAULT_Y0, **provenance) -> "ElcModel":
        return cls((alpha,), (1.0,), y0, dict(provenance))

    @property
    def n_alpha(self) -> int:
        return len(self.alphas)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "alphas": list(self.alphas),
            "lambdas": list(self.lambdas),
            "y0": self.y0,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        # repr-based float encoding round-trips doubles exactly
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, doc) -> "ElcModel":
        if not isinstance(doc, dict):
            raise ModelFormatError("<root>", "expected a JSON object")
        if doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError("format", f"expected {MODEL_FORMAT!r}, got {doc.get('format')!r}")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError("version", f"unsupported version {doc.get('version')!r}")
        for key in ("alphas", "lambdas"):
            val = doc.get(key)
            if not isinstance(val, list) or not val:
                raise ModelFormatError(key, "expected a non-empty list of numbers")
            for k, v in enumerate(val):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ModelFormatError(f"{key}[{k}]", f"not a number: {v!r}")
        y0 = doc.get("y0", DEFAULT_Y0)
        if isinstance(y0, bool) or not isinstance(y0, (int, float)):
            raise ModelFormatError("y0", f"not a number: {y0!r}")
        prov = doc.get("provenance", {})
        if not isinstance(prov, dict):
            raise ModelFormatError("provenance", "expected an object")
        alphas, lambdas = doc["alphas"], doc["lambdas"]
        if len(alphas) != len(lambdas):
            raise ModelFormatError("lambdas", f"length {len(lambdas)} != len(alphas) {len(alphas)}")
        for k, a in enumerate(alphas):
            if not (0.0 < a <= 1.0):
                raise ModelFormatError(f"alphas[{k}]", f"{a!r} outside (0, 1]")
        for k, v in enumerate(lambdas):
            if not (0.0 <= v <= 1.0):
                raise ModelFormatError(f"lambdas[{k}]", f"{v!r} outside [0, 1]")
        try:
            return cls(tuple(alphas), tuple(lambdas), y0, prov)
        except ValueError as exc:
            field_name = "y0" if "y0" in str(exc) else ("alphas" if "distinct" in str(exc) else "lambdas")
            raise ModelFormatError(field_name, str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ElcModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError("<json>", str(exc)) from None
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ElcModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def predict_series(model: ElcModel, trace) -> np.ndarray:
    """Combined prediction ``y^COM_i`` for every index of ``trace``.

    Filters are run one at a time and accumulated in model order, matching
    :func:`combine` term by term without materializing the full bank.
    """
    x = _as_signal(trace)
    acc = None
    for lam, a in zip(model.lambdas, model.alphas):
        term = lam * _ema_block(a, x, model.y0)
        acc = term if acc is None else acc + term
    return np.clip(acc, 0.0, 1.0, out=acc)

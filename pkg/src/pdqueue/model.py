"""Core state space, jump maps and intensity fields of the queueing model.

The system state is a pair ``(n, x)``: the number of customers in the
system (waiting plus in service) and the elapsed service time of the
customer currently being served.  The empty system is the single point
``(0, 0)``.  Between jumps the state moves deterministically: ``x`` ages at
unit speed while ``n > 0`` and stays frozen at the empty point.

Arrival and service-completion rates are described by :class:`IntensitySpec`
objects, small declarative records (kind + parameters + a declared upper
bound + discontinuity breakpoints).  Rates may be discontinuous in ``x``;
every spec must declare a finite sup because exact thinning samplers
dominate proposals with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import piecewise_simpson

INTENSITY_KINDS = ("constant", "step", "table", "pk_hazard", "erlang2_hazard", "zero")


class SpecViolationError(RuntimeError):
    """An intensity evaluated above its declared_sup (corrupt spec)."""


class InvalidTransitionError(ValueError):
    """A jump map was applied where the model forbids it."""


@dataclass(frozen=True, order=True)
class State:
    """Queue state ``(n, x)``; the empty system is exactly ``(0, 0)``."""

    n: int
    x: float

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")
        if self.x < 0:
            raise ValueError(f"x must be nonnegative, got {self.x}")
        if self.n == 0 and self.x != 0:
            raise ValueError(f"empty system must sit at (0, 0), got (0, {self.x})")


EMPTY = State(0, 0.0)


def flow(s: State, dt: float) -> State:
    """Deterministic motion over ``dt``: service ages at unit speed.

    While the system is empty nothing is being served, so the empty point
    does not age.
    """
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if s.n == 0:
        return s
    return State(s.n, s.x + dt)


def jump_up(s: State, capacity: int | None = None) -> State:
    """Arrival: ``(n, x) -> (n+1, x)``; an arrival to the empty system starts
    a fresh service at ``x = 0``."""
    if capacity is not None and s.n >= capacity:
        raise InvalidTransitionError(f"arrival at capacity {capacity} from n={s.n}")
    return State(s.n + 1, s.x)


def jump_down(s: State) -> State:
    """Service completion: ``(n, x) -> (n-1, 0)``.

    The elapsed time resets because the next customer (if any) starts a
    fresh service.
    """
    if s.n < 1:
        raise InvalidTransitionError("no departure from the empty system")
    return State(s.n - 1, 0.0)


def state_distance(a: State, b: State) -> float:
    """Metric on the state space: ``|n - n'| + |x - x'|``."""
    return abs(a.n - b.n) + abs(a.x - b.x)


def _as_float_array(v):
    return np.asarray(v, dtype=float)


@dataclass(frozen=True)
class IntensitySpec:
    """Declarative rate field ``(n, x) -> rate``.

    Fields
    ------
    kind:
        One of ``constant, step, table, pk_hazard, erlang2_hazard, zero``.
    params:
        Kind-specific parameters (see the classmethod constructors).
    declared_sup:
        Upper bound of the field over its whole domain.  Thinning samplers
        dominate with this value, so an evaluation above it is a hard
        error, never a warning.
    breakpoints:
        Sorted x-values at which the field may be discontinuous.  Used to
        split quadrature intervals; piecewise-constant kinds fill it in
        automatically.
    """

    kind: str
    params: dict = field(default_factory=dict)
    declared_sup: float = 0.0
    breakpoints: tuple = ()

    def __post_init__(self):
        if self.kind not in INTENSITY_KINDS:
            raise ValueError(f"unknown intensity kind {self.kind!r}")
        if not (self.declared_sup >= 0 and math.isfinite(self.declared_sup)):
            raise ValueError("declared_sup must be finite and nonnegative")
        bks = tuple(float(b) for b in self.breakpoints)
        if any(b < 0 for b in bks) or list(bks) != sorted(set(bks)):
            raise ValueError("breakpoints must be sorted, distinct, nonnegative")
        object.__setattr__(self, "breakpoints", bks)
        object.__setattr__(self, "_bk_arr", np.asarray(bks, dtype=float))
        self._validate_params()

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, value: float, declared_sup: float | None = None) -> "IntensitySpec":
        return cls("constant", {"value": float(value)},
                   float(value) if declared_sup is None else declared_sup)

    @classmethod
    def step(cls, values, breakpoints, declared_sup: float | None = None) -> "IntensitySpec":
        """Piecewise-constant in x: ``values[i]`` on ``[b_{i-1}, b_i)``,
        right-continuous at each breakpoint."""
        values = [float(v) for v in values]
        sup = max(values) if declared_sup is None else declared_sup
        return cls("step", {"values": values}, sup, tuple(breakpoints))

    @classmethod
    def table(cls, values, width: float, declared_sup: float | None = None) -> "IntensitySpec":
        """Piecewise-constant on a uniform x-grid of the given width, one row
        per queue length ``n = 1 .. n_max``; constant extension beyond the
        last row and last column."""
        rows = [[float(v) for v in row] for row in values]
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise ValueError("table rows must have equal length")
        sup = max(max(r) for r in rows) if declared_sup is None else declared_sup
        bks = tuple(width * j for j in range(1, ncols))
        return cls("table", {"values": rows, "width": float(width)}, sup, bks)

    @classmethod
    def pk_hazard(cls, c0: float, declared_sup: float | None = None) -> "IntensitySpec":
        """Heavy-tailed service hazard ``c0 / (1 + x)``."""
        return cls("pk_hazard", {"c0": float(c0)},
                   float(c0) if declared_sup is None else declared_sup)

    @classmethod
    def erlang2_hazard(cls, rate: float, declared_sup: float | None = None) -> "IntensitySpec":
        """Hazard of an Erlang-2 service time with stage rate ``rate``:
        ``rate**2 * x / (1 + rate * x)`` (mean ``2/rate``, Cs^2 = 1/2)."""
        return cls("erlang2_hazard", {"rate": float(rate)},
                   float(rate) if declared_sup is None else declared_sup)

    @classmethod
    def zero(cls) -> "IntensitySpec":
        return cls("zero", {}, 0.0)

    # -- evaluation ----------------------------------------------------

    def _validate_params(self):
        kind, p = self.kind, self.params
        if kind == "constant":
            if "value" not in p or p["value"] < 0:
                raise ValueError("constant kind needs a nonnegative 'value'")
        elif kind == "step":
            vals = p.get("values")
            if not vals or any(v < 0 for v in vals):
                raise ValueError("step kind needs nonnegative 'values'")
            if len(vals) != len(self.breakpoints) + 1:
                raise ValueError("step kind needs len(values) == len(breakpoints) + 1")
            object.__setattr__(self, "_step_vals", np.asarray(vals, dtype=float))
        elif kind == "table":
            vals = p.get("values")
            w = p.get("width")
            if not vals or w is None or w <= 0:
                raise ValueError("table kind needs 'values' (2D) and positive 'width'")
            arr = np.asarray(vals, dtype=float)
            if arr.ndim != 2 or (arr < 0).any():
                raise ValueError("table values must be a nonnegative 2D grid")
            object.__setattr__(self, "_table_vals", arr)
        elif kind == "pk_hazard":
            if p.get("c0", -1) < 0:
                raise ValueError("pk_hazard kind needs nonnegative 'c0'")
        elif kind == "erlang2_hazard":
            if p.get("rate", -1) is None or p.get("rate", -1) <= 0:
                raise ValueError("erlang2_hazard kind needs positive 'rate'")

    def value(self, n, x):
        """Evaluate the raw field at ``(n, x)`` (numpy-broadcasting).

        Raises :class:`SpecViolationError` if any value exceeds
        ``declared_sup`` -- thinning exactness depends on the bound.
        """
        n = np.asarray(n)
        x = _as_float_array(x)
        kind = self.kind
        if kind == "constant":
            out = np.broadcast_to(self.params["value"], np.broadcast(n, x).shape).copy()
        elif kind == "zero":
            out = np.zeros(np.broadcast(n, x).shape)
        elif kind == "step":
            idx = np.searchsorted(self._bk_arr, x, side="right")
            out = self._step_vals[idx]
            out = np.broadcast_to(out, np.broadcast(n, x).shape).copy()
        elif kind == "pk_hazard":
            out = np.broadcast_to(self.params["c0"] / (1.0 + x),
                                  np.broadcast(n, x).shape).copy()
        elif kind == "erlang2_hazard":
            r = self.params["rate"]
            out = np.broadcast_to(r * r * x / (1.0 + r * x),
                                  np.broadcast(n, x).shape).copy()
        else:  # table
            arr = self._table_vals
            w = self.params["width"]
            row = np.clip(np.asarray(n, dtype=np.int64), 1, arr.shape[0]) - 1
            col = np.clip((x / w).astype(np.int64), 0, arr.shape[1] - 1)
            out = arr[np.broadcast_arrays(row, col)[0], np.broadcast_arrays(row, col)[1]]
        if np.any(out > self.declared_sup):
            raise SpecViolationError(
                f"{kind} intensity evaluated above declared_sup={self.declared_sup}")
        return out

    def exact_sup(self, n_limit: int | None = None) -> float:
        """Exact supremum of the field (over rows ``n < n_limit`` for tables)."""
        kind = self.kind
        if kind == "constant":
            return self.params["value"]
        if kind == "zero":
            return 0.0
        if kind == "step":
            return float(self._step_vals.max())
        if kind == "pk_hazard":
            return self.params["c0"]
        if kind == "erlang2_hazard":
            return self.params["rate"]
        arr = self._table_vals
        if n_limit is not None:
            rows = min(max(n_limit - 1, 0), arr.shape[0])
            if rows == 0:
                return 0.0
            if n_limit - 1 <= arr.shape[0]:
                arr = arr[:rows]
        return float(arr.max())

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "declared_sup": self.declared_sup,
            "breakpoints": list(self.breakpoints),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntensitySpec":
        if not isinstance(d, dict) or "kind" not in d:
            raise ValueError("intensity spec must be an object with a 'kind'")
        kind = d["kind"]
        if kind not in INTENSITY_KINDS:
            raise ValueError(f"unknown intensity kind {kind!r}")
        if kind != "zero" and "declared_sup" not in d:
            raise ValueError(f"declared_sup required for intensity kind {kind!r}")
        return cls(kind, dict(d.get("params", {})),
                   float(d.get("declared_sup", 0.0)),
                   tuple(d.get("breakpoints", ())))


@dataclass(frozen=True)
class ModelSpec:
    """Full model: arrival field, service field, empty-state arrival rate
    and an optional capacity.

    The capacity is realized purely through the arrival rate: lambda is
    forced to 0 for ``n >= capacity``, with no separate blocking logic.
    The service rate is 0 whenever ``n = 0`` regardless of the field.
    """

    lambda_field: IntensitySpec
    h_field: IntensitySpec
    lambda0: float
    capacity: int | None = None

    def __post_init__(self):
        if self.lambda0 < 0 or not math.isfinite(self.lambda0):
            raise ValueError("lambda0 must be finite and nonnegative")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be a positive integer")

    # -- effective rates ------------------------------------------------

    def lam(self, n, x):
        """Effective arrival rate: ``lambda0`` at the empty point, 0 at or
        above capacity, the field value otherwise (array-capable)."""
        n = np.asarray(n)
        base = self.lambda_field.value(np.maximum(n, 1), x)
        out = np.where(n == 0, self.lambda0, base)
        if self.capacity is not None:
            out = np.where(n >= self.capacity, 0.0, out)
        return out

    def h(self, n, x):
        """Effective service rate: 0 while the system is empty."""
        n = np.asarray(n)
        base = self.h_field.value(np.maximum(n, 1), x)
        return np.where(n == 0, 0.0, base)

    def up_bounds(self, n):
        """Dominating arrival rate per state, taken from declared_sup."""
        n = np.asarray(n)
        out = np.where(n == 0, self.lambda0,
                       np.full(n.shape, self.lambda_field.declared_sup, dtype=float))
        if self.capacity is not None:
            out = np.where(n >= self.capacity, 0.0, out)
        return out

    def down_bounds(self, n):
        n = np.asarray(n)
        return np.where(n == 0, 0.0,
                        np.full(n.shape, self.h_field.declared_sup, dtype=float))

    def big_lambda(self) -> float:
        """Sup of the arrival rate over busy states ``n > 0``."""
        return self.lambda_field.exact_sup(n_limit=self.capacity)

    def lambda_bar(self) -> float:
        """Overall arrival-rate bound ``max(big_lambda, lambda0)``."""
        return max(self.big_lambda(), self.lambda0)

    def to_dict(self) -> dict:
        return {
            "lambda_field": self.lambda_field.to_dict(),
            "h_field": self.h_field.to_dict(),
            "lambda0": self.lambda0,
            "capacity": self.capacity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        for key in ("lambda_field", "h_field", "lambda0"):
            if key not in d:
                raise ValueError(f"model spec missing {key!r}")
        return cls(IntensitySpec.from_dict(d["lambda_field"]),
                   IntensitySpec.from_dict(d["h_field"]),
                   float(d["lambda0"]),
                   None if d.get("capacity") is None else int(d["capacity"]))


def evaluate_intensity(spec: IntensitySpec, model: ModelSpec, s: State, which: str) -> float:
    """Rate of the up (arrival) or down (service) clock at a state.

    Model rules are applied around the raw field: lambda0 at the empty
    point, 0 at/above capacity for arrivals, 0 service when idle.
    """
    if which == "up":
        if s.n == 0:
            return model.lambda0
        if model.capacity is not None and s.n >= model.capacity:
            return 0.0
        return float(spec.value(s.n, s.x))
    if which == "down":
        if s.n == 0:
            return 0.0
        return float(spec.value(s.n, s.x))
    raise ValueError(f"which must be 'up' or 'down', got {which!r}")


def cumulative_hazard(spec: IntensitySpec, model: ModelSpec, s: State, which: str,
                      delta: float, method: str = "auto") -> float:
    """Integral of the clock's rate along the deterministic flow:
    ``int_0^delta rate(n, x + u) du``.

    Closed forms are used for the constant and pk_hazard kinds; other
    kinds go through breakpoint-aware composite Simpson.  ``method=
    'quadrature'`` forces the generic path (used to cross-check the
    closed forms).
    """
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if which not in ("up", "down"):
        raise ValueError(f"which must be 'up' or 'down', got {which!r}")
    if delta == 0:
        return 0.0
    if s.n == 0:
        # frozen flow: the rate is constant along the hold at the empty point
        rate = model.lambda0 if which == "up" else 0.0
        return rate * delta
    if which == "up" and model.capacity is not None and s.n >= model.capacity:
        return 0.0
    n, x = s.n, s.x
    if method == "auto":
        if spec.kind == "zero":
            return 0.0
        if spec.kind == "constant":
            return spec.params["value"] * delta
        if spec.kind == "pk_hazard":
            return spec.params["c0"] * (math.log1p(x + delta) - math.log1p(x))
    elif method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    bks = [b for b in spec.breakpoints if x < b < x + delta]
    return piecewise_simpson(lambda u: spec.value(n, u), x, x + delta, breakpoints=bks)

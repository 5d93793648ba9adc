"""Exact path sampling for the jump process.

Two independently implemented next-jump schemes are provided and must
agree in distribution:

* ``next_jump_race`` realizes the up and down candidate clocks separately
  (each an inhomogeneous Poisson first event along the deterministic flow,
  sampled by thinning against the declared sup) and takes the minimum;
* ``next_jump_thinning`` thins one clock at the total rate and classifies
  the accepted event up with probability lambda/(lambda+h).

Both are exact for bounded rates; exactness rests on declared_sup truly
dominating the field, which evaluation enforces.
"""

from __future__ import annotations

import math
import os
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, State, flow, jump_down, jump_up
from .rng import substream

WORKERS_ENV = "PDQUEUE_WORKERS"


class ExplosionSuspicionError(RuntimeError):
    """Event count exceeded the explosion guard on a finite horizon."""


@dataclass(frozen=True)
class JumpEvent:
    time: float
    kind: str  # "up" | "down"
    state_before: State
    state_after: State


@dataclass(frozen=True)
class Path:
    """One cadlag trajectory: ordered jumps, deterministic flow between."""

    initial: State
    horizon: float
    events: tuple = ()
    seed: tuple | None = None

    @property
    def final(self) -> State:
        return state_at(self, self.horizon)


@dataclass(frozen=True)
class MCEstimate:
    """A Monte-Carlo mean with its standard error."""

    mean: float
    stderr: float
    replicas: int
    master_seed: int

    def within(self, k: float = 3.0) -> bool:
        """True when the mean is within k standard errors of zero."""
        return abs(self.mean) <= k * self.stderr


def mc_estimate(values, master_seed: int) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    r = values.size
    sd = float(values.std(ddof=1)) if r > 1 else 0.0
    return MCEstimate(float(values.mean()), sd / math.sqrt(r), r, master_seed)


def _candidate_bound(model: ModelSpec, s: State, which: str) -> float:
    if which == "up":
        if s.n == 0:
            return model.lambda0
        if model.capacity is not None and s.n >= model.capacity:
            return 0.0
        return model.lambda_field.declared_sup
    return 0.0 if s.n == 0 else model.h_field.declared_sup


def sample_candidate_time(spec, model: ModelSpec, s: State, which: str,
                          horizon: float, rng) -> float | None:
    """First event time of one clock along the flow, or None past horizon.

    Thinning: propose Exp(declared_sup) increments, accept with probability
    rate/declared_sup evaluated at the flowed state.  The empty point is
    frozen, so its arrival clock is exactly Exp(lambda0).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    bound = _candidate_bound(model, s, which)
    if bound == 0.0:
        return None
    z = 0.0
    while True:
        z += rng.exponential(1.0 / bound)
        if z > horizon:
            return None
        moved = flow(s, z)
        rate = (model.lam(moved.n, moved.x) if which == "up"
                else model.h(moved.n, moved.x))
        if rng.random() * bound < rate:
            return z


def next_jump_race(model: ModelSpec, s: State, horizon: float, rng):
    """Sample both candidate clocks and keep the earlier one.

    Returns ``(holding_time, kind)`` or None if neither clock fires before
    the horizon.  An exact floating tie goes to "up" (probability-zero
    event, resolved deterministically).  The up clock is always drawn
    first so results are reproducible.
    """
    t_up = sample_candidate_time(model.lambda_field, model, s, "up", horizon, rng)
    t_dn = sample_candidate_time(model.h_field, model, s, "down", horizon, rng)
    if t_up is None and t_dn is None:
        return None
    if t_dn is None or (t_up is not None and t_up <= t_dn):
        return (t_up, "up")
    return (t_dn, "down")


def next_jump_thinning(model: ModelSpec, s: State, horizon: float, rng):
    """Single-clock alternative: thin at the summed bound, classify after.

    The acceptance test is strict, so a proposal landing where the total
    rate is zero is rejected outright -- no division happens there.
    """
    bound = _candidate_bound(model, s, "up") + _candidate_bound(model, s, "down")
    if bound == 0.0:
        return None
    z = 0.0
    while True:
        z += rng.exponential(1.0 / bound)
        if z > horizon:
            return None
        moved = flow(s, z)
        lam = float(model.lam(moved.n, moved.x))
        h = float(model.h(moved.n, moved.x))
        if rng.random() * bound < lam + h:
            kind = "up" if rng.random() * (lam + h) < lam else "down"
            return (z, kind)


_NEXT_JUMP = {"race": next_jump_race, "thinning": next_jump_thinning}


def simulate_path(model: ModelSpec, initial: State, horizon: float,
                  replica_seed, sampler: str = "race",
                  max_events: int = 10**7) -> Path:
    """Simulate one trajectory up to the horizon.

    ``replica_seed`` is either a ``(master_seed, index)`` pair or an
    already-built generator (in which case Path.seed is None).  The same
    seed and configuration always reproduce the identical event list.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if isinstance(replica_seed, tuple):
        rng = substream(*replica_seed)
        seed_record = tuple(replica_seed)
    else:
        rng, seed_record = replica_seed, None
    next_jump = _NEXT_JUMP[sampler]
    s = initial
    t = 0.0
    events = []
    while True:
        res = next_jump(model, s, horizon - t, rng)
        if res is None:
            break
        dt, kind = res
        t += dt
        before = flow(s, dt)
        after = jump_up(before, model.capacity) if kind == "up" else jump_down(before)
        events.append(JumpEvent(t, kind, before, after))
        if len(events) > max_events:
            raise ExplosionSuspicionError(
                f"more than {max_events} events before t={horizon}; "
                "explosion suspected (rates may exceed their declared sup)")
        s = after
    return Path(initial, horizon, tuple(events), seed_record)


def state_at(p: Path, t: float) -> State:
    """Cadlag evaluation: flow from the last jump at time <= t.

    Right-continuous at event times: querying exactly at a jump returns
    the post-jump state.
    """
    if not (0 <= t <= p.horizon):
        raise ValueError(f"t={t} outside [0, {p.horizon}]")
    times = [e.time for e in p.events]
    i = bisect_right(times, t)
    if i == 0:
        return flow(p.initial, t)
    e = p.events[i - 1]
    return flow(e.state_after, t - e.time)


def time_average(p: Path, fn) -> float:
    """Time average of ``fn(state)`` over [0, horizon].

    Only valid for fn constant along the flow in x, or for fn of n alone;
    used for occupancy statistics like P(n=0) and E[n].
    """
    total = 0.0
    t_prev = 0.0
    s = p.initial
    for e in p.events:
        total += fn(s) * (e.time - t_prev)
        t_prev, s = e.time, e.state_after
    total += fn(s) * (p.horizon - t_prev)
    return total / p.horizon


def path_to_csv(p: Path) -> str:
    """CSV export with the mandated column layout and 17 significant digits."""
    lines = ["time,kind,n_before,x_before,n_after,x_after"]
    for e in p.events:
        lines.append("%.17g,%s,%d,%.17g,%d,%.17g" % (
            e.time, e.kind, e.state_before.n, e.state_before.x,
            e.state_after.n, e.state_after.x))
    return "\n".join(lines) + "\n"


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _ensemble_chunk(args):
    model, initial, horizon, master_seed, lo, hi, reducer, sampler = args
    out = []
    for i in range(lo, hi):
        p = simulate_path(model, initial, horizon, (master_seed, i), sampler=sampler)
        out.append(float(reducer(p)))
    return lo, out


def run_ensemble(model: ModelSpec, initial: State, horizon: float, replicas: int,
                 master_seed: int, reducer, sampler: str = "race",
                 workers: int | None = None) -> MCEstimate:
    """Independent replicas reduced in fixed index order.

    Replica ``i`` draws from the substream ``(master_seed, i)``, so the
    result is identical for any worker count; the worker count is taken
    from the PDQUEUE_WORKERS environment variable when not given.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    nw = _worker_count(workers)
    values = np.empty(replicas, dtype=float)
    if nw == 1 or replicas < 4:
        for i in range(replicas):
            p = simulate_path(model, initial, horizon, (master_seed, i), sampler=sampler)
            values[i] = reducer(p)
    else:
        chunk = -(-replicas // nw)
        jobs = [(model, initial, horizon, master_seed, lo, min(lo + chunk, replicas),
                 reducer, sampler) for lo in range(0, replicas, chunk)]
        with ProcessPoolExecutor(max_workers=nw) as ex:
            for lo, vals in ex.map(_ensemble_chunk, jobs):
                values[lo:lo + len(vals)] = vals
    return mc_estimate(values, master_seed)


# reducers usable with run_ensemble (top-level so they pickle for workers)

def n_at_horizon(p: Path) -> float:
    return float(p.final.n)


def fraction_empty(p: Path) -> float:
    return time_average(p, lambda s: 1.0 if s.n == 0 else 0.0)


def mean_occupancy(p: Path) -> float:
    return time_average(p, lambda s: float(s.n))

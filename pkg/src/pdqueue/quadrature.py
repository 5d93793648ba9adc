"""Breakpoint-aware composite Simpson quadrature.

Integrands here are piecewise-continuous with a finite list of known
discontinuity points, so the interval is split at those points and each
smooth piece gets composite Simpson with step at most
``1e-3 * max(1, length)``.  Discontinuous integrands without declared
breakpoints are not supported anywhere in this package.
"""

from __future__ import annotations

import numpy as np

DEFAULT_REL_STEP = 1e-3


def default_step(length: float) -> float:
    """Spec'd step bound for an integral of the given total length."""
    return DEFAULT_REL_STEP * max(1.0, length)


def simpson_layout(lengths, steps):
    """Node layout for a batch of composite-Simpson integrals.

    Parameters
    ----------
    lengths, steps : arrays of shape (P,)
        Length of each integration piece and the target step bound.

    Returns
    -------
    pid : int array, piece index per node
    u : float array, node offset from the start of its piece
    w : float array, Simpson weight per node (includes the h/3 factor),
        so each piece's integral is ``sum(w * f(start + u))``.
    """
    lengths = np.asarray(lengths, dtype=float)
    steps = np.asarray(steps, dtype=float)
    n_int = 2 * np.maximum(1, np.ceil(lengths / (2.0 * steps)).astype(np.int64))
    counts = n_int + 1
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    total = int(counts.sum())
    pid = np.repeat(np.arange(lengths.size), counts)
    local = np.arange(total, dtype=np.int64) - offsets[pid]
    h = lengths / n_int
    u = local * h[pid]
    w = np.where(local % 2 == 1, 4.0, 2.0)
    w[local == 0] = 1.0
    w[local == n_int[pid]] = 1.0
    w *= h[pid] / 3.0
    return pid, u, w


def piecewise_simpson(fn, a: float, b: float, breakpoints=(), step: float | None = None) -> float:
    """Integrate ``fn`` over ``[a, b]``, splitting at interior breakpoints.

    ``fn`` must accept a numpy array of abscissae.  Pieces of zero length
    contribute nothing.
    """
    if b < a:
        raise ValueError("integration bounds must satisfy a <= b")
    if b == a:
        return 0.0
    if step is None:
        step = default_step(b - a)
    edges = [a] + [float(x) for x in breakpoints if a < x < b] + [b]
    starts = np.asarray(edges[:-1])
    lengths = np.diff(np.asarray(edges))
    pid, u, w = simpson_layout(lengths, np.full(lengths.size, step))
    return float(np.dot(w, fn(starts[pid] + u)))

"""Threshold crossing search: uniform scan followed by bracketed refinement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


@dataclass
class CrossingResult:
    """First point where ``fn(b) <= target`` plus every sign change seen in the scan."""

    first: float | None
    sign_changes: list = field(default_factory=list)
    holds_at_zero: bool = False
    # smallest |fn - target| on the scan grid beyond the first crossing: a near-tangency indicator
    min_gap_after: float | None = None


def scan_crossings(fn, lo: float, hi: float, step: float, target: float,
                   xtol: float = 1e-9, scalar_fn=None) -> CrossingResult:
    """Scan ``fn - target`` on ``[lo, hi]`` and refine every sign change.

    ``fn`` must accept an array of thresholds; ``scalar_fn`` (defaults to
    ``fn``) is used during refinement.  ``first`` is the infimum of the set
    ``{b > lo : fn(b) <= target}`` to within ``xtol`` (``lo`` itself when the
    condition already holds at the left end), or ``None`` when the condition
    never holds on the scanned interval.
    """
    scalar_fn = scalar_fn or (lambda b: float(np.asarray(fn(np.array([b])))[0]))
    m = max(1, int(np.ceil((hi - lo) / step - 1e-9)))
    grid = np.linspace(lo, hi, m + 1)
    vals = np.asarray(fn(grid), dtype=float) - target
    if not np.all(np.isfinite(vals)):
        keep = np.isfinite(vals)
        grid, vals = grid[keep], vals[keep]

    def g(b):
        return scalar_fn(b) - target

    changes = []
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        a, b = grid[i], grid[i + 1]
        if vals[i] == 0.0:
            changes.append(float(a))
            continue
        if vals[i + 1] == 0.0:
            changes.append(float(b))
            continue
        changes.append(float(brentq(g, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)))
    changes = sorted(set(changes))

    res = CrossingResult(first=None, sign_changes=changes)
    if changes:
        beyond = np.abs(vals[grid > changes[0] + step])
        res.min_gap_after = float(np.min(beyond)) if beyond.size else None
    if vals.size and vals[0] <= 0:
        res.first = float(grid[0])
        res.holds_at_zero = True
        return res
    below = np.flatnonzero(vals <= 0)
    if below.size:
        j = below[0]
        a, b = grid[j - 1], grid[j]
        res.first = float(b) if vals[j] == 0 else float(brentq(g, a, b, xtol=xtol,
                                                               rtol=4 * np.finfo(float).eps))
    return res

"""Discrete nonnegative measures on the half-line and the flat metric.

A measure is a finite sum of point masses sum_i m_i * delta_{x_i} with
x_i >= 0 and m_i >= 0.  The flat distance between two such measures is the
supremum of integral(phi d(mu1 - mu2)) over test functions phi bounded by 1
in absolute value and 1-Lipschitz.  On a merged finite support the supremum
is a linear program whose constraint graph is a path, which this module
solves exactly with a concave piecewise-linear sweep; an independent
grid-restricted dynamic program serves as a lower-bound oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError

POINT_TOL = 1e-12  # support points closer than this are merged
MASS_TOL = 1e-12   # negative masses above -MASS_TOL are clipped to zero

__all__ = [
    "DiscreteMeasure",
    "normalize",
    "zero_measure",
    "total_mass",
    "integrate",
    "flat_distance",
    "flat_distance_oracle",
    "pairing_bound",
]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported nonnegative measure on [0, inf).

    ``points`` is strictly increasing and ``masses`` nonnegative with the
    same length; empty arrays represent the zero measure.  Build instances
    through :func:`normalize` unless the invariants already hold.
    """

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        ms = np.asarray(self.masses, dtype=float)
        if pts.ndim != 1 or ms.ndim != 1 or len(pts) != len(ms):
            raise ValueError("points and masses must be 1-d arrays of equal length")
        if len(pts) > 0:
            if np.any(np.diff(pts) <= 0):
                raise ValueError("points must be strictly increasing")
            if pts[0] < 0:
                raise ValueError("points must be nonnegative")
            if np.any(ms < 0):
                raise ValueError("masses must be nonnegative")
        pts.flags.writeable = False
        ms.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    def __len__(self):
        return len(self.points)

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def integrate(self, fn) -> float:
        """Exact integral of a scalar function: sum_i m_i * fn(x_i)."""
        if len(self) == 0:
            return 0.0
        return float(np.dot(self.masses, np.asarray(fn(self.points), dtype=float)))


def zero_measure() -> DiscreteMeasure:
    return DiscreteMeasure(np.empty(0), np.empty(0))


def normalize(raw_points, raw_masses, *, point_tol: float = POINT_TOL,
              drop_tol: float = 0.0, mass_tol: float = MASS_TOL) -> DiscreteMeasure:
    """Build a valid measure from raw atom data.

    Sorts by position, merges points closer than ``point_tol`` by summing
    their masses, clips masses in [-mass_tol, 0) to zero and drops masses
    <= drop_tol.  Raises on negative points or masses below -mass_tol.
    """
    pts = np.asarray(raw_points, dtype=float)
    ms = np.asarray(raw_masses, dtype=float)
    if pts.shape != ms.shape or pts.ndim != 1:
        raise ValueError("points and masses must be 1-d arrays of equal length")
    if len(pts) == 0:
        return zero_measure()
    if np.any(pts < 0):
        raise NumericsError("negative support point in measure")
    if np.any(ms < -mass_tol):
        raise NumericsError(
            f"mass below -{mass_tol:g} in measure (min {ms.min():.3e})")
    ms = np.maximum(ms, 0.0)

    order = np.argsort(pts, kind="stable")
    pts = pts[order]
    ms = ms[order]
    # cluster boundaries where the gap exceeds point_tol
    starts = np.flatnonzero(np.concatenate(([True], np.diff(pts) > point_tol)))
    merged_pts = pts[starts]
    merged_ms = np.add.reduceat(ms, starts)

    keep = merged_ms > drop_tol
    return DiscreteMeasure(merged_pts[keep], merged_ms[keep])


def total_mass(mu: DiscreteMeasure) -> float:
    return mu.total_mass()


def integrate(mu: DiscreteMeasure, fn) -> float:
    return mu.integrate(fn)


def _merged_signed_support(mu1: DiscreteMeasure, mu2: DiscreteMeasure):
    """Common support y_1 < ... < y_K with signed masses mu1 - mu2."""
    pts = np.concatenate([mu1.points, mu2.points])
    sgn = np.concatenate([mu1.masses, -mu2.masses])
    if len(pts) == 0:
        return pts, sgn
    order = np.argsort(pts, kind="stable")
    pts = pts[order]
    sgn = sgn[order]
    starts = np.flatnonzero(np.concatenate(([True], np.diff(pts) > POINT_TOL)))
    y = pts[starts]
    s = np.add.reduceat(sgn, starts)
    keep = s != 0.0
    return y[keep], s[keep]


def _window_max(xs, vs, d):
    """Sliding maximum of a concave piecewise-linear function.

    Given V with breakpoints ``xs`` (covering [-1, 1]) and values ``vs``,
    returns breakpoints/values of W(p) = max{V(q) : |q - p| <= d, |q| <= 1}.
    W equals the peak value on a plateau around the argmax and follows the
    shifted branches of V outside it, so it stays concave piecewise-linear.
    """
    i = int(np.argmax(vs))
    peak = xs[i]
    vmax = vs[i]
    cand = np.concatenate((
        [-1.0, 1.0, peak - d, peak + d],
        xs[xs < peak] - d,
        xs[xs > peak] + d,
    ))
    cand = np.unique(np.clip(cand, -1.0, 1.0))
    out = np.full(cand.shape, vmax)
    left = cand + d < peak
    right = cand - d > peak
    if left.any():
        out[left] = np.interp(cand[left] + d, xs, vs)
    if right.any():
        out[right] = np.interp(cand[right] - d, xs, vs)
    return cand, out


def flat_distance(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
    """Exact flat (bounded-Lipschitz) distance between two discrete measures.

    Maximizes sum_j s_j phi_j over |phi_j| <= 1, |phi_{j+1} - phi_j| <=
    y_{j+1} - y_j on the merged support; adjacent constraints suffice on the
    line because any feasible chain extends to a global 1-Lipschitz function.
    The sweep keeps the concave piecewise-linear value function
    V_j(p) = max{sum_{i<=j} s_i phi_i : chain feasible, phi_j = p} exactly.
    """
    y, s = _merged_signed_support(mu1, mu2)
    if len(y) == 0:
        return 0.0
    xs = np.array([-1.0, 1.0])
    vs = s[0] * xs
    for j in range(1, len(y)):
        xs, vs = _window_max(xs, vs, y[j] - y[j - 1])
        vs = vs + s[j] * xs
    return float(max(vs.max(), 0.0))


def _sliding_max(a: np.ndarray, w: int) -> np.ndarray:
    """out[i] = max(a[max(0, i-w) : i+w+1]) via block prefix/suffix maxima."""
    n = len(a)
    if w <= 0:
        return a.copy()
    if w >= n:
        return np.full(n, a.max())
    width = 2 * w + 1
    padded_len = n + 2 * w
    total = -(-padded_len // width) * width
    b = np.full(total, -np.inf)
    b[w:w + n] = a
    blocks = b.reshape(-1, width)
    pref = np.maximum.accumulate(blocks, axis=1).ravel()
    suff = np.maximum.accumulate(blocks[:, ::-1], axis=1)[:, ::-1].ravel()
    return np.maximum(suff[:n], pref[width - 1:width - 1 + n])


def flat_distance_oracle(mu1: DiscreteMeasure, mu2: DiscreteMeasure,
                         h: float) -> float:
    """Lower bound on the flat distance from a value-grid dynamic program.

    Test-function values are restricted to the grid {-1, -1+h, ...} and
    chain steps to at most the support gaps, so every grid chain is feasible
    for the exact problem and the result never exceeds
    :func:`flat_distance`.  On supports whose gaps are large relative to
    ``h`` the gap to the exact value is at most h * sum_j |s_j|.
    """
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    y, s = _merged_signed_support(mu1, mu2)
    if len(y) == 0:
        return 0.0
    m = int(np.floor(2.0 / h + 1e-9))
    grid = -1.0 + h * np.arange(m + 1)
    best = s[0] * grid
    for j in range(1, len(y)):
        w = int(np.floor((y[j] - y[j - 1]) / h + 1e-9))
        best = _sliding_max(best, w)
        best = best + s[j] * grid
    return float(max(best.max(), 0.0))


def pairing_bound(mu1: DiscreteMeasure, mu2: DiscreteMeasure,
                  pairing=None) -> float:
    """Upper bound on the flat distance from an explicit atom pairing.

    Pads the shorter measure with zero-mass atoms at the partner positions,
    then returns max{1, sum_i m_i} * sum_i (|m_i - m'_i| + |x_i - x'_i|)
    over the paired atoms.  ``pairing`` is an optional (K, 2) integer array
    of indices into the two atom lists, -1 marking a zero-mass pad placed at
    the partner's position; by default atoms pair up in sorted order.
    """
    n1, n2 = len(mu1), len(mu2)
    if pairing is None:
        k = max(n1, n2)
        idx1 = np.concatenate([np.arange(n1), np.full(k - n1, -1, dtype=int)])
        idx2 = np.concatenate([np.arange(n2), np.full(k - n2, -1, dtype=int)])
    else:
        pairing = np.asarray(pairing, dtype=int)
        if pairing.ndim != 2 or pairing.shape[1] != 2:
            raise ValueError("pairing must be a (K, 2) index array")
        idx1, idx2 = pairing[:, 0], pairing[:, 1]
        for idx, n in ((idx1, n1), (idx2, n2)):
            real = np.sort(idx[idx >= 0])
            if len(real) != n or np.any(real != np.arange(n)):
                raise ValueError("pairing must cover each atom exactly once")
        if np.any((idx1 < 0) & (idx2 < 0)):
            raise ValueError("pairing row with no atom on either side")

    def gather(values, idx):
        out = np.zeros(len(idx))
        real = idx >= 0
        out[real] = values[idx[real]]
        return out

    x1 = gather(mu1.points, idx1)
    m1 = gather(mu1.masses, idx1)
    x2 = gather(mu2.points, idx2)
    m2 = gather(mu2.masses, idx2)
    # pads sit at the partner's position so they contribute no transport term
    x1 = np.where(idx1 >= 0, x1, x2)
    x2 = np.where(idx2 >= 0, x2, x1)

    factor = max(1.0, float(np.abs(m1).sum()))
    return float(factor * (np.abs(m1 - m2).sum() + np.abs(x1 - x2).sum()))

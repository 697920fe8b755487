"""Univariate piecewise functions: exact subdifferentials and growth tests.

This module exercises the unconstrained second-order theory on functions
with genuine nonsmoothness: proximal subdifferentials computed from
piecewise rules, a numerical tangent-cone test on the subgradient graph,
the positive-definiteness and existence-type slope conditions, empirical
quadratic growth, and second-order difference quotients.

Functions are piecewise affine/quadratic with finitely many pieces, plus
two generator families whose pieces accumulate factorially or dyadically
at the origin (truncated well below any sampled scale).  Generator pieces
store values relative to the accumulation point so that deep-piece
evaluation never cancels catastrophically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .oracle import QgcEstimate, qgc_verdict

__all__ = [
    "Piece",
    "Piecewise1D",
    "ConditionsReport",
    "D2Result",
    "Pw1dFormatError",
    "example31",
    "example33",
    "binary_staircase",
    "loads",
    "load",
    "proximal_subdifferential",
    "tangent_direction_test",
    "check_conditions",
    "estimate_qgc_1d",
    "second_subderivative",
]

_VCAP = 1e6  # cap for unbounded subgradient intervals in graph geometry


class Pw1dFormatError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    a: float
    b: float
    c: float

    def val(self, x: float) -> float:
        return self.a + self.b * x + self.c * x * x

    def slope(self, x: float) -> float:
        return self.b + 2.0 * self.c * x


@dataclass
class Piecewise1D:
    """Piecewise affine/quadratic function, lower semicontinuous by rule.

    ``pieces`` are open intervals covering the line except breakpoints
    (where the value is the min of the one-sided limits) and an optional
    accumulation point.  When ``rel_anchor`` is set the coefficients store
    f - f(anchor); ``anchor_value`` is the absolute value there.
    """

    pieces: List[Piece]
    breakpoints: List[float]
    rel_anchor: Optional[float] = None
    anchor_value: float = 0.0
    accumulation: Optional[Tuple[float, Tuple[float, float]]] = None
    even: bool = False
    scales: Optional[Tuple[float, ...]] = None
    radii: Optional[Tuple[float, ...]] = None
    name: str = "custom"

    # -- lookup ---------------------------------------------------------

    def _locate(self, x: float):
        """(piece containing x in its open interior) or None."""
        lo, hi = 0, len(self.pieces)
        while lo < hi:
            mid = (lo + hi) // 2
            p = self.pieces[mid]
            if x < p.lo or (x == p.lo):
                hi = mid
            elif x > p.hi or (x == p.hi):
                lo = mid + 1
            else:
                return p
        return None

    def _adjacent(self, x: float):
        """(left piece ending at x, right piece starting at x) or Nones."""
        left = right = None
        for p in self.pieces:
            if p.hi == x:
                left = p
            if p.lo == x:
                right = p
        return left, right

    # -- values ---------------------------------------------------------

    def value_rel(self, x: float) -> float:
        """f(x) - f(anchor) for anchored functions, else f(x)."""
        if self.accumulation is not None and x == self.accumulation[0]:
            return 0.0 if self.rel_anchor is not None else self.anchor_value
        p = self._locate(x)
        if p is not None:
            return p.val(x)
        left, right = self._adjacent(x)
        vals = [q.val(x) for q in (left, right) if q is not None]
        if not vals:
            raise ValueError(f"x={x} outside the represented domain")
        return min(vals)

    def value(self, x: float) -> float:
        base = self.anchor_value if self.rel_anchor is not None else 0.0
        if self.accumulation is not None and x == self.accumulation[0]:
            return self.anchor_value if self.rel_anchor is not None else self.value_rel(x)
        return base + self.value_rel(x)

    def diff(self, x: float, xbar: float) -> float:
        """f(x) - f(xbar), cancellation-free when xbar is the anchor."""
        if self.rel_anchor is not None and xbar == self.rel_anchor:
            return self.value_rel(x)
        return self.value(x) - self.value(xbar)

    # -- subdifferential --------------------------------------------------

    def prox_subdiff(self, x: float) -> Optional[Tuple[float, float]]:
        """Proximal subdifferential as a closed interval, or None when empty."""
        if self.accumulation is not None and x == self.accumulation[0]:
            return self.accumulation[1]
        p = self._locate(x)
        if p is not None:
            s = p.slope(x)
            return (s, s)
        left, right = self._adjacent(x)
        if left is None and right is None:
            raise ValueError(f"x={x} outside the represented domain")
        v = self.value_rel(x)
        lo = -math.inf
        hi = math.inf
        tiny = 1e-14 * max(1.0, abs(v))
        if right is not None and right.val(x) <= v + tiny:
            hi = right.slope(x)
        if left is not None and left.val(x) <= v + tiny:
            lo = left.slope(x)
        if lo > hi:
            return None
        return (lo, hi)

    # -- geometry of gph prox-subdifferential ----------------------------

    def graph_segments(self, lo: float, hi: float):
        """Straight segments ((x0,v0),(x1,v1)) of the graph with x in [lo, hi]."""
        segs = []
        for p in self.pieces:
            a, b_ = max(p.lo, lo), min(p.hi, hi)
            if a < b_:  # lo/hi are finite, so the clipped ends are too
                segs.append(((a, p.slope(a)), (b_, p.slope(b_))))
        for x in self.breakpoints:
            if lo <= x <= hi:
                iv = self.prox_subdiff(x)
                if iv is not None:
                    v0 = max(iv[0], -_VCAP)
                    v1 = min(iv[1], _VCAP)
                    segs.append(((x, v0), (x, v1)))
        if self.accumulation is not None:
            x0, iv = self.accumulation
            if lo <= x0 <= hi:
                segs.append(((x0, iv[0]), (x0, iv[1])))
        return segs

    def graph_distance(self, X: float, V: float, window: float) -> float:
        """Distance from (X, V) to the graph, searching |x - X| <= window."""
        return float(self.graph_distances(X, np.array([V]), window)[0])

    def graph_distances(self, X: float, Vs: np.ndarray, window: float) -> np.ndarray:
        """Distances from (X, v) to the graph for every v in Vs at once."""
        segs = self.graph_segments(X - window, X + window)
        if not segs:
            return np.full(Vs.shape[0], math.inf)
        arr = np.array([[a[0], a[1], b[0], b[1]] for a, b in segs])
        x0, v0, x1, v1 = arr[:, 0:1], arr[:, 1:2], arr[:, 2:3], arr[:, 3:4]
        dx, dv = x1 - x0, v1 - v0
        L2 = dx * dx + dv * dv
        L2 = np.where(L2 > 0, L2, 1.0)
        V = Vs[None, :]
        t = ((X - x0) * dx + (V - v0) * dv) / L2
        t = np.clip(t, 0.0, 1.0)
        px, pv = x0 + t * dx, v0 + t * dv
        d = np.sqrt((X - px) ** 2 + (V - pv) ** 2)
        return np.min(d, axis=0)

    # -- defaults ---------------------------------------------------------

    def suggested_scales(self, xbar: float = 0.0) -> Tuple[float, ...]:
        if self.scales is not None:
            return self.scales
        return tuple(10.0 ** (-k / 2.0) for k in range(2, 17))

    def suggested_radii(self) -> Tuple[float, ...]:
        if self.radii is not None:
            return self.radii
        return (1.0, 0.25, 0.0625)


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------

def example31(max_level: int = 16) -> Piecewise1D:
    """Even convex staircase with factorially shrinking slopes.

    Slopes 1/(n+2)! on (1/(n+2)!, 1/(n+1)!], global minimum at the origin
    where the proximal subdifferential collapses to {0}; quadratic growth
    fails there.  Pieces are stored relative to the minimum value so deep
    pieces evaluate without cancellation.
    """
    alpha = [1.0 / math.factorial(n + 1) for n in range(max_level + 3)]
    # tail[m] = sum_{k>=m} 1/(k! (k+2)!)
    tail = [0.0] * (max_level + 4)
    for m in range(max_level + 2, -1, -1):
        tail[m] = tail[m + 1] + 1.0 / (math.factorial(m) * math.factorial(m + 2))
    beta = tail[0]

    pieces: List[Piece] = []
    pieces.append(Piece(1.0, math.inf, -beta, 1.0, 0.0))  # f = x beyond 1
    for m in range(max_level + 1):
        pieces.append(Piece(alpha[m + 1], alpha[m], -tail[m + 1], alpha[m + 1], 0.0))
    last = alpha[max_level + 1]
    pieces.append(Piece(0.0, last, 0.0, alpha[max_level + 2], 0.0))  # tail stub
    bps = [alpha[m] for m in range(max_level + 2)] + [1.0]
    bps = sorted(set(b for b in bps if b > 0.0))
    pieces, bps = _mirror(pieces, bps)
    scales = tuple(alpha[n] for n in range(2, 15))
    radii = tuple(alpha[n] for n in range(3, 9))
    return Piecewise1D(pieces, bps, rel_anchor=0.0, anchor_value=beta,
                       accumulation=(0.0, (0.0, 0.0)), even=True,
                       scales=scales, radii=radii, name="example31")


def binary_staircase(base: float = 2.0, slope: float = 2.0,
                     levels: int = 40) -> Piecewise1D:
    """Even staircase of flats and rises accumulating geometrically at 0.

    Constant value base^-n on [t_n, base^-n) with a rise of the given
    slope connecting consecutive flats; f(x) = x beyond 1.  Grows at least
    like x^2 on [-1, 1] while the subgradient graph contains long flats.
    """
    if base <= 1.0 or slope <= 1.0:
        raise ValueError("need base > 1 and slope > 1")
    r = [base ** (-n) for n in range(levels + 2)]
    pieces: List[Piece] = [Piece(1.0, math.inf, 0.0, 1.0, 0.0)]
    bps = [1.0]
    for n in range(levels + 1):
        c_n, c_n1 = r[n], r[n + 1]
        t_n = r[n + 1] + (c_n - c_n1) / slope
        pieces.append(Piece(t_n, r[n], c_n, 0.0, 0.0))              # flat
        pieces.append(Piece(r[n + 1], t_n, c_n1 - slope * r[n + 1],
                            slope, 0.0))                            # rise
        bps.extend([t_n, r[n + 1]])
    pieces.append(Piece(0.0, r[levels + 1], 0.0, 1.0, 0.0))         # tail: f = x
    bps = sorted(set(b for b in bps if b > 0.0))
    pieces, bps = _mirror(pieces, bps)
    scales = tuple(base ** (-n) for n in range(0, 31))
    return Piecewise1D(pieces, bps, rel_anchor=0.0, anchor_value=0.0,
                       accumulation=(0.0, (-1.0, 1.0)), even=True,
                       scales=scales, radii=(1.0, 0.25, 0.0625),
                       name=f"binary-staircase({base:g},{slope:g})")


def example33() -> Piecewise1D:
    """Dyadic flat/rise staircase (base 2, rise slope 2)."""
    f = binary_staircase(2.0, 2.0)
    return Piecewise1D(f.pieces, f.breakpoints, f.rel_anchor, f.anchor_value,
                       f.accumulation, f.even, f.scales, f.radii,
                       name="example33")


def _mirror(pieces: List[Piece], bps: List[float]):
    full = list(pieces)
    for p in pieces:
        full.append(Piece(-p.hi, -p.lo, p.a, -p.b, p.c))
    full.sort(key=lambda q: (q.lo, q.hi))
    bps_full = sorted(set([-b for b in bps] + list(bps)))
    return full, bps_full


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------

def loads(text: str) -> Piecewise1D:
    lines = [ln.split("#", 1)[0].rstrip() for ln in text.splitlines()]
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip()]
    if not lines or lines[0][1] != "pw1d":
        raise Pw1dFormatError("file must start with a 'pw1d' header line",
                              lines[0][0] if lines else 1)
    body = lines[1:]
    if body and body[0][1].startswith("generator:"):
        spec = body[0][1][len("generator:"):].split()
        if not spec:
            raise Pw1dFormatError("empty generator", body[0][0])
        name, args = spec[0], spec[1:]
        if name == "example31":
            return example31()
        if name == "example33":
            return example33()
        if name == "binary-staircase":
            vals = [float(a) for a in args] or [2.0, 2.0]
            if len(vals) != 2:
                raise Pw1dFormatError("binary-staircase takes two parameters",
                                      body[0][0])
            return binary_staircase(*vals)
        raise Pw1dFormatError(f"unknown generator {name!r}", body[0][0])

    bps: Optional[List[float]] = None
    coeffs: List[Tuple[float, float, float]] = []
    even = False
    for lineno, ln in body:
        if ln.startswith("breakpoints:"):
            bps = [float(v) for v in ln[len("breakpoints:"):].split()]
        elif ln.startswith("piece "):
            head, _, rest = ln.partition(":")
            idx = int(head.split()[1])
            if idx != len(coeffs):
                raise Pw1dFormatError(f"expected piece {len(coeffs)}", lineno)
            vals = [float(v) for v in rest.split()]
            if len(vals) != 3:
                raise Pw1dFormatError("piece needs coefficients 'a b c'", lineno)
            coeffs.append(tuple(vals))
        elif ln.startswith("even:"):
            even = ln[len("even:"):].strip().lower() == "true"
        else:
            raise Pw1dFormatError(f"unexpected line {ln!r}", lineno)
    if bps is None:
        bps = []
    if sorted(bps) != bps or len(set(bps)) != len(bps):
        raise Pw1dFormatError("breakpoints must be strictly increasing")
    if len(coeffs) != len(bps) + 1:
        raise Pw1dFormatError(
            f"{len(bps)} breakpoints need {len(bps) + 1} pieces, got {len(coeffs)}")
    if even:
        if any(b <= 0 for b in bps):
            raise Pw1dFormatError("even functions list positive breakpoints only")
        edges = [0.0] + bps + [math.inf]
        pieces = [Piece(edges[i], edges[i + 1], *coeffs[i])
                  for i in range(len(coeffs))]
        pieces, bps_full = _mirror(pieces, bps)
        bps_full = sorted(set(bps_full + [0.0]))
        return Piecewise1D(pieces, bps_full, even=True)
    edges = [-math.inf] + bps + [math.inf]
    pieces = [Piece(edges[i], edges[i + 1], *coeffs[i])
              for i in range(len(coeffs))]
    return Piecewise1D(pieces, list(bps))


def load(path_or_text: str) -> Piecewise1D:
    if "\n" in path_or_text:
        return loads(path_or_text)
    with open(path_or_text, "r", encoding="utf-8") as fh:
        return loads(fh.read())


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def proximal_subdifferential(f: Piecewise1D, x: float):
    """Interval of proximal subgradients at x (None when empty)."""
    return f.prox_subdiff(x)


def tangent_direction_test(f: Piecewise1D, xbar: float, vbar: float,
                           w: float, z: float,
                           scales: Optional[Sequence[float]] = None,
                           tol: float = 1e-3) -> bool:
    """Is (w, z) tangent to the subgradient graph at (xbar, vbar)?

    For every scale t the normalized distance from (xbar, vbar) + t (w, z)
    to the graph is measured against analytic segments (no sampling).
    Acceptance: the final normalized distance is below tol, or the
    distances decay monotonically by a factor of at least two down to 0.15
    (the decay branch captures directions approached along breakpoint
    subsequences, at the resolution of the scale list).

    Tangent cones are cones, so the direction is first normalized to unit
    x-component (unit slope component when w = 0): acceptance is invariant
    under positive rescaling of (w, z), and scale lists matched to the
    function's breakpoints keep their meaning for every direction.
    """
    if w == 0.0 and z == 0.0:
        return True
    iv = f.prox_subdiff(xbar)
    if iv is None or not (iv[0] - 1e-12 <= vbar <= iv[1] + 1e-12):
        raise ValueError("vbar is not a proximal subgradient at xbar")
    s = abs(w) if w != 0.0 else abs(z)
    w, z = w / s, z / s
    deltas = _delta_profile(f, xbar, vbar, w, np.array([z]), scales)[:, 0]
    return _accept_profile(deltas, tol)


def _delta_profile(f: Piecewise1D, xbar: float, vbar: float, w: float,
                   zs: np.ndarray, scales=None) -> np.ndarray:
    """Normalized graph distances, one row per scale, one column per z."""
    if scales is None:
        scales = f.suggested_scales(xbar)
    scales = sorted(scales, reverse=True)
    nrm = np.hypot(w, zs)
    out = np.empty((len(scales), zs.shape[0]))
    for i, t in enumerate(scales):
        X = xbar + t * w
        window = 6.0 * t * (abs(w) + 1.0)
        d = f.graph_distances(X, vbar + t * zs, window)
        out[i] = d / (t * nrm)
    return out


def _accept_profile(deltas: np.ndarray, tol: float) -> bool:
    if deltas[-1] <= tol:
        return True
    dmin = float(np.min(deltas))
    ratios_ok = bool(np.all(deltas[1:] <= deltas[:-1] * 1.3))
    return bool(dmin <= 0.15 and ratios_ok and deltas[0] >= 2.0 * deltas[-1])


@dataclass(frozen=True)
class ConditionsReport:
    pd_lower_bound: bool          # every tangent slope pair has z.w >= c w^2, c > 0
    pd_strict: bool               # every tangent slope pair has z.w > 0
    second_kind: bool             # for each direction some slope has z.w >= kappa > 0
    second_kind_kappa: float
    min_ratio: float              # min of z.w / w^2 over accepted pairs
    accepted: Tuple[Tuple[float, float], ...]


def check_conditions(f: Piecewise1D, xbar: float,
                     z_grid: Optional[Sequence[float]] = None,
                     scales: Optional[Sequence[float]] = None,
                     tol: float = 1e-3) -> ConditionsReport:
    """Slope conditions on the subgradient graphical derivative at xbar.

    Directions w = +-1 are paired with a z grid (plus analytic seed slopes
    from the adjacent pieces); membership of (w, z) in the tangent cone of
    the subgradient graph decides which pairs count.
    """
    iv = f.prox_subdiff(xbar)
    if iv is None or not (iv[0] <= 1e-12 and iv[1] >= -1e-12):
        raise ValueError("0 is not a proximal subgradient at xbar")
    if z_grid is None:
        z_grid = np.linspace(-4.0, 4.0, 161)
    seeds = set()
    for p in f.pieces:
        if p.lo == xbar or p.hi == xbar:
            seeds.add(2.0 * p.c)
    accepted: List[Tuple[float, float]] = []
    per_w_max = {}
    for w in (1.0, -1.0):
        # w is +-1 here, so the direction is already normalized
        zs = np.array(sorted(set(float(z) for z in z_grid) | {s * w for s in seeds}))
        profile = _delta_profile(f, xbar, 0.0, w, zs, scales)
        best = None
        for j, z in enumerate(zs):
            if _accept_profile(profile[:, j], tol):
                accepted.append((w, float(z)))
                best = z * w if best is None else max(best, z * w)
        if best is not None:
            per_w_max[w] = best

    if accepted:
        min_ratio = min(z * w / (w * w) for w, z in accepted)
    else:
        min_ratio = math.inf
    pd_lower = bool(accepted) and min_ratio > 1e-9 or not accepted
    pd_strict = all(z * w > 1e-9 for w, z in accepted)
    if per_w_max:
        kappa = min(per_w_max.values())
        second = kappa > 1e-9
    else:
        kappa = math.inf
        second = True
    return ConditionsReport(bool(pd_lower), pd_strict, bool(second),
                            float(kappa), float(min_ratio), tuple(accepted))


def estimate_qgc_1d(f: Piecewise1D, xbar: float,
                    radii: Optional[Sequence[float]] = None,
                    grid: int = 512, floor_rel: float = 1e-7) -> QgcEstimate:
    """Empirical growth modulus: inf of 2(f(x)-f(xbar))/(x-xbar)^2 per radius.

    The grid is geometric between radius*floor_rel and the radius on both
    sides, with every breakpoint in range included exactly; generator
    functions supply matched radii and cancellation-free differences.
    """
    if radii is None:
        radii = f.suggested_radii()
    per_radius: List[float] = []
    for r in radii:
        offs = np.geomspace(r * floor_rel, r, grid)
        xs = set()
        for o in offs:
            xs.add(xbar + o)
            xs.add(xbar - o)
        for bp in f.breakpoints:
            if abs(bp - xbar) <= r and abs(bp - xbar) >= r * floor_rel:
                xs.add(bp)
        best = math.inf
        for x in xs:
            d = x - xbar
            val = 2.0 * f.diff(x, xbar) / (d * d)
            if val < best:
                best = val
        per_radius.append(float(best))
    verdict = qgc_verdict(per_radius)
    kappa = float(min(per_radius)) if per_radius else math.inf
    return QgcEstimate(tuple(float(r) for r in radii), tuple(per_radius),
                       tuple([2 * grid] * len(radii)),
                       tuple([2 * grid] * len(radii)), verdict, kappa, 0)


@dataclass(frozen=True)
class D2Result:
    value: float
    trend: str                    # "stable" | "decreasing" | "increasing" | "diverging"
    per_tau: Tuple[float, ...]


def second_subderivative(f: Piecewise1D, xbar: float, v: float, w: float,
                         taus: Optional[Sequence[float]] = None,
                         wprime_rel: Tuple[float, ...] = (0.0, 1e-6, -1e-6)
                         ) -> D2Result:
    """Numerical lower second-order difference quotient along w.

    Minimizes the quotient over the tau schedule and a tight grid of
    directions around w; a decreasing tail is Aitken-extrapolated and
    flagged, since the underlying limit inferior may sit below every
    finite-scale quotient.
    """
    if taus is None:
        taus = f.suggested_scales(xbar)
    taus = sorted(taus, reverse=True)
    per_tau: List[float] = []
    for t in taus:
        best = math.inf
        for rel in wprime_rel:
            wp = w * (1.0 + rel)
            q = 2.0 * (f.diff(xbar + t * wp, xbar) - t * v * wp) / (t * t)
            best = min(best, q)
        per_tau.append(best)
    raw = min(per_tau)
    value = raw
    trend = "stable"
    if len(per_tau) >= 3:
        a, b, c = per_tau[-3], per_tau[-2], per_tau[-1]
        if a > b > c:
            trend = "decreasing"
            d1, d2 = b - a, c - b
            if abs(d2 - d1) > 1e-300:
                extrap = c - d2 * d2 / (d2 - d1)
                if np.isfinite(extrap):
                    value = min(value, float(extrap))
        elif c > b > a:
            trend = "increasing"
    if value < -1e8:
        return D2Result(-math.inf, "diverging", tuple(per_tau))
    return D2Result(float(value), trend, tuple(per_tau))

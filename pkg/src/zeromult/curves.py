"""Level curves of analytic functions: pre-images of the real axis, of
rays and of circles, traced by predictor-corrector continuation.

Every constraint is written as ``Im g(s) = 0`` for a locally analytic ``g``.
The tangent of such a curve is ``conj(g')``, and the Newton corrector moves
along the normal ``i conj(g')``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateSeed,
    IncompleteBoundary,
    InsufficientArc,
    NumericalError,
    StepCollapse,
    TangentUndefined,
    ValidationError,
)
from .handles import AnalyticFunction, DerivativeHandle, jet
from .zeros import SearchRectangle, ZeroRecord, locate_zeros

TRACE_TOL = 1e-10
STEP_FRACTION = 1e-3
STEP_SHRINK = 64
STEP_GROW = 4
MAX_STEPS = 200_000
CORRECTOR_ITERS = 8
MAX_TURN = math.radians(30)
DEGENERACY = 1e-8
GRADIENT_MEMORY = 64
HORIZONTAL_TOL_DEG = 2.0

GAMMA_PRIME = "GammaPrime"
GAMMA_ZERO = "GammaZero"
GAMMA_J = "GammaJ"
UPSILON = "Upsilon"
UNCLASSIFIED = "Unclassified"


# --- constraints -------------------------------------------------------------

@dataclass(frozen=True)
class RealAxisPreimage:
    """Im f = 0."""

    name = "real_axis"

    def residual(self, fv, dfv):
        return fv.imag, dfv

    def scale(self, fv):
        return 1 + abs(fv)

    def admissible(self, fv):
        return True

    def to_dict(self):
        return {"type": self.name}


@dataclass(frozen=True)
class CirclePreimage:
    """|f| = r, written as Im(i log f - i log r) = 0."""

    radius: float
    name = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("circle radius must be positive")

    def residual(self, fv, dfv):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(np.abs(fv)) - math.log(self.radius), 1j * dfv / fv

    def scale(self, fv):
        return 1.0

    def admissible(self, fv):
        return fv != 0

    def to_dict(self):
        return {"type": self.name, "radius": self.radius}


@dataclass(frozen=True)
class RayPreimage:
    """arg f = theta: Im(e^{-i theta} f) = 0 with Re(e^{-i theta} f) > 0."""

    theta: float
    name = "ray"

    def residual(self, fv, dfv):
        rot = np.exp(-1j * self.theta)
        return (rot * fv).imag, rot * dfv

    def scale(self, fv):
        return 1 + abs(fv)

    def admissible(self, fv):
        return (np.exp(-1j * self.theta) * fv).real > 0

    def to_dict(self):
        return {"type": self.name, "theta": self.theta}


def constraint_from_dict(d):
    kind = d["type"]
    if kind == "real_axis":
        return RealAxisPreimage()
    if kind == "circle":
        return CirclePreimage(d["radius"])
    if kind == "ray":
        return RayPreimage(d["theta"])
    raise ValidationError("unknown constraint %r" % kind)


# --- data ---------------------------------------------------------------------

@dataclass
class CurveComponent:
    points: np.ndarray
    values: np.ndarray
    constraint: object
    ends: tuple = ("open", "open")
    classification: str = UNCLASSIFIED
    strip_index: int | None = None
    step: float = 0.0
    # sign of Im f just left of each segment (direction of travel); the
    # "colour" of the two sides of the curve
    left_sign: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    @property
    def window_truncated(self):
        return tuple(e.startswith("window") for e in self.ends)

    @property
    def closed(self):
        return self.ends[0] == "closed"

    @property
    def length(self):
        return float(np.abs(np.diff(self.points)).sum())

    def exits(self, side: str) -> bool:
        return ("window:" + side) in self.ends

    def manifest(self) -> dict:
        return {
            "constraint": self.constraint.to_dict(),
            "classification": self.classification,
            "strip_index": self.strip_index,
            "ends": list(self.ends),
            "window_truncated": list(self.window_truncated),
            "endpoints": [[p.real, p.imag] for p in (self.points[0], self.points[-1])],
            "n_points": int(self.points.size),
            "step": self.step,
        }


@dataclass
class StripRecord:
    index: int
    lower_boundary: CurveComponent | None
    upper_boundary: CurveComponent | None
    contained_zeros: list
    j_count: int
    complete: bool

    def to_dict(self):
        def edge(c):
            return None if c is None else [[p.real, p.imag] for p in (c.points[0], c.points[-1])]
        return {
            "index": self.index,
            "complete": self.complete,
            "j_count": self.j_count,
            "lower_boundary": edge(self.lower_boundary),
            "upper_boundary": edge(self.upper_boundary),
            "zeros": [z.to_dict() for z in self.contained_zeros],
        }


# --- seeding -------------------------------------------------------------------

def _grid(window: SearchRectangle, density: int):
    short = min(window.width, window.height)
    spacing = short / (density - 1)
    nx = max(density, int(round(window.width / spacing)) + 1)
    ny = max(density, int(round(window.height / spacing)) + 1)
    xs = np.linspace(window.sigma_min, window.sigma_max, nx)
    ys = np.linspace(window.t_min, window.t_max, ny)
    return xs, ys, min(window.width / (nx - 1), window.height / (ny - 1))


def _constraint_grid(f, constraint, window, density):
    xs, ys, spacing = _grid(window, density)
    z = xs[None, :] + 1j * ys[:, None]
    fv = np.asarray(f(z), dtype=complex)
    if isinstance(constraint, CirclePreimage):
        with np.errstate(divide="ignore"):
            F = np.log(np.abs(fv)) - math.log(constraint.radius)
    elif isinstance(constraint, RayPreimage):
        F = (np.exp(-1j * constraint.theta) * fv).imag
    else:
        F = fv.imag
    ok = np.isfinite(F) & np.asarray(constraint.admissible(fv))
    return z, F, ok, spacing


def _crossings(z, F, ok):
    """Linear-interpolated sign changes of F on horizontal and vertical grid edges.

    Returns (points, cell index pairs) where each crossing lists the grid
    cells sharing its edge.
    """
    pos = F >= 0
    pts, cells = [], []
    ny, nx = F.shape
    # horizontal edges (j, i) - (j, i+1)
    hmask = (pos[:, :-1] != pos[:, 1:]) & ok[:, :-1] & ok[:, 1:]
    for j, i in zip(*np.nonzero(hmask)):
        a, b = F[j, i], F[j, i + 1]
        w = a / (a - b)
        pts.append(z[j, i] + w * (z[j, i + 1] - z[j, i]))
        cells.append([(j - 1, i), (j, i)])
    vmask = (pos[:-1, :] != pos[1:, :]) & ok[:-1, :] & ok[1:, :]
    for j, i in zip(*np.nonzero(vmask)):
        a, b = F[j, i], F[j + 1, i]
        w = a / (a - b)
        pts.append(z[j, i] + w * (z[j + 1, i] - z[j, i]))
        cells.append([(j, i - 1), (j, i)])
    return np.array(pts, dtype=complex), cells, (ny - 1, nx - 1)


def _seed_candidates(f, window, density, constraint):
    if density < 8:
        raise ValidationError("grid_density must be >= 8")
    z, F, ok, spacing = _constraint_grid(f, constraint, window, density)
    pts, cells, shape = _crossings(z, F, ok)
    return pts, cells, shape, spacing


def cluster_seeds(f: AnalyticFunction, window: SearchRectangle, grid_density: int = 64,
                  constraint=None) -> list:
    """One seed per connected cluster of grid cells crossed by the curve set."""
    constraint = constraint or RealAxisPreimage()
    pts, cells, shape, _ = _seed_candidates(f, window, grid_density, constraint)
    if pts.size == 0:
        return []
    mask = np.zeros(shape, dtype=bool)
    for pair in cells:
        for j, i in pair:
            if 0 <= j < shape[0] and 0 <= i < shape[1]:
                mask[j, i] = True
    labels, _ = ndimage.label(mask)
    chosen = {}
    for k, pair in enumerate(cells):
        for j, i in pair:
            if 0 <= j < shape[0] and 0 <= i < shape[1]:
                chosen.setdefault(labels[j, i], []).append(k)
                break
    seeds = []
    for lab in sorted(chosen):
        ks = chosen[lab]
        seeds.append(complex(pts[ks[len(ks) // 2]]))
    return seeds


# --- tracing -----------------------------------------------------------------

class _Tracer:
    def __init__(self, f, constraint, window, h0, tol):
        self.f = f
        self.con = constraint
        self.window = window
        self.h0 = h0
        self.tol = tol

    def eval(self, s):
        fv, dfv = jet(self.f, s)
        F, gp = self.con.residual(fv, dfv)
        return fv, float(F), complex(gp)

    def correct(self, s, direction=None):
        """Newton along the normal (or along ``direction`` if given)."""
        for it in range(CORRECTOR_ITERS + 1):
            fv, F, gp = self.eval(s)
            if not np.isfinite(F) or not self.con.admissible(fv):
                return s, fv, gp, False, it
            if abs(F) <= self.tol * self.con.scale(fv):
                return s, fv, gp, True, it
            if direction is None:
                d = 1j * np.conj(gp)
                denom = abs(gp) ** 2
            else:
                d = direction
                denom = (gp * d).imag
            if denom == 0 or it == CORRECTOR_ITERS:
                return s, fv, gp, False, it
            s = s - F * d / denom
        return s, fv, gp, False, CORRECTOR_ITERS

    def boundary_hit(self, a, b):
        """Exact window crossing between inside ``a`` and outside ``b``."""
        w = self.window
        best, side = 1.0, None
        d = b - a
        for name, val, comp in (("left", w.sigma_min, "re"), ("right", w.sigma_max, "re"),
                                ("bottom", w.t_min, "im"), ("top", w.t_max, "im")):
            x0 = a.real if comp == "re" else a.imag
            dx = d.real if comp == "re" else d.imag
            if dx == 0:
                continue
            lam = (val - x0) / dx
            if 0 <= lam < best:
                best, side = lam, name
        p = a + best * d
        edge = 1.0 + 0j if side in ("bottom", "top") else 1j
        q, fv, _, ok, _ = self.correct(p, direction=edge)
        if ok and w.contains(q, pad=1e-12) and abs(q - p) < abs(d):
            p = q
        else:
            fv = self.eval(p)[0]
        return p, fv, side

    def run(self, s0, fv0, gp0, sign):
        h = self.h0
        hmin = self.h0 / STEP_SHRINK
        hmax = self.h0 * STEP_GROW
        pts, vals = [s0], [fv0]
        s, gp = s0, gp0
        tan = sign * np.conj(gp) / abs(gp)
        # reference gradient over recent steps only: along zeta's left tail
        # |g'| spans many orders of magnitude without any critical point
        recent = deque([abs(gp)], maxlen=GRADIENT_MEMORY)
        gmax = abs(gp)
        arc = 0.0
        for _ in range(MAX_STEPS):
            if abs(gp) < DEGENERACY * gmax:
                return pts, vals, "critical"
            pred = s + h * tan
            try:
                p, fv, gp_new, ok, iters = self.correct(pred)
            except NumericalError:
                ok, iters, fv, gp_new, p = False, CORRECTOR_ITERS, None, 0j, pred
            good = ok and abs(gp_new) > 0 and abs(p - s) < 1.5 * h and abs(p - s) > 0.25 * h
            if good:
                new_tan = np.conj(gp_new) / abs(gp_new)
                if (new_tan * np.conj(tan)).real < 0:
                    new_tan = -new_tan
                good = abs(np.angle(new_tan / tan)) < MAX_TURN
            if not good:
                if ok and not self.con.admissible(fv):
                    return pts, vals, "ray_origin"
                h /= 2
                if h < hmin:
                    if abs(gp) < 1e-3 * gmax:
                        return pts, vals, "critical"
                    if not np.all(np.isfinite(vals[-1])) or (self.f.poles and min(
                            abs(s - q) for q in self.f.poles) < 4 * self.h0):
                        return pts, vals, "pole"
                    raise StepCollapse("step underflow at %r (|g'| = %.3g)" % (s, abs(gp)),
                                       point=complex(s))
                continue
            if not self.window.contains(p):
                b, fb, side = self.boundary_hit(s, p)
                pts.append(b)
                vals.append(fb)
                return pts, vals, "window:" + side
            # loop closure: the step passes within h/2 of the start
            if arc > 2 * self.h0 and _seg_dist(s0, s, p) < h / 2:
                pts.append(s0)
                vals.append(fv0)
                return pts, vals, "closed"
            arc += abs(p - s)
            pts.append(p)
            vals.append(fv)
            s, gp, tan = p, gp_new, new_tan
            recent.append(abs(gp))
            gmax = max(recent)
            if not np.isfinite(fv) or abs(fv) > 1e150:
                return pts, vals, "pole"
            if iters <= 2:
                h = min(2 * h, hmax)
            elif iters >= 5:
                h = max(h / 2, hmin)
        raise StepCollapse("curve did not terminate within %d steps" % MAX_STEPS)


def _seg_dist(p, a, b):
    d = b - a
    if d == 0:
        return abs(p - a)
    lam = min(1.0, max(0.0, ((p - a) * np.conj(d)).real / abs(d) ** 2))
    return abs(p - (a + lam * d))


def trace_level_curve(f: AnalyticFunction, seed: complex, constraint=None,
                      window: SearchRectangle | None = None, step: float | None = None,
                      tol: float = TRACE_TOL) -> CurveComponent:
    """Trace the component of the constraint curve through (the corrected) ``seed``."""
    constraint = constraint or RealAxisPreimage()
    if window is None:
        raise ValidationError("a window is required")
    h0 = step or window.diagonal * STEP_FRACTION
    tr = _Tracer(f, constraint, window, h0, tol)
    s0, fv0, gp0, ok, _ = tr.correct(complex(seed))
    if not ok:
        raise DegenerateSeed("corrector failed at seed %r" % (seed,), seed=complex(seed))
    if not window.contains(s0):
        raise DegenerateSeed("corrected seed left the window", seed=complex(seed))
    scale = max(abs(gp0), abs(fv0) / window.diagonal, 1e-300)
    if abs(gp0) < DEGENERACY * scale or abs(gp0) == 0:
        raise DegenerateSeed("constraint gradient vanishes at %r" % (s0,), seed=complex(s0))
    fwd, fwd_vals, end_f = tr.run(s0, fv0, gp0, +1)
    if end_f == "closed":
        pts, vals, ends = fwd, fwd_vals, ("closed", "closed")
    else:
        bwd, bwd_vals, end_b = tr.run(s0, fv0, gp0, -1)
        pts = bwd[::-1] + fwd[1:]
        vals = bwd_vals[::-1] + fwd_vals[1:]
        ends = (end_b, end_f)
    pts = np.array(pts, dtype=complex)
    vals = np.array(vals, dtype=complex)
    return CurveComponent(pts, vals, constraint, ends, step=h0,
                          left_sign=_left_sign(f, constraint, pts))


def _left_sign(f, constraint, pts):
    if pts.size < 2:
        return np.zeros(0, dtype=np.int8)
    mid = (pts[1:] + pts[:-1]) / 2
    d = np.diff(pts)
    _, gp = constraint.residual(*jet(f, mid))
    # directional derivative of Im g towards the left normal i*d
    return np.sign((gp * 1j * d).imag).astype(np.int8)


def _near_curves(p, curves, radius):
    for c in curves:
        if c.points.size and np.min(np.abs(c.points - p)) < radius:
            return True
        if c.points.size > 1:
            a, b = c.points[:-1], c.points[1:]
            d = b - a
            with np.errstate(invalid="ignore", divide="ignore"):
                lam = np.clip(((p - a) * np.conj(d)).real / np.abs(d) ** 2, 0, 1)
            lam = np.nan_to_num(lam)
            if np.min(np.abs(p - (a + lam * d))) < radius:
                return True
    return False


def _trace_all(f, window, constraint, grid_density, step):
    pts, _, _, spacing = _seed_candidates(f, window, grid_density, constraint)
    primary = cluster_seeds(f, window, grid_density, constraint)
    order = list(primary) + [complex(p) for p in pts]
    seeds, comps = [], []
    for p in order:
        if _near_curves(p, comps, spacing):
            continue
        try:
            comps.append(trace_level_curve(f, p, constraint, window, step))
        except DegenerateSeed:
            continue
        seeds.append(p)
    return seeds, comps


def seed_points(f: AnalyticFunction, window: SearchRectangle, grid_density: int = 64,
                constraint=None) -> list:
    """Sign changes of the constraint on a grid, reduced to one seed per
    traced component.

    Grid-cell clusters give the first seeds; every crossing not lying on an
    already traced component then starts a new one, so components that touch
    at a critical point still get separate seeds.
    """
    return _trace_all(f, window, constraint or RealAxisPreimage(), grid_density, None)[0]


def trace_components(f: AnalyticFunction, window: SearchRectangle, constraint=None,
                     grid_density: int = 64, step: float | None = None) -> list:
    """All components met by the seed grid (see ``seed_points``)."""
    return _trace_all(f, window, constraint or RealAxisPreimage(), grid_density, step)[1]


# --- classification ------------------------------------------------------------

def classify_component(f: AnalyticFunction, c: CurveComponent, min_points: int = 4) -> str:
    """Image-range classification of a real-axis pre-image component.

    Relative to the slit base b (the limit of f at Re s = +inf): image
    inside (b, inf) is a strip boundary, inside (-inf, b) the injective
    component, and a monotone image crossing b the full-line type.
    Non-monotone images stay Unclassified.
    """
    if isinstance(f, DerivativeHandle):
        c.classification = UPSILON
        return UPSILON
    if not isinstance(c.constraint, RealAxisPreimage):
        raise ValidationError("classification needs a real-axis pre-image")
    if c.points.size < min_points:
        raise InsufficientArc("component has %d samples" % c.points.size)
    v = c.values.real
    if c.closed:
        v = v[:-1]
    dv = np.diff(v)
    tiny = 1e-12 * (1 + np.abs(v[1:]))
    monotone = np.all(dv > -tiny) or np.all(dv < tiny)
    base = f.slit_base
    if not monotone:
        label = UNCLASSIFIED
    elif v.max() < base:
        label = GAMMA_ZERO
    elif v.min() > base:
        label = GAMMA_PRIME
    else:
        label = GAMMA_J
    c.classification = label
    return label


# --- strips --------------------------------------------------------------------

def _below(z: complex, curve: CurveComponent, window: SearchRectangle) -> bool:
    """Odd number of crossings of the upward vertical ray from z."""
    a, b = curve.points[:-1], curve.points[1:]
    x = z.real
    straddle = (a.real <= x) != (b.real <= x)
    if not straddle.any():
        return False
    a, b = a[straddle], b[straddle]
    lam = (x - a.real) / (b.real - a.real)
    y = a.imag + lam * (b.imag - a.imag)
    return int(np.count_nonzero(y > z.imag)) % 2 == 1


def _right_height(c: CurveComponent, window):
    pts = c.points
    return float(pts[np.argmax(pts.real)].imag)


def partition_strips(f: AnalyticFunction, window: SearchRectangle, zeros=None,
                     grid_density: int = 64, components=None) -> list:
    """Strips between consecutive complete GammaPrime curves.

    A GammaPrime component is complete when it runs from the left to the
    right window edge; one that leaves through the top or bottom (or stops
    early) bounds only partial strips. The strips below the lowest and above
    the highest complete boundary are partial.
    """
    if components is None:
        components = trace_components(f, window, grid_density=grid_density)
    for c in components:
        if c.classification == UNCLASSIFIED:
            try:
                classify_component(f, c)
            except InsufficientArc:
                pass
    if zeros is None:
        zeros = locate_zeros(f, window)
    primes = [c for c in components if c.classification == GAMMA_PRIME]
    complete = [c for c in primes if c.exits("left") and c.exits("right")]
    complete.sort(key=lambda c: _right_height(c, window))
    bounds = [None] + complete + [None]
    strips = []
    for k in range(len(bounds) - 1):
        lo, hi = bounds[k], bounds[k + 1]
        inside = [z for z in zeros
                  if (lo is None or not _below(z.location, lo, window))
                  and (hi is None or _below(z.location, hi, window))]
        strips.append(StripRecord(k, lo, hi, inside, sum(z.multiplicity for z in inside),
                                  lo is not None and hi is not None))
    for k, c in enumerate(complete):
        c.strip_index = k + 1
    return strips


def check_boundaries(components, window: SearchRectangle):
    """Raise IncompleteBoundary if a GammaPrime curve leaves through top or bottom."""
    for c in components:
        if c.classification == GAMMA_PRIME and (c.exits("top") or c.exits("bottom")):
            raise IncompleteBoundary("strip boundary exits the window laterally",
                                     endpoints=[[p.real, p.imag] for p in (c.points[0], c.points[-1])])


# --- intertwining ------------------------------------------------------------------

def _segment_intersections(P: np.ndarray, Q: np.ndarray):
    """All (point, i, j) where segment P[i]P[i+1] meets Q[j]Q[j+1]."""
    if P.size < 2 or Q.size < 2:
        return []
    a, b = P[:-1, None], P[1:, None]
    c, d = Q[None, :-1], Q[None, 1:]
    r, s = b - a, d - c
    denom = (np.conj(r) * s).imag
    qp = c - a
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (np.conj(qp) * s).imag / denom
        mu = (np.conj(qp) * r).imag / denom
    hit = (denom != 0) & (lam >= 0) & (lam < 1) & (mu >= 0) & (mu < 1)
    out = []
    for i, j in zip(*np.nonzero(hit)):
        out.append((complex(a[i, 0] + lam[i, j] * r[i, 0]), int(i), int(j)))
    return out


def _refine_crossing(f, p, iters=30):
    """2-d Newton for Im f = 0 and Im f' = 0 starting from p."""
    fp = DerivativeHandle(f, 1)
    for _ in range(iters):
        v, d1 = jet(f, p)
        _, d2 = jet(fp, p)
        F = np.array([v.imag, d1.imag])
        J = np.array([[d1.imag, d1.real], [d2.imag, d2.real]])
        if abs(np.linalg.det(J)) < 1e-300:
            return p, False
        step = np.linalg.solve(J, F)
        p = p - complex(step[0], step[1])
        if abs(step[0]) + abs(step[1]) < 1e-14 * (1 + abs(p)):
            return p, True
    return p, False


def upsilon_kind(c: CurveComponent) -> str:
    """Family of an f'-curve from the sign pattern of its (real) f' values.

    For f = b + a e^{-lambda s} + ..., the strip boundaries of f carry
    f' < 0 near Re s = +inf, so: image crossing 0 (a zero of f' on it) is
    UpsilonJ, negative image is UpsilonPrime, positive image is UpsilonZero.
    """
    v = c.values.real
    if v.min() < 0 < v.max():
        return "UpsilonJ"
    return "UpsilonPrime" if v.max() <= 0 else "UpsilonZero"


@dataclass
class IntertwiningReport:
    pairs: list
    upsilon_count: int
    gamma_count: int
    per_upsilon: list
    tolerance_deg: float
    upsilon_kinds: list = field(default_factory=list)

    @property
    def all_unique(self):
        return all(n == 1 for n in self.per_upsilon)

    @property
    def all_horizontal(self):
        return all(p["angle_deg"] <= self.tolerance_deg for p in self.pairs)

    def to_dict(self):
        return {
            "upsilon_count": self.upsilon_count,
            "gamma_count": self.gamma_count,
            "per_upsilon": self.per_upsilon,
            "upsilon_kinds": self.upsilon_kinds,
            "tolerance_deg": self.tolerance_deg,
            "all_unique": self.all_unique,
            "all_horizontal": self.all_horizontal,
            "pairs": self.pairs,
        }


def _polyline_angle(points: np.ndarray, i: int) -> float:
    """Finite-difference tangent angle (degrees from horizontal) around segment i."""
    lo, hi = max(0, i - 1), min(points.size - 1, i + 2)
    d = points[hi] - points[lo]
    ang = abs(math.degrees(math.atan2(d.imag, d.real)))
    return min(ang, 180 - ang)


def intertwining_check(f: AnalyticFunction, window: SearchRectangle, grid_density: int = 64,
                       gammas=None, upsilons=None,
                       tolerance_deg: float = HORIZONTAL_TOL_DEG) -> IntertwiningReport:
    """Intersect the f'-curves (Im f' = 0) with the f-curves (Im f = 0)."""
    fp = DerivativeHandle(f, 1)
    if gammas is None:
        gammas = trace_components(f, window, grid_density=grid_density)
    if upsilons is None:
        upsilons = trace_components(fp, window, grid_density=grid_density)
    for u in upsilons:
        u.classification = UPSILON
    pairs, per_u = [], []
    for ui, u in enumerate(upsilons):
        met = set()
        for gi, g in enumerate(gammas):
            for p, i, j in _segment_intersections(u.points, g.points):
                q, ok = _refine_crossing(f, p)
                v, d1 = jet(f, q if ok else p)
                # magnitude of f along this stretch of the curve, not the
                # whole curve: far-left values of zeta dwarf a local critical point
                scale = max(1.0, float(np.max(np.abs(g.values[max(0, j - 8):j + 9]))))
                if not ok or abs(d1) < 1e-6 * scale or abs(q - p) > 2 * g.step:
                    if abs(d1) < 1e-6 * scale:
                        raise TangentUndefined("f and f' both vanish near %r" % (p,),
                                               point=complex(p))
                    q = p
                fd = _polyline_angle(g.points, j)
                exact = abs(math.degrees(math.atan2(-d1.imag, d1.real)))
                exact = min(exact, 180 - exact)
                pairs.append({"upsilon": ui, "gamma": gi, "point": [q.real, q.imag],
                              "angle_deg": max(fd, exact), "angle_fd_deg": fd,
                              "f_value": [v.real, v.imag]})
                met.add(gi)
        # Gamma branches that stop at a critical point sitting on this Upsilon
        for gi, g in enumerate(gammas):
            for end, pt in zip(g.ends, (g.points[0], g.points[-1])):
                if end == "critical" and _near_curves(pt, [u], 2 * g.step):
                    v, d1 = jet(f, pt)
                    near = g.values[:9] if pt == g.points[0] else g.values[-9:]
                    if abs(v) < 1e-6 * max(1.0, float(np.max(np.abs(near)))):
                        raise TangentUndefined("f and f' both vanish near %r" % (pt,),
                                               point=complex(pt))
        per_u.append(len(met))
    return IntertwiningReport(pairs, len(upsilons), len(gammas), per_u, tolerance_deg,
                              [upsilon_kind(u) for u in upsilons])

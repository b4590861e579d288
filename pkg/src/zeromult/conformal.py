"""Numerical apparatus around a (near-)double zero.

A double zero s0 of f is a critical point where two fundamental domains meet.
The patch around it is cut by the pre-image of a ray from the critical value
w_c = f(s_c); the two sides are mapped one to one onto a slit neighbourhood,
and the involution swaps them: phi(s) is the second root of f(w) = f(s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .curves import CirclePreimage, CurveComponent, RayPreimage, trace_level_curve
from .dirichlet import GeneralDirichletSeries, primes_upto
from .errors import (
    BranchAssemblyFailed,
    FactorVanishes,
    ForeignZeroInPatch,
    InverseNotFound,
    NotInjective,
    NumericalError,
    RegionUnresolved,
    ValidationError,
)
from .handles import AnalyticFunction, SyntheticTest, jet, taylor_coefficients
from .zeros import Circle, SearchRectangle, ZeroRecord, newton_polish, winding_number

MERGE_FACTOR = 5.0
NEWTON_MAX = 50
RESTARTS = 8
PHI_NODES = 16
CONTINUATION_STEPS = 12
# Newton only needs a rough slope; fewer Cauchy nodes than the derivative op
NEWTON_NODES = 16
MODEL_NODES = 256
MODEL_ORDER = 64
BREAKDOWN_LEVEL = 0.1

# Dunavant degree-5 rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_TRI_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_TRI_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


# --- geometry helpers --------------------------------------------------------------

def polygon_area(poly: np.ndarray) -> float:
    x, y = poly.real, poly.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(pts, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule; ``poly`` is an open vertex list."""
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))
    a = poly
    b = np.roll(poly, -1)
    px, py = pts.real[:, None], pts.imag[:, None]
    straddle = (a.imag[None, :] > py) != (b.imag[None, :] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = a.real + (py - a.imag) * (b.real - a.real) / (b.imag - a.imag)
    inside = np.count_nonzero(straddle & (px < xcross), axis=1) % 2 == 1
    return inside


def _dist_to_polyline(pts, line: np.ndarray) -> np.ndarray:
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))[:, None]
    a, b = line[:-1][None, :], line[1:][None, :]
    d = b - a
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.clip(((pts - a) * np.conj(d)).real / np.abs(d) ** 2, 0, 1)
    lam = np.nan_to_num(lam)
    return np.min(np.abs(pts - (a + lam * d)), axis=1)


def _seg_hits(P, Q):
    """Intersections of polyline P with polyline Q: (point, i, lam, j, mu)."""
    a, b = P[:-1, None], P[1:, None]
    c, d = Q[None, :-1], Q[None, 1:]
    r, s = b - a, d - c
    den = (np.conj(r) * s).imag
    qp = c - a
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (np.conj(qp) * s).imag / den
        mu = (np.conj(qp) * r).imag / den
    hit = (den != 0) & (lam >= 0) & (lam < 1) & (mu >= 0) & (mu < 1)
    out = []
    for i, j in zip(*np.nonzero(hit)):
        out.append((complex(a[i, 0] + lam[i, j] * r[i, 0]), int(i), float(lam[i, j]),
                    int(j), float(mu[i, j])))
    return out


def _square_walk(box: SearchRectangle, p: complex, q: complex) -> list:
    """Counterclockwise walk along the box boundary from p to q (both on it)."""
    corners = box.corners()

    def param(z):
        # position along the ccw perimeter, in [0, 4)
        if abs(z.imag - box.t_min) < 1e-12 * (1 + abs(z.imag)):
            return (z.real - box.sigma_min) / box.width
        if abs(z.real - box.sigma_max) < 1e-12 * (1 + abs(z.real)):
            return 1 + (z.imag - box.t_min) / box.height
        if abs(z.imag - box.t_max) < 1e-12 * (1 + abs(z.imag)):
            return 2 + (box.sigma_max - z.real) / box.width
        return 3 + (box.t_max - z.imag) / box.height

    u, v = param(p), param(q)
    if v <= u:
        v += 4
    out = [p]
    for k in range(int(math.floor(u)) + 1, int(math.ceil(v))):
        out.append(corners[k % 4])
    out.append(q)
    return out


def _triangle_integral(f, tris_a, tris_b, tris_c):
    """Sum of signed integrals of |f'|^2 over triangles (a, b, c)."""
    area = 0.5 * (np.conj(tris_b - tris_a) * (tris_c - tris_a)).imag
    pts = (tris_a[:, None] * _TRI_BARY[None, :, 0] + tris_b[:, None] * _TRI_BARY[None, :, 1]
           + tris_c[:, None] * _TRI_BARY[None, :, 2])
    _, d = jet(f, pts.ravel())
    vals = np.abs(d.reshape(pts.shape)) ** 2
    return float(np.sum(area * (vals @ _TRI_W)))


def _refine(a, b, c, levels):
    for _ in range(levels):
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        a, b, c = (np.concatenate([a, ab, ca, ab]), np.concatenate([ab, b, bc, bc]),
                   np.concatenate([ca, bc, c, ca]))
    return a, b, c


def polygon_dirichlet_integral(f, poly: np.ndarray, center: complex, refine: int = 1) -> float:
    """Integral of |f'|^2 over a simple polygon (signed fan from ``center``,
    each triangle split ``refine`` times before the degree-5 rule)."""
    a = np.full(poly.size, complex(center))
    b = poly
    c = np.roll(poly, -1)
    a, b, c = _refine(a, b, c, refine)
    return abs(_triangle_integral(f, a, b, c))


def polyline_length_integral(f, line: np.ndarray) -> float:
    """Integral of |f'| |ds| along a polyline, 8-point Gauss per segment."""
    a, b = line[:-1], line[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    _, d = jet(f, pts.ravel())
    vals = np.abs(d.reshape(pts.shape))
    return float(np.sum(np.abs(half) * (vals @ _GL_W)))


def green_area(f, loop: np.ndarray) -> float:
    """Image area via (1/2) Im of the contour integral of conj(f) f' ds (an independent check)."""
    a, b = loop[:-1], loop[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    v, d = jet(f, pts.ravel())
    integrand = (np.conj(v) * d).reshape(pts.shape)
    return 0.5 * float(np.sum((half[:, None] * integrand) @ _GL_W).imag)


# --- patch ---------------------------------------------------------------------

@dataclass
class DomainPatch:
    f: AnalyticFunction
    anchor_zeros: list
    fixed_point: complex
    critical_value: complex
    slit_direction: complex
    box: SearchRectangle
    cut: np.ndarray
    omega: np.ndarray
    omega_prime: np.ndarray
    template: str
    separation: float
    slit_label: str = "L"
    slit_label_prime: str = "L'"
    b_region: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    b_region_prime: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    omega_c: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    @property
    def extent(self):
        return self.box.width / 2

    @property
    def merge_scale(self):
        return MERGE_FACTOR * self.separation

    def side(self, s) -> np.ndarray:
        """+1 in omega, -1 in omega_prime, 0 outside both."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        out = np.zeros(s.shape, dtype=int)
        out[points_in_polygon(s, self.omega)] = 1
        out[points_in_polygon(s, self.omega_prime)] = -1
        return out

    def to_dict(self):
        return {
            "template": self.template,
            "fixed_point": [self.fixed_point.real, self.fixed_point.imag],
            "critical_value": [self.critical_value.real, self.critical_value.imag],
            "slit_direction": [self.slit_direction.real, self.slit_direction.imag],
            "extent": self.extent,
            "separation": self.separation,
            "anchors": [z.to_dict() for z in self.anchor_zeros],
            "cut_points": int(self.cut.size),
        }


def _critical_point(f, guess: complex, scale: float) -> complex:
    """Zero of f' near ``guess`` (Newton on the Cauchy derivative)."""
    s = complex(guess)
    for _ in range(NEWTON_MAX):
        c = taylor_coefficients(f, s, [1, 2])
        d1, d2 = c[1], 2 * c[2]
        if d2 == 0:
            break
        step = d1 / d2
        if abs(step) > scale:
            step *= scale / abs(step)
        s -= step
        if abs(step) < 1e-15 * (1 + abs(s)):
            break
    return s


def _as_records(f, pair):
    if isinstance(pair, ZeroRecord):
        return [pair]
    if isinstance(pair, (complex, float, int)):
        return [ZeroRecord(complex(pair), 2, 2, abs(f(complex(pair))), 0.0)]
    return list(pair)


def build_domain_patch(f: AnalyticFunction, pair, extent: float,
                       template: str = "double") -> DomainPatch:
    """Two fundamental-domain pieces around a double zero or a close pair.

    ``pair`` is a list of ZeroRecords (two simple zeros, or one record of
    multiplicity 2) or a bare complex location of a double zero. The
    ``simple`` template handles an isolated simple zero: one domain, no cut.
    """
    records = _as_records(f, pair)
    mult = sum(r.multiplicity for r in records)
    locs = [r.location for r in records]
    if template == "simple":
        if mult != 1:
            raise BranchAssemblyFailed("simple template needs one simple zero", multiplicity=mult)
        return _simple_patch(f, records[0], extent)
    if template != "double":
        raise ValidationError("unknown template %r" % template)
    if mult != 2:
        raise BranchAssemblyFailed("double template needs total multiplicity 2, got %d" % mult,
                                   multiplicity=mult)
    mid = sum(locs) / len(locs)
    sep = abs(locs[0] - locs[1]) if len(locs) == 2 else 0.0
    if extent <= 0:
        raise ValidationError("extent must be positive")
    # no foreign zero within 3 extent
    try:
        w = winding_number(f, Circle(mid, 3 * extent))
    except NumericalError as exc:
        raise ForeignZeroInPatch("winding on the 3*extent circle failed: %s" % exc) from exc
    if w != 2:
        raise ForeignZeroInPatch("%d zeros within 3*extent of the anchor, expected 2" % w,
                                 winding=w)
    inner = winding_number(f, Circle(mid, max(2 * sep, extent / 4)))
    if inner != 2:
        raise BranchAssemblyFailed("anchor disc holds %d zeros" % inner)
    sc = _critical_point(f, mid, max(sep, extent / 10))
    if abs(sc - mid) > max(sep, extent / 10):
        raise BranchAssemblyFailed("no critical point of f between the zeros")
    wc = complex(f(sc))
    a2 = taylor_coefficients(f, sc, [2])[2]
    if abs(a2) == 0:
        raise BranchAssemblyFailed("f'' vanishes at the critical point: zero of order > 2")
    # slit: a ray from w_c through the origin (the two zeros sit on its
    # pre-image); for an exact double zero w_c = 0 and the ray is (-inf, 0]
    scale = abs(a2) * max(sep, 1e-300) ** 2
    if abs(wc) <= 1e-8 * max(scale, abs(a2) * extent ** 2):
        u = -1.0 + 0j
    else:
        u = -wc / abs(wc)
    box = SearchRectangle(sc.real - extent, sc.real + extent, sc.imag - extent, sc.imag + extent)
    cut = _trace_cut(f, sc, wc, u, a2, box)
    omega, omega_prime = _split_box(box, cut)
    patch = DomainPatch(f, records, sc, wc, u, box, cut, omega, omega_prime, "double", sep)
    for z in locs:
        # chord sagitta of the traced cut stays well below one step
        if _dist_to_polyline(z, cut)[0] > box.width / 400:
            raise BranchAssemblyFailed("zero %r is not on the shared boundary" % (z,))
    _fill_subregions(patch)
    return patch


def _trace_cut(f, sc, wc, u, a2, box):
    """Pre-image of the ray w_c + u R_+ through s_c, across the whole box."""
    shifted = SyntheticTest(lambda s: f(s) - wc, "f - w_c", poles=f.poles)
    theta = float(np.angle(u))
    d = np.sqrt(u / a2)
    d /= abs(d)
    eps = box.width / 200
    step = box.width / 400
    pieces = {1: None, -1: None}
    for sign in (1, -1):
        if pieces[sign] is not None:
            continue
        comp = trace_level_curve(shifted, sc + sign * eps * d, RayPreimage(theta), box, step=step)
        pts = comp.points
        proj = ((pts - sc) * np.conj(d)).real
        for sg, end in ((1, comp.ends[1] if proj[-1] > 0 else comp.ends[0]),
                        (-1, comp.ends[1] if proj[-1] < 0 else comp.ends[0])):
            part = pts[sg * proj > 0.25 * eps]
            if part.size == 0 or pieces[sg] is not None or not end.startswith("window"):
                continue
            if not np.all(np.diff(sg * proj[sg * proj > 0.25 * eps]) > 0) and \
                    not np.all(np.diff(sg * proj[sg * proj > 0.25 * eps]) < 0):
                continue
            if sg * proj[-1] < 0 or (sg * proj[0] > sg * proj[-1]):
                part = part[::-1] if abs(part[0] - sc) > abs(part[-1] - sc) else part
            else:
                part = part if abs(part[0] - sc) < abs(part[-1] - sc) else part[::-1]
            pieces[sg] = part
    if pieces[1] is None or pieces[-1] is None:
        raise BranchAssemblyFailed("slit pre-image does not cross the patch through s_c")
    cut = np.concatenate([pieces[-1][::-1], [sc], pieces[1]])
    hits = [h for h in _seg_hits(cut, cut) if abs(h[1] - h[3]) > 1]
    if hits:
        raise BranchAssemblyFailed("slit pre-image intersects itself")
    return cut


def _split_box(box, cut):
    p, q = cut[0], cut[-1]
    one = np.array(list(cut) + _square_walk(box, q, p)[1:-1], dtype=complex)
    two = np.array(list(cut[::-1]) + _square_walk(box, p, q)[1:-1], dtype=complex)
    # omega' lies to the left of the cut oriented with Re d > 0, i.e. the
    # counterclockwise polygon traversing the cut in that orientation
    d = cut[-1] - cut[0]
    forward = d.real > 0 or (d.real == 0 and d.imag > 0)
    left, right = (one, two) if polygon_area(one) > 0 else (two, one)
    # ``one`` walks the cut forward; it is ccw iff it lies to the left
    if not forward:
        left, right = right, left
    return right, left


def _fill_subregions(patch: DomainPatch, n: int = 24, delta: float = 0.05):
    """Grid samples of B, B' (f avoids a tube around both slit banks) and Omega_c."""
    box = patch.box
    xs = np.linspace(box.sigma_min, box.sigma_max, n + 2)[1:-1]
    ys = np.linspace(box.t_min, box.t_max, n + 2)[1:-1]
    g = (xs[None, :] + 1j * ys[:, None]).ravel()
    side = patch.side(g)
    fv = np.asarray(patch.f(g))
    # distance of f to the slit ray (from w_c along u) relative to |f - w_c|
    rel = (fv - patch.critical_value) * np.conj(patch.slit_direction)
    ang = np.abs(np.angle(rel))
    clear = ang > delta
    patch.b_region = g[(side == 1) & clear]
    patch.b_region_prime = g[(side == -1) & clear]
    patch.omega_c = np.concatenate([patch.b_region, patch.b_region_prime])


def _simple_patch(f, rec: ZeroRecord, extent: float) -> DomainPatch:
    z = rec.location
    if winding_number(f, Circle(z, 3 * extent)) != 1:
        raise ForeignZeroInPatch("foreign zero within 3*extent of %r" % (z,))
    box = SearchRectangle(z.real - extent, z.real + extent, z.imag - extent, z.imag + extent)
    square = np.array(box.corners(), dtype=complex)
    return DomainPatch(f, [rec], z, 0j, -1 + 0j, box, np.array([z]), square,
                       np.zeros(0, complex), "simple", 0.0)


# --- involution -------------------------------------------------------------------

def _newton_inverse(f, target, guess, tol=1e-15, max_iter=NEWTON_MAX, max_step=math.inf,
                    nodes: int = NEWTON_NODES):
    """Vectorized Newton for f(w) = target. Returns (w, converged mask).

    Steps are clipped to ``max_step``; points whose evaluation fails are
    marked as not converged.
    """
    w = np.array(guess, dtype=complex)
    target = np.asarray(target, dtype=complex)
    done = np.zeros(w.shape, dtype=bool)
    dead = np.zeros(w.shape, dtype=bool)
    last = np.full(w.shape, np.inf)
    for _ in range(max_iter):
        act = ~done & ~dead
        if not act.any():
            break
        idx = np.nonzero(act)[0]
        try:
            v, d = jet(f, w[idx], nodes=nodes)
        except NumericalError:
            if idx.size == 1:
                dead[idx] = True
                continue
            v = np.empty(idx.size, complex)
            d = np.empty(idx.size, complex)
            for n, k in enumerate(idx):
                try:
                    v[n], d[n] = jet(f, w[k], nodes=nodes)
                except NumericalError:
                    v[n], d[n] = np.nan, np.nan
        with np.errstate(divide="ignore", invalid="ignore"):
            step = (v - target[idx]) / d
        bad = ~np.isfinite(step)
        dead[idx[bad]] = True
        step[bad] = 0
        size = np.abs(step)
        clip = size > max_step
        step[clip] *= max_step / size[clip]
        w[idx] -= step
        wa = w[idx]
        conv = (size <= tol * (1 + np.abs(wa))) | ((size >= last[idx]) & (size < 1e-11 * (1 + np.abs(wa))))
        conv &= ~bad
        done[idx[conv]] = True
        last[idx] = size
    return w, done


@dataclass
class InvolutionMap:
    patch: DomainPatch
    nodes: np.ndarray
    forward: np.ndarray
    derivative_estimates: np.ndarray
    fixed_point: complex
    boundary_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    boundary_images: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    boundary_side: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __call__(self, s):
        return apply_involution(self.patch, s)

    def derivative(self, s, radius=None):
        return involution_derivative(self.patch, s, radius)

    def involution_error(self):
        back = apply_involution(self.patch, self.forward)
        return float(np.max(np.abs(back - self.nodes)))


def apply_involution(patch: DomainPatch, s, steps: int = CONTINUATION_STEPS) -> np.ndarray:
    """phi(s): the second root of f(w) = f(s), continued analytically from the
    fixed point along the segment s_c -> s (phi(s_c) = s_c, phi'(s_c) = -1)."""
    f = patch.f
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    sc = patch.fixed_point
    out = np.empty_like(s)
    near = np.abs(s - sc) < 1e-14 * (1 + abs(sc))
    out[near] = sc
    idx = np.nonzero(~near)[0]
    if idx.size == 0:
        return out
    target_pts = s[idx]
    lam = np.linspace(0, 1, steps + 1)[1:]
    prev2 = prev = None
    w = None
    for k, t in enumerate(lam):
        p = sc + t * (target_pts - sc)
        if k == 0:
            guess = 2 * sc - p
        elif k == 1:
            guess = prev + (prev - sc)
        else:
            guess = 2 * prev - prev2
        last = k == lam.size - 1
        w, ok = _newton_inverse(f, np.asarray(f(p), dtype=complex), guess,
                                tol=1e-15 if last else 1e-9, max_step=patch.extent)
        ok &= np.abs(w - p) > 1e-6 * np.abs(p - sc)
        if not ok.all():
            w = _restart(f, p, w, ok, guess, patch)
        prev2, prev = prev, w
    out[idx] = w
    return out


def _restart(f, p, w, ok, guess, patch):
    for k in np.nonzero(~ok)[0]:
        rad = 0.25 * abs(p[k] - patch.fixed_point) + 1e-12
        for j in range(RESTARTS):
            g = guess[k] + rad * np.exp(2j * np.pi * j / RESTARTS)
            wk, okk = _newton_inverse(f, np.asarray(f(p[k:k + 1]), dtype=complex),
                                      np.array([g]), max_step=patch.extent)
            if okk[0] and abs(wk[0] - p[k]) > 1e-6 * abs(p[k] - patch.fixed_point):
                w[k] = wk[0]
                break
        else:
            raise InverseNotFound("no second root of f(w) = f(s) near %r" % (complex(p[k]),),
                                  point=complex(p[k]))
    return w


def involution_derivative(patch: DomainPatch, s, radius=None, nodes: int = PHI_NODES,
                          phi=None):
    """phi'(s) by the trapezoidal Cauchy rule on phi itself.

    Ring values are Newton solutions started from the tangent-line guess
    around phi(s), which keeps them on the branch of phi(s).
    """
    f = patch.f
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    if radius is None:
        radius = patch.extent / 50
    radius = np.broadcast_to(np.asarray(radius, dtype=float), s.shape)
    if phi is None:
        phi = apply_involution(patch, s)
    _, d_s = jet(f, s)
    _, d_phi = jet(f, phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(np.abs(s - patch.fixed_point) < 1e-14, -1.0, d_s / d_phi)
    w = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    offs = radius[:, None] * w[None, :]
    ring = (s[:, None] + offs).ravel()
    guess = (phi[:, None] + slope[:, None] * offs).ravel()
    vals, ok = _newton_inverse(f, np.asarray(f(ring), dtype=complex), guess,
                               max_step=float(np.max(radius)))
    if not ok.all():
        vals[~ok] = apply_involution(patch, ring[~ok])
    vals = vals.reshape(s.size, nodes)
    return (vals * w[None, :] ** -1).mean(axis=1) / radius


def build_involution(f: AnalyticFunction, patch: DomainPatch, grid_n: int = 16) -> InvolutionMap:
    """phi on a grid_n x grid_n grid restricted to omega, plus the cut banks."""
    if patch.template != "double":
        raise BranchAssemblyFailed("the involution needs a double-zero patch")
    box = patch.box
    xs = np.linspace(box.sigma_min, box.sigma_max, grid_n + 2)[1:-1]
    ys = np.linspace(box.t_min, box.t_max, grid_n + 2)[1:-1]
    g = (xs[None, :] + 1j * ys[:, None]).ravel()
    spacing = box.width / (grid_n + 1)
    off_cut = _dist_to_polyline(g, patch.cut) > spacing / 4
    nodes = g[(patch.side(g) == 1) & off_cut]
    _check_injective(f, nodes, spacing)
    _check_injective(f, g[(patch.side(g) == -1) & off_cut], spacing)
    fwd = apply_involution(patch, nodes)
    if np.any(patch.side(fwd) == 1):
        raise NotInjective("phi sends omega points back into omega")
    deriv = involution_derivative(patch, nodes, radius=spacing / 4, phi=fwd)
    # cut banks: a point on one branch of the cut maps to the other branch
    cut = patch.cut
    k = int(np.argmin(np.abs(cut - patch.fixed_point)))
    banks, tags = [], []
    for tag, part in ((1, cut[1:k]), (-1, cut[k + 1:-1])):
        part = part[np.abs(part - patch.fixed_point) > spacing / 4]
        if part.size:
            part = part[np.linspace(0, part.size - 1, min(8, part.size)).astype(int)]
        banks.append(part)
        tags.append(np.full(part.size, tag, dtype=np.int8))
    bank = np.concatenate(banks)
    b_side = np.concatenate(tags)
    b_img = apply_involution(patch, bank) if bank.size else bank
    return InvolutionMap(patch, nodes, fwd, deriv, patch.fixed_point, bank, b_img, b_side)


def _check_injective(f, pts, spacing):
    if pts.size < 2:
        return
    fv = np.asarray(f(pts), dtype=complex)
    _, d = jet(f, pts)
    tree = cKDTree(np.column_stack([fv.real, fv.imag]))
    thresh = 0.25 * spacing * float(np.median(np.abs(d)))
    for i, j in tree.query_pairs(thresh):
        if abs(pts[i] - pts[j]) > 3 * spacing and abs(fv[i] - fv[j]) < 0.25 * spacing * min(
                abs(d[i]), abs(d[j])):
            raise NotInjective("f takes nearly equal values at %r and %r" % (pts[i], pts[j]))


# --- reports -------------------------------------------------------------------

@dataclass
class VerificationReport:
    identity: str
    radii: list
    measured: list
    targets: list
    deviations: list
    passed: list
    tolerance: float
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed)

    def rows(self):
        for r, m, t, d, p in zip(self.radii, self.measured, self.targets, self.deviations,
                                 self.passed):
            yield {"identity": self.identity, "r": r, "measured": m, "target": t,
                   "deviation": d, "pass": p}

    def to_dict(self):
        return {
            "identity": self.identity,
            "tolerance": self.tolerance,
            "radii": list(self.radii),
            "measured": list(self.measured),
            "targets": list(self.targets),
            "deviations": list(self.deviations),
            "passed": list(self.passed),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["identity"], d["radii"], d["measured"], d["targets"], d["deviations"],
                   d["passed"], d["tolerance"], d.get("extra", {}))


def _report(identity, radii, measured, targets, tol, extra=None, rel=True):
    dev = []
    for m, t in zip(measured, targets):
        dev.append(float(abs(m - t) / abs(t)) if rel and t != 0 else float(abs(m - t)))
    return VerificationReport(identity, [float(r) for r in radii], [float(m) for m in measured],
                              [float(t) for t in targets], dev, [d <= tol for d in dev], tol,
                              extra or {})


def check_chain_rule(f: AnalyticFunction, involution: InvolutionMap, sample_set=None,
                     tol: float = 1e-8) -> VerificationReport:
    """max |f'(phi(s)) phi'(s) - f'(s)| / |f'(s)| over the samples."""
    patch = involution.patch
    if sample_set is None:
        s, phi, dphi = involution.nodes, involution.forward, involution.derivative_estimates
    else:
        s = np.atleast_1d(np.asarray(sample_set, dtype=complex))
        phi = apply_involution(patch, s)
        dphi = involution_derivative(patch, s, phi=phi)
    _, d_s = jet(f, s)
    _, d_phi = jet(f, phi)
    resid = np.abs(d_phi * dphi - d_s) / np.abs(d_s)
    # decay comparison along 4 rays into s_c
    sc = patch.fixed_point
    ts = patch.extent * np.geomspace(0.5, 1e-3, 8)
    ratios = []
    for k in range(4):
        direction = np.exp(1j * (np.pi / 4 + k * np.pi / 2))
        pts = sc + ts * direction
        pts = pts[patch.side(pts) == 1]
        if pts.size:
            _, a = jet(f, pts)
            _, b = jet(f, apply_involution(patch, pts))
            ratios.append((np.abs(a) / np.abs(b)).tolist())
    dist = np.abs(s - sc)
    rep = _report("chain_rule", [float(np.min(dist)) if dist.size else 0.0],
                  [float(np.max(resid)) if resid.size else 0.0], [0.0], tol, rel=False,
                  extra={"ray_ratios": ratios, "samples": int(s.size),
                         "min_distance": float(np.min(dist)) if dist.size else None})
    return rep


def _omega_root(patch: DomainPatch, w):
    """The root of f(s) = w lying in omega (and the one in omega')."""
    f = patch.f
    sc, wc = patch.fixed_point, patch.critical_value
    a2 = taylor_coefficients(f, sc, [2])[2]
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    root = np.sqrt((w - wc) / a2)
    out = {}
    for sign in (1, -1):
        s, ok = _newton_inverse(f, w, sc + sign * root)
        if not ok.all():
            raise RegionUnresolved("Newton failed for a pre-image seed")
        out[sign] = s
    side_p = patch.side(out[1])
    om = np.where(side_p == 1, out[1], out[-1])
    omp = np.where(side_p == 1, out[-1], out[1])
    return om, omp


def _circle_loops(patch: DomainPatch, r: float):
    """Traced closed level curves |f| = r meeting the cut near s_c."""
    f = patch.f
    sc = patch.fixed_point
    box = patch.box
    # seeds: where the cut meets |f| = r
    vals = np.abs(np.asarray(f(patch.cut)))
    seeds = []
    for k in range(patch.cut.size - 1):
        if (vals[k] - r) * (vals[k + 1] - r) < 0:
            lam = (r - vals[k]) / (vals[k + 1] - vals[k])
            seeds.append((patch.cut[k] + lam * (patch.cut[k + 1] - patch.cut[k]),
                          abs(patch.cut[k + 1] - patch.cut[k])))
    if not seeds:
        raise RegionUnresolved("|f| = %.3g does not meet the slit pre-image in the patch" % r)
    scale = math.sqrt(r / abs(taylor_coefficients(f, sc, [2])[2]))
    loops = []
    for seed, seg in seeds:
        size = max(abs(seed - sc), scale)
        step = size / 300
        # the seed is a chord interpolation on the cut, off the loop by up to ~seg
        if any(_dist_to_polyline(seed, lp)[0] < 2 * step + seg for lp in loops):
            continue
        comp = trace_level_curve(f, seed, CirclePreimage(r), box, step=step)
        if not comp.closed:
            raise RegionUnresolved("pre-image of the circle |w| = %.3g is not closed in the patch" % r)
        loops.append(comp.points)
    return loops


def _densify_cut(patch: DomainPatch, chord: np.ndarray, h: float) -> np.ndarray:
    """Subdivide a piece of the traced cut to segments <= h and project the
    new points onto the slit pre-image f(s) in w_c + u [0, inf)."""
    if chord.size < 2:
        return chord
    out = [chord[:1]]
    for a, b in zip(chord[:-1], chord[1:]):
        k = max(1, int(math.ceil(abs(b - a) / h)))
        out.append(a + (b - a) * np.arange(1, k + 1) / k)
    pts = np.concatenate(out)
    inner = pts[1:-1]
    if inner.size:
        wc, u = patch.critical_value, patch.slit_direction
        t = np.maximum(0.0, ((np.asarray(patch.f(inner)) - wc) * np.conj(u)).real)
        proj, ok = _newton_inverse(patch.f, wc + u * t, inner, max_step=h)
        inner = np.where(ok, proj, inner)
        pts = np.concatenate([pts[:1], inner, pts[-1:]])
    return pts


def _snap_crossings(patch: DomainPatch, pts: np.ndarray, r: float) -> np.ndarray:
    """Move loop/cut intersection points onto the exact pre-images of the two
    points of the circle |w| = r that lie on the slit line through w_c."""
    u = patch.slit_direction
    fv = np.asarray(patch.f(pts))
    cand = np.array([u * r, -u * r])
    target = cand[np.argmin(np.abs(fv[:, None] - cand[None, :]), axis=1)]
    snapped, ok = _newton_inverse(patch.f, target, pts, max_step=float(np.abs(pts[0] - pts[1])) / 10)
    return tuple(np.where(ok, snapped, pts))


def _trim_ends(arc: np.ndarray) -> np.ndarray:
    """Drop interior points lying behind a (snapped) end point, so the arc
    does not double back on itself."""
    lo, hi = 1, arc.size - 1
    while hi - lo > 1 and ((arc[lo] - arc[0]) * np.conj(arc[lo + 1] - arc[lo])).real <= 0:
        lo += 1
    while hi - lo > 1 and ((arc[-1] - arc[hi - 1]) * np.conj(arc[hi - 1] - arc[hi - 2])).real <= 0:
        hi -= 1
    return np.concatenate([arc[:1], arc[lo:hi], arc[-1:]])


def _split_loop(loop: np.ndarray, cut: np.ndarray, patch: DomainPatch | None = None):
    """Split a closed loop by the cut into (arcs, polygons); with ``patch``
    the cut chord between the two crossings is resampled at the loop's
    resolution."""
    hits = []
    # a loop seeded on the cut can report its start crossing twice (end of
    # the last segment and start of the first)
    merge = 1e-9 * float(np.abs(np.diff(loop)).sum())
    for h in _seg_hits(loop, cut):
        if all(abs(h[0] - g[0]) > merge for g in hits):
            hits.append(h)
    if len(hits) != 2:
        raise RegionUnresolved("cut meets a circle pre-image %d times" % len(hits))
    (p1, i1, _, j1, m1), (p2, i2, _, j2, m2) = sorted(hits, key=lambda h: h[1] + h[2])
    if patch is not None:
        p1, p2 = _snap_crossings(patch, np.array([p1, p2]), abs(complex(patch.f(complex(p1)))))
    arc_a = _trim_ends(np.concatenate([[p1], loop[i1 + 1:i2 + 1], [p2]]))
    arc_b = _trim_ends(np.concatenate([[p2], loop[i2 + 1:-1], loop[:i1 + 1], [p1]]))
    if (j1, m1) <= (j2, m2):
        c12 = np.concatenate([[p1], cut[j1 + 1:j2 + 1], [p2]])
    else:
        c12 = np.concatenate([[p1], cut[j2 + 1:j1 + 1][::-1], [p2]])
    if patch is not None:
        c12 = _densify_cut(patch, c12, float(np.median(np.abs(np.diff(loop)))))
    poly_a = np.concatenate([arc_a, c12[::-1][1:-1]])
    poly_b = np.concatenate([arc_b, c12[1:-1]])
    return (arc_a, arc_b), (poly_a, poly_b)


def _simple_loop(patch: DomainPatch, r: float):
    """The closed pre-image of |w| = r around an isolated simple zero."""
    f = patch.f
    z = patch.fixed_point
    d = jet(f, z)[1]
    s, ok = _newton_inverse(f, np.array([r + 0j]), np.array([z + r / d]))
    if not ok[0]:
        raise RegionUnresolved("no pre-image of w = %.3g near the zero" % r)
    comp = trace_level_curve(f, s[0], CirclePreimage(r), patch.box,
                             step=r / abs(d) / 300)
    if not comp.closed:
        raise RegionUnresolved("pre-image of the circle |w| = %.3g is not closed in the patch" % r)
    return comp.points


def _region_parts(patch: DomainPatch, r: float):
    """Per side (+1 omega, -1 omega'): list of (arc, polygon) pieces of the
    pre-image of the disc |w| < r."""
    parts = {1: [], -1: []}
    if patch.template == "simple":
        loop = _simple_loop(patch, r)
        closed = np.append(loop, loop[0])
        parts[1].append((closed, loop))
        return parts, 1
    loops = _circle_loops(patch, r)
    for loop in loops:
        arcs, polys = _split_loop(loop, patch.cut, patch)
        for arc, poly in zip(arcs, polys):
            mid = arc[arc.size // 2]
            side = int(patch.side(mid)[0])
            if side == 0:
                raise RegionUnresolved("circle pre-image arc leaves the patch")
            parts[side].append((arc, poly))
    if len(parts[1]) != len(parts[-1]):
        raise RegionUnresolved("unbalanced split of the circle pre-image")
    return parts, len(loops)


def area_integral_check(f: AnalyticFunction, patch: DomainPatch, radii, tol: float = 5e-3,
                        involution: InvolutionMap | None = None) -> VerificationReport:
    """Integrals of |f'|^2 over the omega and omega' parts of the disc pre-image vs pi r^2."""
    radii = list(radii)
    measured, targets, rs = [], [], []
    extra = {"components": [], "pair_agreement": [], "green": [], "transported": []}
    for r in radii:
        parts, nloops = _region_parts(patch, r)
        sides = _sides(patch)
        per_side = {}
        for side in sides:
            per_side[side] = sum(polygon_dirichlet_integral(f, poly, _poly_center(poly))
                                 for _, poly in parts[side])
        extra["components"].append(nloops)
        vals = [per_side[side] for side in sides]
        if len(vals) == 2:
            extra["pair_agreement"].append(abs(vals[0] - vals[1]) / max(vals))
        extra["green"].append([sum(abs(green_area(f, np.concatenate([poly, poly[:1]])))
                                   for _, poly in parts[side]) for side in sides])
        if involution is not None:
            extra["transported"].append(_transported_area(f, patch, parts[1]))
        for val in vals:
            rs.append(r)
            measured.append(val)
            targets.append(math.pi * r * r)
    rep = _report("area", rs, measured, targets, tol, extra)
    return rep


def _sides(patch):
    return (1,) if patch.template == "simple" else (1, -1)


def _poly_center(poly):
    c = poly.mean()
    return c


def _transported_area(f, patch, pieces):
    """Integral over Delta_r of |f'(phi)|^2 |phi'|^2, i.e. the omega' area by change of variable."""
    total = 0.0
    for _, poly in pieces:
        a = np.full(poly.size, poly.mean())
        a, b, c = _refine(a, poly, np.roll(poly, -1), 1)
        area = 0.5 * (np.conj(b - a) * (c - a)).imag
        pts = (a[:, None] * _TRI_BARY[None, :, 0] + b[:, None] * _TRI_BARY[None, :, 1]
               + c[:, None] * _TRI_BARY[None, :, 2]).ravel()
        phi = apply_involution(patch, pts)
        rad = 0.25 * float(np.min(np.abs(np.diff(poly)))) + 1e-15
        dphi = involution_derivative(patch, pts, radius=rad, phi=phi)
        _, d = jet(f, phi)
        vals = (np.abs(d) ** 2 * np.abs(dphi) ** 2).reshape(a.size, -1)
        total += abs(float(np.sum(area * (vals @ _TRI_W))))
    return total


def length_integral_check(f: AnalyticFunction, patch: DomainPatch, radii, tol: float = 5e-3,
                          rays: int = 8) -> VerificationReport:
    """Integrals of |f'| along the omega / omega' arcs of |f| = r vs 2 pi r, and
    along the omega pre-images of ``rays`` ray segments [0, r e^{i theta}] vs r."""
    rs, measured, targets = [], [], []
    extra = {"rays": [], "pair_agreement": [], "image_polyline": []}
    for r in radii:
        parts, _ = _region_parts(patch, r)
        sides = _sides(patch)
        per_side = {}
        for side in sides:
            per_side[side] = sum(polyline_length_integral(f, arc) for arc, _ in parts[side])
        vals = [per_side[side] for side in sides]
        if len(vals) == 2:
            extra["pair_agreement"].append(abs(vals[0] - vals[1]) / max(vals))
        extra["image_polyline"].append(sum(
            float(np.abs(np.diff(np.asarray(f(arc)))).sum()) for arc, _ in parts[1]))
        for val in vals:
            rs.append(r)
            measured.append(val)
            targets.append(2 * math.pi * r)
        if rays:
            extra["rays"].append(_ray_fan(f, patch, r, rays))
    rep = _report("length", rs, measured, targets, tol, extra)
    if rays:
        fan = [v for row in extra["rays"] for v in row]
        fan_dev = [abs(v - r) / r for row, r in zip(extra["rays"], radii) for v in row]
        rep.extra["ray_max_deviation"] = max(fan_dev) if fan_dev else None
        rep.extra["ray_spread"] = (max(fan) - min(fan)) / max(fan) if fan else None
    return rep


def _ray_fan(f, patch: DomainPatch, r: float, rays: int):
    """Length of the omega pre-image of [0, r e^{i theta}] for ``rays`` angles."""
    out = []
    thetas = np.angle(patch.slit_direction) + 2 * np.pi * (np.arange(rays) + 0.5) / rays
    n = 400
    for th in thetas:
        w = r * np.exp(1j * th) * np.linspace(0, 1, n + 1) ** 2
        # follow the omega branch continuously from the outer end inwards
        if patch.template == "simple":
            z = patch.fixed_point
            om, ok = _newton_inverse(f, w[-1:], np.array([z + w[-1] / jet(f, z)[1]]))
            if not ok[0]:
                raise RegionUnresolved("ray pre-image lost at theta=%.3f" % th)
        else:
            om, _ = _omega_root(patch, w[-1:])
        path = np.empty(n + 1, dtype=complex)
        path[-1] = om[0]
        guess = om[0]
        for k in range(n - 1, -1, -1):
            s, ok = _newton_inverse(f, w[k:k + 1], np.array([guess]))
            if not ok[0]:
                raise RegionUnresolved("ray pre-image lost at theta=%.3f" % th)
            path[k] = s[0]
            guess = s[0] + (s[0] - path[k + 1]) if k < n - 1 else s[0]
        out.append(polyline_length_integral(f, path))
    return out


# --- local model -------------------------------------------------------------------

@dataclass
class LocalModelFit:
    center: complex
    radii: list
    h0: list
    residuals: list
    breakdown_radius: float | None
    order: int
    # root-mean-square of the samples h = f/(s - s0)^2 on each circle; grows
    # like 1/r when s0 is only a simple zero
    h_rms: list = field(default_factory=list)

    def to_dict(self):
        return {
            "center": [self.center.real, self.center.imag],
            "radii": self.radii,
            "h0_abs": [abs(h) for h in self.h0],
            "h_rms": self.h_rms,
            "residuals": self.residuals,
            "breakdown_radius": self.breakdown_radius,
            "order": self.order,
        }


def local_model_fit(f: AnalyticFunction, s0: complex, radii, order: int = MODEL_ORDER,
                    nodes: int = MODEL_NODES, level: float = BREAKDOWN_LEVEL) -> LocalModelFit:
    """Least-squares fit of h = f/(s - s0)^2 by a polynomial of degree ``order`` on
    each circle |s - s0| = r. On equispaced nodes the fit is the truncated
    discrete Fourier series, so the relative residual is the share of the
    sample norm carried by the other modes: exactly zero for a true double
    zero, about (d/r)^2 for two zeros at s0 +- d."""
    s0 = complex(s0)
    w = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    h0s, res, rms = [], [], []
    for r in radii:
        z = s0 + r * w
        h = np.asarray(f(z), dtype=complex) / (r * w) ** 2
        c = np.fft.fft(h) / nodes
        keep = np.zeros(nodes, dtype=bool)
        keep[:order + 1] = True
        total = np.sqrt(np.sum(np.abs(c) ** 2))
        resid = np.sqrt(np.sum(np.abs(c[~keep]) ** 2)) / total if total else 0.0
        h0s.append(complex(c[0]))
        res.append(float(resid))
        rms.append(float(total))
    bad = [r for r, e in zip(radii, res) if e > level]
    return LocalModelFit(s0, [float(r) for r in radii], h0s, res,
                         float(max(bad)) if bad else None, order, rms)


# --- Euler-product ratio -------------------------------------------------------------

@dataclass
class RatioDiagnostic:
    primes: np.ndarray
    log_abs: np.ndarray
    direct: np.ndarray

    @property
    def values(self):
        return np.exp(self.log_abs)

    def trend(self) -> dict:
        lp = np.log(self.primes.astype(float))
        slope = float(np.polyfit(lp, self.log_abs, 1)[0]) if self.primes.size > 1 else 0.0
        return {"max": float(np.max(self.values)), "last": float(self.values[-1]),
                "slope_log_vs_log_p": slope}

    def max_relative_gap(self) -> float:
        ok = np.isfinite(self.direct) & (self.direct > 0)
        if not ok.any():
            return 0.0
        return float(np.max(np.abs(self.values[ok] - self.direct[ok]) / self.direct[ok]))


def ratio_divergence_diagnostic(series: GeneralDirichletSeries, s: complex, s_image: complex,
                                n_max: int, tol: float = 1e-14) -> RatioDiagnostic:
    """|f_n(s_image) / f_n(s)| along the primes p <= n_max, f_n the partial
    Euler product prod (1 - a_p e^{-lambda_p s}).

    Each factor of the ratio is (e^{lambda_p s'} - a_p)/(e^{lambda_p s} - a_p)
    times e^{lambda_p (s - s')}; in log space this is
    log|1 - a_p e^{-lambda_p s'}| - log|1 - a_p e^{-lambda_p s}|.
    """
    s, s_image = complex(s), complex(s_image)
    if (s - s_image).real < 0:
        raise ValidationError("need Re(s - s_image) >= 0")
    if n_max < 2:
        raise ValidationError("n_max must be >= 2")
    p = primes_upto(n_max)
    a = series.coefficients(p)
    lam = series.exponents(p)
    xs = a * np.exp(-lam * s)
    xi = a * np.exp(-lam * s_image)
    for x, label, arg in ((xs, "s", s), (xi, "s_image", s_image)):
        gap = np.abs(1 - x)
        if np.any(gap < tol):
            k = int(np.argmin(gap))
            raise FactorVanishes("factor for p = %d vanishes at %s" % (p[k], label),
                                 prime=int(p[k]), point=arg)
    log_terms = np.log1p(-xi).real - np.log1p(-xs).real
    log_abs = np.cumsum(log_terms)
    # direct oracle: the product as written, exponentials and all
    with np.errstate(over="ignore", invalid="ignore"):
        factors = (np.exp(lam * s_image) - a) / (np.exp(lam * s) - a) * np.exp(lam * (s - s_image))
        direct = np.abs(np.cumprod(factors))
    return RatioDiagnostic(p, log_abs, direct)

"""Zero location by the argument principle.

Windings are computed by adaptive phase continuation along the contour;
zeros are isolated by recursive subdivision, polished with damped Newton
and certified by the winding number on a small circle.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    NumericalError,
    PhaseStepTooLarge,
    UnresolvedCluster,
    ValidationError,
    ZeroOnContour,
)
from .handles import AnalyticFunction, derivative, derivative_with_error

EDGE_NODES = 64
PHASE_STEP = math.pi / 2
MAX_NODES = 1 << 18
ZERO_TOL = 1e-11
JITTER_MAX = 1e-6
SPLIT_OFFSETS = (0.0173, -0.0291, 0.0419, -0.0557, 0.0683, -0.0811)
NEWTON_HALVINGS = 20
NEWTON_ITERS = 60
EDGE_SPACING = 0.25


@dataclass(frozen=True)
class SearchRectangle:
    sigma_min: float
    sigma_max: float
    t_min: float
    t_max: float

    def __post_init__(self):
        if not (self.sigma_min < self.sigma_max and self.t_min < self.t_max):
            raise ValidationError("degenerate rectangle %r" % (self,))

    @property
    def width(self):
        return self.sigma_max - self.sigma_min

    @property
    def height(self):
        return self.t_max - self.t_min

    @property
    def center(self) -> complex:
        return complex((self.sigma_min + self.sigma_max) / 2, (self.t_min + self.t_max) / 2)

    @property
    def diagonal(self):
        return math.hypot(self.width, self.height)

    def contains(self, s, pad: float = 0.0):
        s = np.asarray(s)
        return ((s.real >= self.sigma_min - pad) & (s.real <= self.sigma_max + pad)
                & (s.imag >= self.t_min - pad) & (s.imag <= self.t_max + pad))

    def expanded(self, d: float) -> "SearchRectangle":
        return SearchRectangle(self.sigma_min - d, self.sigma_max + d, self.t_min - d, self.t_max + d)

    def corners(self):
        return (complex(self.sigma_min, self.t_min), complex(self.sigma_max, self.t_min),
                complex(self.sigma_max, self.t_max), complex(self.sigma_min, self.t_max))

    def path(self, u):
        """Counterclockwise boundary parametrized by u in [0, 1], one quarter per edge."""
        u = np.asarray(u, dtype=float)
        c = np.array(self.corners() + self.corners()[:1])
        k = np.minimum((u * 4).astype(int), 3)
        frac = u * 4 - k
        return c[k] + frac * (c[k + 1] - c[k])

    def initial_u(self, edge_nodes: int) -> np.ndarray:
        """Start grid with node spacing tied to edge length and height.

        Dirichlet-type functions turn their phase at a rate of about
        log(|t| / 2 pi) per unit length, so long edges need proportionally
        more nodes for the phase-step test to be meaningful.
        """
        rate = max(1.0, math.log(1 + max(abs(self.t_min), abs(self.t_max)) / (2 * math.pi)))
        spacing = EDGE_SPACING / rate
        parts = []
        for k, length in enumerate((self.width, self.height, self.width, self.height)):
            n = max(edge_nodes, int(math.ceil(length / spacing)))
            parts.append((k + np.arange(n) / n) / 4)
        parts.append(np.array([1.0]))
        return np.concatenate(parts)

    @classmethod
    def parse(cls, text: str) -> "SearchRectangle":
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 4:
            raise ValidationError("rectangle needs sigma_min,sigma_max,t_min,t_max")
        return cls(*parts)


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float

    def path(self, u):
        return self.center + self.radius * np.exp(2j * np.pi * np.asarray(u, dtype=float))


@dataclass
class ZeroRecord:
    location: complex
    multiplicity: int
    winding_number: int
    residual: float
    certified_radius: float
    cluster: bool = False
    converged: bool = True

    def to_dict(self):
        d = asdict(self)
        d["location"] = [self.location.real, self.location.imag]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        re, im = d.pop("location")
        return cls(location=complex(re, im), **d)


@dataclass
class ContourSample:
    """Boundary samples kept from a winding computation."""

    points: np.ndarray
    values: np.ndarray
    winding: int

    @property
    def scale(self):
        return float(np.max(np.abs(self.values)))


@dataclass
class MultiplicityCertificate:
    multiplicity: int
    radius: float
    derivative_abs: float
    derivative_noise: float
    simple_certified: bool
    scale: float

    def __int__(self):
        return self.multiplicity


def sample_winding(f: AnalyticFunction, contour, edge_nodes: int = EDGE_NODES,
                   max_nodes: int = MAX_NODES) -> ContourSample:
    """Winding number of f along ``contour`` with the boundary samples used."""
    if hasattr(contour, "initial_u"):
        u = contour.initial_u(edge_nodes)
    else:
        u = np.linspace(0.0, 1.0, 4 * edge_nodes + 1)
    z = contour.path(u)
    z[-1] = z[0]
    vals = np.asarray(f(z), dtype=complex)
    vals[-1] = vals[0]
    scale = float(np.max(np.abs(vals)))
    for _ in range(200):
        if not np.all(np.isfinite(vals)):
            raise ZeroOnContour("non-finite value on contour (pole?)")
        mag = np.abs(vals)
        if mag.min() <= ZERO_TOL * scale:
            k = int(np.argmin(mag))
            raise ZeroOnContour("|f| = %.3g on contour" % mag[k], point=complex(z[k]))
        step = np.angle(vals[1:] / vals[:-1])
        chord = np.abs(np.diff(vals))
        bad = (np.abs(step) >= PHASE_STEP) | (chord >= np.minimum(mag[1:], mag[:-1]))
        if not bad.any():
            total = step.sum() / (2 * math.pi)
            w = int(round(total))
            if abs(total - w) > 1e-6:
                raise PhaseStepTooLarge("non-integer winding %.6f" % total)
            return ContourSample(z, vals, w)
        if u.size + bad.sum() > max_nodes:
            k = int(np.argmin(mag))
            if mag[k] < 1e-6 * scale:
                raise ZeroOnContour("refinement stalled near a zero", point=complex(z[k]))
            raise PhaseStepTooLarge("phase refinement exceeded %d nodes" % max_nodes)
        idx = np.nonzero(bad)[0]
        mid_u = (u[idx] + u[idx + 1]) / 2
        mid_z = contour.path(mid_u)
        mid_v = np.asarray(f(mid_z), dtype=complex)
        u = np.insert(u, idx + 1, mid_u)
        z = np.insert(z, idx + 1, mid_z)
        vals = np.insert(vals, idx + 1, mid_v)
        scale = max(scale, float(np.max(np.abs(mid_v))))
    raise PhaseStepTooLarge("phase refinement did not settle")


def winding_number(f: AnalyticFunction, contour, edge_nodes: int = EDGE_NODES) -> int:
    """(1/2 pi) x total change of arg f along the contour."""
    return sample_winding(f, contour, edge_nodes).winding


def certify_multiplicity(f: AnalyticFunction, s0: complex, radius: float) -> MultiplicityCertificate:
    """Winding on |s - s0| = radius plus a simple-zero certificate from |f'(s0)|."""
    sample = sample_winding(f, Circle(complex(s0), radius))
    drad = min(0.1, radius)
    value, err = derivative_with_error(f, complex(s0), 1, radius=_safe_radius(f, s0, drad))
    # rounding floor of the Cauchy rule, relative to the size of f nearby
    floor = 1e-13 * sample.scale / radius
    noise = max(float(err), floor)
    return MultiplicityCertificate(
        multiplicity=sample.winding,
        radius=radius,
        derivative_abs=abs(value),
        derivative_noise=noise,
        simple_certified=sample.winding == 1 and abs(value) > 100 * noise,
        scale=sample.scale,
    )


def _safe_radius(f, s, rho):
    for p in f.poles:
        rho = min(rho, 0.5 * abs(complex(s) - p))
    return rho


# --- subdivision search ----------------------------------------------------

def _split(box: SearchRectangle, offset: float):
    fx = fy = 0.5 + offset
    if box.width > 2 * box.height:
        xs, ys = [fx], []
    elif box.height > 2 * box.width:
        xs, ys = [], [fy]
    else:
        xs, ys = [fx], [fy]
    sx = [box.sigma_min] + [box.sigma_min + x * box.width for x in xs] + [box.sigma_max]
    ty = [box.t_min] + [box.t_min + y * box.height for y in ys] + [box.t_max]
    return [SearchRectangle(sx[i], sx[i + 1], ty[j], ty[j + 1])
            for j in range(len(ty) - 1) for i in range(len(sx) - 1)]


def _children(f, box, parent_w, edge_nodes):
    last = None
    for offset in SPLIT_OFFSETS:
        try:
            kids = _split(box, offset)
            ws = [winding_number(f, k, edge_nodes) for k in kids]
        except (ZeroOnContour, PhaseStepTooLarge) as exc:
            last = exc
            continue
        if sum(ws) == parent_w:
            return list(zip(kids, ws))
        try:
            ws = [winding_number(f, k, 4 * edge_nodes) for k in kids]
        except (ZeroOnContour, PhaseStepTooLarge) as exc:
            last = exc
            continue
        if sum(ws) == parent_w:
            return list(zip(kids, ws))
        last = PhaseStepTooLarge("winding not additive over subdivision of %r" % (box,))
    raise last


def newton_polish(f: AnalyticFunction, s: complex, multiplicity: int = 1,
                  max_iter: int = NEWTON_ITERS, max_step: float = math.inf):
    """Damped (modified) Newton. Returns (point, |f|, converged, history of |f|).

    Accepted steps strictly decrease |f|; steps are clipped to ``max_step``.
    """
    s = complex(s)
    fs = complex(f(s))
    history = [abs(fs)]
    converged = False
    for _ in range(max_iter):
        if fs == 0:
            converged = True
            break
        d = complex(derivative(f, s, 1, radius=_safe_radius(f, s, 0.1)))
        if d == 0:
            break
        step = -multiplicity * fs / d
        if abs(step) > max_step:
            step *= max_step / abs(step)
        lam = 1.0
        for _ in range(NEWTON_HALVINGS + 1):
            cand = s + lam * step
            try:
                fc = complex(f(cand))
            except NumericalError:
                fc = complex(math.inf)
            if abs(fc) < abs(fs):
                break
            lam /= 2
        else:
            # no decrease possible: we sit at the rounding floor
            converged = abs(step) < 1e-6 * (1 + abs(s))
            break
        s, fs = cand, fc
        history.append(abs(fs))
        if abs(lam * step) <= 4e-16 * (1 + abs(s)):
            converged = True
            break
    return s, abs(fs), converged, history


def _certify_at(f, s, r0, expect):
    r = r0
    while r > 1e-9:
        try:
            sample = sample_winding(f, Circle(s, r))
        except ZeroOnContour:
            r *= 0.61
            continue
        if sample.winding == expect:
            return r, sample
        r *= 0.5
    return None, None


def _refine_simple(f, box: SearchRectangle):
    s, res, ok, _ = newton_polish(f, box.center, max_step=0.5 * box.diagonal)
    # the box holds exactly one zero, so Newton must land inside it; a point
    # outside (even just outside) is a neighbour, and the box gets split
    pad = 1e-9 * box.diagonal
    if not ok or not box.contains(s, pad):
        return None
    r, sample = _certify_at(f, s, 0.5 * min(box.width, box.height), 1)
    if r is None:
        return None
    return ZeroRecord(s, 1, sample.winding, res, r)


def _cluster_record(f, box: SearchRectangle, w: int):
    s, res, ok, _ = newton_polish(f, box.center, multiplicity=w, max_iter=20,
                                  max_step=0.5 * box.diagonal)
    if not box.contains(s):
        s, res = box.center, abs(complex(f(box.center)))
    return ZeroRecord(s, w, w, res, 0.5 * box.diagonal, cluster=True, converged=False)


def _jittered_region(f, region: SearchRectangle, seed: int):
    rng = np.random.default_rng(seed)
    try:
        return region, winding_number(f, region)
    except (ZeroOnContour, PhaseStepTooLarge) as exc:
        last = exc
    for _ in range(8):
        d = rng.uniform(0.1, 1.0, size=4) * JITTER_MAX
        box = SearchRectangle(region.sigma_min - d[0], region.sigma_max + d[1],
                              region.t_min - d[2], region.t_max + d[3])
        try:
            return box, winding_number(f, box)
        except (ZeroOnContour, PhaseStepTooLarge) as exc:
            last = exc
    raise last


def _sort_key(rec: ZeroRecord):
    return (round(rec.location.imag, 9), round(rec.location.real, 9))


def locate_zeros(f: AnalyticFunction, region: SearchRectangle, max_depth: int = 16,
                 seed: int = 0, raise_on_cluster: bool = False,
                 edge_nodes: int = EDGE_NODES) -> list[ZeroRecord]:
    """All zeros in ``region`` with multiplicity; sum of multiplicities = region winding.

    Boxes still holding winding > 1 at ``max_depth`` come back as records with
    ``cluster=True`` (and raise UnresolvedCluster if ``raise_on_cluster``).
    """
    region, total = _jittered_region(f, region, seed)
    if total < 0:
        raise NumericalError("negative winding %d: pole inside region" % total)
    found: list[ZeroRecord] = []
    stack = [(region, total, 0)]
    while stack:
        box, w, depth = stack.pop()
        if w == 0:
            continue
        if w == 1:
            rec = _refine_simple(f, box)
            if rec is not None:
                found.append(rec)
                continue
            if depth >= max_depth:
                found.append(ZeroRecord(box.center, 1, 1, abs(complex(f(box.center))),
                                        0.5 * box.diagonal, converged=False))
                continue
        elif depth >= max_depth:
            found.append(_cluster_record(f, box, w))
            continue
        for kid, kw in _children(f, box, w, edge_nodes):
            if kw:
                stack.append((kid, kw, depth + 1))
    found.sort(key=_sort_key)
    clusters = [r for r in found if r.cluster]
    if clusters and raise_on_cluster:
        raise UnresolvedCluster("%d unresolved cluster(s)" % len(clusters), records=clusters)
    return found


def region_winding(f: AnalyticFunction, region: SearchRectangle, seed: int = 0) -> int:
    return _jittered_region(f, region, seed)[1]

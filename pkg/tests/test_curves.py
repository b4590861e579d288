import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeromult.curves import (
    GAMMA_J,
    GAMMA_PRIME,
    GAMMA_ZERO,
    STEP_GROW,
    UNCLASSIFIED,
    CirclePreimage,
    CurveComponent,
    RayPreimage,
    RealAxisPreimage,
    check_boundaries,
    classify_component,
    constraint_from_dict,
    intertwining_check,
    partition_strips,
    seed_points,
    trace_components,
    trace_level_curve,
)
from zeromult.errors import (
    DegenerateSeed,
    IncompleteBoundary,
    InsufficientArc,
    TangentUndefined,
    ValidationError,
)
from zeromult.handles import DerivativeHandle, RiemannZeta, SyntheticTest, double_zero, zero_pair
from zeromult.zeros import SearchRectangle, locate_zeros, region_winding

ZETA_WINDOW = SearchRectangle(-1, 4, 0.1, 30)
SQ = SyntheticTest(lambda s: s ** 2, "s2")


def trace_residual_ok(f, comp):
    v = np.asarray(f(comp.points))
    return np.max(np.abs(v.imag)) < 1e-8 * (1 + np.max(np.abs(v)))


def hausdorff(a, b):
    d = np.abs(a[:, None] - b[None, :])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def flood_fill_components(f, window, density):
    """Independent oracle: connected sign-change cells of Im f on a dense grid."""
    from scipy import ndimage
    xs = np.linspace(window.sigma_min, window.sigma_max, density)
    ys = np.linspace(window.t_min, window.t_max, density * 6)
    z = xs[None, :] + 1j * ys[:, None]
    im = np.asarray(f(z.ravel())).imag.reshape(z.shape)
    sign = im > 0
    cell = np.zeros((z.shape[0] - 1, z.shape[1] - 1), dtype=bool)
    cell |= sign[:-1, :-1] != sign[1:, :-1]
    cell |= sign[:-1, :-1] != sign[:-1, 1:]
    cell |= sign[1:, 1:] != sign[1:, :-1]
    _, n = ndimage.label(cell, structure=np.ones((3, 3)))
    return n


def test_seed_examples():
    seeds = seed_points(SQ, SearchRectangle(-1, 1, -1, 1), 32)
    comps = [trace_level_curve(SQ, p, RealAxisPreimage(), SearchRectangle(-1, 1, -1, 1))
             for p in seeds]
    on_real = any(np.max(np.abs(c.points.imag)) < 1e-9 for c in comps)
    on_imag = any(np.max(np.abs(c.points.real)) < 1e-9 for c in comps)
    assert on_real and on_imag
    no_curve = SyntheticTest(lambda s: s + 5j)
    assert seed_points(no_curve, SearchRectangle(-1, 1, -1, 1), 16) == []


def test_zeta_seed_count_vs_flood_fill():
    seeds = seed_points(RiemannZeta(), ZETA_WINDOW, 64)
    assert len(seeds) >= 4
    # the dense scan sees each component at least once; touching components
    # (through zeros) merge in the flood fill, so it bounds from below
    assert len(seeds) >= flood_fill_components(RiemannZeta(), ZETA_WINDOW, 512) - 1


def test_trace_square_real_axis():
    w = SearchRectangle(-1, 1, -1, 1)
    c = trace_level_curve(SQ, 0.5, RealAxisPreimage(), w)
    assert np.max(np.abs(c.points.imag)) < 1e-10
    assert c.points.real.min() <= -1 + 1e-9 or c.points.real.max() >= 1 - 1e-9
    assert trace_residual_ok(SQ, c)


def test_trace_zeta_real_segment():
    w = SearchRectangle(-0.9, 0.9, -0.5, 0.5)
    c = trace_level_curve(RiemannZeta(), 0.3, RealAxisPreimage(), w)
    assert np.max(np.abs(c.points.imag)) < 1e-9
    assert abs(c.points.real.min() + 0.9) < 1e-9 and abs(c.points.real.max() - 0.9) < 1e-9
    assert classify_component(RiemannZeta(), c) == GAMMA_ZERO


def test_trace_residual_and_retrace_stability():
    f = RiemannZeta()
    comps = trace_components(f, ZETA_WINDOW)
    assert len(comps) >= 4
    for c in comps:
        assert trace_residual_ok(f, c)
        steps = np.abs(np.diff(c.points))
        assert steps.max() <= STEP_GROW * c.step * (1 + 1e-3)
    c = max(comps, key=lambda c: c.points.size)
    again = trace_level_curve(f, c.points[c.points.size // 3], RealAxisPreimage(), ZETA_WINDOW)
    assert hausdorff(c.points, again.points) < 2 * c.step


def test_components_disjoint_away_from_zeros():
    f = RiemannZeta()
    comps = trace_components(f, ZETA_WINDOW)
    zeros = [z.location for z in locate_zeros(f, ZETA_WINDOW)]
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            a, b = comps[i].points, comps[j].points
            d = np.abs(a[:, None] - b[None, :])
            close = np.argwhere(d < comps[i].step)
            for k, _ in close:
                assert min(abs(a[k] - z) for z in zeros) < 10 * comps[i].step


def test_dh_pair_components(dh, dh_pair):
    w = SearchRectangle(0.3, 0.7, 520.7, 521.2)
    seeds = [z.location + 0.01j for z in dh_pair]
    comps = [trace_level_curve(dh, s, RealAxisPreimage(), w) for s in seeds]
    a, b = comps
    assert hausdorff(a.points, b.points) > 1e-3

    def dist(c, z):
        return np.min(np.abs(c.points - z))

    for c in comps:
        hits = [dist(c, z.location) < 2 * c.step for z in dh_pair]
        assert sum(hits) == 1


def test_classification_examples():
    f = RiemannZeta()
    w = SearchRectangle(1.5, 6, -0.5, 0.5)
    c = trace_level_curve(f, 3.0, RealAxisPreimage(), w)
    assert classify_component(f, c) == GAMMA_PRIME
    assert np.all(np.asarray(f(c.points)).real > 1)
    g = double_zero(0.3 + 0.2j)
    # a curve through the double zero: Im f = 0 along the ray of angle 0 from s0
    w = SearchRectangle(0.0, 0.6, -0.1, 0.5)
    c = trace_level_curve(g, 0.45 + 0.2j, RealAxisPreimage(), w)
    assert classify_component(g, c) in (GAMMA_J, UNCLASSIFIED)
    short = CurveComponent(np.array([0j, 1e-3]), np.array([0j, 0j]), RealAxisPreimage())
    with pytest.raises(InsufficientArc):
        classify_component(f, short)


def test_gamma_zero_is_monotone():
    f = RiemannZeta()
    for c in trace_components(f, ZETA_WINDOW):
        if classify_component(f, c) == GAMMA_ZERO:
            v = np.asarray(f(c.points)).real
            assert np.all(v < 1)
            d = np.diff(v)
            assert np.all(d > 0) or np.all(d < 0)


def test_strips_zeta_consistency():
    f = RiemannZeta()
    w = SearchRectangle(-2, 8, 5, 30)
    strips = partition_strips(f, w)
    total = sum(s.j_count for s in strips if s.complete)
    assert total == region_winding(f, SearchRectangle(0, 1, 5, 30)) == 3
    for s in strips:
        assert s.j_count == sum(z.multiplicity for z in s.contained_zeros)
        for b in (s.lower_boundary, s.upper_boundary):
            if b is not None:
                assert np.all(np.asarray(f(b.points)).real >= 1 - 1e-8)
    bounds = [s.lower_boundary for s in strips if s.lower_boundary is not None]
    for i in range(len(bounds) - 1):
        d = np.abs(bounds[i].points[:, None] - bounds[i + 1].points[None, :])
        assert d.min() > 0


def test_strips_exponential():
    f = SyntheticTest(np.exp, "exp", slit_base=0.0)
    w = SearchRectangle(-1, 1, 0.5, 13.5)
    strips = partition_strips(f, w, zeros=[])
    complete = [s for s in strips if s.complete]
    assert len(complete) == 1
    s = complete[0]
    lo, hi = s.lower_boundary.points.imag.mean(), s.upper_boundary.points.imag.mean()
    assert abs(hi - lo - 2 * np.pi) < 1e-8
    zeros_like = [c for c in trace_components(f, w)
                  if lo < c.points.imag.mean() < hi and classify_component(f, c) == GAMMA_ZERO]
    assert len(zeros_like) == 1
    assert abs(zeros_like[0].points.imag.mean() - 3 * np.pi) < 1e-8


def test_strips_small_window():
    f = SyntheticTest(np.exp, "exp", slit_base=0.0)
    strips = partition_strips(f, SearchRectangle(-1, 1, 0.5, 2.5), zeros=[])
    assert len(strips) == 1 and not strips[0].complete


def test_incomplete_boundary_flagged():
    c = CurveComponent(np.array([0.0 + 0j, 0.5 + 1j]), np.array([2 + 0j, 3 + 0j]),
                       RealAxisPreimage(), ("window:left", "window:top"), GAMMA_PRIME)
    with pytest.raises(IncompleteBoundary):
        check_boundaries([c], SearchRectangle(0, 1, 0, 1))


def test_circle_preimage_winding():
    simple = zero_pair(0.2, 5.0)
    c = trace_level_curve(simple, 0.2 + 0.05 * 4.8, CirclePreimage(0.05 * 4.8 * 0.999),
                          SearchRectangle(-1, 1, -1, 1))
    assert c.closed
    v = np.asarray(simple(c.points))
    assert round(np.sum(np.angle(v[1:] / v[:-1])) / (2 * np.pi)) in (1, -1)
    g = double_zero(0.0)
    c = trace_level_curve(g, 0.1, CirclePreimage(0.01), SearchRectangle(-1, 1, -1, 1))
    v = np.asarray(g(np.append(c.points, c.points[0])))
    assert abs(round(np.sum(np.angle(v[1:] / v[:-1])) / (2 * np.pi))) == 2


def test_ray_preimage():
    c = trace_level_curve(SQ, 0.3 + 0.3j, RayPreimage(np.pi / 2), SearchRectangle(-1, 1, -1, 1))
    v = np.asarray(SQ(c.points))
    assert np.max(np.abs(v.real)) < 1e-9 * (1 + np.abs(v).max())
    assert np.all(v.imag > -1e-12)


def test_degenerate_seed():
    # s = 0 is a critical point of s^2 + 1 that is not a zero
    f = SyntheticTest(lambda s: s ** 2 + 1)
    with pytest.raises(DegenerateSeed):
        trace_level_curve(f, 0j, RealAxisPreimage(), SearchRectangle(-0.5, 0.5, -0.5, 0.5))


def test_constraint_roundtrip():
    for c in (RealAxisPreimage(), CirclePreimage(0.5), RayPreimage(1.25)):
        assert constraint_from_dict(c.to_dict()) == c
    with pytest.raises(ValidationError):
        CirclePreimage(-1)


def test_intertwining_examples():
    rep = intertwining_check(SyntheticTest(lambda s: s, "id"), SearchRectangle(-1, 1, -1, 1))
    assert rep.pairs == [] and rep.upsilon_count == 0
    with pytest.raises(TangentUndefined):
        intertwining_check(double_zero(0.3 + 0.2j), SearchRectangle(-0.5, 1, -0.6, 1))


def test_intertwining_found_tangents_horizontal():
    rep = intertwining_check(RiemannZeta(), SearchRectangle(-1, 3, 5, 30))
    assert rep.upsilon_count >= 1 and rep.pairs
    assert rep.all_horizontal
    d = rep.to_dict()
    assert d["tolerance_deg"] == 2.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_traced_points_satisfy_constraint(x, y):
    f = SyntheticTest(lambda s: np.exp(s) * (s - 0.1))
    w = SearchRectangle(-1, 1, -1, 1)
    seed = complex(x, y)
    try:
        c = trace_level_curve(f, seed, RealAxisPreimage(), w)
    except DegenerateSeed:
        return
    assert trace_residual_ok(f, c)



WIDE = SearchRectangle(-15, 10, 5, 30)


def test_wide_window_no_false_critical_end():
    # |zeta'| falls by ~10 orders from sigma = -15 to sigma = 10 along this
    # curve; that decay is not a critical point, so the trace must run through
    c = trace_level_curve(RiemannZeta(), -14.9 + 24.307j, RealAxisPreimage(), WIDE)
    assert c.ends == ("window:left", "window:right")


def test_wide_window_tangent_scale_is_local():
    f = RiemannZeta()
    p = 0.9388832664011336 + 17.842152529271008j
    g = trace_level_curve(f, p, RealAxisPreimage(), WIDE)
    u = trace_level_curve(DerivativeHandle(f, 1), p, RealAxisPreimage(), WIDE)
    assert np.max(np.abs(g.values)) > 1e8
    rep = intertwining_check(f, WIDE, gammas=[g], upsilons=[u])
    assert rep.per_upsilon == [1] and rep.all_horizontal

"""Acceptance suite: one printed PASS/FAIL line per criterion."""

import math

import mpmath as mp
import numpy as np
import pytest

from zeromult import special
from zeromult.conformal import (
    apply_involution,
    area_integral_check,
    build_domain_patch,
    build_involution,
    check_chain_rule,
    involution_derivative,
    length_integral_check,
    local_model_fit,
    ratio_divergence_diagnostic,
)
from zeromult.curves import intertwining_check, partition_strips
from zeromult.dirichlet import GeneralDirichletSeries, euler_partial_product, primes_upto
from zeromult.handles import DavenportHeilbronn, RiemannZeta, double_zero
from zeromult.zeros import SearchRectangle, locate_zeros, winding_number

pytestmark = pytest.mark.acceptance

SYNTHETIC_S0 = (0.3 + 0.2j, -0.5 + 1j, 2 + 5j)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print("\ncriterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail))
        assert ok, detail
    return emit


def test_criterion_01_dh_pair(report, dh):
    found = locate_zeros(dh, SearchRectangle(0.4, 0.6, 520.5, 521.3))
    re = sorted(z.location.real for z in found)
    ok = (len(found) == 2
          and abs(re[0] - 0.48409) <= 2e-4 and abs(re[1] - 0.51591) <= 2e-4
          and all(abs(z.location.imag - 520.9438) <= 2e-3 for z in found)
          and all(z.multiplicity == 1 and not z.cluster for z in found))
    report(1, ok, "zeros %s" % ["%.6f%+.6fi" % (z.location.real, z.location.imag) for z in found])


def _sweep(f, rect):
    found = locate_zeros(f, rect)
    locs = [z.location for z in found]
    distinct = all(abs(a - b) > 1e-6 for i, a in enumerate(locs) for b in locs[i + 1:])
    total = sum(z.multiplicity for z in found)
    return found, distinct, total == winding_number(f, rect)


def test_criterion_02_simplicity_sweep(report):
    zf, zd, zc = _sweep(RiemannZeta(), SearchRectangle(-1, 2, 0.1, 100))
    df, dd, dc = _sweep(DavenportHeilbronn(), SearchRectangle(-1, 2, 0.1, 200))
    ok = (len(zf) == 29 and zd and zc and dd and dc
          and all(z.multiplicity == 1 and not z.cluster for z in zf + df))
    report(2, ok, "zeta: %d zeros, DH: %d zeros, all simple, no clusters" % (len(zf), len(df)))


def test_criterion_03_integral_identities(report):
    radii = [1e-3, 1e-2, 1e-1]
    worst = {"area": 0.0, "length": 0.0, "pair": 0.0}
    for s0 in SYNTHETIC_S0:
        f = double_zero(s0)
        patch = build_domain_patch(f, s0, 1.0)
        area = area_integral_check(f, patch, radii)
        length = length_integral_check(f, patch, radii, rays=0)
        worst["area"] = max(worst["area"], max(area.deviations))
        worst["length"] = max(worst["length"], max(length.deviations))
        worst["pair"] = max(worst["pair"], *area.extra["pair_agreement"],
                            *length.extra["pair_agreement"])
    ok = worst["area"] <= 5e-3 and worst["length"] <= 5e-3 and worst["pair"] <= 2e-3
    report(3, ok, "max area dev %.2e, length dev %.2e, pair gap %.2e"
           % (worst["area"], worst["length"], worst["pair"]))


def test_criterion_04_involution(report, dh, dh_patch, dh_involution):
    inv_err, fp_err, chain = 0.0, 0.0, 0.0
    for s0 in SYNTHETIC_S0:
        f = double_zero(s0)
        patch = build_domain_patch(f, s0, 0.5)
        inv = build_involution(f, patch, 16)
        inv_err = max(inv_err, inv.involution_error() / patch.extent)
        d = involution_derivative(patch, patch.fixed_point, radius=1e-3)[0]
        fp_err = max(fp_err, abs(d * d - 1))
        chain = max(chain, check_chain_rule(f, inv).measured[0])
    sep = dh_patch.separation
    far = dh_involution.nodes[np.abs(dh_involution.nodes - dh_patch.fixed_point) >= 10 * sep]
    dh_chain = check_chain_rule(dh, dh_involution, far).measured[0]
    ok = inv_err < 1e-8 and fp_err < 1e-8 and chain < 1e-8 and far.size > 0 and dh_chain < 1e-4
    report(4, ok, "phi(phi)-s %.1e*extent, |phi'^2-1| %.1e, chain %.1e, DH chain %.1e (%d nodes)"
           % (inv_err, fp_err, chain, dh_chain, far.size))


def test_criterion_05_local_model(report, dh_pair):
    synth = max(max(local_model_fit(double_zero(s0), s0, [1e-3, 1e-2, 1e-1, 0.5]).residuals)
                for s0 in SYNTHETIC_S0)
    z1, z2 = (z.location for z in dh_pair)
    sep = abs(z1 - z2)
    factors = np.array([0.25, 0.5, 1, 2, 5, 10, 20, 30])
    fit = local_model_fit(DavenportHeilbronn(), (z1 + z2) / 2, sep * factors)
    res = np.array(fit.residuals)
    below = res[factors < 1].min()
    # quadratic regime: well past the merge scale (5 separations)
    above = res[factors >= 20].max()
    ratio = below / above
    ok = synth < 1e-8 and ratio >= 1e3
    report(5, ok, "synthetic residual %.1e; DH residual %.2e below sep vs %.2e at >= 20 sep "
           "(x%.0f)" % (synth, below, above, ratio))


def test_criterion_06_euler_product(report):
    series = GeneralDirichletSeries.classical()
    z2 = math.pi ** 2 / 6
    errs = [abs(1 / euler_partial_product(series, 2.0, n) - z2) for n in (10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5)]
    ok = errs[-1] < 1e-4 and all(b < a for a, b in zip(errs, errs[1:]))
    report(6, ok, "errors %s" % ", ".join("%.2e" % e for e in errs))


def _mp_log_ratio(s, si, primes):
    with mp.workdps(30):
        acc, out = mp.mpf(0), []
        for p in primes:
            p = mp.mpf(int(p))
            acc += mp.log(abs((mp.power(p, si) - 1) / (mp.power(p, s) - 1) * mp.power(p, s - si)))
            out.append(acc)
    return out


def test_criterion_07_ratio(report):
    series = GeneralDirichletSeries.classical()
    cases = [(2.1, 1.9, 10_000), (1.5, 1.2, 10_000), (0.52 + 14.13j, 0.48 + 14.13j, 10_000),
             (3 + 1j, 2 + 1j, 1000), (0.8 + 30j, 0.2 + 30j, 5000)]
    worst_direct, worst_oracle = 0.0, 0.0
    for s, si, n in cases:
        d = ratio_divergence_diagnostic(series, s, si, n)
        worst_direct = max(worst_direct, d.max_relative_gap())
        oracle = _mp_log_ratio(mp.mpmathify(s), mp.mpmathify(si), primes_upto(n))
        rel = max(float(abs(mp.exp(mp.mpf(float(a)) - b) - 1)) for a, b in zip(d.log_abs, oracle))
        worst_oracle = max(worst_oracle, rel)
    ok = worst_direct < 1e-10 and worst_oracle < 1e-10
    report(7, ok, "log-space vs direct product %.1e, vs 30-digit product %.1e"
           % (worst_direct, worst_oracle))


def test_criterion_08_intertwining(report):
    rep = intertwining_check(RiemannZeta(), SearchRectangle(-1, 3, 5, 30))
    ok = rep.upsilon_count > 0 and rep.all_unique and rep.all_horizontal
    detail = "%d Upsilon curves, Gamma hits per curve %s, kinds %s, max angle %.2f deg" % (
        rep.upsilon_count, rep.per_upsilon, rep.upsilon_kinds,
        max((p["angle_deg"] for p in rep.pairs), default=0.0))
    report(8, ok, detail)


def test_criterion_09_functional_equation(report):
    grid = special.certification_grid()
    z = float(np.max(special.zeta_fe_residual(grid)))
    d = float(np.max(special.dh_fe_residual(grid)))
    report(9, grid.size == 20 and z < 1e-8 and d < 1e-8,
           "max residual zeta %.1e, DH %.1e on %d points" % (z, d, grid.size))


def test_criterion_10_strips(report):
    f = RiemannZeta()
    window = SearchRectangle(-2, 8, 5, 30)
    strips = partition_strips(f, window)
    total = sum(s.j_count for s in strips if s.complete)
    count = winding_number(f, window)
    report(10, total == count and count > 0,
           "sum of j over %d complete strips = %d, argument principle count = %d"
           % (sum(s.complete for s in strips), total, count))

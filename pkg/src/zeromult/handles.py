"""Analytic function handles and Cauchy-integral derivatives.

A handle is a vectorized callable ``f(s)`` plus the metadata the rest of
the package needs: known poles and whether ``f(conj s) = conj f(s)``.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import special
from .dirichlet import GeneralDirichletSeries, eval_series
from .errors import PoleInDisc, ValidationError
from .special import DEFAULT_PRECISION, EvalResult

DERIVATIVE_RADIUS = 0.1
DERIVATIVE_NODES = 32


class AnalyticFunction:
    kind = "abstract"
    poles: tuple = ()
    real_on_real = False
    # limit of f as Re s -> +inf; the strip slit starts here
    slit_base = 1.0

    def __init__(self, precision: float = DEFAULT_PRECISION):
        self.precision = precision

    def evaluate(self, s) -> EvalResult:
        raise NotImplementedError

    # optional closed-form (f, f') for a flat array; None means use the ring
    analytic_jet = None

    def __call__(self, s):
        return self.evaluate(s).value

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, "precision": self.precision, **self.params()}

    def __repr__(self):
        extra = ", ".join("%s=%r" % kv for kv in self.params().items())
        return "%s(%s)" % (type(self).__name__, extra)


class RiemannZeta(AnalyticFunction):
    kind = "RiemannZeta"
    poles = (1 + 0j,)
    real_on_real = True

    def evaluate(self, s):
        return special.riemann_zeta(s, self.precision)

    def analytic_jet(self, s):
        return special.hurwitz_jet(s, 1.0, self.precision)


class HurwitzZeta(AnalyticFunction):
    kind = "HurwitzZeta"
    poles = (1 + 0j,)
    real_on_real = True

    def __init__(self, shift: float, precision: float = DEFAULT_PRECISION):
        if not 0 < shift <= 1:
            raise ValidationError("Hurwitz shift must lie in (0, 1]")
        super().__init__(precision)
        self.shift = float(shift)

    def params(self):
        return {"shift": self.shift}

    def evaluate(self, s):
        return special.hurwitz_zeta(s, self.shift, self.precision)

    def analytic_jet(self, s):
        return special.hurwitz_jet(s, self.shift, self.precision)


class DirichletL(AnalyticFunction):
    kind = "DirichletL"

    def __init__(self, modulus: int, table, precision: float = DEFAULT_PRECISION):
        table = tuple(complex(c) for c in table)
        if len(table) != modulus:
            raise ValidationError("character table must have %d entries" % modulus)
        for r in range(modulus):
            if math.gcd(r, modulus) > 1 and table[r] != 0:
                raise ValidationError("character must vanish on non-units (residue %d)" % r)
            for r2 in range(modulus):
                if abs(table[r * r2 % modulus] - table[r] * table[r2]) > 1e-12:
                    raise ValidationError("table is not completely multiplicative mod %d" % modulus)
        super().__init__(precision)
        self.modulus = modulus
        self.table = table
        self.poles = (1 + 0j,) if abs(sum(table)) > 1e-12 else ()
        self.real_on_real = all(c.imag == 0 for c in table)

    def params(self):
        return {"modulus": self.modulus, "table": [[c.real, c.imag] for c in self.table]}

    def evaluate(self, s):
        return special.dirichlet_l(s, self.table, self.precision)

    def analytic_jet(self, s):
        return special.periodic_jet(s, self.table, self.precision)


class DavenportHeilbronn(AnalyticFunction):
    kind = "DavenportHeilbronn"
    real_on_real = True

    def evaluate(self, s):
        return special.davenport_heilbronn(s, self.precision)

    def analytic_jet(self, s):
        return special.periodic_jet(s, special.DH_COEFFS, self.precision)


class TruncatedGeneralSeries(AnalyticFunction):
    kind = "TruncatedGeneralSeries"

    def __init__(self, series: GeneralDirichletSeries, cutoff: int):
        super().__init__(precision=float("inf"))
        self.series = series
        self.cutoff = int(cutoff)

    def params(self):
        return {"series": self.series.name, "cutoff": self.cutoff}

    def evaluate(self, s):
        return eval_series(self.series, s, self.cutoff)


class SyntheticTest(AnalyticFunction):
    """Closed-form test function; ``rule`` must accept numpy arrays."""

    kind = "SyntheticTest"

    def __init__(self, rule: Callable, name: str = "synthetic", poles=(), real_on_real=False,
                 slit_base: float = 1.0):
        super().__init__(precision=0.0)
        self.rule = rule
        self.name = name
        self.slit_base = slit_base
        self.poles = tuple(complex(p) for p in poles)
        self.real_on_real = real_on_real

    def params(self):
        return {"name": self.name}

    def evaluate(self, s):
        arr = np.asarray(s, dtype=complex)
        value = np.asarray(self.rule(arr), dtype=complex)
        value = np.broadcast_to(value, arr.shape).copy()
        bound = 4 * np.finfo(float).eps * np.abs(value)
        if arr.ndim == 0:
            return EvalResult(complex(value), float(bound), 1)
        return EvalResult(value, bound, 1)


def double_zero(s0: complex) -> SyntheticTest:
    """(s - s0)^2 e^s: an exact double zero at s0."""
    s0 = complex(s0)
    return SyntheticTest(lambda s: (s - s0) ** 2 * np.exp(s), "(s-%r)^2 e^s" % s0,
                         real_on_real=s0.imag == 0)


def zero_pair(z1: complex, z2: complex) -> SyntheticTest:
    """(s - z1)(s - z2) e^s: two simple zeros."""
    z1, z2 = complex(z1), complex(z2)
    return SyntheticTest(lambda s: (s - z1) * (s - z2) * np.exp(s), "pair(%r, %r)" % (z1, z2))


# --- derivatives ------------------------------------------------------------

def _pick_radius(f: AnalyticFunction, s: np.ndarray, radius):
    if f.poles and s.size:
        dist = min(float(np.min(np.abs(s - p))) for p in f.poles)
    else:
        dist = math.inf
    if radius is not None:
        if dist <= radius:
            raise PoleInDisc("pole within %.3g of the expansion point" % dist, radius=radius)
        return float(radius)
    if dist == 0:
        raise PoleInDisc("expansion point is a pole")
    return min(DERIVATIVE_RADIUS, 0.5 * dist)


def taylor_coefficients(f: AnalyticFunction, s, orders, radius=None,
                        nodes: int = DERIVATIVE_NODES) -> dict:
    """Taylor coefficients c_k of f around each point of ``s`` (trapezoidal Cauchy rule)."""
    arr = np.asarray(s, dtype=complex)
    flat = arr.ravel()
    rho = _pick_radius(f, flat, radius)
    w = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    vals = np.asarray(f(np.add.outer(flat, rho * w).ravel())).reshape(flat.size, nodes)
    out = {}
    for k in orders:
        c = (vals * w ** (-k)).mean(axis=1) / rho ** k
        out[k] = c.reshape(arr.shape) if arr.ndim else complex(c[0])
    return out


def derivative_with_error(f: AnalyticFunction, s, order: int = 1, radius=None,
                          nodes: int = DERIVATIVE_NODES):
    """(f^(order)(s), estimated error) from radius rho and rho/2 runs."""
    if isinstance(f, DerivativeHandle):
        return derivative_with_error(f.base, s, order + f.order, radius, nodes)
    arr = np.asarray(s, dtype=complex)
    rho = _pick_radius(f, arr.ravel(), radius)
    full = taylor_coefficients(f, arr, [order], rho, nodes)[order]
    half = taylor_coefficients(f, arr, [order], rho / 2, nodes)[order]
    fact = math.factorial(order)
    return fact * full, fact * np.abs(full - half)


def derivative(f: AnalyticFunction, s, order: int = 1, radius=None,
               nodes: int = DERIVATIVE_NODES, check: bool = False):
    """f^(order)(s) by Cauchy quadrature on a circle of radius ``radius``.

    With ``check=True`` the value is cross-checked against a half-radius run
    and ValueError is raised if the two disagree badly.
    """
    if order < 1:
        raise ValidationError("order must be >= 1")
    if isinstance(f, DerivativeHandle):
        return derivative(f.base, s, order + f.order, radius, nodes, check)
    if check:
        value, err = derivative_with_error(f, s, order, radius, nodes)
        scale = np.maximum(1.0, np.abs(value))
        if np.any(err > 1e-6 * scale):
            raise ValueError("Cauchy derivative unstable: radius and half-radius disagree by %.3g"
                             % float(np.max(err)))
        return value
    c = taylor_coefficients(f, s, [order], radius, nodes)[order]
    return math.factorial(order) * c


class DerivativeHandle(AnalyticFunction):
    """f^(order) as a handle of its own (used for the f' pre-image curves)."""

    kind = "Derivative"

    def __init__(self, base: AnalyticFunction, order: int = 1):
        super().__init__(base.precision)
        self.base = base
        self.order = order
        self.poles = base.poles
        self.real_on_real = base.real_on_real
        self.slit_base = 0.0

    def params(self):
        return {"base": self.base.describe(), "order": self.order}

    def evaluate(self, s):
        value = derivative(self.base, s, self.order)
        arr = np.asarray(value)
        bound = np.full(arr.shape, np.nan) if arr.ndim else float("nan")
        return EvalResult(value, bound, DERIVATIVE_NODES)


def make_handle(kind: str, **params) -> AnalyticFunction:
    """Build a handle from a CLI/config style description."""
    kind = kind.lower()
    precision = params.pop("precision", DEFAULT_PRECISION)
    if kind in ("zeta", "riemannzeta"):
        return RiemannZeta(precision)
    if kind in ("dh", "davenportheilbronn"):
        return DavenportHeilbronn(precision)
    if kind in ("hurwitz", "hurwitzzeta"):
        return HurwitzZeta(float(params["shift"]), precision)
    if kind in ("dirichlet", "dirichletl"):
        table = params["table"]
        return DirichletL(len(table), table, precision)
    raise ValidationError("unknown function kind %r" % kind)


def jet(f: AnalyticFunction, s, radius=None, nodes: int = DERIVATIVE_NODES):
    """(f(s), f'(s)) from one batch of circle samples.

    For a DerivativeHandle both entries come from Taylor coefficients of the
    base function, so tracing f'-curves costs no more than tracing f-curves.
    """
    arr = np.asarray(s, dtype=complex)
    flat = arr.ravel()
    if isinstance(f, DerivativeHandle):
        k = f.order
        c = taylor_coefficients(f.base, flat, [k, k + 1], radius, nodes)
        value = math.factorial(k) * c[k]
        slope = math.factorial(k + 1) * c[k + 1]
    else:
        value = np.empty(flat.shape, dtype=complex)
        slope = np.empty(flat.shape, dtype=complex)
        direct = np.zeros(flat.shape, dtype=bool)
        if f.analytic_jet is not None:
            direct = flat.real >= special.REFLECT_BELOW
            if direct.any():
                value[direct], slope[direct] = f.analytic_jet(flat[direct])
        rest = ~direct
        if rest.any():
            sub = flat[rest]
            rho = _pick_radius(f, sub, radius)
            w = np.exp(2j * np.pi * np.arange(nodes) / nodes)
            ring = np.add.outer(sub, rho * w).ravel()
            vals = np.asarray(f(np.concatenate([sub, ring])), dtype=complex)
            value[rest] = vals[:sub.size]
            ring_vals = vals[sub.size:].reshape(sub.size, nodes)
            slope[rest] = (ring_vals * w ** -1).mean(axis=1) / rho
    if arr.ndim == 0:
        return complex(value[0]), complex(slope[0])
    return value.reshape(arr.shape), slope.reshape(arr.shape)

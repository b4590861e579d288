"""General Dirichlet series sum a_n exp(-lambda_n s): truncated evaluation,
Euler partial products, structural checks and the key = value config format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    AdditivityViolation,
    MultiplicativityViolation,
    OutsideConvergence,
    ParseError,
    ValidationError,
)
from .special import EvalResult

CHECK_BOUND = 10_000


def smallest_prime_factors(n: int) -> np.ndarray:
    """spf[k] for 0 <= k <= n (spf[0] = spf[1] = 0)."""
    spf = np.zeros(n + 1, dtype=np.int64)
    for p in range(2, int(math.isqrt(n)) + 1):
        if spf[p] == 0:
            block = spf[p * p::p]
            block[block == 0] = p
    rest = np.arange(n + 1)
    mask = (spf == 0) & (rest >= 2)
    spf[mask] = rest[mask]
    return spf


def primes_upto(n: int) -> np.ndarray:
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    spf = smallest_prime_factors(n)
    idx = np.arange(n + 1)
    return idx[(idx >= 2) & (spf == idx)]


@dataclass(frozen=True)
class GeneralDirichletSeries:
    coefficient_rule: Callable[[np.ndarray], np.ndarray]
    exponent_rule: Callable[[np.ndarray], np.ndarray]
    sigma_c: float
    name: str = "series"
    # custom lists only define finitely many terms
    max_index: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def coefficients(self, n) -> np.ndarray:
        return np.asarray(self.coefficient_rule(np.asarray(n, dtype=np.int64)), dtype=complex)

    def exponents(self, n) -> np.ndarray:
        return np.asarray(self.exponent_rule(np.asarray(n, dtype=np.int64)), dtype=float)

    def _check_index(self, n: int):
        if self.max_index is not None and n > self.max_index:
            raise ValidationError(
                "series %r defines only %d terms, %d requested" % (self.name, self.max_index, n))

    @classmethod
    def classical(cls, scale: float = 1.0, name: str = "zeta") -> "GeneralDirichletSeries":
        """a_n = 1, lambda_n = scale * ln n."""
        return cls(
            coefficient_rule=lambda n: np.ones(np.shape(n), dtype=complex),
            exponent_rule=lambda n: scale * np.log(n),
            sigma_c=1.0 / scale,
            name=name,
            meta={"coefficients": "ones", "exponents": "log", "exponent_scale": scale},
        )

    @classmethod
    def character(cls, table, name: str = "L", sigma_c: float = 0.0) -> "GeneralDirichletSeries":
        table = np.asarray(table, dtype=complex)
        q = len(table)
        return cls(
            coefficient_rule=lambda n: table[np.asarray(n) % q],
            exponent_rule=lambda n: np.log(n),
            sigma_c=sigma_c,
            name=name,
            meta={"coefficients": "dirichlet-character", "modulus": q,
                  "table": [complex(c) for c in table], "exponents": "log"},
        )

    @classmethod
    def from_lists(cls, coefficients=None, exponents=None, sigma_c: float = 1.0,
                   name: str = "custom") -> "GeneralDirichletSeries":
        """Custom coefficient and/or exponent lists, 1-indexed (first entry is n = 1)."""
        sizes = []
        if coefficients is not None:
            a = np.concatenate([[0j], np.asarray(coefficients, dtype=complex)])
            coef_rule = lambda n: a[np.asarray(n)]  # noqa: E731
            sizes.append(len(a) - 1)
        else:
            coef_rule = lambda n: np.ones(np.shape(n), dtype=complex)  # noqa: E731
        if exponents is not None:
            lam = np.concatenate([[np.nan], np.asarray(exponents, dtype=float)])
            exp_rule = lambda n: lam[np.asarray(n)]  # noqa: E731
            sizes.append(len(lam) - 1)
        else:
            exp_rule = lambda n: np.log(n)  # noqa: E731
        return cls(coef_rule, exp_rule, sigma_c, name, min(sizes) if sizes else None,
                   meta={"coefficients": "custom" if coefficients is not None else "ones",
                         "exponents": "custom" if exponents is not None else "log"})


def _terms(series: GeneralDirichletSeries, s: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Partial sums of a_n exp(-lambda_n s) for lo <= n <= hi, one per entry of s."""
    out = np.zeros(s.shape, dtype=complex)
    step = max(1, (1 << 21) // max(1, s.size))
    for start in range(lo, hi + 1, step):
        n = np.arange(start, min(hi, start + step - 1) + 1)
        a = series.coefficients(n)
        lam = series.exponents(n)
        out += (a[None, :] * np.exp(-np.outer(s, lam))).sum(axis=1)
    return out


def _abs_block(series, sigma: np.ndarray, lo: int, hi: int) -> np.ndarray:
    n = np.arange(lo, hi + 1)
    a = np.abs(series.coefficients(n))
    lam = series.exponents(n)
    return (a[None, :] * np.exp(-np.outer(sigma, lam))).sum(axis=1)


def eval_series(series: GeneralDirichletSeries, s, N: int) -> EvalResult:
    """sum_{n<=N} a_n exp(-lambda_n s) with a dyadic geometric tail estimate."""
    if N < 1:
        raise ValidationError("cutoff N must be >= 1")
    arr = np.asarray(s, dtype=complex)
    flat = arr.ravel()
    if np.any(flat.real <= series.sigma_c):
        raise OutsideConvergence(
            "Re s must exceed sigma_c = %g" % series.sigma_c, sigma_c=series.sigma_c)
    series._check_index(N)
    value = _terms(series, flat, 1, N)
    bound = np.full(flat.shape, np.inf)
    limit = series.max_index
    if limit is None or limit >= 4 * N:
        b1 = _abs_block(series, flat.real, N + 1, 2 * N)
        b2 = _abs_block(series, flat.real, 2 * N + 1, 4 * N)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(b1 > 0, b2 / b1, 0.0)
            bound = np.where(ratio < 1, b1 / (1 - ratio), np.inf)
    elif limit == N:
        bound = np.zeros(flat.shape)
    if arr.ndim == 0:
        return EvalResult(complex(value[0]), float(bound[0]), N)
    return EvalResult(value.reshape(arr.shape), bound.reshape(arr.shape), N)


def euler_factors(series: GeneralDirichletSeries, s: complex, n: int):
    """(primes p <= n, factors 1 - a_p exp(-lambda_p s))."""
    p = primes_upto(n)
    if p.size:
        series._check_index(int(p[-1]))
    return p, 1 - series.coefficients(p) * np.exp(-series.exponents(p) * s)


def euler_partial_product(series: GeneralDirichletSeries, s: complex, n: int) -> complex:
    """f_n(s) = prod_{p<=n} (1 - a_p e^{-lambda_p s}); 1/f_n(s) approximates the series."""
    if n < 0:
        raise ValidationError("n must be >= 0")
    _, factors = euler_factors(series, complex(s), n)
    return complex(np.prod(factors)) if factors.size else 1.0 + 0j


def lambda_additivity_check(series: GeneralDirichletSeries, n_max: int,
                            tol: float = 1e-9) -> list[int]:
    """Indices n <= n_max where lambda_n differs from sum alpha_i lambda_{p_i}."""
    if n_max < 2:
        raise ValidationError("n_max must be >= 2")
    if series.max_index is not None:
        n_max = min(n_max, series.max_index)
    spf = smallest_prime_factors(n_max)
    lam = np.concatenate([[0.0], series.exponents(np.arange(1, n_max + 1))])
    predicted = np.zeros(n_max + 1)
    for k in range(2, n_max + 1):
        p = spf[k]
        predicted[k] = lam[p] + predicted[k // p]
    bad = []
    if abs(lam[1]) > tol:
        bad.append(1)
    diff = np.abs(lam[2:] - predicted[2:])
    scale = tol * np.maximum(1.0, np.abs(lam[2:]))
    bad.extend(int(k) for k in np.nonzero(diff > scale)[0] + 2)
    return bad


def multiplicativity_check(series: GeneralDirichletSeries, n_max: int,
                           tol: float = 1e-9) -> list[tuple[int, int]]:
    """Pairs (p, n/p) where a_n != a_p a_{n/p}; (1, 1) flags a_1 != 1."""
    if series.max_index is not None:
        n_max = min(n_max, series.max_index)
    spf = smallest_prime_factors(n_max)
    a = np.concatenate([[0j], series.coefficients(np.arange(1, n_max + 1))])
    bad = []
    if abs(a[1] - 1) > tol:
        bad.append((1, 1))
    for k in range(2, n_max + 1):
        p = spf[k]
        if p != k and abs(a[k] - a[p] * a[k // p]) > tol * max(1.0, abs(a[k])):
            bad.append((int(p), int(k // p)))
    return bad


# --- configuration files -------------------------------------------------

def _parse_complex(token: str) -> complex:
    tok = token.strip().replace(" ", "")
    if not tok:
        raise ValueError("empty entry")
    if tok.endswith("i") and not tok.endswith("j"):
        body = tok[:-1]
        if body in ("", "+", "-"):
            body += "1"
        tok = body + "j"
    return complex(tok)


def _parse_list(value: str, conv) -> list:
    return [conv(tok) for tok in value.replace(";", ",").split(",") if tok.strip()]


def parse_series_config(text: str) -> GeneralDirichletSeries:
    """Build a series from ``key = value`` lines ('#' starts a comment).

    Keys: name, coefficients (ones | dirichlet-character | custom), modulus,
    table, coefficient_values, exponents (log | custom), exponent_scale,
    exponent_values, sigma_c.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("line %d: expected 'key = value'" % lineno, line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ParseError("line %d: duplicate key %r" % (lineno, key), line=lineno)
        entries[key] = value

    known = {"name", "coefficients", "modulus", "table", "coefficient_values",
             "exponents", "exponent_scale", "exponent_values", "sigma_c"}
    unknown = set(entries) - known
    if unknown:
        raise ParseError("unknown keys: %s" % ", ".join(sorted(unknown)))
    if "sigma_c" not in entries:
        raise ParseError("sigma_c is required")
    try:
        sigma_c = float(entries["sigma_c"])
        name = entries.get("name", "series")
        coef_kind = entries.get("coefficients", "ones")
        exp_kind = entries.get("exponents", "log")
        scale = float(entries.get("exponent_scale", "1"))
        coef_values = exp_values = table = None
        if coef_kind == "dirichlet-character":
            table = _parse_list(entries["table"], _parse_complex)
            if "modulus" in entries and int(entries["modulus"]) != len(table):
                raise ParseError("table has %d entries, modulus is %s"
                                 % (len(table), entries["modulus"]))
        elif coef_kind == "custom":
            coef_values = _parse_list(entries["coefficient_values"], _parse_complex)
        elif coef_kind != "ones":
            raise ParseError("unknown coefficient rule %r" % coef_kind)
        if exp_kind == "custom":
            exp_values = _parse_list(entries["exponent_values"], float)
        elif exp_kind != "log":
            raise ParseError("unknown exponent rule %r" % exp_kind)
    except KeyError as exc:
        raise ParseError("missing key %s" % exc) from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None

    if table is not None:
        q = len(table)
        tab = np.asarray(table, dtype=complex)
        for r in range(q):
            if math.gcd(r, q) > 1 and tab[r] != 0:
                raise MultiplicativityViolation(
                    "character must vanish on non-units mod %d (residue %d)" % (q, r),
                    n=r, m=q)
        coef_rule = lambda n: tab[np.asarray(n) % q]  # noqa: E731
        max_index = None
    elif coef_values is not None:
        arr = np.concatenate([[0j], np.asarray(coef_values, dtype=complex)])
        coef_rule = lambda n: arr[np.asarray(n)]  # noqa: E731
        max_index = len(coef_values)
    else:
        coef_rule = lambda n: np.ones(np.shape(n), dtype=complex)  # noqa: E731
        max_index = None
    if exp_values is not None:
        lam = np.concatenate([[np.nan], np.asarray(exp_values, dtype=float)])
        exp_rule = lambda n: lam[np.asarray(n)]  # noqa: E731
        max_index = len(exp_values) if max_index is None else min(max_index, len(exp_values))
    else:
        exp_rule = lambda n: scale * np.log(n)  # noqa: E731

    meta = {"coefficients": coef_kind, "exponents": exp_kind}
    if table is not None:
        meta.update(modulus=len(table), table=table)
    return GeneralDirichletSeries(coef_rule, exp_rule, sigma_c, name, max_index, meta)


def validate_series(series: GeneralDirichletSeries, n_max: int = CHECK_BOUND):
    """Raise on the first multiplicativity or exponent-additivity violation."""
    bad = multiplicativity_check(series, n_max)
    if bad:
        n, m = bad[0]
        raise MultiplicativityViolation(
            "a_%d != a_%d a_%d" % (n * m, n, m), n=n, m=m, count=len(bad))
    viol = lambda_additivity_check(series, n_max)
    if viol:
        raise AdditivityViolation(
            "lambda_%d breaks exponent additivity" % viol[0], n=viol[0], count=len(viol))
    lam = series.exponents(np.arange(1, min(n_max, series.max_index or n_max) + 1))
    if np.any(np.diff(lam) < 0):
        k = int(np.nonzero(np.diff(lam) < 0)[0][0]) + 1
        raise ValidationError("exponents must be nondecreasing (n = %d)" % k, n=k)
    return series


def validate_series_config(path) -> GeneralDirichletSeries:
    text = Path(path).read_text(encoding="utf-8")
    return validate_series(parse_series_config(text))

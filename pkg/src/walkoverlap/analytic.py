"""Scaling functions of the two-walker overlap volume.

``phi(q)`` returns Phi_d(xi) = I(xi, d) / I(0, d), where I is the
dimensionless double integral over the two walkers' reduced times. Below
d = 2 the persistence weights enter (``i_less``); for 2 <= d < 4 they cancel
(``i_greater``). At d >= 4 the normalizing integral I(0, d) diverges and every
entry point raises :class:`DivergenceError`.

All integrals are written in the variables u = z1 + z2 (sum of reduced times)
and v, with endpoint singularities removed by power substitutions before they
reach the generic integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

from .numerics import (
    PrecisionBudget,
    QuadratureResult,
    erf,
    expint_ei,
    integrate_adaptive,
)

__all__ = [
    "DivergenceError",
    "NO_SCALING_MESSAGE",
    "ScalingQuery",
    "ScalingValue",
    "SeriesTerm",
    "SeriesExpansion",
    "i_less",
    "i_less_1d_closed",
    "i_greater",
    "i_greater_2d_closed",
    "i_greater_3d_closed",
    "phi",
    "phi_value",
    "phi_series",
    "series_expansion",
    "correction_coefficient_a1",
    "SMALL_XI",
]

NO_SCALING_MESSAGE = "no scaling function exists for d >= 4"

# closed forms for d = 2, 3 hand over to the series below this xi
SMALL_XI = 1e-3

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)
_LN2 = math.log(2.0)
_EPS = 2.0**-52


class DivergenceError(ValueError):
    """The normalizing integral diverges; there is no scaling function."""

    def __init__(self, dim: float, detail: str = ""):
        msg = f"{NO_SCALING_MESSAGE} (requested d={dim:g})"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)
        self.dim = dim


def _default_budget() -> PrecisionBudget:
    return PrecisionBudget(abs_tol=1e-13, rel_tol=1e-13, max_subdivisions=4000)


@dataclass(frozen=True)
class ScalingQuery:
    xi: float
    dim: float
    budget: PrecisionBudget = field(default_factory=_default_budget)

    def __post_init__(self):
        if not (math.isfinite(self.xi) and self.xi >= 0):
            raise ValueError(f"xi must be finite and >= 0, got {self.xi}")
        if self.dim >= 4:
            raise DivergenceError(self.dim)
        if not self.dim > 0:
            raise ValueError(f"dimension must be positive, got {self.dim}")


@dataclass(frozen=True)
class ScalingValue:
    phi: float
    numerator: float
    denominator: float
    error_estimate: float


def _check_xi(xi: float) -> float:
    xi = float(xi)
    if not (math.isfinite(xi) and xi >= 0):
        raise ValueError(f"xi must be finite and >= 0, got {xi}")
    return xi


def _gamma_ratio(dim: float) -> float:
    # integral of (1 - v^2)^(-d/2) over [-1, 1] = sqrt(pi) Gamma(1 - d/2) / Gamma(3/2 - d/2)
    if dim == 1:
        return math.pi
    return _SQRT_PI * math.exp(math.lgamma(1 - dim / 2) - math.lgamma(1.5 - dim / 2))


# ---------------------------------------------------------------------------
# d < 2


def _inner_v(b: float, dim: float, budget: PrecisionBudget) -> QuadratureResult:
    """Integral of (1 - v^2)^(-d/2) over [0, b] for 0 <= b <= 1."""
    if b <= 0.0:
        return QuadratureResult(0.0, 0.0, 1)
    if b <= 0.5:
        return integrate_adaptive(lambda v: (1.0 - v * v) ** (-dim / 2), 0.0, b, budget)
    # tail over [b, 1] with 1 - v = z^m, which makes the (1 - v)^(-d/2) factor flat
    m = 1.0 / (1.0 - dim / 2)
    zmax = (1.0 - b) ** (1.0 / m)
    half_total = 0.5 * _gamma_ratio(dim)
    if zmax == 0.0:
        return QuadratureResult(half_total, _EPS * half_total, 1)
    tail = integrate_adaptive(lambda z: m * (2.0 - z**m) ** (-dim / 2), 0.0, zmax, budget)
    return QuadratureResult(half_total - tail.value, tail.error_estimate, tail.evaluations)


def i_less(xi: float, dim: float, budget: PrecisionBudget | None = None) -> QuadratureResult:
    """I_<(xi, d) for 0 < d < 2, by quadrature in (u, v) variables.

    The u-range [0, 1] carries the inner v-integral up to u/(2-u) (arcsin for
    d = 1, nested quadrature otherwise); the u-range [1, 2] carries the full
    v-integral, a Beta-function constant.
    """
    xi = _check_xi(xi)
    if not 0 < dim < 2:
        raise ValueError(f"i_less needs 0 < d < 2, got {dim}")
    budget = budget or _default_budget()
    inner_budget = PrecisionBudget(
        abs_tol=budget.abs_tol * 1e-2, rel_tol=budget.rel_tol * 1e-2,
        max_subdivisions=budget.max_subdivisions,
    )
    a = dim * xi * xi
    inner_err = 0.0

    def inner(u: float) -> float:
        nonlocal inner_err
        b = u / (2.0 - u)
        if dim == 1:
            return math.asin(b)
        r = _inner_v(b, dim, inner_budget)
        inner_err = max(inner_err, r.error_estimate)
        return r.value

    # u = s^2 on [0, 1]
    def first(s: float) -> float:
        u = s * s
        weight = 4.0 * s ** (1.0 - dim) * (1.0 - u / 2) ** (1.0 - dim)
        return weight * math.exp(-a / u) * inner(u)

    part1 = integrate_adaptive(first, 0.0, 1.0, budget)

    # y = 1 - u/2 on [1, 2]; for d > 1 also y = r^k with k = 1/(2-d) to flatten y^(1-d)
    c = _gamma_ratio(dim)
    if dim > 1:
        k = 1.0 / (2.0 - dim)

        def second(r: float) -> float:
            u = 2.0 - 2.0 * r**k
            return 2.0 * c * k * u ** (-dim / 2) * math.exp(-a / u)

        part2 = integrate_adaptive(second, 0.0, 0.5 ** (2.0 - dim), budget)
    else:

        def second(u: float) -> float:
            return c * u ** (-dim / 2) * (1.0 - u / 2) ** (1.0 - dim) * math.exp(-a / u)

        part2 = integrate_adaptive(second, 1.0, 2.0, budget)

    # weight integral over [0, 1] is bounded by 2^(|1-d|+1) / (1 - d/2)
    inner_bound = inner_err * 2.0 ** (abs(1.0 - dim) + 1.0) / (1.0 - dim / 2)
    return QuadratureResult(
        part1.value + part2.value,
        part1.error_estimate + part2.error_estimate + inner_bound,
        part1.evaluations + part2.evaluations,
    )


def _i_less_1d_closed(xi: float, budget: PrecisionBudget) -> QuadratureResult:
    x2 = xi * xi
    # 2 int_0^1 u^(-1/2) exp(-xi^2/u) arcsin(u/(2-u)) du, with u = s^2
    quad = integrate_adaptive(
        lambda s: 4.0 * math.exp(-x2 / (s * s)) * math.asin(s * s / (2.0 - s * s)),
        0.0, 1.0, budget,
    )
    expo = 2 * math.pi * (_SQRT2 * math.exp(-x2 / 2) - math.exp(-x2))
    erfs = 2 * math.pi * _SQRT_PI * xi * (erf(xi / _SQRT2) - erf(xi))
    value = quad.value + expo + erfs
    err = quad.error_estimate + 8 * _EPS * (abs(expo) + abs(erfs)) + 1e-14 * abs(2 * math.pi * _SQRT_PI * xi)
    return QuadratureResult(value, err, quad.evaluations)


def i_less_1d_closed(xi: float, budget: PrecisionBudget | None = None) -> float:
    """I_<(xi, 1) with the u in [1, 2] part done in exp/erf closed form."""
    return _i_less_1d_closed(_check_xi(xi), budget or _default_budget()).value


# ---------------------------------------------------------------------------
# 2 <= d < 4


def i_greater(xi: float, dim: float, budget: PrecisionBudget | None = None) -> QuadratureResult:
    """I_>(xi, d) for 2 <= d < 4 as two one-dimensional u-integrals.

    Raises :class:`DivergenceError` for d >= 4, where I_>(0, d) is infinite.
    """
    xi = _check_xi(xi)
    if dim >= 4:
        raise DivergenceError(dim, "the integral I_>(0, d) diverges")
    if not 2 <= dim < 4:
        raise ValueError(f"i_greater needs 2 <= d < 4, got {dim}")
    budget = budget or _default_budget()
    a = dim * xi * xi
    # int_0^1 u^(1-d/2) exp(-a/u) du with u = s^k, k = 1/(2 - d/2)
    k = 1.0 / (2.0 - dim / 2)
    if a == 0.0:
        part1 = QuadratureResult(k, 0.0, 1)
    else:
        part1 = integrate_adaptive(lambda s: k * math.exp(-a / s**k), 0.0, 1.0, budget)
    part2 = integrate_adaptive(
        lambda u: (2.0 - u) * u ** (-dim / 2) * math.exp(-a / u), 1.0, 2.0, budget
    )
    return QuadratureResult(
        part1.value + part2.value,
        part1.error_estimate + part2.error_estimate,
        part1.evaluations + part2.evaluations,
    )


_I0_2D = 2.0 * _LN2
_I0_3D = 8.0 - 4.0 * _SQRT2


def _i_greater_2d(xi: float) -> tuple[float, float]:
    if xi < SMALL_XI:
        return _I0_2D * phi_series(xi, 2), 1e-15
    x2 = xi * xi
    t1 = 2.0 * (math.exp(-2 * x2) - math.exp(-x2))
    t2 = 2.0 * (1 + 2 * x2) * expint_ei(-2 * x2)
    t3 = -2.0 * (x2 + 1) * expint_ei(-x2)
    value = t1 + t2 + t3
    err = 4 * _EPS * abs(t1) + 1e-13 * (abs(t2) + abs(t3))
    return value, err


def _i_greater_3d(xi: float) -> tuple[float, float]:
    if xi < SMALL_XI:
        return _I0_3D * phi_series(xi, 3), 1e-15
    c = math.sqrt(3 * math.pi)
    x2 = xi * xi
    terms = (
        4 * math.exp(-3 * x2),
        -2 * _SQRT2 * math.exp(-1.5 * x2),
        -2 * c * xi,
        c * (4 * xi + 2 / (3 * xi)) * erf(math.sqrt(3) * xi),
        -c * (2 * xi + 2 / (3 * xi)) * erf(math.sqrt(1.5) * xi),
    )
    value = math.fsum(terms)
    err = 1e-14 * (abs(terms[3]) + abs(terms[4])) + 4 * _EPS * sum(abs(t) for t in terms)
    return value, err


def i_greater_2d_closed(xi: float) -> float:
    """I_>(xi, 2) in terms of Ei(-xi^2) and Ei(-2 xi^2)."""
    return _i_greater_2d(_check_xi(xi))[0]


def i_greater_3d_closed(xi: float) -> float:
    """I_>(xi, 3) in terms of erf(sqrt(3) xi) and erf(sqrt(3/2) xi)."""
    return _i_greater_3d(_check_xi(xi))[0]


# ---------------------------------------------------------------------------
# scaling function


@lru_cache(maxsize=256)
def _denominator(route: str, dim: float, budget: PrecisionBudget) -> tuple[float, float]:
    # lru_cache tolerates concurrent readers; a racing first call just recomputes
    if route == "closed1":
        r = _i_less_1d_closed(0.0, budget)
        return r.value, r.error_estimate
    if route == "closed2":
        return _I0_2D, 0.0
    if route == "closed3":
        return _I0_3D, 0.0
    if route == "less":
        r = i_less(0.0, dim, budget)
        return r.value, r.error_estimate
    r = i_greater(0.0, dim, budget)
    return r.value, r.error_estimate


def _route(dim: float, method: str) -> str:
    if dim >= 4:
        raise DivergenceError(dim)
    if method == "closed":
        if dim in (1, 2, 3):
            return f"closed{int(dim)}"
        raise ValueError(f"closed forms exist only for d in {{1, 2, 3}}, got {dim}")
    if method == "quadrature":
        return "less" if dim < 2 else "greater"
    if method == "auto":
        if dim in (1, 2, 3):
            return f"closed{int(dim)}"
        return "less" if dim < 2 else "greater"
    raise ValueError(f"unknown method {method!r}")


def phi(q: ScalingQuery, method: str = "auto") -> ScalingValue:
    """Phi_d(xi) as the ratio of the overlap integral at xi to its value at 0.

    ``method="auto"`` uses the closed forms for d in {1, 2, 3} and quadrature
    elsewhere; ``"closed"`` and ``"quadrature"`` force one route.
    """
    route = _route(q.dim, method)
    den, den_err = _denominator(route, q.dim, q.budget)
    if q.xi == 0.0:
        return ScalingValue(1.0, den, den, 0.0)
    if route == "closed1":
        r = _i_less_1d_closed(q.xi, q.budget)
        num, num_err = r.value, r.error_estimate
    elif route == "closed2":
        num, num_err = _i_greater_2d(q.xi)
    elif route == "closed3":
        num, num_err = _i_greater_3d(q.xi)
    elif route == "less":
        r = i_less(q.xi, q.dim, q.budget)
        num, num_err = r.value, r.error_estimate
    else:
        r = i_greater(q.xi, q.dim, q.budget)
        num, num_err = r.value, r.error_estimate
    ratio = num / den
    err = abs(ratio) * (num_err / abs(den) / max(abs(ratio), 1e-300) + den_err / abs(den))
    return ScalingValue(ratio, num, den, err)


def phi_value(xi: float, dim: float, method: str = "auto") -> float:
    """Shorthand for ``phi(ScalingQuery(xi, dim)).phi``."""
    return phi(ScalingQuery(float(xi), dim), method).phi


# ---------------------------------------------------------------------------
# small-xi expansions


@dataclass(frozen=True)
class SeriesTerm:
    power: float
    log: bool  # term carries an extra factor ln(xi)
    coefficient: float


@dataclass(frozen=True)
class SeriesExpansion:
    dim: int
    terms: tuple[SeriesTerm, ...]

    def __call__(self, xi: float) -> float:
        xi = _check_xi(xi)
        total = 0.0
        for t in self.terms:
            if t.power == 0:
                total += t.coefficient
            elif xi > 0:
                total += t.coefficient * xi**t.power * (math.log(xi) if t.log else 1.0)
        return total


# the printed value of Euler's constant is used in the d = 2 coefficient
_GAMMA_PRINTED = 0.577216


def series_expansion(dim: int) -> SeriesExpansion:
    if dim == 1:
        terms = (SeriesTerm(0, False, 1.0), SeriesTerm(2, False, -1.0 / (2 * (_SQRT2 - 1))))
    elif dim == 2:
        terms = (
            SeriesTerm(0, False, 1.0),
            SeriesTerm(2, True, 2.0 / _LN2),
            SeriesTerm(2, False, (2 * _LN2 + _GAMMA_PRINTED - 2) / _LN2),
            SeriesTerm(4, False, -1.5),
        )
    elif dim == 3:
        terms = (
            SeriesTerm(0, False, 1.0),
            SeriesTerm(1, False, -math.sqrt(3 * math.pi) / (2 * _SQRT2 * (_SQRT2 - 1))),
            SeriesTerm(2, False, (3 + _SQRT2) / 2),
        )
    else:
        if dim >= 4:
            raise DivergenceError(dim)
        raise ValueError(f"series expansions exist only for d in {{1, 2, 3}}, got {dim}")
    return SeriesExpansion(int(dim), terms)


def phi_series(xi: float, dim: int) -> float:
    """Small-xi expansion of Phi_d for d in {1, 2, 3}; meant for xi <= 0.3."""
    return series_expansion(dim)(xi)


def correction_coefficient_a1() -> float:
    """a(1) in Phi_1 = 1 - a(1) R^2 / t, with xi^2 = R^2 / (2t) on the unit lattice."""
    return 1.0 / (4.0 * (_SQRT2 - 1.0))



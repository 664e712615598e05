"""Special functions and adaptive quadrature used by the analytic scaling functions.

Everything here is built from elementary operations only: ``erf`` and the
exponential integral ``Ei`` for negative arguments, and a globally adaptive
Gauss-Kronrod (7/15) integrator that never samples the interval endpoints.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "EULER_GAMMA",
    "PrecisionBudget",
    "QuadratureResult",
    "QuadratureError",
    "IntegrandError",
    "erf",
    "erfc",
    "expint_ei",
    "ei_series",
    "ei_continued_fraction",
    "integrate_adaptive",
]

EULER_GAMMA = 0.57721566490153286060651209008240243

_TWO_OVER_SQRT_PI = 1.1283791670955125738961589031215452
_ONE_OVER_SQRT_PI = 0.56418958354775628694807945156077259
_BELOW_ONE = 1.0 - 2.0**-53


@dataclass(frozen=True)
class PrecisionBudget:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if not self.rel_tol >= 0:
            raise ValueError(f"rel_tol must be nonnegative, got {self.rel_tol}")
        if int(self.max_subdivisions) < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    evaluations: int


class QuadratureError(ArithmeticError):
    """Adaptive integration exhausted its subdivision budget."""


class IntegrandError(ArithmeticError):
    """The integrand returned a non-finite value."""


# ---------------------------------------------------------------------------
# error function


def _erf_series(x: float) -> float:
    # erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)); all terms positive
    x2 = x * x
    term = x
    total = x
    n = 0
    while True:
        n += 1
        term *= 2.0 * x2 / (2 * n + 1)
        total += term
        if term <= 1e-17 * total:
            break
    return _TWO_OVER_SQRT_PI * math.exp(-x2) * total


def _erfc_cf(x: float) -> float:
    # Laplace continued fraction, x > 0, evaluated with modified Lentz
    tiny = 1e-300
    f = x
    c = x
    d = 0.0
    for k in range(1, 500):
        a = 0.5 * k
        d = x + a * d
        d = tiny if d == 0.0 else d
        c = x + a / c
        c = tiny if c == 0.0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return _ONE_OVER_SQRT_PI * math.exp(-x * x) / f


_ERF_SWITCH = 2.0


def erfc(x: float) -> float:
    """Complementary error function, accurate in the relative sense for x > 0."""
    if x < 0.0:
        return 2.0 - erfc(-x)
    if x <= _ERF_SWITCH:
        return 1.0 - _erf_series(x)
    if x > 27.3:
        return 0.0
    return _erfc_cf(x)


def erf(x: float) -> float:
    """Error function with absolute error below 1e-14 on the whole real line.

    Uses the positive-term power series of ``exp(x^2) erf(x)`` for
    ``|x| <= 2`` and the continued fraction for ``erfc`` beyond. The result is
    clamped to the largest double below one so ``|erf(x)| < 1`` holds for every
    finite ``x``.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("erf requires a finite argument")
    if x < 0.0:
        return -erf(-x)
    if x <= _ERF_SWITCH:
        return min(_erf_series(x), _BELOW_ONE)
    return min(1.0 - _erfc_cf(x), _BELOW_ONE)


# ---------------------------------------------------------------------------
# exponential integral


def ei_series(x: float) -> float:
    """Ei(x) from the convergent series gamma + ln|x| + sum x^k / (k k!)."""
    if x == 0.0:
        raise ValueError("Ei has a logarithmic singularity at 0")
    term = 1.0
    total = 0.0
    k = 0
    while True:
        k += 1
        term *= x / k
        contrib = term / k
        total += contrib
        if abs(contrib) <= 1e-17 * max(abs(total), 1e-300) or k > 400:
            break
    return EULER_GAMMA + math.log(abs(x)) + total


def _e1_continued_fraction(y: float) -> float:
    # E1(y) = exp(-y) / (y + 1 - 1^2/(y + 3 - 2^2/(y + 5 - ...))), modified Lentz
    tiny = 1e-300
    b = y + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * math.exp(-y)
    raise QuadratureError(f"E1 continued fraction did not converge at y={y}")


def ei_continued_fraction(x: float) -> float:
    """Ei(x) for x < 0 through E1(-x) = -Ei(x), independently of the series.

    For -x >= 1 the continued fraction of E1 is used directly. Closer to zero
    it converges slowly and accumulates rounding, so E1(1) is taken from the
    continued fraction and the remainder int_{-x}^{1} e^{-s}/s ds is
    integrated in the variable ln s, where the integrand is smooth.
    """
    if not x < 0.0:
        raise ValueError("continued fraction route only covers x < 0")
    y = -x
    if y >= 1.0:
        return -_e1_continued_fraction(y)
    rest = integrate_adaptive(lambda v: math.exp(-math.exp(v)), math.log(y), 0.0,
                              PrecisionBudget(abs_tol=1e-15, rel_tol=1e-15, max_subdivisions=200))
    return -(_e1_continued_fraction(1.0) + rest.value)


def expint_ei(x: float) -> float:
    """Exponential integral Ei(x), implemented for negative arguments.

    Relative error is below 1e-12 on [-50, -1e-8]. ``x == 0`` is the
    logarithmic singularity and raises ``ValueError``; positive arguments are
    outside the supported domain and raise ``NotImplementedError``.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("expint_ei requires a finite argument")
    if x == 0.0:
        raise ValueError("Ei has a logarithmic singularity at 0")
    if x > 0.0:
        raise NotImplementedError("expint_ei supports only x < 0")
    if x >= -1.0:
        return ei_series(x)
    return ei_continued_fraction(x)


# ---------------------------------------------------------------------------
# adaptive quadrature

# Gauss-Kronrod 7/15 abscissae on [-1, 1], nonnegative half, Kronrod-only
# points at odd indices.
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)

RULE_DEGREE = 22  # Kronrod 15-point rule integrates polynomials up to this degree exactly
_NARROW = 1000 * 2.0**-52


def _check(fx: float, x: float) -> float:
    if not math.isfinite(fx):
        raise IntegrandError(f"integrand returned {fx!r} at x={x!r}")
    return fx


def _gk15(f: Callable[[float], float], a: float, b: float) -> tuple[float, float]:
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fc = _check(f(center), center)
    resk = fc * _WGK[7]
    resg = fc * _WG[3]
    for j in range(7):
        dx = half * _XGK[j]
        x1 = center - dx
        x2 = center + dx
        if not (a < x1 and x2 < b):
            raise QuadratureError(f"panel [{a!r}, {b!r}] is too narrow to sample inside")
        s = _check(f(x1), x1) + _check(f(x2), x2)
        resk += _WGK[j] * s
        if j % 2 == 1:
            resg += _WG[j // 2] * s
    err = abs((resk - resg) * half)
    if half < _NARROW * max(abs(a), abs(b)):
        # nodes are distorted by rounding; the rule difference is meaningless here
        err = max(err, abs(resk * half))
    return resk * half, err


def integrate_adaptive(
    f: Callable[[float], float],
    a: float,
    b: float,
    budget: PrecisionBudget | None = None,
) -> QuadratureResult:
    """Integrate ``f`` over ``[a, b]`` by global adaptive bisection.

    Each panel uses the 15-point Kronrod rule with the embedded 7-point Gauss
    rule as error indicator; the panel with the largest error is bisected until
    the summed error satisfies ``max(abs_tol, rel_tol*|value|)``. Nodes are
    strictly interior, so integrable endpoint singularities are allowed.

    Raises
    ------
    QuadratureError
        When ``max_subdivisions`` bisections do not reach the tolerance.
    IntegrandError
        When ``f`` produces NaN or infinity.
    """
    if budget is None:
        budget = PrecisionBudget()
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")

    value, err = _gk15(f, a, b)
    evaluations = 15
    heap = [(-err, a, b, value, err)]
    total, total_err = value, err
    subdivisions = 0
    while total_err > max(budget.abs_tol, budget.rel_tol * abs(total)):
        if subdivisions >= budget.max_subdivisions:
            raise QuadratureError(
                f"no convergence on [{a}, {b}] after {subdivisions} subdivisions: "
                f"value={total!r}, error estimate={total_err:.3e}"
            )
        _, lo, hi, v, e = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise QuadratureError(f"panel [{lo}, {hi}] cannot be bisected further")
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        evaluations += 30
        subdivisions += 1
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
        # resum from scratch keeps round-off from accumulating over many updates
        if subdivisions % 64 == 0:
            total = math.fsum(item[3] for item in heap)
            total_err = math.fsum(item[4] for item in heap)
        else:
            total += v1 + v2 - v
            total_err += e1 + e2 - e
    total = math.fsum(item[3] for item in heap)
    total_err = math.fsum(item[4] for item in heap)
    return QuadratureResult(total, total_err, evaluations)

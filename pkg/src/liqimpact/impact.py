"""Closed-form price impact curves and their defining ODE structure.

The S-shape family is built from the exponential-quadratic kernel
``phi(x) = exp(-p x - q x^2/2)`` and its running integral ``Phi``; the
impact curve on log-price scale is ``f(x) = log(1 + ell * Phi(x))`` with
gradient ``g = ell * phi / (1 + ell * Phi)``. A linear curve
(``f = alpha x``) and a square-root heuristic
(``f = alpha sign(x) sqrt(|x|)``) share the interface. Structural
drift/risk parameters map onto (p, q), and the Ito identities of the
resulting price process are provided as plain formulas so simulation and
estimation can cross-check each other. ``g`` solves the Bernoulli
equation ``0 = -s(x) + g' + p(x) g + g^2``; a Runge-Kutta solver for the
general (p(x), s(x)) case lives at the bottom of the module as an
independent numerical oracle.

Numerical policy for ``Phi``: the textbook normal-CDF expression
``sqrt(2 pi / q) exp(p^2/2q) (N(sqrt(q) x + p/sqrt(q)) - N(p/sqrt(q)))``
is used only where it is well conditioned (``|p|/sqrt(q) <= 6`` and
``p^2/2q <= 300``). Outside that band the same quantity is computed from
scaled complementary error functions and log-CDF differences, which keep
full relative precision through the far tails. A separate small-q branch
covers ``q x^2`` vanishing relative to ``|p x|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erfcx, log_ndtr, ndtr

__all__ = [
    "ParameterError",
    "SShapeParams",
    "LinearParams",
    "SqrtParams",
    "StructuralParams",
    "PQDecomposition",
    "phi",
    "big_phi",
    "f_sshape",
    "g_sshape",
    "f_linear",
    "f_sqrt",
    "inflection_point",
    "feasibility_margin",
    "linear_alpha_from_ps",
    "structural_to_pq",
    "sigma_p_squared",
    "mu_p",
    "OdeSpec",
    "OdeSolution",
    "OdeBlowupError",
    "bernoulli_residual",
    "solve_ode_numeric",
]

_SQRT2 = math.sqrt(2.0)
_TAIL_Z = 6.0        # |p|/sqrt(q) beyond which the direct CDF difference degrades
_TAIL_LOG = 300.0    # p^2/(2q) beyond which exp(p^2/2q) risks overflow
_SMALLQ_REL = 1e-12  # q x^2 below this fraction of |p x| switches to the q->0 limit
_LOG_DBL_MAX = math.log(np.finfo(float).max)


class ParameterError(ValueError):
    """Parameters (or an evaluation point) left the domain of an operation."""


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class SShapeParams:
    """Impact curve f(x) = log(1 + ell * Phi(x)).

    ell is the small-x slope (log-price per contract), p and q the linear
    and quadratic coefficients of the kernel exponent. q must be positive;
    whether f is defined on the whole real line additionally depends on
    the sign of :func:`feasibility_margin`.
    """

    ell: float
    p: float
    q: float

    def __post_init__(self) -> None:
        if not self.ell > 0.0:
            raise ParameterError(f"ell must be positive, got {self.ell!r}")
        if not self.q > 0.0:
            raise ParameterError(f"q must be positive, got {self.q!r}")


@dataclass(frozen=True)
class LinearParams:
    """Impact curve f(x) = alpha * x."""

    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha > 0.0:
            raise ParameterError(f"alpha must be positive, got {self.alpha!r}")


@dataclass(frozen=True)
class SqrtParams:
    """Impact curve f(x) = alpha * sign(x) * sqrt(|x|)."""

    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha > 0.0:
            raise ParameterError(f"alpha must be positive, got {self.alpha!r}")


@dataclass(frozen=True)
class StructuralParams:
    """Primitives of the coupled price/flow model.

    mu_s, sigma_s: drift and volatility of the unaffected price.
    rho: correlation between price and flow shocks.
    c, m, eta: mean-reversion rate, level and volatility of the flow.
    delta, tau: level and slope of the flow risk premium,
        eta * lambda_w(x) = -tau * x + delta.
    r: short rate. kappa0: constant carry earned by the marginal trader.
    """

    mu_s: float
    sigma_s: float
    rho: float
    c: float
    m: float
    eta: float
    delta: float
    tau: float
    r: float
    kappa0: float

    def __post_init__(self) -> None:
        if not self.sigma_s >= 0.0:
            raise ParameterError(f"sigma_s must be non-negative, got {self.sigma_s!r}")
        if not self.eta > 0.0:
            raise ParameterError(f"eta must be positive, got {self.eta!r}")
        if not self.c > 0.0:
            raise ParameterError(f"c must be positive, got {self.c!r}")
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [-1, 1], got {self.rho!r}")
        if not self.kappa0 >= 0.0:
            raise ParameterError(f"kappa0 must be non-negative, got {self.kappa0!r}")


@dataclass(frozen=True)
class PQDecomposition:
    """(p, q) implied by structural parameters, with p split into its sources."""

    p: float
    q: float
    mean_reversion: float  # 2 c m / eta^2
    covariance: float      # 2 rho sigma_s / eta
    liquidity: float       # -2 delta / eta^2


# ---------------------------------------------------------------------------
# kernel and running integral


def _vec(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def _devec(out: np.ndarray, scalar: bool):
    return float(out[0]) if scalar else out


def phi(x, params: SShapeParams):
    """Kernel phi(x) = exp(-p x - q x^2 / 2). phi(0) = 1."""
    xv, scalar = _vec(x)
    with np.errstate(over="ignore"):
        out = np.exp(-(params.p * xv + 0.5 * params.q * xv * xv))
    return _devec(out, scalar)


def big_phi(x, params: SShapeParams):
    """Running integral Phi(x) of the kernel from 0 to x.

    Odd-symmetric in x when p = 0, strictly increasing, Phi(0) = 0.
    Evaluation is routed between a direct normal-CDF expression, a
    tail-stable form built on erfcx / log_ndtr, and the q -> 0 limit
    (1 - exp(-p x)) / p; see the module docstring.
    """
    p, q = params.p, params.q
    xv, scalar = _vec(x)
    out = np.empty(xv.shape)
    u = p * xv
    small = q * xv * xv < _SMALLQ_REL * np.abs(u)
    if small.any():
        us = u[small]
        lim = -np.expm1(-us) / p
        out[small] = np.where(np.abs(us) < 1e-12, xv[small], lim)
    rest = ~small
    if rest.any():
        out[rest] = _big_phi_gaussian(xv[rest], p, q)
    return _devec(out, scalar)


def _big_phi_gaussian(xv: np.ndarray, p: float, q: float) -> np.ndarray:
    rq = math.sqrt(q)
    b = p / rq
    a = rq * xv + b
    c_half = 0.5 * math.sqrt(2.0 * math.pi / q)
    if abs(b) <= _TAIL_Z and 0.5 * b * b <= _TAIL_LOG:
        return 2.0 * c_half * math.exp(0.5 * b * b) * (ndtr(a) - ndtr(b))
    with np.errstate(over="ignore"):
        if b >= 0.0:
            delta = log_ndtr(-a) - log_ndtr(-b)
            return c_half * erfcx(b / _SQRT2) * (-np.expm1(delta))
        delta = log_ndtr(a) - log_ndtr(b)
        return c_half * erfcx(-b / _SQRT2) * np.expm1(delta)


def _log_ell_phi_huge(xv: np.ndarray, params: SShapeParams) -> np.ndarray:
    """log(ell * Phi(x)) where Phi overflowed to +inf (reachable only for p < 0)."""
    p, q = params.p, params.q
    rq = math.sqrt(q)
    b = p / rq
    a = rq * xv + b
    delta = log_ndtr(a) - log_ndtr(b)
    log_c_half = math.log(0.5) + 0.5 * math.log(2.0 * math.pi / q)
    return (
        math.log(params.ell)
        + log_c_half
        + np.log(erfcx(-b / _SQRT2))
        + delta
        + np.log1p(-np.exp(-delta))
    )


def _ell_phi_checked(xv: np.ndarray, params: SShapeParams) -> np.ndarray:
    t = params.ell * big_phi(xv, params)
    bad = t <= -1.0
    if bad.any():
        xb = float(xv[bad][0])
        raise ParameterError(
            f"impact curve undefined at x={xb:g}: 1 + ell*Phi(x) <= 0 for {params}"
        )
    return t


def f_sshape(x, params: SShapeParams):
    """Impact on log-price scale: f(x) = log(1 + ell * Phi(x)).

    Raises ParameterError if 1 + ell * Phi(x) <= 0 at an evaluated point
    (the parameters are infeasible there). Where ell * Phi overflows the
    float range the log is taken in log space instead, so finite x always
    yields finite f for feasible parameters.
    """
    xv, scalar = _vec(x)
    t = _ell_phi_checked(xv, params)
    with np.errstate(invalid="ignore"):
        out = np.log1p(t)
    huge = np.isinf(t)
    if huge.any():
        out[huge] = _log_ell_phi_huge(xv[huge], params)
    return _devec(out, scalar)


def g_sshape(x, params: SShapeParams):
    """Gradient of the S-shape curve: g = ell * phi / (1 + ell * Phi).

    Positive everywhere, g(0) = ell exactly, and g solves the s = 0
    Bernoulli equation g' = -(p + q x) g - g^2.
    """
    xv, scalar = _vec(x)
    t = _ell_phi_checked(xv, params)
    expo = -(params.p * xv + 0.5 * params.q * xv * xv)
    with np.errstate(over="ignore"):
        num = params.ell * np.exp(expo)
    den = 1.0 + t
    out = np.empty(xv.shape)
    safe = np.isfinite(num) & np.isfinite(den)
    np.divide(num, den, out=out, where=safe)
    if not safe.all():
        rough = ~safe
        log_den = np.empty(rough.sum())
        t_rough = t[rough]
        fin = np.isfinite(t_rough)
        log_den[fin] = np.log1p(t_rough[fin])
        if (~fin).any():
            log_den[~fin] = _log_ell_phi_huge(xv[rough][~fin], params)
        out[rough] = np.exp(math.log(params.ell) + expo[rough] - log_den)
    return _devec(out, scalar)


def f_linear(x, params: LinearParams):
    """Linear impact f(x) = alpha * x (constant marginal impact alpha)."""
    xv, scalar = _vec(x)
    return _devec(params.alpha * xv, scalar)


def f_sqrt(x, params: SqrtParams):
    """Square-root heuristic f(x) = alpha * sign(x) * sqrt(|x|)."""
    xv, scalar = _vec(x)
    return _devec(params.alpha * np.sign(xv) * np.sqrt(np.abs(xv)), scalar)


def inflection_point(params: SShapeParams) -> float:
    """x* = -p/q, where the curve turns from convex to concave.

    Interpreted as market depth: the flow beyond which additional orders
    move the price less and less.
    """
    return -params.p / params.q


def feasibility_margin(params: SShapeParams) -> float:
    """1 - ell * sqrt(2 pi / q) * exp(p^2 / 2q) * N(p / sqrt(q)).

    Positive iff 1 + ell * Phi(x) > 0 for every real x, i.e. iff f_sshape
    is defined on the whole line. Evaluated through logs so p^2/(2q) in
    the thousands cannot overflow the intermediate product; -inf is
    returned when the subtracted term genuinely exceeds the float range.
    """
    b = params.p / math.sqrt(params.q)
    log_term = (
        math.log(params.ell)
        + 0.5 * math.log(2.0 * math.pi / params.q)
        + 0.5 * b * b
        + float(log_ndtr(b))
    )
    if log_term > _LOG_DBL_MAX:
        return -math.inf
    return 1.0 - math.exp(log_term)


def linear_alpha_from_ps(p: float, s: float) -> tuple[float, float]:
    """Positive root alpha of p*alpha + alpha^2 = s, plus beta = p + 2*alpha.

    This is the constant-g solution of the Bernoulli equation with
    constant coefficients. The root is computed in whichever of the two
    algebraically equivalent forms avoids cancellation for the sign of p.
    """
    if not s > 0.0:
        raise ParameterError(f"s must be positive for a positive root, got {s!r}")
    disc = math.sqrt(p * p + 4.0 * s)
    if p >= 0.0:
        alpha = 2.0 * s / (p + disc)
    else:
        alpha = 0.5 * (disc - p)
    return alpha, p + 2.0 * alpha


def structural_to_pq(sp: StructuralParams) -> PQDecomposition:
    """Map structural parameters to the kernel coefficients (p, q).

    p = (2/eta^2) (c m + rho eta sigma_s - delta), decomposed into a
    mean-reversion, a covariance and a liquidity-premium share;
    q = (2/eta^2) (tau - c), which requires tau > c.
    """
    if not sp.tau > sp.c:
        raise ParameterError(
            f"q > 0 requires tau > c, got tau={sp.tau!r}, c={sp.c!r}"
        )
    inv = 2.0 / (sp.eta * sp.eta)
    p = inv * (sp.c * sp.m + sp.rho * sp.eta * sp.sigma_s - sp.delta)
    q = inv * (sp.tau - sp.c)
    return PQDecomposition(
        p=p,
        q=q,
        mean_reversion=inv * sp.c * sp.m,
        covariance=2.0 * sp.rho * sp.sigma_s / sp.eta,
        liquidity=-inv * sp.delta,
    )


def sigma_p_squared(x: float, g_at_x: float, sp: StructuralParams) -> float:
    """Instantaneous variance of dP/P: sigma_s^2 + eta^2 g^2 + 2 rho eta sigma_s g.

    The flow level x enters only through g (passed precomputed); it is kept in
    the signature so the call shape mirrors :func:`mu_p`.
    """
    return (
        sp.sigma_s * sp.sigma_s
        + (sp.eta * g_at_x) * (sp.eta * g_at_x)
        + 2.0 * sp.rho * sp.eta * sp.sigma_s * g_at_x
    )


def mu_p(x: float, sp: StructuralParams, g_at_x: float, gprime_at_x: float) -> float:
    """Drift of dP/P implied by Ito on P = S exp(f(X)):

    mu_s + (c (m - x) + rho eta sigma_s) g + (eta^2/2) (g' + g^2).
    """
    return (
        sp.mu_s
        + (sp.c * (sp.m - x) + sp.rho * sp.eta * sp.sigma_s) * g_at_x
        + 0.5 * sp.eta * sp.eta * (gprime_at_x + g_at_x * g_at_x)
    )


# ---------------------------------------------------------------------------
# Bernoulli ODE: residual and an independent Runge-Kutta oracle


@dataclass(frozen=True)
class OdeSpec:
    """Coefficients of 0 = -s(x) + g' + p(x) g + g^2 with g(0) = ell."""

    p_fn: Callable[[float], float]
    s_fn: Callable[[float], float]
    ell: float

    @classmethod
    def from_sshape(cls, params: SShapeParams) -> "OdeSpec":
        p, q = params.p, params.q
        return cls(p_fn=lambda x: p + q * x, s_fn=lambda x: 0.0, ell=params.ell)

    @classmethod
    def from_linear(cls, p: float, s: float, ell: float | None = None) -> "OdeSpec":
        if ell is None:
            ell, _ = linear_alpha_from_ps(p, s)
        return cls(p_fn=lambda x: p, s_fn=lambda x: s, ell=ell)


@dataclass(frozen=True)
class OdeSolution:
    """Grid solution: g on the grid and f(x) = int_0^x g accumulated alongside."""

    x: np.ndarray
    g: np.ndarray
    f: np.ndarray


class OdeBlowupError(RuntimeError):
    """Integration left the finite range; carries the last good abscissa."""

    def __init__(self, message: str, x: float):
        super().__init__(message)
        self.x = x


def bernoulli_residual(x: float, spec: OdeSpec, g: float, gprime: float) -> float:
    """Residual of the defining equation: -s(x) + g' + p(x) g + g^2."""
    return -spec.s_fn(x) + gprime + spec.p_fn(x) * g + g * g


def solve_ode_numeric(
    spec: OdeSpec,
    x_range: tuple[float, float],
    step: float,
    blow_limit: float = 1e10,
) -> OdeSolution:
    """Classic fourth-order Runge-Kutta for g' = s(x) - p(x) g - g^2.

    Integrates outward from x = 0 in both directions with g(0) = ell and
    accumulates f(x) = int_0^x g by the trapezoid rule on the same grid.
    The step is shrunk slightly on each side so the range endpoints land
    on grid points. Raises OdeBlowupError if g leaves [-blow_limit,
    blow_limit] or turns non-finite.
    """
    xmin, xmax = x_range
    if not (xmin <= 0.0 <= xmax):
        raise ValueError(f"x_range must bracket 0, got {x_range!r}")
    if not step > 0.0:
        raise ValueError(f"step must be positive, got {step!r}")

    def one_side(limit: float) -> tuple[list[float], list[float], list[float]]:
        if limit == 0.0:
            return [], [], []
        n = max(1, int(math.ceil(abs(limit) / step)))
        h = limit / n
        rhs = lambda xx, gg: spec.s_fn(xx) - spec.p_fn(xx) * gg - gg * gg
        xs: list[float] = []
        gs: list[float] = []
        fs: list[float] = []
        g = spec.ell
        f = 0.0
        x = 0.0
        for k in range(n):
            half = x + 0.5 * h
            k1 = rhs(x, g)
            k2 = rhs(half, g + 0.5 * h * k1)
            k3 = rhs(half, g + 0.5 * h * k2)
            k4 = rhs(x + h, g + h * k3)
            g_new = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            x_new = (k + 1) * h
            if not math.isfinite(g_new) or abs(g_new) > blow_limit:
                raise OdeBlowupError(
                    f"gradient blew up between x={x:g} and x={x_new:g}", x=x
                )
            f += 0.5 * (x_new - x) * (g + g_new)
            x, g = x_new, g_new
            xs.append(x)
            gs.append(g)
            fs.append(f)
        return xs, gs, fs

    xr, gr, fr = one_side(xmax)
    xl, gl, fl = one_side(xmin)
    x_all = np.array(xl[::-1] + [0.0] + xr)
    g_all = np.array(gl[::-1] + [spec.ell] + gr)
    f_all = np.array(fl[::-1] + [0.0] + fr)
    return OdeSolution(x=x_all, g=g_all, f=f_all)

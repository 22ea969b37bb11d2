"""Fitting impact curves to bar panels, plus flow mean-reversion estimation.

The regression is r_t = a + f(x_t) - f(x_{t-1}) + eps_t over within-day bar
pairs.  The linear and square-root curves are linear in their single slope, so
ordinary least squares applies.  The S-shape curve is fit by damped
Gauss-Newton (Levenberg-Marquardt) with the positivity constraints folded into
the parameterization (ell = e^u, q = e^v) and the domain constraint enforced
by rejecting trial steps whose feasibility margin drops below a safety floor.
Searches start from a grid of (p, q) initial conditions scaled to the panel's
flow dispersion and the lowest-RSS feasible optimum wins.

Flow dynamics are estimated by AR(1) regression over day-contiguous segments,
mapped back to continuous-time mean reversion; standard errors come from the
delta method so simulation-recovery checks can be stated in SE units.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_ndtr

from ._common import fmt
from .impact import (
    LinearParams,
    SqrtParams,
    SShapeParams,
    big_phi,
    f_sqrt,
    feasibility_margin,
    phi,
)
from .ingest import BAR_HEADER, MinuteBar, read_bars_csv
from .sde import PANEL_HEADER, SyntheticPanel, read_panel_csv

__all__ = [
    "EstimationError",
    "RegressionPanel",
    "FitResult",
    "OUEstimate",
    "fit_ols",
    "fit_sshape",
    "default_start_grid",
    "estimate_ou",
    "fit_result_to_dict",
    "write_daily_fits_csv",
    "read_daily_fits_csv",
    "DAILY_FIT_HEADER",
]

logger = logging.getLogger(__name__)

DAILY_FIT_HEADER = [
    "date", "model", "converged", "n", "k",
    "a_hat", "ell", "p", "q", "alpha",
    "rss", "adj_r2", "bic",
]


class EstimationError(ValueError):
    """Degenerate design or unusable input for an estimator."""


@dataclass(frozen=True)
class RegressionPanel:
    """Aligned (r_t, x_t, x_prev) observations pooled over days."""

    r: np.ndarray
    x: np.ndarray
    x_prev: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=float)
        x = np.asarray(self.x, dtype=float)
        xp = np.asarray(self.x_prev, dtype=float)
        if not (r.shape == x.shape == xp.shape) or r.ndim != 1:
            raise EstimationError("r, x, x_prev must be 1-d arrays of equal length")
        if r.size < 10:
            raise EstimationError(f"need at least 10 observations, got {r.size}")
        if not (np.isfinite(r).all() and np.isfinite(x).all() and np.isfinite(xp).all()):
            raise EstimationError("panel contains non-finite values")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_prev", xp)

    @property
    def n(self) -> int:
        return int(self.r.size)

    @classmethod
    def from_bars(cls, bars: dict[str, list[MinuteBar]] | Iterable[MinuteBar]) -> "RegressionPanel":
        """Build observations from consecutive same-day bar pairs with a defined return."""
        if isinstance(bars, dict):
            by_day = {d: list(v) for d, v in bars.items()}
        else:
            by_day = {}
            for b in bars:
                by_day.setdefault(b.day, []).append(b)
        rs: list[float] = []
        xs: list[float] = []
        xps: list[float] = []
        for day_bars in by_day.values():
            ordered = sorted(day_bars, key=lambda b: b.bar_index)
            for prev, cur in zip(ordered, ordered[1:]):
                if cur.log_return is None or cur.bar_index != prev.bar_index + 1:
                    continue
                rs.append(cur.log_return)
                xs.append(cur.order_flow)
                xps.append(prev.order_flow)
        return cls(np.array(rs), np.array(xs), np.array(xps))

    @classmethod
    def from_synthetic(cls, panel: SyntheticPanel) -> "RegressionPanel":
        return cls.from_bars(panel.bars)

    @classmethod
    def from_csv(cls, path: str | Path) -> "RegressionPanel":
        """Load either a bar CSV or a day,bar,x,r panel CSV, sniffed by header."""
        first = Path(path).open(encoding="utf-8").readline().strip()
        if first == ",".join(BAR_HEADER):
            return cls.from_bars(read_bars_csv(path))
        if first == ",".join(PANEL_HEADER):
            return cls.from_bars(read_panel_csv(path))
        raise EstimationError(f"{path}: unrecognized header {first!r}")


@dataclass(frozen=True)
class FitResult:
    """One fitted impact specification with inference and selection statistics."""

    model: str
    a_hat: float
    param_hats: dict[str, float]
    ses: dict[str, float]
    t_stats: dict[str, float]
    rss: float
    adj_r2: float
    bic: float
    n: int
    k: int
    converged: bool
    starts_tried: int = 1
    message: str = ""

    def to_impact(self):
        """Materialize the fitted curve as an impact parameter object."""
        if self.model == "sshape":
            return SShapeParams(self.param_hats["ell"], self.param_hats["p"], self.param_hats["q"])
        if self.model == "linear":
            return LinearParams(self.param_hats["alpha"])
        if self.model == "sqrt":
            return SqrtParams(self.param_hats["alpha"])
        raise ValueError(f"unknown model {self.model!r}")


def _selection_stats(r: np.ndarray, rss: float, n: int, k: int) -> tuple[float, float]:
    """(adjusted R^2, BIC).  The adjustment uses (n-1)/(n-k-1) with k counting
    the intercept; BIC is the Gaussian concentrated form n ln(RSS/n) + k ln n."""
    tss = float(np.sum((r - r.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)
    bic = n * math.log(rss / n) + k * math.log(n) if rss > 0 else -math.inf
    return adj, bic


def fit_ols(panel: RegressionPanel, model: str) -> FitResult:
    """Least squares for the models linear in their slope: 'linear' or 'sqrt'."""
    if model == "linear":
        d = panel.x - panel.x_prev
    elif model == "sqrt":
        d = np.asarray(f_sqrt(panel.x, SqrtParams(1.0))) - np.asarray(f_sqrt(panel.x_prev, SqrtParams(1.0)))
    else:
        raise ValueError(f"fit_ols handles linear or sqrt, got {model!r}")
    if np.ptp(d) == 0.0:
        raise EstimationError(f"design column delta_f({model}) is constant; slope not identified")
    n = panel.n
    A = np.column_stack([np.ones(n), d])
    beta, _, rank, _ = np.linalg.lstsq(A, panel.r, rcond=None)
    if rank < 2:
        raise EstimationError(f"design column delta_f({model}) is collinear with the intercept")
    resid = panel.r - A @ beta
    rss = float(resid @ resid)
    s2 = rss / (n - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    se = np.sqrt(np.diag(cov))
    adj, bic = _selection_stats(panel.r, rss, n, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    return FitResult(
        model=model,
        a_hat=float(beta[0]),
        param_hats={"alpha": float(beta[1])},
        ses={"a": float(se[0]), "alpha": float(se[1])},
        t_stats={"a": float(t[0]), "alpha": float(t[1])},
        rss=rss,
        adj_r2=adj,
        bic=bic,
        n=n,
        k=2,
        converged=True,
    )


# ---------------------------------------------------------------------------
# S-shape nonlinear fit


def default_start_grid(flow_sd: float) -> list[tuple[float, float]]:
    """Scale-adaptive (p0, q0) start grid: p = -1e-2/s_x * k for k in -3..3
    crossed with q = 1e-2/s_x^2 * 10^j for j in -2..2."""
    if flow_sd <= 0:
        raise EstimationError("flow sd must be positive to build the start grid")
    ps = [-1e-2 / flow_sd * k for k in range(-3, 4)]
    qs = [1e-2 / flow_sd ** 2 * 10.0 ** j for j in range(-2, 3)]
    return [(p0, q0) for p0 in ps for q0 in qs]


def _log_feasibility_load(p: float, q: float) -> float:
    """log of K(p, q) = sqrt(2 pi / q) e^{p^2/(2q)} N(p/sqrt(q)); margin = 1 - ell K."""
    b = p / math.sqrt(q)
    return 0.5 * math.log(2.0 * math.pi / q) + 0.5 * b * b + float(log_ndtr(b))


def _sshape_resid_jac(theta: np.ndarray, panel: RegressionPanel, margin_floor: float):
    """Residuals and Jacobian wrt (a, u=ln ell, p, v=ln q); None when infeasible."""
    a, u, p, v = theta
    if not (math.isfinite(u) and math.isfinite(p) and math.isfinite(v)):
        return None
    # exp overflows past ~709.78; such trial steps are hopeless anyway.
    if u > 700.0 or v > 700.0:
        return None
    ell = math.exp(u)
    q = math.exp(v)
    if ell == 0.0 or q == 0.0:
        return None
    params = SShapeParams(ell, p, q)
    if feasibility_margin(params) < margin_floor:
        return None

    n = panel.n
    xs = np.concatenate([panel.x, panel.x_prev])
    # Saturating trial parameters produce infs here; they are rejected below,
    # so the intermediate overflow is expected and silenced.
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        Phi = np.asarray(big_phi(xs, params))
        ph = np.asarray(phi(xs, params))
        den = 1.0 + ell * Phi
        if not np.all(np.isfinite(den)) or np.any(den <= 0.0):
            return None
        f = np.log1p(ell * Phi)
        df_du = ell * Phi / den
        dPhi_dp = (p * Phi + ph - 1.0) / q
        dPhi_dq = -0.5 * ((p * p * Phi + p * (ph - 1.0)) / (q * q) + (Phi - xs * ph) / q)
        df_dp = ell * dPhi_dp / den
        df_dv = q * ell * dPhi_dq / den

        e = panel.r - a - (f[:n] - f[n:])
        J = np.empty((n, 4))
        J[:, 0] = -1.0
        J[:, 1] = -(df_du[:n] - df_du[n:])
        J[:, 2] = -(df_dp[:n] - df_dp[n:])
        J[:, 3] = -(df_dv[:n] - df_dv[n:])
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(J))):
        return None
    return e, J


@dataclass
class _StartOutcome:
    theta: np.ndarray
    rss: float
    converged: bool
    iterations: int


def _run_lm(theta0: np.ndarray, panel: RegressionPanel, margin_floor: float,
            max_iter: int, rss_rtol: float, grad_atol: float) -> _StartOutcome | None:
    out = _sshape_resid_jac(theta0, panel, margin_floor)
    if out is None:
        return None
    e, J = out
    theta = theta0.copy()
    rss = float(e @ e)
    JtJ = J.T @ J
    g = J.T @ e
    lam = 1e-3 * float(np.max(np.diag(JtJ)))
    if lam <= 0 or not math.isfinite(lam):
        lam = 1e-3
    nu = 2.0
    converged = bool(np.max(np.abs(g)) < grad_atol)
    it = 0
    while it < max_iter and not converged:
        it += 1
        D = np.diag(np.maximum(np.diag(JtJ), 1e-300))
        try:
            delta = np.linalg.solve(JtJ + lam * D, -g)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2.0
            continue
        trial = theta + delta
        res = _sshape_resid_jac(trial, panel, margin_floor)
        accepted = False
        if res is not None:
            e_t, J_t = res
            rss_t = float(e_t @ e_t)
            if math.isfinite(rss_t) and rss_t < rss:
                pred = float(delta @ (lam * (D @ delta) - g))
                ratio = (rss - rss_t) / pred if pred > 0 else 1.0
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3)
                nu = 2.0
                rel_drop = (rss - rss_t) / max(rss, 1e-300)
                theta, e, J, rss = trial, e_t, J_t, rss_t
                JtJ = J.T @ J
                g = J.T @ e
                accepted = True
                if rel_drop < rss_rtol or np.max(np.abs(g)) < grad_atol:
                    converged = True
        if not accepted:
            lam *= nu
            nu *= 2.0
            if lam > 1e15:
                break
    return _StartOutcome(theta=theta, rss=rss, converged=converged, iterations=it)


def fit_sshape(
    panel: RegressionPanel,
    grid: Sequence[tuple[float, float]] | None = None,
    *,
    max_iter: int = 500,
    rss_rtol: float = 1e-12,
    grad_atol: float = 1e-10,
    margin_floor: float = 1e-6,
    jobs: int = 1,
) -> FitResult:
    """Constrained multi-start nonlinear least squares for the S-shape curve.

    Runs a Levenberg-Marquardt search from every (p0, q0) grid point (default:
    a grid scaled to the panel's flow sd), keeps iterates feasible (ell > 0,
    q > 0, feasibility margin >= margin_floor), and returns the lowest-RSS
    converged start.  If no start converges the best endpoint is returned with
    ``converged`` False.  t statistics come from the Gauss-Newton covariance
    in the original (a, ell, p, q) parameterization.
    """
    d = panel.x - panel.x_prev
    if np.ptp(d) == 0.0:
        raise EstimationError("flow never changes between bars; impact slope not identified")
    s_x = float(np.std(panel.x, ddof=1))
    starts = list(grid) if grid is not None else default_start_grid(s_x)
    if not starts:
        raise EstimationError("empty start grid")

    a0 = float(np.mean(panel.r))
    try:
        ell_lin = abs(fit_ols(panel, "linear").param_hats["alpha"])
    except EstimationError:
        ell_lin = 0.0
    if not ell_lin > 0.0:
        ell_lin = 1e-6 / max(s_x, 1.0)

    theta0s = []
    for p0, q0 in starts:
        if q0 <= 0:
            raise EstimationError(f"grid q must be positive, got {q0}")
        ln_ell = min(math.log(ell_lin), math.log(0.5) - _log_feasibility_load(p0, q0))
        theta0s.append(np.array([a0, ln_ell, p0, math.log(q0)]))

    def run(t0: np.ndarray) -> _StartOutcome | None:
        return _run_lm(t0, panel, margin_floor, max_iter, rss_rtol, grad_atol)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, theta0s))
    else:
        outcomes = [run(t0) for t0 in theta0s]

    usable = [o for o in outcomes if o is not None]
    if not usable:
        raise EstimationError("no feasible start point; widen the grid or rescale flows")
    converged_set = [o for o in usable if o.converged]
    pool_set = converged_set if converged_set else usable
    best = min(pool_set, key=lambda o: o.rss)

    a, u, p, v = best.theta
    ell = math.exp(u)
    q = math.exp(v)
    n = panel.n
    e, J = _sshape_resid_jac(best.theta, panel, 0.0)
    # covariance in original units: d/d ell = (1/ell) d/du, d/dq = (1/q) d/dv
    J_orig = J.copy()
    J_orig[:, 1] /= ell
    J_orig[:, 3] /= q
    dof = max(n - 4, 1)
    s2 = best.rss / dof
    JtJ = J_orig.T @ J_orig
    try:
        cov = s2 * np.linalg.inv(JtJ)
    except np.linalg.LinAlgError:
        cov = s2 * np.linalg.pinv(JtJ)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    ests = np.array([a, ell, p, q])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, ests / se, np.nan)
    adj, bic = _selection_stats(panel.r, best.rss, n, 4)
    names = ["a", "ell", "p", "q"]
    message = "" if best.converged else "no start converged within max_iter; best endpoint returned"
    if not converged_set:
        logger.warning("fit_sshape: %s", message)
    return FitResult(
        model="sshape",
        a_hat=float(a),
        param_hats={"ell": float(ell), "p": float(p), "q": float(q)},
        ses=dict(zip(names, map(float, se))),
        t_stats=dict(zip(names, map(float, t))),
        rss=float(best.rss),
        adj_r2=adj,
        bic=bic,
        n=n,
        k=4,
        converged=bool(best.converged),
        starts_tried=len(theta0s),
        message=message,
    )


# ---------------------------------------------------------------------------
# flow mean reversion


@dataclass(frozen=True)
class OUEstimate:
    """AR(1)-implied mean-reversion estimates for the flow process.

    eta_hat is the unbiased sd of the flow levels (the stationary-dispersion
    convention); eta_diffusion_hat maps the AR residual sd back to the
    diffusion coefficient.  When the AR coefficient falls outside (0, 1) the
    continuous-time quantities are None and non_mean_reverting is set.
    """

    c_hat: float | None
    m_hat: float | None
    eta_hat: float
    eta_diffusion_hat: float | None
    beta0: float
    beta1: float
    se_c: float | None
    se_m: float | None
    se_eta: float
    se_eta_diffusion: float | None
    n: int
    non_mean_reverting: bool
    dt: float = 1.0


def _segments(flows) -> list[np.ndarray]:
    if isinstance(flows, np.ndarray):
        if flows.ndim == 1:
            return [flows.astype(float)]
        if flows.ndim == 2:
            return [row.astype(float) for row in flows]
        raise EstimationError("flows must be 1-d, 2-d, or a sequence of 1-d arrays")
    flows = list(flows)
    if flows and np.ndim(flows[0]) == 0:
        return [np.asarray(flows, dtype=float)]
    return [np.asarray(seg, dtype=float) for seg in flows]


def estimate_ou(flows, dt: float = 1.0) -> OUEstimate:
    """Estimate mean-reversion (c, m) and dispersion of a flow series.

    ``flows`` is one series or a sequence of day-contiguous segments; the
    AR(1) regression X_t on X_{t-1} never pairs observations across segment
    boundaries.  Requires at least 30 observations and nonzero variance.
    """
    if dt <= 0:
        raise EstimationError(f"dt must be positive, got {dt}")
    segs = [s for s in _segments(flows) if s.size >= 2]
    if not segs:
        raise EstimationError("need at least one segment with two observations")
    all_x = np.concatenate(segs)
    n_total = int(all_x.size)
    if n_total < 30:
        raise EstimationError(f"need at least 30 observations, got {n_total}")
    if not np.isfinite(all_x).all():
        raise EstimationError("flows contain non-finite values")
    y = np.concatenate([s[1:] for s in segs])
    xlag = np.concatenate([s[:-1] for s in segs])
    n = y.size
    sxx = float(np.sum((xlag - xlag.mean()) ** 2))
    if sxx == 0.0:
        raise EstimationError("flow series has zero variance; dynamics not identified")

    beta1 = float(np.sum((xlag - xlag.mean()) * (y - y.mean())) / sxx)
    beta0 = float(y.mean() - beta1 * xlag.mean())
    resid = y - beta0 - beta1 * xlag
    rss = float(resid @ resid)
    s2 = rss / (n - 2)
    se_b1 = math.sqrt(s2 / sxx)
    xbar = float(xlag.mean())
    var_b0 = s2 * (1.0 / n + xbar * xbar / sxx)
    cov_b01 = -xbar * s2 / sxx

    eta_hat = float(np.std(all_x, ddof=1))
    b1sq = beta1 * beta1
    # sd of the level sd under AR(1) dependence (long-run variance inflation)
    if 0.0 < beta1 < 1.0:
        infl = (1.0 + b1sq) / (1.0 - b1sq)
    else:
        infl = 1.0
    se_eta = eta_hat * math.sqrt(infl / (2.0 * n_total))

    if not 0.0 < beta1 < 1.0:
        return OUEstimate(
            c_hat=None, m_hat=None, eta_hat=eta_hat, eta_diffusion_hat=None,
            beta0=beta0, beta1=beta1, se_c=None, se_m=None, se_eta=se_eta,
            se_eta_diffusion=None, n=n_total, non_mean_reverting=True, dt=dt,
        )

    c_hat = -math.log(beta1) / dt
    m_hat = beta0 / (1.0 - beta1)
    se_c = se_b1 / (beta1 * dt)
    g0 = 1.0 / (1.0 - beta1)
    g1 = beta0 / (1.0 - beta1) ** 2
    se_m = math.sqrt(max(g0 * g0 * var_b0 + 2.0 * g0 * g1 * cov_b01 + g1 * g1 * se_b1 ** 2, 0.0))

    sigma_u = math.sqrt(s2)
    eta_diff = sigma_u * math.sqrt(2.0 * c_hat / (1.0 - b1sq))
    # delta method on (sigma_u, beta1); d ln eta_diff / d beta1
    dln_db1 = 0.5 * (-1.0 / (beta1 * math.log(beta1)) + 2.0 * beta1 / (1.0 - b1sq))
    se_eta_diff = eta_diff * math.sqrt(1.0 / (2.0 * (n - 2)) + (dln_db1 * se_b1) ** 2)

    return OUEstimate(
        c_hat=c_hat, m_hat=m_hat, eta_hat=eta_hat, eta_diffusion_hat=eta_diff,
        beta0=beta0, beta1=beta1, se_c=se_c, se_m=se_m, se_eta=se_eta,
        se_eta_diffusion=se_eta_diff, n=n_total, non_mean_reverting=False, dt=dt,
    )


# ---------------------------------------------------------------------------
# serialization


def fit_result_to_dict(fr: FitResult) -> dict:
    return {
        "model": fr.model,
        "a_hat": fr.a_hat,
        "param_hats": dict(fr.param_hats),
        "ses": dict(fr.ses),
        "t_stats": dict(fr.t_stats),
        "rss": fr.rss,
        "adj_r2": fr.adj_r2,
        "bic": fr.bic,
        "n": fr.n,
        "k": fr.k,
        "converged": fr.converged,
        "starts_tried": fr.starts_tried,
        "message": fr.message,
    }


def write_daily_fits_csv(rows: list[tuple[str, FitResult]], dest: str | Path) -> None:
    """One row per (date, fit): shared columns plus the union of model parameters."""
    lines = [",".join(DAILY_FIT_HEADER)]
    for date, fr in rows:
        ph = fr.param_hats
        lines.append(",".join([
            date,
            fr.model,
            "1" if fr.converged else "0",
            str(fr.n),
            str(fr.k),
            fmt(fr.a_hat),
            fmt(ph.get("ell")),
            fmt(ph.get("p")),
            fmt(ph.get("q")),
            fmt(ph.get("alpha")),
            fmt(fr.rss),
            fmt(fr.adj_r2),
            fmt(fr.bic),
        ]))
    Path(dest).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_daily_fits_csv(path: str | Path) -> list[dict]:
    """Rows of the daily-fit CSV as dicts with floats parsed and '' -> None."""
    import csv

    out: list[dict] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DAILY_FIT_HEADER:
            raise EstimationError(f"{path}:1: expected header {','.join(DAILY_FIT_HEADER)}")
        for row in reader:
            if not row:
                continue
            rec = dict(zip(DAILY_FIT_HEADER, row))
            for key in ("a_hat", "ell", "p", "q", "alpha", "rss", "adj_r2", "bic"):
                rec[key] = float(rec[key]) if rec[key] != "" else None
            rec["converged"] = rec["converged"] == "1"
            rec["n"] = int(rec["n"])
            rec["k"] = int(rec["k"])
            out.append(rec)
    return out

"""Coupled simulation of order flow, the latent price, and the traded price.

The flow X follows a mean-reverting diffusion and the latent price S a
geometric Brownian motion driven by a correlated Brownian pair.  The traded
price is never integrated on its own: every sample applies the supply-curve
identity P = S * exp(f(X)), so the curve relation holds exactly at each step
rather than up to discretization error.

Two measures are supported.  Under ``physical`` S drifts at mu_s and X at
c(m - X).  Under ``risk-neutral`` the flow drift gains the liquidity-risk
adjustment (eta*lambda^w(x) = -tau*x + delta) and S receives the state
dependent drift that prices P at exactly r:

    mu_s_rn(x) = r - [ {c(m-x) - (delta - tau*x) + rho*eta*sigma_s} g(x)
                       + (eta^2/2)(g'(x) + g(x)^2) ]

which is the market-price-of-risk choice implied by the no-arbitrage drift
identity, and collapses to the constant r - kappa0 form exactly when the
impact curve solves the consistency equation for the same structural
parameters.  Discounted-price martingale checks therefore hold for any
feasible impact curve, up to Euler weak error.

Simulation is Euler-Maruyama in X with an exact log-normal update for S per
step; paths are deterministic given the seed (counter-based generator, the
algorithm name is recorded in output metadata).

synth_regression_panel builds day-structured regression panels instead: flow
sampled from the exact OU transition (stationary start each day), returns
assembled from the impact curve plus iid Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.signal import lfilter

from ._common import SCHEMA_VERSION, fmt
from .impact import (
    LinearParams,
    ParameterError,
    SShapeParams,
    StructuralParams,
    f_linear,
    f_sshape,
    feasibility_margin,
    g_sshape,
)
from .ingest import MinuteBar

__all__ = [
    "RNG_ALGORITHM",
    "SimulationError",
    "OUParams",
    "SimConfig",
    "PathSample",
    "SimPath",
    "SyntheticPanel",
    "correlated_increments",
    "simulate_path",
    "synth_regression_panel",
    "write_panel_csv",
    "read_panel_csv",
]

RNG_ALGORITHM = "PCG64"

PATH_HEADER = ["t", "s", "x", "p"]
PANEL_HEADER = ["day", "bar", "x", "r"]


class SimulationError(RuntimeError):
    """A simulated quantity left the finite range; ``step`` is the first bad index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class OUParams:
    """Mean-reverting flow dynamics dX = c(m - X)dt + eta dW."""

    c: float
    m: float
    eta: float

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ParameterError(f"c must be positive, got {self.c}")
        if self.eta <= 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")

    @classmethod
    def from_structural(cls, sp: StructuralParams) -> "OUParams":
        return cls(c=sp.c, m=sp.m, eta=sp.eta)

    @property
    def stationary_sd(self) -> float:
        return self.eta / math.sqrt(2.0 * self.c)

    def transition(self, dt: float) -> tuple[float, float]:
        """Exact discrete transition: (decay, shock sd) for X' = m + decay*(X-m) + sd*N(0,1)."""
        decay = math.exp(-self.c * dt)
        sd = self.eta * math.sqrt((1.0 - decay * decay) / (2.0 * self.c))
        return decay, sd


@dataclass(frozen=True)
class SimConfig:
    """Full description of one path simulation; everything needed to reproduce it."""

    structural: StructuralParams
    impact: SShapeParams | LinearParams
    n_steps: int
    dt: float = 1.0
    x0: float = 0.0
    s0: float = 100.0
    seed: int | None = None
    measure: str = "physical"

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be at least 1, got {self.n_steps}")
        if self.s0 <= 0:
            raise ParameterError(f"s0 must be positive, got {self.s0}")
        if self.measure not in ("physical", "risk-neutral"):
            raise ParameterError(f"measure must be physical or risk-neutral, got {self.measure!r}")
        if isinstance(self.impact, SShapeParams):
            margin = feasibility_margin(self.impact)
            if not margin > 0:
                raise ParameterError(
                    f"infeasible impact parameters: feasibility margin {margin} <= 0"
                )
        elif not isinstance(self.impact, LinearParams):
            raise ParameterError(f"impact must be SShapeParams or LinearParams, got {type(self.impact)!r}")


@dataclass(frozen=True)
class PathSample:
    """One simulated observation; p always equals s * exp(f(x))."""

    t: float
    s: float
    x: float
    p: float


def _impact_f(impact: SShapeParams | LinearParams, x: np.ndarray) -> np.ndarray:
    if isinstance(impact, SShapeParams):
        return np.asarray(f_sshape(x, impact))
    return np.asarray(f_linear(x, impact))


def _impact_g_gprime(impact: SShapeParams | LinearParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(impact, SShapeParams):
        g = np.asarray(g_sshape(x, impact))
        # derivative of the closed form: g' = -(p + qx) g - g^2
        gp = -(impact.p + impact.q * x) * g - g * g
        return g, gp
    g = np.full_like(x, impact.alpha, dtype=float)
    return g, np.zeros_like(g)


def _impact_meta(impact: SShapeParams | LinearParams) -> dict:
    d = asdict(impact)
    d["family"] = "sshape" if isinstance(impact, SShapeParams) else "linear"
    return d


class SimPath:
    """Array-backed simulated path with indexed access to PathSample views."""

    def __init__(self, t: np.ndarray, s: np.ndarray, x: np.ndarray, p: np.ndarray,
                 config: SimConfig, seed_used: int):
        self.t = t
        self.s = s
        self.x = x
        self.p = p
        self.config = config
        self.seed_used = seed_used

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> PathSample:
        return PathSample(float(self.t[i]), float(self.s[i]), float(self.x[i]), float(self.p[i]))

    def __iter__(self) -> Iterator[PathSample]:
        return (self[i] for i in range(len(self)))

    def metadata(self) -> dict:
        cfg = self.config
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "path",
            "rng": {"algorithm": RNG_ALGORITHM, "seed": self.seed_used},
            "config": {
                "structural": asdict(cfg.structural),
                "impact": _impact_meta(cfg.impact),
                "n_steps": cfg.n_steps,
                "dt": cfg.dt,
                "x0": cfg.x0,
                "s0": cfg.s0,
                "measure": cfg.measure,
            },
        }

    def write_csv(self, dest: str | Path) -> None:
        lines = [",".join(PATH_HEADER)]
        for i in range(len(self)):
            lines.append(",".join(fmt(float(v)) for v in (self.t[i], self.s[i], self.x[i], self.p[i])))
        Path(dest).write_text("\n".join(lines) + "\n", encoding="utf-8")


def correlated_increments(
    rho: float, dt: float, rng: np.random.Generator, size: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Draw the correlated Brownian increment pair (dz, dw) with corr(dz, dw) = rho.

    dw = sqrt(dt) u and dz = sqrt(dt) (rho u + sqrt(1 - rho^2) v) for iid
    standard normals (u, v) drawn interleaved per step, so at rho = 1 the two
    increments are bitwise identical.  ``size`` of None draws a single pair.
    """
    if not -1.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [-1, 1], got {rho}")
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, 2))
    u = z[:, 0]
    v = z[:, 1]
    sqrt_dt = math.sqrt(dt)
    dw = sqrt_dt * u
    dz = sqrt_dt * (rho * u + math.sqrt(max(0.0, 1.0 - rho * rho)) * v)
    if size is None:
        return dz[0], dw[0]
    return dz, dw


def simulate_path(config: SimConfig) -> SimPath:
    """Simulate (X, S, P) for n_steps Euler steps of width dt.

    X uses the measure-appropriate linear drift, S an exact per-step
    log-normal update (state-dependent drift under risk-neutral), and P is
    assembled from the supply-curve identity at every sample, so s > 0 and
    p > 0 hold by construction.  Raises SimulationError with the first bad
    step index if any sample leaves the finite range.
    """
    sp = config.structural
    seed_used = config.seed
    if seed_used is None:
        seed_used = int(np.random.SeedSequence().entropy)
    rng = np.random.Generator(np.random.PCG64(seed_used))

    n = config.n_steps
    dt = config.dt
    dz, dw = correlated_increments(sp.rho, dt, rng, size=n)

    if config.measure == "physical":
        coef = 1.0 - sp.c * dt
        const = sp.c * sp.m * dt
    else:
        # flow drift c(m - x) - eta*lambda^w(x) with eta*lambda^w = -tau x + delta
        coef = 1.0 + (sp.tau - sp.c) * dt
        const = (sp.c * sp.m - sp.delta) * dt
    shocks = const + sp.eta * dw
    tail, _ = lfilter([1.0], [1.0, -coef], shocks, zi=np.array([coef * config.x0]))
    x = np.concatenate(([config.x0], tail))

    if config.measure == "physical":
        mu = np.full(n, sp.mu_s)
    else:
        xl = x[:-1]
        g, gp = _impact_g_gprime(config.impact, xl)
        lam_w = -sp.tau * xl + sp.delta
        drift_from_impact = (sp.c * (sp.m - xl) - lam_w + sp.rho * sp.eta * sp.sigma_s) * g \
            + 0.5 * sp.eta ** 2 * (gp + g * g)
        mu = sp.r - drift_from_impact
    log_steps = (mu - 0.5 * sp.sigma_s ** 2) * dt + sp.sigma_s * dz
    with np.errstate(over="ignore"):
        s = config.s0 * np.exp(np.concatenate(([0.0], np.cumsum(log_steps))))
        p = s * np.exp(_impact_f(config.impact, x))

    t = np.arange(n + 1) * dt
    for name, arr in (("x", x), ("s", s), ("p", p)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            k = int(bad[0])
            raise SimulationError(f"non-finite {name} at step {k}", step=k)
    return SimPath(t, s, x, p, config, seed_used)


@dataclass(frozen=True)
class SyntheticPanel:
    """Day-structured regression panel with the generating truth attached."""

    bars: list[MinuteBar] = field(repr=False)
    truth: dict

    @property
    def days(self) -> list[str]:
        seen: dict[str, None] = {}
        for b in self.bars:
            seen.setdefault(b.day, None)
        return list(seen)

    def by_day(self) -> dict[str, list[MinuteBar]]:
        out: dict[str, list[MinuteBar]] = {}
        for b in self.bars:
            out.setdefault(b.day, []).append(b)
        return out

    def write_csv(self, dest: str | Path) -> None:
        write_panel_csv(self.bars, dest)

    def metadata(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "panel", "truth": self.truth}


def synth_regression_panel(
    a: float,
    impact: SShapeParams | LinearParams,
    flow: OUParams,
    n_days: int,
    bars_per_day: int,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> SyntheticPanel:
    """Generate n_days * bars_per_day bars with returns r = a + f(x_t) - f(x_prev) + eps.

    Flow uses the exact OU transition at unit bar spacing with an independent
    stationary draw opening each day; eps is iid N(0, noise_sd^2).  Bar prices
    start each day at 100 and compound the generated returns, so last_price
    and log_return stay mutually consistent.  The first bar of a day has no
    return.  Generating parameters (and the seed) are returned in ``truth``.
    """
    if n_days < 1 or bars_per_day < 2:
        raise ParameterError("need n_days >= 1 and bars_per_day >= 2")
    if noise_sd < 0:
        raise ParameterError(f"noise_sd must be non-negative, got {noise_sd}")
    if isinstance(impact, SShapeParams):
        if not feasibility_margin(impact) > 0:
            raise ParameterError("infeasible impact parameters")

    rng = np.random.Generator(np.random.PCG64(seed))
    decay, trans_sd = flow.transition(1.0)
    x0 = flow.m + flow.stationary_sd * rng.standard_normal(n_days)
    shocks = trans_sd * rng.standard_normal((n_days, bars_per_day - 1))
    eps = noise_sd * rng.standard_normal((n_days, bars_per_day - 1))

    zi = (decay * (x0 - flow.m))[:, None]
    dev, _ = lfilter([1.0], [1.0, -decay], shocks, axis=1, zi=zi)
    x = np.concatenate([x0[:, None], flow.m + dev], axis=1)

    fx = _impact_f(impact, x)
    r = a + fx[:, 1:] - fx[:, :-1] + eps
    log_p = math.log(100.0) + np.concatenate(
        [np.zeros((n_days, 1)), np.cumsum(r, axis=1)], axis=1
    )
    p = np.exp(log_p)

    bars: list[MinuteBar] = []
    for d in range(n_days):
        day = str(d)
        for j in range(bars_per_day):
            bars.append(
                MinuteBar(
                    day=day,
                    bar_index=j,
                    order_flow=float(x[d, j]),
                    last_price=float(p[d, j]),
                    log_return=None if j == 0 else float(r[d, j - 1]),
                )
            )
    truth = {
        "a": a,
        "impact": _impact_meta(impact),
        "flow": asdict(flow),
        "n_days": n_days,
        "bars_per_day": bars_per_day,
        "noise_sd": noise_sd,
        "rng": {"algorithm": RNG_ALGORITHM, "seed": seed},
    }
    return SyntheticPanel(bars=bars, truth=truth)


def write_panel_csv(bars: list[MinuteBar], dest: str | Path) -> None:
    """Write a regression panel as CSV with header day,bar,x,r (empty r on day-open bars)."""
    lines = [",".join(PANEL_HEADER)]
    for b in bars:
        lines.append(
            ",".join([b.day, str(b.bar_index), fmt(float(b.order_flow)), fmt(b.log_return)])
        )
    Path(dest).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_panel_csv(path: str | Path) -> list[MinuteBar]:
    """Read a day,bar,x,r panel back as MinuteBar records (no price fields)."""
    import csv

    path = Path(path)
    bars: list[MinuteBar] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PANEL_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(PANEL_HEADER)}")
        for row in reader:
            if not row:
                continue
            bars.append(
                MinuteBar(
                    day=row[0],
                    bar_index=int(row[1]),
                    order_flow=float(row[2]),
                    last_price=None,
                    log_return=float(row[3]) if row[3] != "" else None,
                )
            )
    return bars

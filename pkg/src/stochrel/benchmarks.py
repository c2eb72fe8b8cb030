"""Case-study simulators with analytic references, a synthetic heteroskedastic
wind-like simulator, and the moving-window empirical statistics used for
scatter datasets.

Unit convention: everything is stored in SI base units (N/m, m, Pa), so that
the log-parameters derived from the tabulated means and stds come out exactly
as published. Failure probabilities here use the convention "failure iff the
limit state g <= 0"; the closed forms below therefore carry the negative
Phi-argument (the survival orientation integrates to one minus the failure
probability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .data import Dataset, load_dataset_csv, save_dataset_csv  # re-exported
from .inputs import MarginalSpec, RandomVector, lognormal_from_moments

__all__ = [
    "StochasticSimulator",
    "Dataset",
    "load_dataset_csv",
    "save_dataset_csv",
    "rs_simulator",
    "rs_analytic_pf",
    "rs_analytic_s",
    "rs_input_vector",
    "beam_simulator",
    "beam_analytic_pf",
    "beam_analytic_s",
    "beam_input_vector",
    "SyntheticWindConfig",
    "synthetic_wind_simulator",
    "moving_window_stats",
    "get_benchmark",
]


@dataclass(frozen=True)
class StochasticSimulator:
    """A stochastic limit-state evaluator, vectorized over design rows.

    ``core(x, z)`` is the underlying deterministic map; ``evaluate`` draws the
    latent variables internally from ``latent_rv``, while ``evaluate_at_latent``
    exposes the fixed-latent (trajectory) view when the latent vector is known.
    """

    name: str
    input_rv: RandomVector
    latent_rv: RandomVector | None
    core: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def dim(self) -> int:
        return self.input_rv.dimension

    def evaluate(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.latent_rv is None:
            raise NotImplementedError(f"{self.name}: no latent specification")
        z = _draw(self.latent_rv, x.shape[0], rng)
        return self.core(x, z)

    def evaluate_at_latent(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[0] == 1:
            z = np.broadcast_to(z, (x.shape[0], z.shape[1]))
        return self.core(x, z)

    @property
    def supports_fixed_latent(self) -> bool:
        return True


def _draw(rv: RandomVector, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(1e-15, 1 - 1e-15, size=(n, rv.dimension))
    out = np.empty_like(u)
    for j, m in enumerate(rv.marginals):
        out[:, j] = m.quantile(u[:, j])
    return out


# --- stochastic R-S problem ---------------------------------------------------

# (mean, std) rows: resistance R, demand S, latent Z1, Z2 — all lognormal.
_RS_MOMENTS = {"R": (5.0, 0.8), "S": (2.0, 0.6), "Z1": (1.0, 0.028), "Z2": (1.0, 0.096)}


def _rs_params() -> dict[str, tuple[float, float]]:
    # moment-derived log-parameters (the published table rounds these)
    return {k: lognormal_from_moments(*mv) for k, mv in _RS_MOMENTS.items()}


def rs_input_vector() -> RandomVector:
    p = _rs_params()
    return RandomVector(
        (
            MarginalSpec.lognormal(*p["R"], name="R"),
            MarginalSpec.lognormal(*p["S"], name="S"),
        )
    )


def _rs_core(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return x[:, 0] / z[:, 0] - x[:, 1] * z[:, 1]


def rs_simulator() -> StochasticSimulator:
    """g = R/Z1 - S*Z2 with lognormal inputs (R, S) and latent (Z1, Z2)."""
    p = _rs_params()
    latent = RandomVector(
        (
            MarginalSpec.lognormal(*p["Z1"], name="Z1"),
            MarginalSpec.lognormal(*p["Z2"], name="Z2"),
        )
    )
    return StochasticSimulator("rs", rs_input_vector(), latent, _rs_core)


def rs_analytic_pf() -> float:
    """Exact failure probability: ln g is a Gaussian combination."""
    p = _rs_params()
    num = p["R"][0] - p["Z1"][0] - p["S"][0] - p["Z2"][0]
    den = math.sqrt(p["R"][1] ** 2 + p["Z1"][1] ** 2 + p["S"][1] ** 2 + p["Z2"][1] ** 2)
    return float(special.ndtr(-num / den))


def rs_analytic_s(r, s):
    """Conditional failure probability at fixed (r, s), latent marginalized."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(r <= 0.0) or np.any(s <= 0.0):
        raise ValueError("r and s must be positive")
    p = _rs_params()
    num = np.log(r) - p["Z1"][0] - np.log(s) - p["Z2"][0]
    den = math.sqrt(p["Z1"][1] ** 2 + p["Z2"][1] ** 2)
    out = special.ndtr(-num / den)
    return float(out) if out.ndim == 0 else out


def rs_conditional_pf_fn() -> Callable[[np.ndarray], np.ndarray]:
    """Analytic s as a row-wise callable over the (R, S) design matrix."""

    def s_fn(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return rs_analytic_s(x[:, 0], x[:, 1])

    return s_fn


# --- simply supported beam ----------------------------------------------------

# (mean, std) in SI base units: load p [N/m], span L [m], width b [m],
# height h [m], and the latent Young's modulus E [Pa].
_BEAM_MOMENTS = {
    "p": (10_000.0, 2_000.0),
    "L": (5.0, 0.05),
    "b": (0.15, 7.5e-3),
    "h": (0.3, 15e-3),
    "E": (30e9, 4.5e9),
}


def _beam_params() -> dict[str, tuple[float, float]]:
    return {k: lognormal_from_moments(*mv) for k, mv in _BEAM_MOMENTS.items()}


def beam_input_vector() -> RandomVector:
    p = _beam_params()
    return RandomVector(
        tuple(MarginalSpec.lognormal(*p[k], name=k) for k in ("p", "L", "b", "h"))
    )


def _beam_core_t(t_lim: float, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    p, L, b, h = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    e = z[:, 0]
    return t_lim - 5.0 * p * L**4 / (32.0 * e * b * h**3)


@dataclass(frozen=True)
class _BeamCore:
    t_lim: float

    def __call__(self, x, z):
        return _beam_core_t(self.t_lim, x, z)


def beam_simulator(t_lim: float = 0.02) -> StochasticSimulator:
    """g = t_lim - 5 p L^4 / (32 E b h^3); E is the latent variable."""
    if t_lim <= 0.0:
        raise ValueError("t_lim must be positive")
    p = _beam_params()
    latent = RandomVector((MarginalSpec.lognormal(*p["E"], name="E"),))
    return StochasticSimulator("beam", beam_input_vector(), latent, _BeamCore(t_lim))


def beam_analytic_pf(t_lim: float = 0.02) -> float:
    if t_lim <= 0.0:
        raise ValueError("t_lim must be positive")
    p = _beam_params()
    num = (
        math.log(t_lim)
        - math.log(5.0 / 32.0)
        - p["p"][0]
        - 4.0 * p["L"][0]
        + p["E"][0]
        + p["b"][0]
        + 3.0 * p["h"][0]
    )
    den = math.sqrt(
        p["p"][1] ** 2
        + 16.0 * p["L"][1] ** 2
        + p["E"][1] ** 2
        + p["b"][1] ** 2
        + 9.0 * p["h"][1] ** 2
    )
    return float(special.ndtr(-num / den))


def beam_analytic_s(x, t_lim: float = 0.02):
    """Conditional failure probability at fixed (p, L, b, h), E marginalized."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    par = _beam_params()
    # failure iff E <= 5 p L^4 / (32 b h^3 t_lim)
    thresh = (
        math.log(5.0 / 32.0)
        + np.log(x[:, 0])
        + 4.0 * np.log(x[:, 1])
        - np.log(x[:, 2])
        - 3.0 * np.log(x[:, 3])
        - math.log(t_lim)
    )
    return special.ndtr((thresh - par["E"][0]) / par["E"][1])


def beam_conditional_pf_fn(t_lim: float = 0.02) -> Callable[[np.ndarray], np.ndarray]:
    def s_fn(x: np.ndarray) -> np.ndarray:
        return beam_analytic_s(x, t_lim)

    return s_fn


# --- synthetic heteroskedastic wind-like simulator -----------------------------


@dataclass(frozen=True)
class SyntheticWindConfig:
    """Closed-form mean/spread curves for the stand-in wind response.

    The mean saturates smoothly; the spread is non-monotone with a peak at
    ``spread_loc``. The noise is a zero-mean unit-variance shifted lognormal
    (right-skewed), so conditional mean and variance have exact expressions:
    E[y|u] = mean_fn(u), Var[y|u] = spread_fn(u)^2.
    """

    mean_max: float = 9000.0
    mean_loc: float = 10.0
    mean_scale: float = 2.0
    spread_base: float = 300.0
    spread_peak: float = 1200.0
    spread_loc: float = 14.0
    spread_width: float = 4.0
    skew_zeta: float = 0.4
    speed_mean: float = 10.0
    speed_cut_in: float = 3.0
    speed_cut_out: float = 25.0

    def mean_fn(self, u):
        u = np.asarray(u, dtype=float)
        return self.mean_max / (1.0 + np.exp(-(u - self.mean_loc) / self.mean_scale))

    def spread_fn(self, u):
        u = np.asarray(u, dtype=float)
        return self.spread_base + self.spread_peak * np.exp(
            -0.5 * ((u - self.spread_loc) / self.spread_width) ** 2
        )

    def noise_from_standard_normal(self, g):
        # shifted lognormal standardized to zero mean, unit variance
        z2 = self.skew_zeta**2
        return (np.exp(self.skew_zeta * np.asarray(g)) - math.exp(0.5 * z2)) / math.sqrt(
            math.exp(z2) * math.expm1(z2)
        )

    def __call__(self, x, z):
        u = np.atleast_2d(x)[:, 0]
        g = np.atleast_2d(z)[:, 0]
        return self.mean_fn(u) + self.spread_fn(u) * self.noise_from_standard_normal(g)


def synthetic_wind_simulator(config: SyntheticWindConfig | None = None) -> StochasticSimulator:
    config = config or SyntheticWindConfig()
    inputs = RandomVector(
        (
            MarginalSpec.truncated_rayleigh(
                config.speed_mean, config.speed_cut_in, config.speed_cut_out, name="U"
            ),
        )
    )
    latent = RandomVector((MarginalSpec.gaussian(0.0, 1.0, name="G"),))
    return StochasticSimulator("synthetic-wind", inputs, latent, config)


# --- moving-window empirical statistics ----------------------------------------


@dataclass(frozen=True)
class WindowStats:
    """Per-grid-point window statistics; entries with fewer than two points
    are flagged invalid and carry NaNs."""

    u: np.ndarray
    n_w: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    quantiles: dict[float, np.ndarray]
    valid: np.ndarray


def moving_window_stats(
    data: Dataset, delta: float, u_grid, quantile_levels=(0.025, 0.5, 0.975)
) -> WindowStats:
    """Empirical mean, unbiased variance and order-statistic quantiles over
    the windows [u - delta, u + delta].

    The alpha-quantile is the sorted value at index floor(alpha * N_w),
    1-based and clamped to [1, N_w].
    """
    if data.dim != 1:
        raise ValueError("moving-window statistics require a one-dimensional input")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    u_grid = np.asarray(u_grid, dtype=float)
    order = np.argsort(data.x[:, 0], kind="stable")
    xs = data.x[order, 0]
    ys = data.y[order]

    n_g = u_grid.size
    n_w = np.zeros(n_g, dtype=int)
    mean = np.full(n_g, np.nan)
    var = np.full(n_g, np.nan)
    quants = {float(a): np.full(n_g, np.nan) for a in quantile_levels}
    valid = np.zeros(n_g, dtype=bool)

    for i, u in enumerate(u_grid):
        lo = np.searchsorted(xs, u - delta, side="left")
        hi = np.searchsorted(xs, u + delta, side="right")
        w = ys[lo:hi]
        n_w[i] = w.size
        if w.size < 2:
            continue
        valid[i] = True
        mean[i] = w.mean()
        var[i] = w.var(ddof=1)
        ws = np.sort(w)
        for a in quants:
            idx = min(max(int(math.floor(a * w.size)), 1), w.size)
            quants[a][i] = ws[idx - 1]
    return WindowStats(u_grid, n_w, mean, var, quants, valid)


# --- registry -------------------------------------------------------------------

_ANALYTIC_PF = {
    "rs": rs_analytic_pf,
    "beam": beam_analytic_pf,
}


def get_benchmark(name: str) -> StochasticSimulator:
    if name == "rs":
        return rs_simulator()
    if name == "beam":
        return beam_simulator()
    if name == "synthetic-wind":
        return synthetic_wind_simulator()
    raise ValueError(f"unknown benchmark {name!r}; valid names: rs, beam, synthetic-wind")


def analytic_pf(name: str) -> float | None:
    fn = _ANALYTIC_PF.get(name)
    return fn() if fn else None


def analytic_s_fn(name: str) -> Callable[[np.ndarray], np.ndarray] | None:
    if name == "rs":
        return rs_conditional_pf_fn()
    if name == "beam":
        return beam_conditional_pf_fn()
    return None

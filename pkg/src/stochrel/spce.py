"""Stochastic polynomial chaos expansion: a polynomial surrogate over the
inputs plus one artificial latent variable, with additive Gaussian
regularization noise.

The response density is the convolution of the polynomial pushforward of the
latent variable with the Gaussian noise; a Gauss quadrature rule over the
latent variable turns it into a finite Gaussian mixture, which makes the
likelihood, CDF and conditional failure probability semi-analytical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .basis import BasisSpec, eval_univariate, gauss_nodes
from .data import Dataset
from .inputs import RandomVector
from .rng import derive_seed, make_rng

__all__ = ["SpceModel", "SpceFitConfig", "fit"]

_LATENT_STANDARD = {"gaussian": "hermite", "uniform": "legendre"}

_PRED_CHUNK = 100_000


@dataclass
class SpceFitConfig:
    """Grids and optimizer settings for the quadrature-likelihood fit.

    The noise level is tuned by k-fold cross-validation on a geometric grid
    scaled to the pooled response std; the basis candidate is selected by the
    same BIC-or-CV rule as the lambda emulator.
    """

    degrees: tuple[int, ...] = (1, 2, 3)
    q_grid: tuple[float, ...] = (1.0,)
    sigma_points: int = 10
    sigma_span: tuple[float, float] = (0.02, 1.0)  # fractions of std(y)
    cv_folds: int = 5
    n_quad: int = 100
    latent: str = "gaussian"
    selection: str = "bic"  # 'bic' or 'cv'
    max_iter: int = 500
    rel_tol: float = 1e-7
    cv_max_iter: int = 200
    cv_subsample_cap: int | None = 10_000
    seed: int = 0


@dataclass(frozen=True)
class SpceModel:
    """Fitted stochastic polynomial chaos expansion."""

    input_rv: RandomVector
    latent: str
    basis: BasisSpec  # over (inputs..., latent); latent coordinate last
    coeffs: np.ndarray
    sigma: float
    n_quad: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.latent not in _LATENT_STANDARD:
            raise ValueError(f"latent family must be one of {tuple(_LATENT_STANDARD)}")
        if not self.sigma > 0.0:
            raise ValueError("noise std sigma must be positive")
        if self.n_quad < 3:
            raise ValueError("n_quad must be >= 3")
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.basis.size != self.coeffs.size:
            raise ValueError("coefficient vector length must match basis size")
        if self.basis.dimension != self.input_rv.dimension + 1:
            raise ValueError("basis dimension must be input dimension + 1")

    @property
    def is_degenerate_in_latent(self) -> bool:
        """True when no basis term involves the latent coordinate."""
        return all(alpha[-1] == 0 for alpha in self.basis.indices)

    # --- prediction -------------------------------------------------------

    def _split_tables(self, x: np.ndarray, n_quad: int):
        """Input-side basis matrix and latent-node matrix for the mixture."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xs = self.input_rv.to_standard(x)
        nodes, weights = gauss_nodes(_LATENT_STANDARD[self.latent], n_quad)
        bx, h = _factor_tables(self.basis, xs, nodes)
        return bx, h, weights

    def node_means(self, x: np.ndarray, n_quad: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Mixture means m_j(x) per point, shape (n_points, n_quad), and weights."""
        nq = n_quad or self.n_quad
        bx, h, w = self._split_tables(x, nq)
        return (bx * self.coeffs) @ h.T, w

    def pdf(self, x, y):
        """Conditional response density at a single input point."""
        y = np.asarray(y, dtype=float)
        m, w = self.node_means(np.atleast_2d(x))
        r = (y[..., None] - m[0]) / self.sigma
        dens = (w * np.exp(-0.5 * r**2)).sum(axis=-1) / (self.sigma * math.sqrt(2 * math.pi))
        return float(dens) if dens.ndim == 0 else dens

    def cdf(self, x, y):
        """Conditional response CDF at a single input point."""
        y = np.asarray(y, dtype=float)
        m, w = self.node_means(np.atleast_2d(x))
        u = (w * special.ndtr((y[..., None] - m[0]) / self.sigma)).sum(axis=-1)
        return float(u) if u.ndim == 0 else u

    def conditional_pf(self, x, n_quad: int | None = None) -> float:
        return float(self.conditional_pf_many(np.atleast_2d(x), n_quad=n_quad)[0])

    def conditional_pf_many(self, x: np.ndarray, n_quad: int | None = None) -> np.ndarray:
        """s(x) = sum_j w_j Phi(-m_j(x)/sigma), vectorized over rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], _PRED_CHUNK):
            m, w = self.node_means(x[start : start + _PRED_CHUNK], n_quad)
            out[start : start + m.shape[0]] = special.ndtr(-m / self.sigma) @ w
        return out

    def sample(self, x, n: int, seed: int) -> np.ndarray:
        """n conditional draws at a single x: polynomial at a latent draw plus noise."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = make_rng(seed)
        z = rng.standard_normal(n) if self.latent == "gaussian" else rng.uniform(-1.0, 1.0, n)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xs = self.input_rv.to_standard(x)
        pts = np.column_stack([np.repeat(xs, n, axis=0), z])
        vals = self.basis.evaluate(pts) @ self.coeffs
        return vals + self.sigma * rng.standard_normal(n)

    def mean(self, x) -> float:
        m, w = self.node_means(np.atleast_2d(x))
        return float(m[0] @ w)

    def std(self, x) -> float:
        m, w = self.node_means(np.atleast_2d(x))
        mu = float(m[0] @ w)
        return math.sqrt(max(float((m[0] ** 2) @ w) - mu**2, 0.0) + self.sigma**2)

    def quantile(self, x, alpha: float) -> float:
        """Conditional quantile by bisection of the mixture CDF."""
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        m, w = self.node_means(np.atleast_2d(x))
        lo = float(m.min() - 10 * self.sigma)
        hi = float(m.max() + 10 * self.sigma)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float((w * special.ndtr((mid - m[0]) / self.sigma)).sum()) < alpha:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * max(1.0, abs(mid)):
                break
        return 0.5 * (lo + hi)

    def to_dict(self) -> dict:
        return {
            "input": self.input_rv.to_dict(),
            "latent": self.latent,
            "basis": self.basis.to_dict(),
            "coeffs": np.asarray(self.coeffs).tolist(),
            "sigma": self.sigma,
            "n_quad": self.n_quad,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpceModel":
        return cls(
            RandomVector.from_dict(d["input"]),
            d["latent"],
            BasisSpec.from_dict(d["basis"]),
            np.asarray(d["coeffs"], dtype=float),
            float(d["sigma"]),
            int(d["n_quad"]),
            d.get("meta", {}),
        )


def _factor_tables(basis: BasisSpec, xs: np.ndarray, z_nodes: np.ndarray):
    """Factorize the (x, z) basis: bx[i,a] over inputs, h[j,a] over latent nodes."""
    dim_in = basis.dimension - 1
    max_deg = basis.max_degree_per_dim()
    tables = [
        eval_univariate(basis.families[d], xs[:, d], max_deg[d]) for d in range(dim_in)
    ]
    z_table = eval_univariate(basis.families[-1], np.asarray(z_nodes, dtype=float), max_deg[-1])
    bx = np.ones((xs.shape[0], basis.size))
    h = np.empty((z_nodes.size, basis.size))
    for a, alpha in enumerate(basis.indices):
        for d in range(dim_in):
            if alpha[d]:
                bx[:, a] *= tables[d][:, alpha[d]]
        h[:, a] = z_table[:, alpha[-1]]
    return bx, h


# --- likelihood ----------------------------------------------------------------


class _MixtureLik:
    """Quadrature-mixture log-likelihood and its gradient in the coefficients."""

    def __init__(self, y, bx, h, weights, sigma):
        self.y = y
        self.bx = bx
        self.h = h
        self.logw = np.log(weights)
        self.sigma = sigma
        self.n = y.size

    def value_and_grad(self, c):
        m = (self.bx * c) @ self.h.T  # (n, nq)
        r = (self.y[:, None] - m) / self.sigma
        a = self.logw[None, :] - 0.5 * r**2
        amax = a.max(axis=1, keepdims=True)
        e = np.exp(a - amax)
        denom = e.sum(axis=1)
        ll = float(
            np.sum(amax[:, 0] + np.log(denom))
            - self.n * (math.log(self.sigma) + 0.5 * math.log(2 * math.pi))
        )
        post = e / denom[:, None]
        g = post * r / self.sigma  # d loglik_i / d m_ij
        grad = np.einsum("aj,ja->a", self.bx.T @ g, self.h)
        return ll, grad

    def neg(self, c):
        ll, grad = self.value_and_grad(c)
        return -ll / self.n, -grad / self.n

    def loglik(self, c):
        return self.value_and_grad(c)[0]


def _init_coeffs(basis: BasisSpec, bx, y, rng):
    """Least squares on the latent-degree-0 columns; tiny jitter elsewhere."""
    c = 1e-3 * rng.standard_normal(basis.size)
    det = [a for a, alpha in enumerate(basis.indices) if alpha[-1] == 0]
    sol, *_ = np.linalg.lstsq(bx[:, det], y, rcond=None)
    c[det] = sol
    return c


def _optimize_coeffs(lik, c0, max_iter, rel_tol):
    res = optimize.minimize(
        lik.neg,
        c0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": rel_tol, "gtol": 1e-10},
    )
    return res.x


def fit(data: Dataset, input_rv: RandomVector, config: SpceFitConfig | None = None) -> SpceModel:
    """Fit by quadrature-approximated maximum likelihood.

    Nested selection: for each basis candidate the noise std runs over the
    sigma grid with k-fold cross-validation (held-out log-likelihood); the
    winning sigma is refit on all data and candidates are then compared by
    the configured selection rule. For large designs the cross-validation
    stage runs on a capped random subsample; the final refit always uses
    every point.
    """
    config = config or SpceFitConfig()
    y = np.asarray(data.y, dtype=float)
    x = np.asarray(data.x, dtype=float)
    n = y.size
    sd_y = float(np.std(y, ddof=1)) if n > 1 else 0.0
    if not sd_y > 0.0:
        raise ValueError("responses are degenerate (zero variance)")

    families = input_rv.standard_families + (_LATENT_STANDARD[config.latent],)
    candidates = [
        (p, q)
        for q in config.q_grid
        for p in config.degrees
    ]
    largest = max(BasisSpec.build(families, p, q).size for p, q in candidates)
    if n < 10 * largest:
        raise ValueError(
            f"need at least 10 x (largest candidate size {largest}) = {10 * largest} points, got {n}"
        )

    xs = input_rv.to_standard(x)
    nodes, weights = gauss_nodes(_LATENT_STANDARD[config.latent], config.n_quad)
    lo, hi = config.sigma_span
    sigma_grid = np.geomspace(hi * sd_y, lo * sd_y, config.sigma_points)  # descending

    rng = make_rng(derive_seed(config.seed, "spce-fit"))
    cap = config.cv_subsample_cap
    if cap is not None and n > cap:
        cv_idx = make_rng(derive_seed(config.seed, "spce-cv-subsample")).choice(
            n, size=cap, replace=False
        )
    else:
        cv_idx = np.arange(n)
    folds = _fold_indices(cv_idx.size, config.cv_folds, derive_seed(config.seed, "spce-cv"))

    results = []
    for p, q in candidates:
        basis = BasisSpec.build(families, p, q)
        bx_cv, h = _factor_tables(basis, xs[cv_idx], nodes)
        y_cv = y[cv_idx]

        # sigma CV, warm-started along the descending grid per fold
        cv_table = np.zeros(sigma_grid.size)
        warm = [None] * len(folds)
        for si, sigma in enumerate(sigma_grid):
            held = 0.0
            for fi, test in enumerate(folds):
                train = np.ones(cv_idx.size, dtype=bool)
                train[test] = False
                lik_tr = _MixtureLik(y_cv[train], bx_cv[train], h, weights, sigma)
                c0 = (
                    warm[fi]
                    if warm[fi] is not None
                    else _init_coeffs(basis, bx_cv[train], y_cv[train], rng)
                )
                cx = _optimize_coeffs(lik_tr, c0, config.cv_max_iter, config.rel_tol)
                warm[fi] = cx
                lik_te = _MixtureLik(y_cv[test], bx_cv[test], h, weights, sigma)
                held += lik_te.loglik(cx)
            cv_table[si] = held / cv_idx.size
        best_si = int(np.argmax(cv_table))
        sigma = float(sigma_grid[best_si])

        # full-data refit at the winning sigma
        bx = _factor_tables(basis, xs, nodes)[0] if cv_idx.size != n else bx_cv
        lik = _MixtureLik(y, bx, h, weights, sigma)
        c0 = warm[0] if warm[0] is not None else _init_coeffs(basis, bx, y, rng)
        c_init = _init_coeffs(basis, bx, y, rng)
        ll_init = lik.loglik(c_init)
        cx = _optimize_coeffs(lik, c0, config.max_iter, config.rel_tol)
        if lik.loglik(cx) < ll_init:
            cx = _optimize_coeffs(lik, c_init, config.max_iter, config.rel_tol)
        ll = lik.loglik(cx)
        k = basis.size + 1  # coefficients plus the noise std
        results.append(
            {
                "candidate": {"p": p, "q": q},
                "basis": basis,
                "coeffs": cx,
                "sigma": sigma,
                "loglik": ll,
                "loglik_init": ll_init,
                "bic": -2.0 * ll + k * math.log(n),
                "cv_score": float(cv_table[best_si]),
                "sigma_table": [
                    {"sigma": float(s), "cv_loglik_per_point": float(v)}
                    for s, v in zip(sigma_grid, cv_table)
                ],
            }
        )

    if all(not np.isfinite(r["cv_score"]) for r in results):
        raise RuntimeError(
            f"all cross-validation scores are -inf; sigma grid {sigma_grid.tolist()}"
        )
    for r in results:
        r["score"] = r["cv_score"] if config.selection == "cv" else -r["bic"]
    winner = max(results, key=lambda r: r["score"])

    meta = {
        "selection": config.selection,
        "loglik": winner["loglik"],
        "loglik_init": winner["loglik_init"],
        "score": winner["score"],
        "cv_sigma_table": winner["sigma_table"],
        "selection_table": [
            {
                **r["candidate"],
                "sigma": r["sigma"],
                "loglik": r["loglik"],
                "bic": r["bic"],
                "cv_score": r["cv_score"],
                "score": r["score"],
            }
            for r in results
        ],
        "cv_subsampled": int(cv_idx.size) if cv_idx.size != n else None,
        "seed": config.seed,
        "n_train": int(n),
        "train_box": (x.min(axis=0).tolist(), x.max(axis=0).tolist()),
    }
    model = SpceModel(
        input_rv,
        config.latent,
        winner["basis"],
        winner["coeffs"],
        winner["sigma"],
        config.n_quad,
        meta,
    )
    if model.is_degenerate_in_latent:
        meta["latent_degenerate"] = True
    return model


def _fold_indices(n, k, seed):
    perm = make_rng(seed).permutation(n)
    return [perm[i::k] for i in range(k)]

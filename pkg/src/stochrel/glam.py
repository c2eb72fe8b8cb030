"""Generalized lambda model: a stochastic emulator mapping inputs to the four
parameters of a generalized lambda distribution through polynomial expansions.

The scale parameter's expansion lives in log space so predictions stay
positive. Fitting maximizes the exact response likelihood over all expansion
coefficients jointly (replication-free data), or uses the two-step local-fit
plus regression procedure when replications are available.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import gld
from .basis import BasisSpec
from .data import Dataset
from .inputs import RandomVector
from .rng import derive_seed, make_rng

__all__ = ["GlamModel", "GlamFitConfig", "fit", "fit_replicated"]

# Likelihood floor for responses outside the predicted support: log(1e-10)
# minus the squared distance to the boundary in interquartile-range units.
_FLOOR_LOG = math.log(1e-10)
# Soft penalty bounds keeping the optimizer out of numerically absurd regions.
_SHAPE_BOUND = 8.0
_LOG_SCALE_BOUND = 20.0
_PENALTY_WEIGHT = 100.0

_PRED_CHUNK = 200_000


@dataclass
class GlamFitConfig:
    """Candidate grids and optimizer settings for the maximum likelihood fit.

    Degree candidates are tied in pairs: one grid for the location/scale
    expansions, one for the two shape expansions.
    """

    degrees_loc_scale: tuple[int, ...] = (0, 1, 2, 3)
    degrees_shape: tuple[int, ...] = (0, 1, 2)
    q_grid: tuple[float, ...] = (0.7, 0.8, 0.9, 1.0)
    selection: str = "bic"  # 'bic' or 'cv'
    cv_folds: int = 5
    restarts: int = 3
    max_iter: int = 2000
    rel_tol: float = 1e-6
    local_mle: bool = False  # MLE polish of local fits in the replicated path
    seed: int = 0


@dataclass(frozen=True)
class GlamModel:
    """Fitted generalized lambda model."""

    input_rv: RandomVector
    bases: tuple[BasisSpec, BasisSpec, BasisSpec, BasisSpec]
    coeffs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for b, c in zip(self.bases, self.coeffs):
            if b.size != len(c):
                raise ValueError("coefficient vector length must match basis size")

    # --- prediction -------------------------------------------------------

    def lambdas(self, x: np.ndarray) -> np.ndarray:
        """Predicted (n, 4) lambda matrix at input points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_domain(x)
        xs = self.input_rv.to_standard(x)
        cols = []
        for l, (b, c) in enumerate(zip(self.bases, self.coeffs)):
            eta = b.evaluate(xs) @ c
            cols.append(np.exp(eta) if l == 1 else eta)
        return np.column_stack(cols)

    def lambda_at(self, x) -> gld.GldParams:
        lam = self.lambdas(np.atleast_2d(x))[0]
        return gld.GldParams(*lam)

    def conditional_pf(self, x) -> float:
        """s(x) = P(Y <= 0 | x), by numerical inversion of the quantile function."""
        return float(self.conditional_pf_many(np.atleast_2d(x))[0])

    def conditional_pf_many(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], _PRED_CHUNK):
            lam = self.lambdas(x[start : start + _PRED_CHUNK])
            out[start : start + lam.shape[0]] = gld.cdf_arr(
                0.0, lam[:, 0], lam[:, 1], lam[:, 2], lam[:, 3]
            )
        return out

    def sample(self, x, n: int, seed: int) -> np.ndarray:
        """n draws from the predicted conditional distribution at a single x."""
        p = self.lambda_at(x)
        return gld.sample(p, n, seed)

    def quantile(self, x, alpha: float) -> float:
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        return float(gld.quantile(alpha, self.lambda_at(x)))

    def _check_domain(self, x: np.ndarray):
        box = self.meta.get("train_box")
        if box is None:
            return
        lo = np.asarray(box[0])
        hi = np.asarray(box[1])
        if np.any(x < lo) or np.any(x > hi):
            warnings.warn("input outside the training design box; extrapolating", stacklevel=3)

    def to_dict(self) -> dict:
        return {
            "input": self.input_rv.to_dict(),
            "bases": [b.to_dict() for b in self.bases],
            "coeffs": [np.asarray(c).tolist() for c in self.coeffs],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlamModel":
        return cls(
            RandomVector.from_dict(d["input"]),
            tuple(BasisSpec.from_dict(b) for b in d["bases"]),
            tuple(np.asarray(c, dtype=float) for c in d["coeffs"]),
            d.get("meta", {}),
        )


# --- likelihood machinery ---------------------------------------------------


class _Objective:
    """Negative penalized log-likelihood over the packed coefficient vector.

    Keeps the previous CDF inversion as a warm start; consecutive optimizer
    evaluations move the lambda fields slowly, so the solve usually needs a
    handful of Newton iterations instead of a full bisection.
    """

    def __init__(self, y, b12, b34):
        self.y = y
        self.b12 = b12
        self.b34 = b34
        self.n12 = b12.shape[1]
        self.n34 = b34.shape[1]
        self.size = 2 * self.n12 + 2 * self.n34
        self._u_warm = None

    def unpack(self, c):
        n12, n34 = self.n12, self.n34
        return (
            c[:n12],
            c[n12 : 2 * n12],
            c[2 * n12 : 2 * n12 + n34],
            c[2 * n12 + n34 :],
        )

    def lambdas(self, c):
        c1, c2, c3, c4 = self.unpack(c)
        eta2 = np.clip(self.b12 @ c2, -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND)
        return self.b12 @ c1, np.exp(eta2), self.b34 @ c3, self.b34 @ c4

    def _loglik_given(self, l1, l2, l3, l4, warm):
        if not (
            np.all(np.isfinite(l1)) and np.all(np.isfinite(l3)) and np.all(np.isfinite(l4))
        ):
            return -np.inf
        y = self.y
        lower, upper = gld.support_arr(l1, l2, l3, l4)
        inside = (y > lower) & (y < upper)
        u0 = self._u_warm if (warm and self._u_warm is not None) else None
        u = gld.cdf_arr(y, l1, l2, l3, l4, u0=u0, max_iter=60)
        if warm:
            self._u_warm = u
        uc = np.clip(u, 1e-15, 1.0 - 1e-15)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            terms = np.log(l2) - np.logaddexp(
                (l3 - 1.0) * np.log(uc), (l4 - 1.0) * np.log1p(-uc)
            )
        out = ~inside
        if np.any(out):
            q25 = gld.quantile_arr(0.25, l1, l2, l3, l4)
            q75 = gld.quantile_arr(0.75, l1, l2, l3, l4)
            iqr = np.maximum(q75 - q25, 1e-12)
            d = np.where(y <= lower, lower - y, y - upper) / iqr
            terms = np.where(out, _FLOOR_LOG - np.square(d), terms)
        return float(np.sum(terms))

    def loglik(self, c, warm=True):
        """Pure (unpenalized) log-likelihood with the out-of-support floor."""
        return self._loglik_given(*self.lambdas(c), warm)

    @staticmethod
    def _penalty_given(l2, l3, l4):
        eta2 = np.log(l2)
        p = 0.0
        for v, bound in ((l3, _SHAPE_BOUND), (l4, _SHAPE_BOUND), (eta2, _LOG_SCALE_BOUND - 1)):
            excess = np.abs(v) - bound
            p += float(np.sum(np.square(excess[excess > 0.0])))
        return _PENALTY_WEIGHT * p

    def __call__(self, c):
        l1, l2, l3, l4 = self.lambdas(c)
        ll = self._loglik_given(l1, l2, l3, l4, warm=True)
        if not np.isfinite(ll):
            return 1e12
        return -ll + self._penalty_given(l2, l3, l4)


def _constant_start(obj: _Objective, p0: gld.GldParams) -> np.ndarray:
    c = np.zeros(obj.size)
    c[0] = p0.lam1
    c[obj.n12] = math.log(p0.lam2)
    c[2 * obj.n12] = p0.lam3
    c[2 * obj.n12 + obj.n34] = p0.lam4
    return c


def _moment_informed_start(obj: _Objective, y: np.ndarray) -> np.ndarray:
    """Location from a mean regression, log-scale from a residual-spread
    regression, near-Gaussian constant shapes. Cheap but close to the optimum
    for unimodal responses, which keeps the simplex search short."""
    c = np.zeros(obj.size)
    c1, *_ = np.linalg.lstsq(obj.b12, y, rcond=None)
    resid = y - obj.b12 @ c1
    # E[log e^2] = log sigma^2 + psi(1/2) + log 2; the constant corrects the bias
    log_e2 = np.log(np.square(resid) + 1e-300)
    cs, *_ = np.linalg.lstsq(obj.b12, 0.5 * log_e2, rcond=None)
    shape0 = 0.1349  # GLD shape pair closely matching a Gaussian
    m1, unit_sd, _, _ = gld._unit_shape_stats(shape0, shape0)
    c2 = -cs
    c2[0] += math.log(unit_sd) - 0.635181422
    c[: obj.n12] = c1
    c[obj.n12 : 2 * obj.n12] = np.clip(c2, -_LOG_SCALE_BOUND + 1, _LOG_SCALE_BOUND - 1)
    c[2 * obj.n12] = shape0
    c[2 * obj.n12 + obj.n34] = shape0
    return c


def _map_coeffs(src_basis: BasisSpec, src: np.ndarray, dst_basis: BasisSpec) -> np.ndarray:
    out = np.zeros(dst_basis.size)
    lookup = {alpha: j for j, alpha in enumerate(dst_basis.indices)}
    for alpha, v in zip(src_basis.indices, src):
        j = lookup.get(alpha)
        if j is not None:
            out[j] = v
    return out


def _minimize(obj, x0, max_iter, rel_tol):
    f0 = obj(x0)
    res = optimize.minimize(
        obj,
        x0,
        method="Nelder-Mead",
        options={
            "maxiter": max_iter,
            "maxfev": 2 * max_iter,
            "fatol": rel_tol * max(1.0, abs(f0)),
            "xatol": 1e-6,
            "adaptive": True,
        },
    )
    return res.x, res.fun, res.nit


def _candidate_grid(config: GlamFitConfig):
    grid = []
    for q in config.q_grid:
        for p34 in config.degrees_shape:
            for p12 in config.degrees_loc_scale:
                grid.append((p12, p34, q))
    return grid


def fit(data: Dataset, input_rv: RandomVector, config: GlamFitConfig | None = None) -> GlamModel:
    """Replication-free maximum likelihood fit with degree/q-norm adaptivity.

    Every candidate on the grid is fitted by simplex search with restarts
    (constant pooled initialization, a moment-informed one, and a warm start
    from the previous candidate). The winner is picked by the selection rule
    (BIC by default, maximized as -BIC).
    """
    config = config or GlamFitConfig()
    y = np.asarray(data.y, dtype=float)
    x = np.asarray(data.x, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("responses must be finite")
    n = y.size
    families = input_rv.standard_families
    grid = _candidate_grid(config)
    sizes = {
        cand: 2 * BasisSpec.build(families, cand[0], cand[2]).size
        + 2 * BasisSpec.build(families, cand[1], cand[2]).size
        for cand in grid
    }
    largest = max(sizes.values())
    if n < 10 * largest:
        raise ValueError(
            f"need at least 10 x (largest candidate size {largest}) = {10 * largest} points, got {n}"
        )

    xs = input_rv.to_standard(x)
    p0, p0_info = gld.fit_moments(y, return_info=True)

    rng = make_rng(derive_seed(config.seed, "glam-fit"))
    results = []
    prev = None  # (bases, coeffs) of the previous candidate, for warm starts
    row_key, row_best_bic, row_strikes = None, np.inf, 0
    for cand in grid:
        p12, p34, q = cand
        # degree adaptivity: within a (shape-degree, q) row, stop growing the
        # location/scale degree after two consecutive BIC regressions
        if (p34, q) != row_key:
            row_key, row_best_bic, row_strikes = (p34, q), np.inf, 0
        if row_strikes >= 2:
            continue
        b12 = BasisSpec.build(families, p12, q)
        b34 = BasisSpec.build(families, p34, q)
        obj = _Objective(y, b12.evaluate(xs), b34.evaluate(xs))

        start0 = _constant_start(obj, p0)
        ll_init = obj.loglik(start0, warm=False)
        starts = [_moment_informed_start(obj, y)]
        if prev is not None:
            starts.append(
                np.concatenate(
                    [
                        _map_coeffs(prev[0][0], prev[1][0], b12),
                        _map_coeffs(prev[0][1], prev[1][1], b12),
                        _map_coeffs(prev[0][2], prev[1][2], b34),
                        _map_coeffs(prev[0][3], prev[1][3], b34),
                    ]
                )
            )
        while len(starts) < config.restarts:
            starts.append(starts[0] + 0.05 * rng.standard_normal(obj.size))

        best_c, best_f = None, np.inf
        iters = 0
        for s in starts:
            cx, fx, nit = _minimize(obj, s, config.max_iter, config.rel_tol)
            iters += nit
            if fx < best_f:
                best_c, best_f = cx, fx
        if obj.loglik(best_c, warm=False) < ll_init:
            # guarantee ascent over the constant initialization
            cx, fx, nit = _minimize(obj, start0, config.max_iter, config.rel_tol)
            iters += nit
            if fx < best_f:
                best_c, best_f = cx, fx
        ll = obj.loglik(best_c, warm=False)
        k = obj.size
        bic = -2.0 * ll + k * math.log(n)
        results.append(
            {
                "candidate": {"p_loc_scale": p12, "p_shape": p34, "q": q},
                "k": k,
                "loglik": ll,
                "loglik_init": ll_init,
                "bic": bic,
                "iterations": iters,
                "coeffs": obj.unpack(best_c),
                "bases": (b12, b12, b34, b34),
            }
        )
        prev = (results[-1]["bases"], results[-1]["coeffs"])
        if bic < row_best_bic:
            row_best_bic, row_strikes = bic, 0
        else:
            row_strikes += 1

    improved = [r for r in results if r["loglik"] >= r["loglik_init"] - 1e-9]
    if not improved:
        raise RuntimeError(
            "no candidate improved on its constant initialization; "
            f"diagnostics: {[{k: r[k] for k in ('candidate', 'loglik', 'loglik_init')} for r in results]}"
        )

    if config.selection == "cv":
        _score_candidates_cv(improved, y, xs, config)
        for r in improved:
            r["score"] = r["cv_score"]
    else:
        for r in improved:
            r["score"] = -r["bic"]
    winner = max(improved, key=lambda r: r["score"])

    meta = {
        "method": "mle",
        "selection": config.selection,
        "loglik": winner["loglik"],
        "loglik_init": winner["loglik_init"],
        "score": winner["score"],
        "selection_table": [
            {
                **r["candidate"],
                "k": r["k"],
                "loglik": r["loglik"],
                "bic": r["bic"],
                "score": r["score"],
                "iterations": r["iterations"],
            }
            for r in improved
        ],
        "pooled_init_matched": p0_info["matched"],
        "seed": config.seed,
        "n_train": int(n),
        "train_box": (x.min(axis=0).tolist(), x.max(axis=0).tolist()),
    }
    return GlamModel(input_rv, winner["bases"], tuple(winner["coeffs"]), meta)


def _score_candidates_cv(results, y, xs, config: GlamFitConfig):
    """Held-out log-likelihood per candidate, warm-started from the full fit."""
    n = y.size
    folds = _fold_indices(n, config.cv_folds, derive_seed(config.seed, "glam-cv"))
    for r in results:
        b12, _, b34, _ = r["bases"]
        full = np.concatenate(r["coeffs"])
        score = 0.0
        for test_idx in folds:
            train = np.ones(n, dtype=bool)
            train[test_idx] = False
            obj_tr = _Objective(y[train], b12.evaluate(xs[train]), b34.evaluate(xs[train]))
            cx, _, _ = _minimize(obj_tr, full, config.max_iter // 4, config.rel_tol)
            obj_te = _Objective(y[test_idx], b12.evaluate(xs[test_idx]), b34.evaluate(xs[test_idx]))
            score += obj_te.loglik(cx, warm=False)
        r["cv_score"] = score / n


def _fold_indices(n, k, seed):
    perm = make_rng(seed).permutation(n)
    return [perm[i::k] for i in range(k)]


def fit_replicated(
    data: Dataset, input_rv: RandomVector, config: GlamFitConfig | None = None
) -> GlamModel:
    """Two-step fit for replicated designs: local moment fits per design
    point, then least-squares regression of each lambda function (log space
    for the scale). Degree candidates are compared by regression BIC."""
    config = config or GlamFitConfig()
    groups = data.replication_groups()
    if groups is None:
        raise ValueError("replicated fit requires a dataset with a replication layout")
    r_min = min(len(ys) for _, ys in groups)
    if r_min < 8:
        raise ValueError(f"replicated fit needs R >= 8 replications per point, got {r_min}")

    pts, lams = [], []
    dropped = 0
    for x_i, ys in groups:
        try:
            p_i, info = gld.fit_moments(ys, return_info=True)
            if config.local_mle:
                p_i = _polish_local_mle(ys, p_i)
        except ValueError:
            dropped += 1
            continue
        pts.append(x_i)
        lams.append([p_i.lam1, math.log(p_i.lam2), p_i.lam3, p_i.lam4])
    if dropped:
        warnings.warn(f"dropped {dropped} design point(s) with degenerate local fits")
    if dropped > 0.2 * len(groups):
        raise RuntimeError(
            f"{dropped}/{len(groups)} local fits degenerate; replicated fit aborted"
        )

    x = np.asarray(pts, dtype=float)
    lam = np.asarray(lams, dtype=float)
    xs = input_rv.to_standard(x)
    families = input_rv.standard_families
    n = x.shape[0]

    best = None
    for cand in _candidate_grid(config):
        p12, p34, q = cand
        b12 = BasisSpec.build(families, p12, q)
        b34 = BasisSpec.build(families, p34, q)
        if b12.size > n or b34.size > n:
            continue
        m12 = b12.evaluate(xs)
        m34 = b34.evaluate(xs)
        coeffs, bic = [], 0.0
        for l in range(4):
            mat = m12 if l < 2 else m34
            c, *_ = np.linalg.lstsq(mat, lam[:, l], rcond=None)
            rss = float(np.sum(np.square(lam[:, l] - mat @ c)))
            bic += n * math.log(max(rss, 1e-300) / n) + mat.shape[1] * math.log(n)
            coeffs.append(c)
        if best is None or bic < best["bic"]:
            best = {
                "bic": bic,
                "bases": (b12, b12, b34, b34),
                "coeffs": tuple(coeffs),
                "candidate": {"p_loc_scale": p12, "p_shape": p34, "q": q},
            }
    if best is None:
        raise RuntimeError("no candidate basis is small enough for the design size")

    meta = {
        "method": "replicated-two-step",
        "candidate": best["candidate"],
        "n_design_points": int(n),
        "n_dropped": int(dropped),
        "seed": config.seed,
        "train_box": (x.min(axis=0).tolist(), x.max(axis=0).tolist()),
    }
    return GlamModel(input_rv, best["bases"], best["coeffs"], meta)


def _polish_local_mle(ys, p0: gld.GldParams) -> gld.GldParams:
    y = np.asarray(ys, dtype=float)

    def nll(v):
        l1, log_l2, l3, l4 = v
        lp = gld.logpdf_arr(y, l1, math.exp(log_l2), l3, l4)
        if not np.all(np.isfinite(lp)):
            return 1e12
        return -float(np.sum(lp))

    res = optimize.minimize(
        nll,
        [p0.lam1, math.log(p0.lam2), p0.lam3, p0.lam4],
        method="Nelder-Mead",
        options={"maxiter": 400, "adaptive": True},
    )
    l1, log_l2, l3, l4 = res.x
    return gld.GldParams(l1, math.exp(log_l2), l3, l4)

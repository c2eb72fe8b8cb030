"""Failure-probability estimators and their variance diagnostics.

Four estimator routes: single-loop Monte Carlo over the joint input/latent
randomness, averaging a conditional failure probability function, the
double-loop replicated scheme, and the fixed-latent trajectory scheme. A
repetition-study harness reruns any of them with independently derived seeds
and reports medians and coefficients of variation.
"""

from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .inputs import RandomVector
from .rng import derive_seed, make_rng

__all__ = [
    "PfEstimate",
    "estimate_pf_single_loop",
    "estimate_pf_expected_s",
    "estimate_pf_double_loop",
    "estimate_pf_trajectories",
    "variance_decomposition",
    "repetition_study",
    "StudyResult",
    "wilson_interval",
]

_Z95 = 1.959963984540054


class UnsupportedOperationError(RuntimeError):
    """The simulator lacks a capability the estimator needs."""


@dataclass(frozen=True)
class PfEstimate:
    """A failure-probability estimate with its variance characterization.

    ``cov`` is std/mean and is NaN (with a flag) when pf = 0.
    """

    pf: float
    variance: float
    cov: float
    n_evals: int
    kind: str
    seed: int
    ci: tuple[float, float] | None = None
    flags: dict = field(default_factory=dict)

    @staticmethod
    def build(pf, variance, n_evals, kind, seed, ci=None, flags=None):
        flags = dict(flags or {})
        if pf > 0.0:
            cov = math.sqrt(max(variance, 0.0)) / pf
        else:
            cov = math.nan
            flags["cov_undefined"] = True
        return PfEstimate(float(pf), float(variance), cov, int(n_evals), kind, int(seed), ci, flags)


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = successes / n
    denom = 1.0 + z**2 / n
    center = (phat + z**2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def _check_finite(y: np.ndarray, what: str):
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise ValueError(f"{what} returned non-finite value at index {int(bad[0])}")


def estimate_pf_single_loop(sim, rv: RandomVector, n: int, seed: int) -> PfEstimate:
    """Plain MCS over joint draws: mean failure indicator, variance pf(1-pf)/N."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = rv.mc_sample(n, derive_seed(seed, "single-loop/x"))
    y = sim.evaluate(x, make_rng(derive_seed(seed, "single-loop/z")))
    _check_finite(y, "simulator")
    k = int(np.count_nonzero(y <= 0.0))
    pf = k / n
    return PfEstimate.build(
        pf, pf * (1.0 - pf) / n, n, "single-loop", seed, ci=wilson_interval(k, n)
    )


def estimate_pf_expected_s(
    s_fn: Callable[[np.ndarray], np.ndarray], rv: RandomVector, n: int, seed: int
) -> PfEstimate:
    """Average of the conditional failure probability over input draws."""
    if n < 2:
        raise ValueError("n must be >= 2")
    x = rv.mc_sample(n, derive_seed(seed, "expected-s/x"))
    s = np.asarray(s_fn(x), dtype=float).ravel()
    if s.size != n:
        raise ValueError("conditional failure probability function must map rows to values")
    if np.any((s < -1e-12) | (s > 1.0 + 1e-12)):
        raise ValueError("conditional failure probabilities must lie in [0, 1]")
    s = np.clip(s, 0.0, 1.0)
    pf = float(s.mean())
    variance = float(s.var(ddof=1)) / n
    half = _Z95 * math.sqrt(variance)
    ci = (max(pf - half, 0.0), min(pf + half, 1.0))
    return PfEstimate.build(pf, variance, n, "expected-s", seed, ci=ci)


def estimate_pf_double_loop(sim, rv_x: RandomVector, n: int, r: int, seed: int) -> PfEstimate:
    """Replication-based estimator: R latent draws per input point.

    With r = 1 and the same seed this reproduces the single-loop draws
    exactly (the latent stream is consumed in the same order).
    """
    if n < 1 or r < 1:
        raise ValueError("n and r must be >= 1")
    x = rv_x.mc_sample(n, derive_seed(seed, "single-loop/x"))
    rng = make_rng(derive_seed(seed, "single-loop/z"))
    s_bar = np.zeros(n)
    for _ in range(r):
        y = sim.evaluate(x, rng)
        _check_finite(y, "simulator")
        s_bar += (y <= 0.0)
    s_bar /= r
    pf = float(s_bar.mean())
    variance = float(s_bar.var(ddof=1)) / n if n > 1 else 0.0
    k = int(round(pf * n * r))
    return PfEstimate.build(
        pf, variance, n * r, "double-loop", seed, ci=wilson_interval(k, n * r)
    )


def estimate_pf_trajectories(
    sim, rv_x: RandomVector, n_traj: int, n_x: int, seed: int
) -> PfEstimate:
    """Average over fixed-latent trajectories of the per-trajectory failure rate."""
    if n_traj < 1 or n_x < 1:
        raise ValueError("n_traj and n_x must be >= 1")
    if getattr(sim, "latent_rv", None) is None or not getattr(
        sim, "supports_fixed_latent", False
    ):
        raise UnsupportedOperationError(
            f"simulator {getattr(sim, 'name', sim)!r} does not expose fixed-latent evaluation"
        )
    p_t = np.empty(n_traj)
    for t in range(n_traj):
        z = sim.latent_rv.mc_sample(1, derive_seed(seed, "trajectory/z", t))
        x = rv_x.mc_sample(n_x, derive_seed(seed, "trajectory/x", t))
        y = sim.evaluate_at_latent(x, z)
        _check_finite(y, "simulator")
        p_t[t] = np.mean(y <= 0.0)
    pf = float(p_t.mean())
    variance = float(p_t.var(ddof=1)) / n_traj if n_traj > 1 else 0.0
    return PfEstimate.build(pf, variance, n_traj * n_x, "trajectories", seed)


def variance_decomposition(
    s_fn: Callable[[np.ndarray], np.ndarray], rv: RandomVector, n: int, seed: int
) -> dict:
    """Monte Carlo estimates of the two terms of the total-variance identity
    Var(indicator) = E[s(1-s)] + Var(s), from one shared sample."""
    if n < 2:
        raise ValueError("n must be >= 2")
    x = rv.mc_sample(n, derive_seed(seed, "var-decomp/x"))
    s = np.clip(np.asarray(s_fn(x), dtype=float).ravel(), 0.0, 1.0)
    e_term = float(np.mean(s * (1.0 - s)))
    v_term = float(s.var(ddof=1))
    return {"e_s_one_minus_s": e_term, "var_s": v_term, "sum": e_term + v_term}


# --- repetition studies ---------------------------------------------------------


@dataclass(frozen=True)
class StudyResult:
    """Raw per-repetition rows plus per-size summary statistics."""

    rows: list[dict]
    summary: list[dict]
    meta: dict

    def to_csv(self, path) -> None:
        cols = ["benchmark", "estimator", "ed_size", "repetition", "seed", "status", "pf",
                "variance", "cov", "n_evals"]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=cols, extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    def summary_dict(self) -> dict:
        return {"summary": self.summary, "meta": self.meta}


def _summarize(pfs: list[float]) -> dict:
    out = {"n_ok": len(pfs)}
    if not pfs:
        return {**out, "median_pf": math.nan, "cov": math.nan}
    med = statistics.median(pfs)
    mean = statistics.fmean(pfs)
    std = statistics.stdev(pfs) if len(pfs) > 1 else 0.0
    out["median_pf"] = med
    out["mean_pf"] = mean
    if mean > 0.0:
        out["cov"] = std / mean
    else:
        out["cov"] = math.nan
        out["cov_undefined_zero_mean"] = True
    if len(pfs) < 2:
        out["cov"] = math.nan
        out["cov_undefined_single_rep"] = True
    return out


def repetition_study(
    pipeline: Callable[[int, int], PfEstimate],
    ed_sizes,
    n_rep: int,
    seed: int,
    label: str = "study",
    benchmark: str = "",
    estimator: str = "",
    threads: int = 1,
) -> StudyResult:
    """Run ``pipeline(ed_size, seed)`` n_rep times per design size.

    Seeds are derived per (size, repetition) from the master seed, so results
    do not depend on scheduling. Failed repetitions are recorded and excluded
    from the summary statistics.
    """
    if n_rep < 1:
        raise ValueError("n_rep must be >= 1")
    tasks = []
    for n_ed in ed_sizes:
        for rep in range(n_rep):
            tasks.append((int(n_ed), rep, derive_seed(seed, f"{label}/n={n_ed}", rep)))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_task, [(pipeline, t) for t in tasks]))
    else:
        outcomes = [_run_task((pipeline, t)) for t in tasks]

    rows = []
    for (n_ed, rep, rep_seed), outcome in zip(tasks, outcomes):
        row = {
            "benchmark": benchmark,
            "estimator": estimator,
            "ed_size": n_ed,
            "repetition": rep,
            "seed": rep_seed,
        }
        if isinstance(outcome, PfEstimate):
            row.update(
                status="ok",
                pf=outcome.pf,
                variance=outcome.variance,
                cov=outcome.cov,
                n_evals=outcome.n_evals,
            )
        else:
            row.update(status=f"failed: {outcome}", pf=math.nan, variance=math.nan,
                       cov=math.nan, n_evals=0)
        rows.append(row)

    summary = []
    for n_ed in ed_sizes:
        ok = [r["pf"] for r in rows if r["ed_size"] == n_ed and r["status"] == "ok"]
        failed = sum(1 for r in rows if r["ed_size"] == n_ed and r["status"] != "ok")
        summary.append({"ed_size": int(n_ed), **_summarize(ok), "n_failed": failed})
    meta = {
        "seed": seed,
        "n_rep": n_rep,
        "label": label,
        "benchmark": benchmark,
        "estimator": estimator,
        # box-plot convention used downstream for plotting these rows
        "outlier_rule": "points beyond +-2.7 standard deviations from the mean",
    }
    return StudyResult(rows, summary, meta)


def _run_task(packed):
    pipeline, (n_ed, _rep, rep_seed) = packed
    try:
        return pipeline(n_ed, rep_seed)
    except Exception as e:  # recorded, not raised: one bad repetition must not kill a study
        return f"{type(e).__name__}: {e}"

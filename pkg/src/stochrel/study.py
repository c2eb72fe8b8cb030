"""End-to-end pipelines behind the benchmark studies: draw a space-filling
experimental design, run the simulator once per point, fit an emulator, and
estimate the failure probability as the average conditional failure
probability over a large Monte Carlo input sample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import benchmarks, glam, spce
from .data import Dataset
from .glam import GlamFitConfig
from .reliability import (
    PfEstimate,
    StudyResult,
    estimate_pf_expected_s,
    estimate_pf_single_loop,
    repetition_study,
)
from .rng import derive_seed, make_rng
from .spce import SpceFitConfig

__all__ = [
    "default_glam_config",
    "default_spce_config",
    "EmulatorPipeline",
    "McsPipeline",
    "run_benchmark_study",
]

# Published per-benchmark degree ranges. The q grid runs 0.7..1.0 in steps
# of 0.1 except for one-dimensional inputs, where hyperbolic truncation is
# irrelevant.
_Q_FULL = (0.7, 0.8, 0.9, 1.0)

_GLAM_DEFAULTS = {
    "rs": GlamFitConfig(degrees_loc_scale=(0, 1, 2, 3), degrees_shape=(0, 1, 2), q_grid=_Q_FULL),
    "beam": GlamFitConfig(degrees_loc_scale=(1, 2, 3, 4), degrees_shape=(0, 1, 2), q_grid=_Q_FULL),
    "synthetic-wind": GlamFitConfig(
        degrees_loc_scale=tuple(range(1, 11)), degrees_shape=(0, 1, 2, 3), q_grid=(1.0,)
    ),
}

_SPCE_DEFAULTS = {
    "rs": SpceFitConfig(degrees=(0, 1, 2, 3, 4), q_grid=_Q_FULL),
    "beam": SpceFitConfig(degrees=(1, 2, 3, 4, 5, 6, 7), q_grid=_Q_FULL),
    "synthetic-wind": SpceFitConfig(degrees=tuple(range(1, 11)), q_grid=(1.0,)),
}


def default_glam_config(benchmark: str) -> GlamFitConfig:
    return _GLAM_DEFAULTS.get(benchmark, GlamFitConfig())


def default_spce_config(benchmark: str) -> SpceFitConfig:
    return _SPCE_DEFAULTS.get(benchmark, SpceFitConfig())


def simulate_design(sim, n_ed: int, seed: int) -> Dataset:
    """Latin hypercube design plus one simulator response per point."""
    x = sim.input_rv.lhs_sample(n_ed, derive_seed(seed, "ed/design"))
    y = sim.evaluate(x, make_rng(derive_seed(seed, "ed/latent")))
    return Dataset(x, y, provenance={"benchmark": sim.name, "seed": seed})


@dataclass(frozen=True)
class EmulatorPipeline:
    """One full emulator-based estimation: design, fit, expected-s estimate."""

    benchmark: str
    emulator: str  # 'glam' or 'spce'
    n_mcs: int = 1_000_000
    glam_config: GlamFitConfig | None = None
    spce_config: SpceFitConfig | None = None

    def fit_model(self, n_ed: int, seed: int):
        sim = benchmarks.get_benchmark(self.benchmark)
        data = simulate_design(sim, n_ed, seed)
        if self.emulator == "glam":
            config = self.glam_config or default_glam_config(self.benchmark)
            return glam.fit(data, sim.input_rv, replace(config, seed=derive_seed(seed, "fit")))
        if self.emulator == "spce":
            config = self.spce_config or default_spce_config(self.benchmark)
            return spce.fit(data, sim.input_rv, replace(config, seed=derive_seed(seed, "fit")))
        raise ValueError(f"unknown emulator {self.emulator!r}; expected 'glam' or 'spce'")

    def __call__(self, n_ed: int, seed: int) -> PfEstimate:
        sim = benchmarks.get_benchmark(self.benchmark)
        model = self.fit_model(n_ed, seed)
        est = estimate_pf_expected_s(
            model.conditional_pf_many, sim.input_rv, self.n_mcs, derive_seed(seed, "pf-mcs")
        )
        flags = dict(est.flags)
        flags["ed_size"] = n_ed
        flags["emulator"] = self.emulator
        return replace(est, flags=flags)


@dataclass(frozen=True)
class McsPipeline:
    """Direct single-loop MCS using the same budget as the experimental design."""

    benchmark: str

    def __call__(self, n_ed: int, seed: int) -> PfEstimate:
        sim = benchmarks.get_benchmark(self.benchmark)
        return estimate_pf_single_loop(sim, sim.input_rv, n_ed, seed)


def run_benchmark_study(
    benchmark: str,
    estimator: str,
    ed_sizes,
    n_rep: int,
    seed: int,
    n_mcs: int = 1_000_000,
    glam_config: GlamFitConfig | None = None,
    spce_config: SpceFitConfig | None = None,
    threads: int = 1,
) -> StudyResult:
    """Repetition study for one benchmark and one estimator kind."""
    benchmarks.get_benchmark(benchmark)  # validate the name early
    if estimator == "mcs":
        pipeline = McsPipeline(benchmark)
    else:
        pipeline = EmulatorPipeline(
            benchmark, estimator, n_mcs, glam_config=glam_config, spce_config=spce_config
        )
    result = repetition_study(
        pipeline,
        ed_sizes,
        n_rep,
        seed,
        label=f"{benchmark}/{estimator}",
        benchmark=benchmark,
        estimator=estimator,
        threads=threads,
    )
    ref = benchmarks.analytic_pf(benchmark)
    if ref is not None:
        result.meta["analytic_pf"] = ref
    result.meta["n_mcs"] = n_mcs
    return result

"""Synthetic markets, solver benchmarks and the estimator consistency experiment."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import shocks as sh
from .assignment import aggregate, solve_refined
from .estimation import EstimationError, ObservedMatching, SmmOptions, nrmse, run_smm_rroa
from .market import MarketInstance, Population, SurplusBasis, TypeSpace, build_surplus, make_instance
from .rroa import run_rroa

log = logging.getLogger(__name__)

BENCH_COLUMNS = ["xcount", "ycount", "S", "seed", "method", "ms", "objective", "iters"]
ESTIMATION_COLUMNS = ["S", "seed", "spec", "nrmse", "status"]
AGREEMENT_TOL = 1e-6


class BenchError(Exception):
    pass


@dataclass
class ExperimentConfig:
    x_count: int = 15
    y_count: int = 10
    scale: int = 1
    women_per_scale: int = 400
    men_per_scale: int = 300
    surplus_std: float = 5.0
    shock_std: float = 0.1
    k_count: int = 5
    base_seed: int = 0
    n_seeds: int = 10
    methods: tuple[str, ...] = ("rroa", "direct")
    backend: str = "simplex"
    scales: tuple[int, ...] = (1,)
    specs: tuple[str, ...] = ("normal", "gumbel")
    parallel_seeds: int = 1

    def __post_init__(self):
        for s in (self.scale, *self.scales):
            if s < 1 or s & (s - 1):
                raise ValueError(f"scale must be a power of two, got {s}")
        if min(self.x_count, self.y_count, self.women_per_scale, self.men_per_scale) < 1:
            raise ValueError("sizes must be positive")
        unknown = set(self.methods) - {"rroa", "direct"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        unknown = set(self.specs) - {"normal", "gumbel"}
        if unknown:
            raise ValueError(f"unknown estimation specs {sorted(unknown)}")

    @property
    def n_women(self) -> int:
        return self.women_per_scale * self.scale

    @property
    def n_men(self) -> int:
        return self.men_per_scale * self.scale

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + t for t in range(self.n_seeds)]

    def at_scale(self, scale: int) -> "ExperimentConfig":
        return replace(self, scale=scale)

    @classmethod
    def full_scale(cls, **kw) -> "ExperimentConfig":
        """Population sizes up to S=256 and 100 repetitions."""
        kw.setdefault("scales", (1, 2, 4, 8, 16, 32, 64, 128, 256))
        kw.setdefault("n_seeds", 100)
        return cls(**kw)


@dataclass
class BenchRecord:
    xcount: int
    ycount: int
    S: int
    seed: Optional[int]
    method: str
    ms: float
    objective: float
    iters: int

    def row(self) -> list:
        return [self.xcount, self.ycount, self.S, "" if self.seed is None else self.seed, self.method,
                f"{self.ms:.17g}", f"{self.objective:.17g}", self.iters]


@dataclass
class EstimationRecord:
    S: int
    seed: Optional[int]
    spec: str
    nrmse: float
    status: str
    lambda_hat: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self) -> list:
        return [self.S, "" if self.seed is None else self.seed, self.spec, f"{self.nrmse:.17g}", self.status]


def _population(config: ExperimentConfig, rng: np.random.Generator) -> Population:
    types = TypeSpace(config.x_count, config.y_count)
    return Population(types, rng.integers(0, config.x_count, config.n_women),
                      rng.integers(0, config.y_count, config.n_men))


def generate_instance(config: ExperimentConfig, seed: int) -> MarketInstance:
    """Uniform random types, Phi_xy ~ N(0, surplus_std^2), shocks ~ N(0, shock_std^2)."""
    rng = np.random.default_rng(seed)
    pop = _population(config, rng)
    phi = rng.normal(0.0, config.surplus_std, (config.x_count, config.y_count))
    return make_instance(pop, phi, sh.IidNormal(config.shock_std), seed)


def generate_estimation_truth(config: ExperimentConfig, seed: int):
    """``(basis, lambda_true, observed)``: phi and lambda iid N(0, 1), matches from the optimal assignment."""
    rng = np.random.default_rng(seed)
    pop = _population(config, rng)
    basis = SurplusBasis(rng.standard_normal((config.x_count, config.y_count, config.k_count)))
    lam = rng.standard_normal(config.k_count)
    inst = make_instance(pop, build_surplus(basis, lam), sh.IidNormal(config.shock_std), seed)
    pi, _, _ = run_rroa(inst, backend=config.backend)
    return basis, lam, ObservedMatching(aggregate(pi, pop))


def estimation_shock_model(config: ExperimentConfig, spec: str) -> sh.ShockModel:
    if spec == "normal":
        return sh.IidNormal(config.shock_std)
    if spec == "gumbel":
        loc, scale = sh.gumbel_matched_moments(config.shock_std)
        return sh.IidGumbel(scale, loc)
    raise ValueError(f"unknown estimation spec {spec!r}")


def estimation_seed(seed: int) -> int:
    """Seed of the re-drawn estimation shocks; distinct from the stream that generated the data."""
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


# -- benchmarks ------------------------------------------------------------------

def _timed_solve(instance: MarketInstance, method: str, backend: str):
    t0 = time.perf_counter()
    if method == "rroa":
        _, _, trace = run_rroa(instance, backend=backend)
        obj, iters = trace.objective, trace.iterations
    else:
        _, _, obj = solve_refined(instance, backend=backend)
        iters = 1
    return 1e3 * (time.perf_counter() - t0), obj, iters


def bench_cell(config: ExperimentConfig) -> list[BenchRecord]:
    """One (|X|, |Y|, S) cell: per-seed, per-method rows plus a mean-speedup summary row."""
    out = []
    speedups = []
    for seed in config.seeds:
        inst = generate_instance(config, seed)
        results = {}
        for method in config.methods:
            ms, obj, iters = _timed_solve(inst, method, config.backend)
            results[method] = (ms, obj)
            out.append(BenchRecord(config.x_count, config.y_count, config.scale, seed, method, ms, obj, iters))
        objs = [o for _, o in results.values()]
        ref = max(abs(o) for o in objs)
        if max(objs) - min(objs) > AGREEMENT_TOL * max(1.0, ref):
            raise BenchError(f"objectives disagree on seed {seed}: {results}")
        if "rroa" in results and "direct" in results:
            speedups.append(results["direct"][0] / results["rroa"][0])
    if speedups:
        out.append(BenchRecord(config.x_count, config.y_count, config.scale, None, "mean_speedup",
                               float(np.mean(speedups)), float("nan"), len(speedups)))
    return out


def warm_up(backend: str = "simplex") -> None:
    """Load the compiled simplex kernels so the first timed solve does not pay for it."""
    cfg = ExperimentConfig(x_count=2, y_count=2, women_per_scale=4, men_per_scale=3)
    solve_refined(generate_instance(cfg, 0), backend=backend)


def bench_solve(config: ExperimentConfig) -> list[BenchRecord]:
    warm_up(config.backend)
    records = []
    for s in config.scales:
        records += bench_cell(config.at_scale(s))
    return records


# -- consistency -------------------------------------------------------------------

def estimate_seed(config: ExperimentConfig, seed: int) -> list[EstimationRecord]:
    """Truth at ``seed``, then one estimate per spec from fresh shocks on the same simulated agents."""
    basis, lam, observed = generate_estimation_truth(config, seed)
    pop = observed.population(TypeSpace(config.x_count, config.y_count))
    out = []
    for spec in config.specs:
        panel = sh.sample_shocks(estimation_shock_model(config, spec), pop, estimation_seed(seed))
        try:
            res = run_smm_rroa(panel, pop, basis, observed, SmmOptions(backend=config.backend))
        except EstimationError as exc:
            log.warning("S=%d seed=%d %s: %s", config.scale, seed, spec, exc)
            out.append(EstimationRecord(config.scale, seed, spec, float("nan"), "failed"))
            continue
        out.append(EstimationRecord(config.scale, seed, spec, nrmse(res.lambda_hat, lam), "ok", res.lambda_hat))
    return out


def _estimate_task(args):
    return estimate_seed(*args)


def summarize(records: Sequence[EstimationRecord]) -> list[EstimationRecord]:
    """Per (S, spec): mean and median NRMSE over successful seeds; status counts failures."""
    out = []
    keys = sorted({(r.S, r.spec) for r in records if r.seed is not None})
    for S, spec in keys:
        vals = np.array([r.nrmse for r in records if r.S == S and r.spec == spec and r.status == "ok"])
        failed = sum(1 for r in records if r.S == S and r.spec == spec and r.status != "ok")
        status = f"ok={vals.size};failed={failed}"
        for stat, fn in (("mean", np.mean), ("median", np.median)):
            out.append(EstimationRecord(S, None, f"{spec}:{stat}", float(fn(vals)) if vals.size else float("nan"),
                                        status))
    return out


def consistency_experiment(config: ExperimentConfig, summary: bool = True) -> list[EstimationRecord]:
    tasks = [(config.at_scale(s), seed) for s in config.scales for seed in config.seeds]
    if config.parallel_seeds > 1:
        with ProcessPoolExecutor(config.parallel_seeds) as pool:
            parts = list(pool.map(_estimate_task, tasks))
    else:
        parts = [estimate_seed(*t) for t in tasks]
    records = [r for part in parts for r in part]
    return records + summarize(records) if summary else records


# -- output ------------------------------------------------------------------------

def write_csv(path, columns: Sequence[str], records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in records:
            w.writerow(r.row())


def write_bench(path, records: Sequence[BenchRecord]) -> None:
    write_csv(path, BENCH_COLUMNS, records)


def write_estimation(path, records: Sequence[EstimationRecord]) -> None:
    write_csv(path, ESTIMATION_COLUMNS, records)

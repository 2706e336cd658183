"""Monte Carlo experiment runner and result tabulation.

For every scenario cell the harness runs R replications of the full
pipeline (generate, per-context estimate, both heterogeneity tests,
trend test) and tabulates the fraction of replications in which each
test rejected at the chosen alpha level.

Determinism contract: replication r of any cell draws its data from
streams keyed by (master_seed, r, context index) only, and results are
reduced in replication order, so the tabulated numbers are identical
for any worker count. A consequence of the keying is that cells sharing
a master seed also share their underlying draws (common random numbers
across effect shapes and grids), mirroring how simulation studies
usually recycle noise across scenarios.

Replications that fail (non-convergence of an iterative fit) are
excluded from the denominators and counted; more than 1% failures in a
cell aborts the experiment.
"""

from __future__ import annotations

import json
import multiprocessing
import platform
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .datamodel import partition_by_context
from .errors import ConfigError, CtxMRError, ExperimentError
from .heterogeneity import q_first_order, q_modified_second_order
from .ivcore import context_iv
from .metareg import trend_test
from .regress import RegressionSpec
from .simulate import EffectFunction, SimScenario, alpha_grid, generate_dataset

_EXPOSURE_SPEC = RegressionSpec(response="exposure", predictor="instrument")
_OUTCOME_SPEC = RegressionSpec(response="outcome", predictor="instrument")

_MAX_FAILURE_RATE = 0.01

CSV_COLUMNS = (
    "scenario",
    "grid",
    "rej_q_first",
    "rej_q_mod2",
    "rej_trend",
    "mc_se_q_first",
    "mc_se_q_mod2",
    "mc_se_trend",
    "replications_completed",
    "failures",
)


@dataclass(frozen=True)
class ExperimentPlan:
    scenarios: tuple[SimScenario, ...]
    replications: int = 1000
    alpha_level: float = 0.05
    master_seed: int = 1
    workers: int = 1
    tau2_method: str = "reml"

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("experiment plan has no scenarios")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if not 0.0 < self.alpha_level < 1.0:
            raise ConfigError(f"alpha level must be in (0, 1), got {self.alpha_level}")
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class CellResult:
    scenario: str
    grid: str
    rej_q_first: float
    rej_q_mod2: float
    rej_trend: float
    mc_se_q_first: float
    mc_se_q_mod2: float
    mc_se_trend: float
    replications_completed: int
    failures: int


@dataclass(frozen=True)
class ReplicationOutcome:
    replication: int
    p_q_first: float = float("nan")
    p_q_mod2: float = float("nan")
    p_trend: float = float("nan")
    error: str | None = None


def default_plan(
    replications: int = 1000,
    master_seed: int = 1,
    workers: int = 1,
    tau2_method: str = "reml",
) -> ExperimentPlan:
    """The six-cell design: three effect shapes by two alpha grids."""
    scenarios = [
        SimScenario(effect=effect, alphas=alpha_grid(grid_name, 10))
        for grid_name in ("larger", "smaller")
        for effect in (
            EffectFunction.linear(),
            EffectFunction.quadratic(),
            EffectFunction.threshold(),
        )
    ]
    return ExperimentPlan(
        scenarios=tuple(scenarios),
        replications=replications,
        master_seed=master_seed,
        workers=workers,
        tau2_method=tau2_method,
    )


def run_replication(
    scenario: SimScenario, master_seed: int, replication: int, tau2_method: str = "reml"
) -> ReplicationOutcome:
    """One generate-estimate-test pass; failures come back as a record."""
    try:
        ds = generate_dataset(scenario, master_seed, replication)
        part = partition_by_context(ds, min_n=2)
        results = [
            context_iv(label, sub, _EXPOSURE_SPEC, _OUTCOME_SPEC)
            for label, sub in part.contexts
        ]
        p1 = q_first_order(results).p
        p2 = q_modified_second_order(results).p
        p3 = trend_test(results, method=tau2_method).slope_p
    except (CtxMRError, np.linalg.LinAlgError) as err:
        return ReplicationOutcome(replication=replication, error=str(err))
    return ReplicationOutcome(
        replication=replication, p_q_first=p1, p_q_mod2=p2, p_trend=p3
    )


def _worker(task) -> ReplicationOutcome:
    scenario, master_seed, replication, tau2_method = task
    return run_replication(scenario, master_seed, replication, tau2_method)


def _run_cell(scenario: SimScenario, plan: ExperimentPlan) -> list[ReplicationOutcome]:
    tasks = [
        (scenario, plan.master_seed, rep, plan.tau2_method)
        for rep in range(plan.replications)
    ]
    if plan.workers == 1:
        return [_worker(task) for task in tasks]
    chunk = max(1, plan.replications // (plan.workers * 8))
    with multiprocessing.Pool(processes=plan.workers) as pool:
        return list(pool.imap(_worker, tasks, chunksize=chunk))


def _summarize_cell(
    scenario: SimScenario, outcomes: list[ReplicationOutcome], alpha: float
) -> CellResult:
    failures = [o for o in outcomes if o.error is not None]
    completed = [o for o in outcomes if o.error is None]
    if len(failures) > _MAX_FAILURE_RATE * len(outcomes):
        examples = "; ".join(o.error for o in failures[:3])
        raise ExperimentError(
            f"cell {scenario.effect.kind}/{scenario.grid_name}: "
            f"{len(failures)}/{len(outcomes)} replications failed ({examples})"
        )
    r = len(completed)

    def rate_and_se(pvals):
        rate = float(np.mean([p < alpha for p in pvals])) if r else float("nan")
        return rate, float(np.sqrt(rate * (1.0 - rate) / r)) if r else float("nan")

    rej1, se1 = rate_and_se([o.p_q_first for o in completed])
    rej2, se2 = rate_and_se([o.p_q_mod2 for o in completed])
    rej3, se3 = rate_and_se([o.p_trend for o in completed])
    return CellResult(
        scenario=scenario.effect.kind,
        grid=scenario.grid_name,
        rej_q_first=rej1,
        rej_q_mod2=rej2,
        rej_trend=rej3,
        mc_se_q_first=se1,
        mc_se_q_mod2=se2,
        mc_se_trend=se3,
        replications_completed=r,
        failures=len(failures),
    )


def run_experiment(plan: ExperimentPlan) -> list[CellResult]:
    """Run every cell of the plan; deterministic given the master seed."""
    results = []
    for scenario in plan.scenarios:
        outcomes = _run_cell(scenario, plan)
        outcomes.sort(key=lambda o: o.replication)
        results.append(_summarize_cell(scenario, outcomes, plan.alpha_level))
    return results


@dataclass(frozen=True)
class TableFormats:
    text: str
    csv: str
    json: str


def emit_table(results: list[CellResult]) -> TableFormats:
    """Render cell results as aligned text, full-precision CSV, and JSON."""
    csv_lines = [",".join(CSV_COLUMNS)]
    for cell in results:
        row = asdict(cell)
        csv_lines.append(
            ",".join(
                repr(value) if isinstance(value, float) else str(value)
                for value in (row[col] for col in CSV_COLUMNS)
            )
        )
    csv_text = "\n".join(csv_lines) + "\n"

    header = (
        f"{'scenario':<10} {'grid':<8} {'q_first':>8} {'q_mod2':>8} "
        f"{'trend':>8} {'completed':>10} {'failures':>9}"
    )
    lines = [header, "-" * len(header)]
    for cell in results:
        lines.append(
            f"{cell.scenario:<10} {cell.grid:<8} "
            f"{cell.rej_q_first:>7.1%} {cell.rej_q_mod2:>7.1%} {cell.rej_trend:>7.1%} "
            f"{cell.replications_completed:>10d} {cell.failures:>9d}"
        )
    text = "\n".join(lines) + "\n"

    json_text = json.dumps({"cells": [asdict(c) for c in results]}, indent=2) + "\n"
    return TableFormats(text=text, csv=csv_text, json=json_text)


def plan_manifest(plan: ExperimentPlan, results: list[CellResult], wall_seconds: float) -> dict:
    """Reproducibility record written next to the result tables."""
    return {
        "plan": {
            "replications": plan.replications,
            "alpha_level": plan.alpha_level,
            "master_seed": plan.master_seed,
            "workers": plan.workers,
            "tau2_method": plan.tau2_method,
            "scenarios": [
                {
                    "effect": asdict(s.effect),
                    "alphas": list(s.alphas),
                    "per_context_n": s.per_context_n,
                    "instrument_effect": s.instrument_effect,
                    "maf": s.maf,
                }
                for s in plan.scenarios
            ],
        },
        "results": [asdict(c) for c in results],
        "versions": {
            "ctxmr": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "wall_seconds": wall_seconds,
    }

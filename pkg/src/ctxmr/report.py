"""Full analysis pipeline and the report object it produces.

``analyze_dataset`` runs the whole context-stratified analysis on
individual-level data: partition by context, per-context ratio
estimates, both heterogeneity tests, and the trend meta-regression.
``analyze_summary_results`` does the same from pre-computed per-context
summary statistics. Both return an :class:`AnalysisReport`, which
serializes losslessly to JSON and renders to human-readable text (3
significant figures) and machine CSV (full precision).

Scaling: the report's per-context columns keep the raw instrument
associations (bx, by) while the MR estimate columns are expressed per
``scale`` exposure units. Heterogeneity statistics are invariant to this
choice; the trend slope is in scaled units.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

from .datamodel import Dataset, partition_by_context
from .errors import ConfigError, CtxMRError, IngestError
from .heterogeneity import (
    HeterogeneityResult,
    q_first_order,
    q_modified_second_order,
)
from .ivcore import ContextResult, context_iv, rescale_estimate
from .metareg import MetaRegResult, trend_test
from .regress import RegressionSpec

#: Two-sided 95% normal quantile used for confidence intervals.
DEFAULT_CI_Z = 1.959964

SUMMARY_CSV_COLUMNS = ("context", "bx", "bx_se", "by", "by_se", "xmean", "n")

CONTEXT_CSV_COLUMNS = (
    "context",
    "n",
    "exposure_mean",
    "bx",
    "bx_se",
    "by",
    "by_se",
    "estimate",
    "se",
    "lo95",
    "hi95",
    "odds_ratio",
)


@dataclass(frozen=True)
class AnalysisOptions:
    """Knobs of the analysis pipeline, echoed into the report."""

    family: str = "linear"
    scale: float = 1.0
    min_context_n: int = 100
    tau2_method: str = "reml"
    weak_t_threshold: float = 2.0
    ci_z: float = DEFAULT_CI_Z

    def __post_init__(self):
        if self.family not in ("linear", "logistic"):
            raise ConfigError(f"unknown outcome family {self.family!r}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if not self.ci_z > 0:
            raise ConfigError(f"confidence z must be positive, got {self.ci_z}")


@dataclass(frozen=True)
class ContextRow:
    context: str
    n: int
    exposure_mean: float
    bx: float
    bx_se: float
    by: float
    by_se: float
    estimate: float
    se: float
    lo95: float
    hi95: float
    odds_ratio: float | None = None


@dataclass(frozen=True)
class AnalysisReport:
    """Everything the pipeline produced; ``trend`` is None when K < 3."""

    contexts: tuple[ContextRow, ...]
    heterogeneity_first_order: HeterogeneityResult
    heterogeneity_modified: HeterogeneityResult
    trend: MetaRegResult | None
    config: dict
    warnings: tuple[str, ...] = ()


def _build_rows(
    raw: list[ContextResult], scaled: list[ContextResult], options: AnalysisOptions
) -> tuple[ContextRow, ...]:
    rows = []
    for r, s in zip(raw, scaled):
        lo = s.ratio - options.ci_z * s.ratio_se_first_order
        hi = s.ratio + options.ci_z * s.ratio_se_first_order
        odds = None
        if options.family == "logistic":
            odds = math.exp(s.ratio)
        rows.append(
            ContextRow(
                context=r.context,
                n=r.summary.n,
                exposure_mean=r.summary.exposure_mean,
                bx=r.bx.beta,
                bx_se=r.bx.se,
                by=r.by.beta,
                by_se=r.by.se,
                estimate=s.ratio,
                se=s.ratio_se_first_order,
                lo95=lo,
                hi95=hi,
                odds_ratio=odds,
            )
        )
    return tuple(rows)


def _assemble(
    raw: list[ContextResult],
    options: AnalysisOptions,
    config: dict,
    warnings: list[str],
) -> AnalysisReport:
    if options.scale != 1.0:
        scaled = [rescale_estimate(r, options.scale) for r in raw]
    else:
        scaled = raw
    het_first = q_first_order(scaled)
    het_modified = q_modified_second_order(scaled)
    if len(scaled) >= 3:
        trend = trend_test(scaled, method=options.tau2_method)
    else:
        trend = None
        warnings.append("trend test skipped: needs at least 3 contexts")
    for r in raw:
        warnings.extend(r.warnings)
    return AnalysisReport(
        contexts=_build_rows(raw, scaled, options),
        heterogeneity_first_order=het_first,
        heterogeneity_modified=het_modified,
        trend=trend,
        config=config,
        warnings=tuple(warnings),
    )


def analyze_dataset(ds: Dataset, options: AnalysisOptions = AnalysisOptions()) -> AnalysisReport:
    """Context-stratified MR on individual-level data."""
    if options.family == "logistic" and ds.outcome_family != "logistic":
        raise ConfigError(
            "options request a logistic outcome but the dataset was loaded "
            f"as {ds.outcome_family!r}"
        )
    part = partition_by_context(ds, min_n=options.min_context_n)
    exposure_spec = RegressionSpec(
        response="exposure", predictor="instrument", covariates=ds.covariate_names
    )
    outcome_spec = RegressionSpec(
        response="outcome",
        predictor="instrument",
        covariates=ds.covariate_names,
        family=options.family,
    )
    raw = [
        context_iv(label, sub, exposure_spec, outcome_spec, options.weak_t_threshold)
        for label, sub in part.contexts
    ]
    warnings = [
        f"context {e.context!r} excluded: {e.reason} (n={e.n})" for e in part.excluded
    ]
    if ds.n_dropped:
        warnings.append(f"{ds.n_dropped} input rows dropped during ingestion")
    config = {
        "mode": "individual",
        "family": options.family,
        "scale": options.scale,
        "min_context_n": options.min_context_n,
        "tau2_method": options.tau2_method,
        "weak_t_threshold": options.weak_t_threshold,
        "ci_z": options.ci_z,
        "covariates": list(ds.covariate_names),
        "n_records": len(ds),
        "n_dropped": ds.n_dropped,
    }
    return _assemble(raw, options, config, warnings)


def analyze_summary_results(
    results: list[ContextResult], options: AnalysisOptions = AnalysisOptions()
) -> AnalysisReport:
    """Heterogeneity and trend from per-context summary statistics alone."""
    raw = sorted(results, key=lambda r: (r.summary.exposure_mean, r.context))
    config = {
        "mode": "summary",
        "family": options.family,
        "scale": options.scale,
        "tau2_method": options.tau2_method,
        "ci_z": options.ci_z,
        "n_contexts": len(raw),
    }
    return _assemble(raw, options, config, [])


def load_summary_csv(path) -> list[ContextResult]:
    """Per-context summary statistics from CSV.

    The header must carry the columns context, bx, bx_se, by, by_se,
    xmean, n (any order). Malformed rows are reported with their line
    number.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file; a header row is required") from None
        missing = [c for c in SUMMARY_CSV_COLUMNS if c not in header]
        if missing:
            raise IngestError(f"{path}: missing summary columns {missing}")
        at = {c: header.index(c) for c in SUMMARY_CSV_COLUMNS}
        results = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                n_float = float(row[at["n"]])
                if n_float != int(n_float):
                    raise ValueError(f"n must be an integer, got {row[at['n']]!r}")
                result = ContextResult.from_summary_stats(
                    context=row[at["context"]].strip(),
                    bx=float(row[at["bx"]]),
                    bx_se=float(row[at["bx_se"]]),
                    by=float(row[at["by"]]),
                    by_se=float(row[at["by_se"]]),
                    exposure_mean=float(row[at["xmean"]]),
                    n=int(n_float),
                )
            except (ValueError, IndexError) as err:
                raise IngestError(str(err), line=lineno) from None
            except CtxMRError as err:
                raise IngestError(str(err), line=lineno) from None
            results.append(result)
    if len(results) < 2:
        raise IngestError(f"{path}: need at least 2 summary rows, got {len(results)}")
    return results


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def report_to_dict(report: AnalysisReport) -> dict:
    return {
        "contexts": [asdict(row) for row in report.contexts],
        "heterogeneity_first_order": asdict(report.heterogeneity_first_order),
        "heterogeneity_modified": asdict(report.heterogeneity_modified),
        "trend": None if report.trend is None else asdict(report.trend),
        "config": report.config,
        "warnings": list(report.warnings),
    }


def report_from_dict(payload: dict) -> AnalysisReport:
    def het(d):
        d = dict(d)
        d["excluded"] = tuple(d.get("excluded", ()))
        return HeterogeneityResult(**d)

    trend = payload["trend"]
    return AnalysisReport(
        contexts=tuple(ContextRow(**row) for row in payload["contexts"]),
        heterogeneity_first_order=het(payload["heterogeneity_first_order"]),
        heterogeneity_modified=het(payload["heterogeneity_modified"]),
        trend=None if trend is None else MetaRegResult(**trend),
        config=payload["config"],
        warnings=tuple(payload["warnings"]),
    )


def report_to_json(report: AnalysisReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def report_from_json(text: str) -> AnalysisReport:
    return report_from_dict(json.loads(text))


def _fmt(value) -> str:
    if value is None:
        return "NA"
    return f"{value:.3g}"


def render_text(report: AnalysisReport) -> str:
    """Human-readable report; numbers shown at 3 significant figures."""
    out = io.StringIO()
    fam = report.config.get("family", "linear")
    scale = report.config.get("scale", 1.0)
    out.write("Context-stratified MR analysis\n")
    out.write(f"  outcome family: {fam}; estimates per {_fmt(scale)} exposure units\n\n")
    header = (
        f"{'context':<16} {'n':>8} {'x_mean':>8} {'bx':>9} {'bx_se':>9} "
        f"{'by':>9} {'by_se':>9} {'estimate':>9} {'se':>9} {'ci95':>19}"
    )
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")
    for row in report.contexts:
        ci = f"[{_fmt(row.lo95)}, {_fmt(row.hi95)}]"
        out.write(
            f"{row.context:<16} {row.n:>8d} {_fmt(row.exposure_mean):>8} "
            f"{_fmt(row.bx):>9} {_fmt(row.bx_se):>9} {_fmt(row.by):>9} "
            f"{_fmt(row.by_se):>9} {_fmt(row.estimate):>9} {_fmt(row.se):>9} {ci:>19}\n"
        )
    out.write("\n")
    for het, label in (
        (report.heterogeneity_first_order, "first-order"),
        (report.heterogeneity_modified, "modified second-order"),
    ):
        out.write(
            f"heterogeneity Q ({label}): Q = {_fmt(het.q)}, df = {het.df}, "
            f"p = {_fmt(het.p)}\n"
        )
    t = report.trend
    if t is None:
        out.write("trend: not computed (needs at least 3 contexts)\n")
    else:
        out.write(
            f"trend: slope = {_fmt(t.slope)} (se {_fmt(t.slope_se)}), "
            f"tau2 = {_fmt(t.tau2)} ({t.tau2_method}), p = {_fmt(t.slope_p)}\n"
        )
    if report.warnings:
        out.write("\nwarnings:\n")
        for note in report.warnings:
            out.write(f"  - {note}\n")
    return out.getvalue()


def context_table_csv(report: AnalysisReport) -> str:
    """Per-context table as CSV at full precision."""
    lines = [",".join(CONTEXT_CSV_COLUMNS)]
    for row in report.contexts:
        d = asdict(row)
        cells = []
        for col in CONTEXT_CSV_COLUMNS:
            v = d[col]
            if v is None:
                cells.append("NA")
            elif isinstance(v, float):
                cells.append(repr(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def plot_data(report: AnalysisReport) -> tuple[str, str]:
    """Scatter-plot data: (unscaled associations, scaled MR estimates).

    Both CSVs carry context, xmean, estimate, lo95, hi95; rows are
    ordered by mean exposure. The unscaled file shows the raw
    instrument-outcome association with its own confidence interval;
    the scaled file shows the MR estimate columns from the report.
    """
    z = float(report.config.get("ci_z", DEFAULT_CI_Z))
    header = "context,xmean,estimate,lo95,hi95"
    unscaled = [header]
    scaled = [header]
    for row in report.contexts:
        unscaled.append(
            ",".join(
                (
                    row.context,
                    repr(row.exposure_mean),
                    repr(row.by),
                    repr(row.by - z * row.by_se),
                    repr(row.by + z * row.by_se),
                )
            )
        )
        scaled.append(
            ",".join(
                (
                    row.context,
                    repr(row.exposure_mean),
                    repr(row.estimate),
                    repr(row.lo95),
                    repr(row.hi95),
                )
            )
        )
    return "\n".join(unscaled) + "\n", "\n".join(scaled) + "\n"

"""Individual-level dataset: CSV ingestion, context partition, summaries.

The dataset is stored columnwise (numpy arrays) for speed; a record view
is available for row-oriented access. Ingestion is complete-case: rows
with a missing or unparseable mapped field are dropped and counted, so
downstream fits always see finite values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .errors import ConfigError, DomainError, IngestError

#: Cell contents treated as missing in input CSVs.
MISSING_TOKENS = frozenset({"", "NA"})

DEFAULT_MIN_CONTEXT_SIZE = 100


@dataclass(frozen=True)
class ColumnMap:
    """Binds dataset roles to CSV column names."""

    instrument: str
    exposure: str
    outcome: str
    context: str
    covariates: tuple[str, ...] = ()


@dataclass(frozen=True)
class IndividualRecord:
    instrument: float
    exposure: float
    outcome: float
    context: str
    covariates: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar view of the analysis sample.

    ``covariates`` has one column per entry of ``covariate_names`` (and
    shape (n, 0) when there are none). ``n_dropped`` counts input rows
    excluded during ingestion.
    """

    instrument: np.ndarray
    exposure: np.ndarray
    outcome: np.ndarray
    context: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()
    outcome_family: str = "linear"
    n_dropped: int = 0

    def __post_init__(self):
        n = self.instrument.shape[0]
        for name in ("exposure", "outcome", "context"):
            if getattr(self, name).shape[0] != n:
                raise DomainError(f"column {name!r} length differs from instrument")
        if self.covariates.shape != (n, len(self.covariate_names)):
            raise DomainError("covariate block shape does not match covariate names")

    def __len__(self) -> int:
        return int(self.instrument.shape[0])

    def subset(self, index: np.ndarray) -> "Dataset":
        return replace(
            self,
            instrument=self.instrument[index],
            exposure=self.exposure[index],
            outcome=self.outcome[index],
            context=self.context[index],
            covariates=self.covariates[index],
            n_dropped=0,
        )

    def columns(self) -> dict[str, np.ndarray]:
        """Role-keyed columns in the shape the regression fits expect."""
        cols = {
            "instrument": self.instrument,
            "exposure": self.exposure,
            "outcome": self.outcome,
        }
        for j, name in enumerate(self.covariate_names):
            cols[name] = self.covariates[:, j]
        return cols

    def records(self) -> Iterator[IndividualRecord]:
        for i in range(len(self)):
            yield IndividualRecord(
                instrument=float(self.instrument[i]),
                exposure=float(self.exposure[i]),
                outcome=float(self.outcome[i]),
                context=str(self.context[i]),
                covariates=tuple(self.covariates[i]),
            )


@dataclass(frozen=True)
class ContextSummary:
    """Distributional summary of the exposure within one context."""

    context: str
    n: int
    exposure_mean: float
    exposure_sd: float | None = None
    exposure_median: float | None = None

    def __post_init__(self):
        if self.exposure_sd is not None and self.exposure_sd < 0:
            raise DomainError("exposure sd cannot be negative")


@dataclass(frozen=True)
class ExcludedContext:
    """Warning record for a context dropped from the partition."""

    context: str
    n: int
    reason: str


@dataclass(frozen=True)
class PartitionResult:
    contexts: tuple[tuple[str, Dataset], ...]
    excluded: tuple[ExcludedContext, ...] = ()


def _parse_value(token: str) -> float | None:
    token = token.strip()
    if token in MISSING_TOKENS:
        return None
    try:
        value = float(token)
    except ValueError:
        return None
    if not np.isfinite(value):
        return None
    return value


def load_csv(path, column_map: ColumnMap, outcome_family: str = "linear") -> Dataset:
    """Read a header-ed CSV into a Dataset.

    Rows with a missing or unparseable mapped field are excluded and
    counted in ``n_dropped``. A non-0/1 outcome under the logistic family
    is an error, not a dropped row: it means the file does not match the
    declared outcome type.
    """
    if outcome_family not in ("linear", "logistic"):
        raise ConfigError(f"unknown outcome family {outcome_family!r}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file; a header row is required") from None
        header = [h.strip() for h in header]
        index = {name: i for i, name in enumerate(header)}
        needed = [
            column_map.instrument,
            column_map.exposure,
            column_map.outcome,
            column_map.context,
            *column_map.covariates,
        ]
        for name in needed:
            if name not in index:
                raise IngestError(f"{path}: column {name!r} not found in header {header}")

        numeric_cols = [
            index[column_map.instrument],
            index[column_map.exposure],
            index[column_map.outcome],
            *(index[c] for c in column_map.covariates),
        ]
        context_col = index[column_map.context]

        rows: list[list[float]] = []
        contexts: list[str] = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                dropped += 1
                continue
            label = row[context_col].strip()
            if label in MISSING_TOKENS:
                dropped += 1
                continue
            values = [_parse_value(row[i]) for i in numeric_cols]
            if any(v is None for v in values):
                dropped += 1
                continue
            if outcome_family == "logistic" and values[2] not in (0.0, 1.0):
                raise IngestError(
                    f"outcome value {values[2]!r} is not 0/1 under the logistic family",
                    line=lineno,
                )
            rows.append(values)  # type: ignore[arg-type]
            contexts.append(label)

    if not rows:
        raise IngestError(f"{path}: no usable rows after filtering ({dropped} dropped)")
    data = np.asarray(rows, dtype=float)
    return Dataset(
        instrument=data[:, 0],
        exposure=data[:, 1],
        outcome=data[:, 2],
        context=np.asarray(contexts, dtype=object),
        covariates=data[:, 3:],
        covariate_names=column_map.covariates,
        outcome_family=outcome_family,
        n_dropped=dropped,
    )


def summarize_context(label: str, ds: Dataset) -> ContextSummary:
    """Mean, sd (n-1 denominator) and median of the exposure."""
    n = len(ds)
    if n < 2:
        raise DomainError(f"context {label!r} has {n} records; need at least 2")
    x = ds.exposure
    return ContextSummary(
        context=label,
        n=n,
        exposure_mean=float(x.mean()),
        exposure_sd=float(x.std(ddof=1)),
        exposure_median=float(np.median(x)),
    )


def partition_by_context(
    ds: Dataset, min_n: int = DEFAULT_MIN_CONTEXT_SIZE
) -> PartitionResult:
    """Split the dataset by context label, ordered by mean exposure.

    Contexts with fewer than ``min_n`` records are excluded and reported
    in the result's ``excluded`` list. Ties in mean exposure are broken
    by label so the ordering is deterministic.
    """
    if len(ds) == 0:
        raise ConfigError("cannot partition an empty dataset")
    ctx = ds.context if ds.context.dtype.kind in ("U", "S") else ds.context.astype(str)
    labels, inverse = np.unique(ctx, return_inverse=True)
    retained: list[tuple[float, str, Dataset]] = []
    excluded: list[ExcludedContext] = []
    for j, label in enumerate(labels):
        index = np.flatnonzero(inverse == j)
        if index.size < min_n:
            excluded.append(
                ExcludedContext(
                    context=str(label),
                    n=int(index.size),
                    reason=f"fewer than min_n={min_n} records",
                )
            )
            continue
        sub = ds.subset(index)
        retained.append((float(sub.exposure.mean()), str(label), sub))
    if len(retained) < 2:
        raise ConfigError(
            f"fewer than 2 contexts retained ({len(retained)}); "
            "heterogeneity across contexts is undefined"
        )
    retained.sort(key=lambda item: (item[0], item[1]))
    return PartitionResult(
        contexts=tuple((label, sub) for _, label, sub in retained),
        excluded=tuple(excluded),
    )

"""Domain types, microdata ingestion, and response transformations.

The analysis scale is fixed here: the Gaussian response is min-max scaled
log income in [0, 1]; the binomial response is a poverty indicator derived
from the income-to-poverty ratio. Both covariates (sex, education) are
categorical and expand to indicator columns against a fixed reference level,
plus an intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .spatial_basis import area_design_rows

DEFAULT_SCHEMA = {
    "income": "PINCP",
    "poverty_ratio": "POVPIP",
    "sex": "SEX",
    "education": "SCHL",
    "weight": "PWGTP",
    "area": "PUMA",
}
DEFAULT_EDU_THRESHOLD = 21
COVARIATE_NAMES = ("intercept", "sex", "edu")


class SchemaError(ValueError):
    """A required column is missing from the input file."""


class EmptyPopulationError(ValueError):
    """No rows survived filtering."""


@dataclass(frozen=True)
class TransformMeta:
    """Min and max of log income, stored once and reused at prediction time."""

    log_min: float
    log_max: float

    def __post_init__(self):
        if not self.log_max > self.log_min:
            raise ValueError("degenerate transform: log_max must exceed log_min")

    def inverse(self, z):
        return np.exp(np.asarray(z, float) * (self.log_max - self.log_min) + self.log_min)


@dataclass(frozen=True)
class AreaSet:
    """The r areas: ordered labels plus their symmetric 0/1 adjacency."""

    labels: tuple
    adjacency: np.ndarray
    _index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        A = np.asarray(self.adjacency, float)
        r = len(self.labels)
        if A.shape != (r, r):
            raise ValueError("adjacency shape does not match the label count")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.diag(A).any():
            raise ValueError("adjacency diagonal must be zero")
        if not np.isin(A, (0.0, 1.0)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    @property
    def r(self) -> int:
        return len(self.labels)

    def index_of(self, area_ids) -> np.ndarray:
        """Map area labels to row positions, raising KeyError on unknown ids."""
        try:
            return np.array([self._index[a] for a in np.asarray(area_ids).ravel()])
        except KeyError as err:
            raise KeyError(f"unknown area id {err.args[0]!r}") from None


@dataclass(frozen=True)
class UnitRecord:
    """One sampled or population unit."""

    unit_id: object
    area_id: object
    x1: np.ndarray
    x2: np.ndarray
    z1: float
    z2: int
    trials: int = 1
    weight: float = 1.0

    def __post_init__(self):
        if not 0 <= self.z2 <= self.trials:
            raise ValueError(f"z2={self.z2} outside [0, trials={self.trials}]")
        if not self.weight > 0:
            raise ValueError("weight must be positive")


@dataclass(frozen=True)
class PoststratCell:
    """(area, covariate combination, population count) used for aggregation."""

    area_id: object
    x1: np.ndarray
    x2: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("cell count must be at least 1")


class PopulationFrame:
    """Columnar container for a finite population (or a drawn sample).

    Stores one numpy column per field; ``unit(i)`` and ``units`` materialize
    UnitRecord views when record-level access is convenient.
    """

    def __init__(self, unit_ids, area_ids, X1, X2, z1, z2, trials, weights, transform_meta):
        self.unit_ids = np.asarray(unit_ids)
        self.area_ids = np.asarray(area_ids)
        self.X1 = np.asarray(X1, float)
        self.X2 = np.asarray(X2, float)
        self.z1 = np.asarray(z1, float)
        self.z2 = np.asarray(z2, np.int64)
        self.trials = np.asarray(trials, np.int64)
        self.weights = np.asarray(weights, float)
        self.transform_meta = transform_meta
        n = self.z1.size
        fields = (self.unit_ids, self.area_ids, self.X1, self.X2, self.z2, self.trials, self.weights)
        if any(f.shape[0] != n for f in fields):
            raise ValueError("population columns have inconsistent lengths")
        if n == 0:
            raise EmptyPopulationError("population frame is empty")
        if (self.z2 < 0).any() or (self.z2 > self.trials).any():
            raise ValueError("binomial responses must satisfy 0 <= z2 <= trials")
        if (self.weights <= 0).any():
            raise ValueError("weights must be positive")

    def __len__(self) -> int:
        return self.z1.size

    def unit(self, i: int) -> UnitRecord:
        return UnitRecord(
            unit_id=self.unit_ids[i],
            area_id=self.area_ids[i],
            x1=self.X1[i],
            x2=self.X2[i],
            z1=float(self.z1[i]),
            z2=int(self.z2[i]),
            trials=int(self.trials[i]),
            weight=float(self.weights[i]),
        )

    @property
    def units(self):
        return tuple(self.unit(i) for i in range(len(self)))

    def subset(self, indices, weights=None) -> "PopulationFrame":
        """Row subset (e.g. a drawn sample), optionally with new design weights."""
        idx = np.asarray(indices)
        return PopulationFrame(
            unit_ids=self.unit_ids[idx],
            area_ids=self.area_ids[idx],
            X1=self.X1[idx],
            X2=self.X2[idx],
            z1=self.z1[idx],
            z2=self.z2[idx],
            trials=self.trials[idx],
            weights=self.weights[idx] if weights is None else np.asarray(weights, float),
            transform_meta=self.transform_meta,
        )


def transform_income(raw_income):
    """Min-max transform of log income onto [0, 1].

    Returns the transformed values and the TransformMeta holding the log
    range, which must be reused (never recomputed) for any later data placed
    on the same scale.
    """
    raw = np.asarray(raw_income, float)
    if raw.size and raw.min() <= 0:
        raise ValueError("income must be positive to take logs")
    logs = np.log(raw)
    lo, hi = logs.min(), logs.max()
    if hi == lo:
        raise ValueError("degenerate income range: all values identical")
    meta = TransformMeta(log_min=float(lo), log_max=float(hi))
    return (logs - lo) / (hi - lo), meta


def apply_transform(raw_income, meta: TransformMeta):
    """Place new income values on an existing transform scale."""
    raw = np.asarray(raw_income, float)
    if raw.size and raw.min() <= 0:
        raise ValueError("income must be positive to take logs")
    return (np.log(raw) - meta.log_min) / (meta.log_max - meta.log_min)


def derive_poverty(povpip) -> np.ndarray:
    """Poverty indicator: 1 where the income-to-poverty ratio is below 100."""
    return (np.asarray(povpip, float) < 100.0).astype(np.int64)


def covariate_matrix(sex, edu) -> np.ndarray:
    """Intercept plus 0/1 indicators for sex and education."""
    sex = np.asarray(sex, float)
    edu = np.asarray(edu, float)
    return np.column_stack([np.ones(sex.size), sex, edu])


def ingest_population(path, schema=None, edu_threshold: int = DEFAULT_EDU_THRESHOLD,
                      delimiter: str = ","):
    """Read delimiter-separated microdata into a PopulationFrame.

    Rows with income <= 0 or a missing analysis field are dropped. Returns
    ``(frame, n_dropped)``. Column names come from ``schema`` (see
    DEFAULT_SCHEMA); a missing column raises SchemaError, and a file whose
    rows are all dropped raises EmptyPopulationError.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    df = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
    required = ["income", "poverty_ratio", "sex", "education", "weight", "area"]
    missing = [schema[key] for key in required if schema[key] not in df.columns]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    numeric_fields = ["income", "poverty_ratio", "sex", "education", "weight"]
    numeric = df[[schema[k] for k in numeric_fields]].apply(pd.to_numeric, errors="coerce")
    keep = (
        numeric.notna().all(axis=1)
        & df[schema["area"]].notna()
        & (numeric[schema["income"]] > 0)
    )
    n_dropped = int((~keep).sum())
    kept = numeric[keep.to_numpy()]
    areas_kept = df[schema["area"]].to_numpy()[keep.to_numpy()]
    if len(kept) == 0:
        raise EmptyPopulationError("no rows survived income/missing-value filtering")

    z1, meta = transform_income(kept[schema["income"]].to_numpy())
    z2 = derive_poverty(kept[schema["poverty_ratio"]].to_numpy())
    sex_raw = kept[schema["sex"]].to_numpy()
    # First category in sorted order is the reference level.
    sex = (sex_raw != np.sort(np.unique(sex_raw))[0]).astype(float)
    edu = (kept[schema["education"]].to_numpy() >= edu_threshold).astype(float)
    X = covariate_matrix(sex, edu)

    frame = PopulationFrame(
        unit_ids=np.flatnonzero(keep.to_numpy()),
        area_ids=areas_kept,
        X1=X,
        X2=X.copy(),
        z1=z1,
        z2=z2,
        trials=np.ones(len(kept), dtype=np.int64),
        weights=kept[schema["weight"]].to_numpy(float),
        transform_meta=meta,
    )
    return frame, n_dropped


def build_design_matrices(frame_or_units, basis, areas: AreaSet):
    """Design matrices (X1, X2, Phi) for a set of units.

    Row i of Phi is the basis row of the unit's area; unknown area ids raise
    KeyError. ``basis`` may be a BasisMatrix or a raw r x q matrix aligned
    with ``areas.labels``.
    """
    if isinstance(frame_or_units, PopulationFrame):
        X1, X2 = frame_or_units.X1, frame_or_units.X2
        area_ids = frame_or_units.area_ids
    else:
        units = list(frame_or_units)
        X1 = np.vstack([u.x1 for u in units])
        X2 = np.vstack([u.x2 for u in units])
        area_ids = [u.area_id for u in units]
    phi = area_design_rows(basis, areas.index_of(area_ids))
    return X1, X2, phi

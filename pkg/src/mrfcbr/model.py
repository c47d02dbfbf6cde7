"""Case/query data model and heterogeneous local distances.

Missing values are represented by ``None`` throughout. Distances come in two
flavours: scalar functions that work on a single pair of values (used for
clarity and as test oracles) and vectorised helpers that compare one query
against every case of an encoded case base.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np


@dataclass(frozen=True)
class Numeric:
    pass


@dataclass(frozen=True)
class Ordinal:
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"ordinal feature needs >= 2 levels, got {self.levels}")


@dataclass(frozen=True)
class Cyclic:
    period: int

    def __post_init__(self):
        if self.period < 2:
            raise ValueError(f"cyclic range must be >= 2, got {self.period}")


@dataclass(frozen=True)
class Categorical:
    pass


FeatureKind = Numeric | Ordinal | Cyclic | Categorical

PROBLEM = "problem"
SOLUTION = "solution"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: FeatureKind
    role: str = PROBLEM


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered features plus the weights of the two global distances.

    ``weights_structural`` is keyed by problem-feature names,
    ``weights_solution`` by the features entering the solution distance
    (for the travel domain: Price, Accommodation and Destination).
    """

    features: tuple[Feature, ...]
    weights_structural: Mapping[str, float]
    weights_solution: Mapping[str, float]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names in schema: {names}")
        for label, weights in (("structural", self.weights_structural),
                               ("solution", self.weights_solution)):
            unknown = set(weights) - set(names)
            if unknown:
                raise ValueError(f"{label} weights reference unknown features {sorted(unknown)}")
            if any(w < 0 for w in weights.values()):
                raise ValueError(f"{label} weights must be non-negative")
            if not any(w > 0 for w in weights.values()):
                raise ValueError(f"at least one {label} weight must be positive")
        for name in self.weights_structural:
            if self.feature(name).role != PROBLEM:
                raise ValueError(f"structural weight on non-problem feature {name!r}")

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(f"unknown feature {name!r}")

    @property
    def problem_features(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.role == PROBLEM)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)


TRAVEL_PROBLEM = ("Duration", "Persons", "Accommodation", "Season",
                  "HolidayType", "Destination", "Transport")
TRAVEL_SOLUTION = ("Price", "Accommodation", "Destination")


def travel_schema(weights_structural: Mapping[str, float] | None = None,
                  weights_solution: Mapping[str, float] | None = None) -> FeatureSchema:
    """Schema of the travel case base, uniform weights unless overridden."""
    features = (
        Feature("Duration", Numeric()),
        Feature("Persons", Numeric()),
        Feature("Accommodation", Ordinal(6)),
        Feature("Season", Cyclic(12)),
        Feature("HolidayType", Categorical()),
        Feature("Destination", Categorical()),
        Feature("Transport", Categorical()),
        Feature("Price", Numeric(), SOLUTION),
    )
    ws = dict.fromkeys(TRAVEL_PROBLEM, 1.0)
    ws.update(weights_structural or {})
    wsol = dict.fromkeys(TRAVEL_SOLUTION, 1.0)
    wsol.update(weights_solution or {})
    return FeatureSchema(features, ws, wsol)


def _kind_from_dict(d: Mapping[str, Any]) -> FeatureKind:
    kind = d["kind"].lower()
    if kind == "numeric":
        return Numeric()
    if kind == "ordinal":
        return Ordinal(int(d["levels"]))
    if kind == "cyclic":
        return Cyclic(int(d["range"]))
    if kind == "categorical":
        return Categorical()
    raise ValueError(f"unknown feature kind {d['kind']!r}")


def load_schema(path: str | Path) -> FeatureSchema:
    """Read a schema from JSON.

    Expected layout::

        {"features": [{"name": "Duration", "kind": "numeric", "role": "problem",
                       "weight": 1.0, "solution_weight": 0.0}, ...]}

    Feature names must match the travel layout since adaptation rules and the
    CSV format refer to them by name.
    """
    raw = json.loads(Path(path).read_text())
    features, ws, wsol = [], {}, {}
    for d in raw["features"]:
        f = Feature(d["name"], _kind_from_dict(d), d.get("role", PROBLEM))
        features.append(f)
        if f.role == PROBLEM:
            ws[f.name] = float(d.get("weight", 1.0))
        if "solution_weight" in d:
            wsol[f.name] = float(d["solution_weight"])
    wsol = {k: v for k, v in wsol.items() if v > 0} or dict.fromkeys(TRAVEL_SOLUTION, 1.0)
    return FeatureSchema(tuple(features), ws, wsol)


@dataclass(frozen=True)
class Hotel:
    name: str
    category: int
    location: str


@dataclass(frozen=True)
class Case:
    id: int
    problem: Mapping[str, Any]
    price: float
    hotel: Hotel

    def value(self, name: str):
        if name == "Price":
            return self.price
        return self.problem.get(name)


@dataclass(frozen=True)
class Query:
    problem: Mapping[str, Any]
    budget: float | None = None
    id: int = 0

    def __post_init__(self):
        if all(v is None for v in self.problem.values()):
            raise ValueError("query has no present feature")
        if self.budget is not None and not self.budget > 0:
            raise ValueError(f"budget must be positive, got {self.budget}")

    def value(self, name: str):
        return self.problem.get(name)

    @classmethod
    def from_case(cls, case: Case, budget: float | None = None) -> "Query":
        return cls(dict(case.problem), budget, case.id)


@dataclass(frozen=True)
class CaseBaseStats:
    """Per-feature spreads and case-base level aggregates.

    ``sigma`` holds standard deviations of numeric/ordinal features (including
    Price), ``maxd`` the largest local distance observed between two present
    values of each feature.
    """

    sigma: Mapping[str, float]
    maxd: Mapping[str, float]
    mean_price: float
    mu_c: float = field(default=float("nan"))


def similarity(d: float) -> float:
    if d < 0 or math.isnan(d):
        raise ValueError(f"distance must be >= 0, got {d}")
    return 1.0 / (1.0 + d)


def cyclic_distance(a: float, b: float, period: int) -> float:
    diff = abs(a - b)
    return min(diff, period - diff)


def local_distance(kind: FeatureKind, a, b, stats: CaseBaseStats, feature: str) -> float:
    """Distance between two values of one feature.

    A missing operand yields the largest distance observed for the feature.
    """
    if feature not in stats.maxd:
        raise ValueError(f"unknown feature {feature!r}")
    if a is None or b is None:
        return stats.maxd[feature]
    match kind:
        case Categorical():
            return 0.0 if a == b else 1.0
        case Cyclic(period=period):
            return float(cyclic_distance(a, b, period))
        case Numeric() | Ordinal():
            sigma = stats.sigma.get(feature)
            if sigma is None:
                raise ValueError(f"no standard deviation computed for {feature!r}")
            if sigma == 0:
                return 0.0 if a == b else 1.0
            return abs(a - b) / sigma
    raise TypeError(f"unsupported feature kind {kind!r}")


def _weighted(pairs, weights: Mapping[str, float]) -> float:
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("empty weight vector")
    return sum(weights[name] * d for name, d in pairs) / total


def structural_distance(q: Query | Case, c: Case, schema: FeatureSchema,
                        stats: CaseBaseStats) -> float:
    w = {k: v for k, v in schema.weights_structural.items() if v > 0}
    pairs = ((name, local_distance(schema.feature(name).kind, q.value(name),
                                   c.value(name), stats, name)) for name in w)
    return _weighted(pairs, w)


def solution_distance(c1: Case, c2: Case, schema: FeatureSchema,
                      stats: CaseBaseStats) -> float:
    w = {k: v for k, v in schema.weights_solution.items() if v > 0}
    pairs = ((name, local_distance(schema.feature(name).kind, c1.value(name),
                                   c2.value(name), stats, name)) for name in w)
    return _weighted(pairs, w)


# ---------------------------------------------------------------------------
# vectorised helpers
# ---------------------------------------------------------------------------

def encode_value(kind: FeatureKind, value, vocab: Mapping[str, int] | None) -> float:
    """Map a raw value onto the float encoding used by the column arrays."""
    if value is None:
        return np.nan
    if isinstance(kind, Categorical):
        # unseen labels differ from every stored label
        return float(vocab.get(value, -1))
    return float(value)


def local_distance_column(kind: FeatureKind, x: float | np.ndarray, col: np.ndarray,
                          sigma: float | None, maxd: float) -> np.ndarray:
    """Local distances between ``x`` and every entry of an encoded column.

    ``x`` may be a scalar or an array broadcastable against ``col``.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        diff = np.abs(x - col)
        match kind:
            case Categorical():
                d = (diff != 0).astype(float)
            case Cyclic(period=period):
                d = np.minimum(diff, period - diff)
            case _:
                if sigma is None:
                    raise ValueError("no standard deviation for numeric feature")
                d = (diff != 0).astype(float) if sigma == 0 else diff / sigma
    return np.where(np.isnan(x) | np.isnan(col), maxd, d)

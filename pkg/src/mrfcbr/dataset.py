"""Travel-style case bases: CSV ingest, statistics, synthetic generation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import (Case, CaseBaseStats, Categorical, Cyclic, FeatureSchema, Hotel,
                    Numeric, Ordinal, Query, TRAVEL_PROBLEM, encode_value,
                    local_distance_column, travel_schema)

CSV_HEADER = ("id", "Duration", "Persons", "Accommodation", "Season", "HolidayType",
              "Destination", "Transport", "Price", "Hotel", "HotelCategory", "HotelLocation")


class ValidationError(ValueError):
    """Raised when a case base violates the schema or case invariants.

    ``problems`` lists one diagnostic string per offending row/column.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def check_case(case: Case, schema: FeatureSchema) -> list[str]:
    """Return the invariant violations of a single case (empty when valid)."""
    errs = []
    if not case.price > 0:
        errs.append(f"case {case.id}: Price must be > 0, got {case.price}")
    persons = case.problem.get("Persons")
    if persons is None or not persons > 0:
        errs.append(f"case {case.id}: Persons must be present and > 0")
    if case.hotel.category != case.problem.get("Accommodation"):
        errs.append(f"case {case.id}: HotelCategory differs from Accommodation")
    if case.hotel.location != case.problem.get("Destination"):
        errs.append(f"case {case.id}: HotelLocation differs from Destination")
    for f in schema.problem_features:
        v = case.problem.get(f.name)
        if v is None:
            continue
        match f.kind:
            case Ordinal(levels=levels) if not (0 <= v < levels and v == int(v)):
                errs.append(f"case {case.id}: {f.name}={v} outside 0..{levels - 1}")
            case Cyclic(period=period) if not (1 <= v <= period and v == int(v)):
                errs.append(f"case {case.id}: {f.name}={v} outside 1..{period}")
            case Numeric() if not np.isfinite(v):
                errs.append(f"case {case.id}: {f.name} not finite")
    return errs


@dataclass(frozen=True)
class CaseBase:
    schema: FeatureSchema
    cases: tuple[Case, ...]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        ids = [c.id for c in self.cases]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError([f"duplicate case id {i}" for i in dup])
        if ids != sorted(ids):
            object.__setattr__(self, "cases", tuple(sorted(self.cases, key=lambda c: c.id)))

    def __len__(self):
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([c.id for c in self.cases], dtype=np.int64)

    @cached_property
    def index(self) -> dict[int, int]:
        return {c.id: i for i, c in enumerate(self.cases)}

    def get(self, case_id: int) -> Case:
        return self.cases[self.index[case_id]]

    def subset(self, ids: Iterable[int]) -> "CaseBase":
        keep = set(int(i) for i in ids)
        return CaseBase(self.schema, tuple(c for c in self.cases if c.id in keep))

    @cached_property
    def vocab(self) -> dict[str, dict[str, int]]:
        out = {}
        for f in self.schema.features:
            if isinstance(f.kind, Categorical):
                labels = sorted({c.value(f.name) for c in self.cases} - {None})
                out[f.name] = {lab: i for i, lab in enumerate(labels)}
        return out

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Float-encoded feature columns, NaN for missing values."""
        return {f.name: np.array([encode_value(f.kind, c.value(f.name), self.vocab.get(f.name))
                                  for c in self.cases], dtype=float)
                for f in self.schema.features}

    @cached_property
    def prices(self) -> np.ndarray:
        return np.array([c.price for c in self.cases], dtype=float)

    def encode(self, q: Query | Case) -> dict[str, float]:
        return {f.name: encode_value(f.kind, q.value(f.name), self.vocab.get(f.name))
                for f in self.schema.features}

    @property
    def stats(self) -> CaseBaseStats:
        if "stats" not in self._cache:
            self._cache["stats"] = compute_stats(self)
        return self._cache["stats"]

    def validate(self) -> None:
        errs = [e for c in self.cases for e in check_case(c, self.schema)]
        if errs:
            raise ValidationError(errs)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(int(v)) if v.is_integer() else repr(v)
    return str(v)


def write_csv(cb: CaseBase, path: str | Path | None = None) -> str:
    """Serialise in canonical formatting; returns the text and writes it if a path is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in cb.cases:
        w.writerow([c.id] + [_fmt(c.problem.get(n)) for n in TRAVEL_PROBLEM]
                   + [_fmt(c.price), c.hotel.name, c.hotel.category, c.hotel.location])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _parse_cell(kind, raw: str):
    if raw == "":
        return None
    if isinstance(kind, Categorical):
        return raw
    v = float(raw)
    if isinstance(kind, (Ordinal, Cyclic)):
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(v)
    return v


def load_csv(path: str | Path, schema: FeatureSchema | None = None) -> CaseBase:
    """Read and validate a case base.

    Every malformed cell and every invariant violation is collected and
    reported together in a :class:`ValidationError`.
    """
    schema = schema or travel_schema()
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValidationError([f"header must be {','.join(CSV_HEADER)}"])
    errs, cases, seen = [], [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            errs.append(f"row {lineno}: expected {len(CSV_HEADER)} cells, got {len(row)}")
            continue
        cell = dict(zip(CSV_HEADER, row))
        row_errs, problem = [], {}
        try:
            cid = int(cell["id"])
        except ValueError:
            errs.append(f"row {lineno}, column id: malformed integer {cell['id']!r}")
            continue
        if cid in seen:
            errs.append(f"row {lineno}, column id: duplicate id {cid}")
        seen.add(cid)
        for name in TRAVEL_PROBLEM:
            try:
                problem[name] = _parse_cell(schema.feature(name).kind, cell[name])
            except ValueError as e:
                row_errs.append(f"row {lineno}, column {name}: {e}")
        try:
            price = float(cell["Price"])
        except ValueError:
            row_errs.append(f"row {lineno}, column Price: malformed number {cell['Price']!r}")
        try:
            category = int(cell["HotelCategory"])
        except ValueError:
            row_errs.append(f"row {lineno}, column HotelCategory: malformed integer "
                            f"{cell['HotelCategory']!r}")
        if row_errs:
            errs.extend(row_errs)
            continue
        case = Case(cid, problem, price, Hotel(cell["Hotel"], category, cell["HotelLocation"]))
        errs.extend(f"row {lineno}: {e}" for e in check_case(case, schema))
        cases.append(case)
    if errs:
        raise ValidationError(errs)
    ids = sorted(c.id for c in cases)
    if ids and ids != list(range(ids[0], ids[0] + len(ids))):
        raise ValidationError(["case ids are not dense"])
    return CaseBase(schema, tuple(cases))


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _max_observed(kind, col: np.ndarray, sigma: float | None) -> float:
    vals = np.unique(col[~np.isnan(col)])
    if len(vals) < 2:
        return 1.0
    match kind:
        case Categorical():
            return 1.0
        case Cyclic(period=period):
            diff = np.abs(vals[:, None] - vals[None, :])
            return float(np.minimum(diff, period - diff).max())
        case _:
            return 1.0 if sigma == 0 else float((vals[-1] - vals[0]) / sigma)


def pairwise_mean_similarity(cb: CaseBase, sigma, maxd, block: int = 256) -> float:
    """Exact mean structural similarity over all unordered pairs i != j."""
    schema = cb.schema
    w = {k: v for k, v in schema.weights_structural.items() if v > 0}
    wsum = sum(w.values())
    cols = cb.columns
    n = len(cb)
    total = 0.0
    for start in range(0, n, block):
        stop = min(n, start + block)
        d = np.zeros((stop - start, n))
        for name, wf in w.items():
            col = cols[name]
            d += wf * local_distance_column(schema.feature(name).kind, col[start:stop, None],
                                            col[None, :], sigma.get(name), maxd[name])
        s = 1.0 / (1.0 + d / wsum)
        # strict upper triangle only
        mask = np.arange(n)[None, :] > np.arange(start, stop)[:, None]
        total += s[mask].sum()
    return float(total / (n * (n - 1) / 2))


def compute_stats(cb: CaseBase) -> CaseBaseStats:
    if len(cb) < 2:
        raise ValueError("need at least two cases for pairwise statistics")
    sigma, maxd = {}, {}
    for f in cb.schema.features:
        col = cb.columns[f.name]
        if isinstance(f.kind, (Numeric, Ordinal)):
            present = col[~np.isnan(col)]
            sigma[f.name] = float(np.std(present, ddof=1)) if len(present) > 1 else 0.0
        maxd[f.name] = _max_observed(f.kind, col, sigma.get(f.name))
    mu_c = pairwise_mean_similarity(cb, sigma, maxd)
    return CaseBaseStats(sigma, maxd, float(cb.prices.mean()), mu_c)


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

HOLIDAY_TYPES = ("Active", "Bathing", "City", "Education", "Language",
                 "Recreation", "Skiing", "Wandering")
DESTINATIONS = ("Algarve", "Attica", "Balaton", "Bavaria", "Cairo", "Carinthia",
                "Corsica", "Crete", "Cyprus", "Harz", "Madeira", "Tyrol")
TRANSPORTS = ("Car", "Coach", "Plane", "Train")

# per-day price per person by holiday type
_TYPE_RATE = dict(zip(HOLIDAY_TYPES, (48.0, 40.0, 62.0, 55.0, 58.0, 36.0, 75.0, 32.0)))
_CATEGORY_RATE = np.array([0.55, 0.75, 0.95, 1.25, 1.7, 2.3])


def multiple_correlation(cb: CaseBase) -> float:
    """Multiple correlation of Duration, Accommodation and one-hot HolidayType with Price."""
    cols = cb.columns
    dur, acc, ht = cols["Duration"], cols["Accommodation"], cols["HolidayType"]
    ok = ~(np.isnan(dur) | np.isnan(acc) | np.isnan(ht))
    codes = ht[ok].astype(int)
    dummies = np.eye(codes.max() + 1)[codes][:, 1:]
    X = np.column_stack([np.ones(ok.sum()), dur[ok], acc[ok], dummies])
    y = cb.prices[ok]
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    r2 = 1.0 - resid @ resid / ((y - y.mean()) @ (y - y.mean()))
    return float(np.sqrt(max(r2, 0.0)))


def generate_synthetic(n: int, seed: int, noise: float = 0.22) -> CaseBase:
    """Seeded travel case base with a price driven mostly by duration,
    accommodation and holiday type.

    Destination/category pockets are adjusted so that every populated pocket
    offers at least two distinct hotels.
    """
    if n < 50:
        raise ValueError(f"need n >= 50 cases, got {n}")
    rng = np.random.default_rng(seed)
    n_dest = min(len(DESTINATIONS), max(2, n // 40))
    dest = rng.integers(0, n_dest, n)
    acc = rng.choice(6, n, p=[0.1, 0.12, 0.2, 0.28, 0.2, 0.1])

    # merge singleton pockets into the most populated category of their destination
    for _ in range(n):
        counts = {}
        for i, key in enumerate(zip(dest, acc)):
            counts.setdefault(key, []).append(i)
        lonely = [members[0] for members in counts.values() if len(members) == 1]
        if not lonely:
            break
        i = lonely[0]
        candidates = [(len(m), -k[1], k) for k, m in counts.items()
                      if len(m) > 1 and k[0] == dest[i]]
        if not candidates:
            candidates = [(len(m), -k[1], k) for k, m in counts.items() if len(m) > 1]
        if not candidates:
            raise ValueError("case base too small to give every pocket two hotels")
        dest[i], acc[i] = max(candidates)[2]

    duration = rng.choice(np.arange(3, 22), n)
    persons = rng.choice(np.arange(1, 7), n, p=[0.2, 0.4, 0.12, 0.18, 0.06, 0.04])
    season = rng.integers(1, 13, n)
    htype = rng.integers(0, len(HOLIDAY_TYPES), n)
    transport = rng.integers(0, len(TRANSPORTS), n)
    dest_rate = 0.85 + 0.3 * np.random.default_rng(seed + 1).random(len(DESTINATIONS))
    type_rate = np.array([_TYPE_RATE[t] for t in HOLIDAY_TYPES])

    per_person = (duration * type_rate[htype] * _CATEGORY_RATE[acc] * dest_rate[dest]
                  * rng.lognormal(0.0, noise, n))
    group = 1.0 + 0.25 * (persons - 1)
    price = np.round(per_person * group + 40.0, 2)

    hotel = np.empty(n, dtype=object)
    pockets = {}
    for i, key in enumerate(zip(dest, acc)):
        pockets.setdefault(key, []).append(i)
    for (d, a), members in pockets.items():
        n_hotels = min(len(members), 2 + int(rng.integers(0, 3)))
        names = [f"{DESTINATIONS[d]} {'*' * a or 'Flat'} {j + 1}" for j in range(n_hotels)]
        picks = list(range(n_hotels)) + list(rng.integers(0, n_hotels, len(members) - n_hotels))
        for i, p in zip(members, rng.permutation(picks)):
            hotel[i] = names[p]

    cases = []
    for i in range(n):
        problem = {
            "Duration": float(duration[i]),
            "Persons": float(persons[i]),
            "Accommodation": int(acc[i]),
            "Season": int(season[i]),
            "HolidayType": HOLIDAY_TYPES[htype[i]],
            "Destination": DESTINATIONS[dest[i]],
            "Transport": TRANSPORTS[transport[i]],
        }
        cases.append(Case(i, problem, float(price[i]),
                          Hotel(hotel[i], int(acc[i]), DESTINATIONS[dest[i]])))
    cb = CaseBase(travel_schema(), tuple(cases))
    cb.validate()
    return cb


# ---------------------------------------------------------------------------
# missing-value injection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MissingnessProfile:
    p_accommodation: float = 0.15
    p_duration: float = 0.3
    p_holiday_type: float = 0.6

    def __post_init__(self):
        for p in (self.p_accommodation, self.p_duration, self.p_holiday_type):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"missingness probability {p} outside [0, 1]")

    def items(self):
        return (("Accommodation", self.p_accommodation), ("Duration", self.p_duration),
                ("HolidayType", self.p_holiday_type))


def inject_missing(q: Query, profile: MissingnessProfile, seed: int) -> Query:
    """Blank solution-correlated features independently, keyed by (seed, query id)."""
    rng = np.random.default_rng([seed, q.id])
    draws = rng.random(3)
    problem = dict(q.problem)
    for u, (name, p) in zip(draws, profile.items()):
        if u < p:
            problem[name] = None
    return Query(problem, q.budget, q.id)

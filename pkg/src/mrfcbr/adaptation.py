"""Adaptation rules R1-R4 of the travel case study and adaptation levels."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dataset import CaseBase
from .model import Case, Hotel, Query

R1, R2, R3, R4 = "R1", "R2", "R3", "R4"
PRICE_STEP = 1.1

OVER_BUDGET = "over_budget"
NO_ALTERNATIVE_HOTEL = "no_alternative_hotel"


class LevelMapping(enum.Enum):
    FOUR_LEVEL = 4
    BINARY = 2

    @property
    def num_states(self) -> int:
        return self.value


@dataclass(frozen=True)
class AcceptanceModel:
    """Customer acceptance of a proposed hotel.

    ``mode`` is ``"bernoulli"`` (accept with probability ``p``), ``"always"``,
    or ``"custom"`` with ``predicate(hotel, query_id) -> bool``.
    """

    mode: str = "bernoulli"
    p: float = 0.8
    seed: int = 0
    predicate: Callable[[str, int], bool] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in ("bernoulli", "always", "custom"):
            raise ValueError(f"unknown acceptance mode {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"acceptance probability {self.p} outside [0, 1]")
        if self.mode == "custom" and self.predicate is None:
            raise ValueError("custom acceptance needs a predicate")

    @classmethod
    def always(cls) -> "AcceptanceModel":
        return cls("always", 1.0)


def _uniform(seed: int, hotel: str, query_id: int) -> float:
    digest = hashlib.blake2b(f"{seed}\x1f{hotel}\x1f{query_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


def evaluate_acceptance(accept: AcceptanceModel, hotel: str, query_id: int) -> bool:
    if accept.mode == "always":
        return True
    if accept.mode == "custom":
        return bool(accept.predicate(hotel, query_id))
    return _uniform(accept.seed, hotel, query_id) < accept.p


@dataclass(frozen=True)
class AdaptationOutcome:
    adapted: Case | None
    rules_applied: frozenset[str]
    failure_point: str | None = None

    @property
    def flagged_not_adaptable(self) -> bool:
        return self.failure_point is not None


class HotelIndex:
    """Hotels of a library grouped by (category, location), ascending case id."""

    def __init__(self, library: CaseBase):
        self.pockets: dict[tuple[int, str], list[Hotel]] = {}
        for c in library.cases:
            pocket = self.pockets.setdefault((c.hotel.category, c.hotel.location), [])
            if c.hotel not in pocket:
                pocket.append(c.hotel)

    def alternative(self, category, location, exclude: str) -> Hotel | None:
        if category is None or location is None:
            return None
        for h in self.pockets.get((category, location), ()):
            if h.name != exclude:
                return h
        return None


def _hotel_index(library: CaseBase) -> HotelIndex:
    if "hotels" not in library._cache:
        library._cache["hotels"] = HotelIndex(library)
    return library._cache["hotels"]


def _mode(transport) -> str | None:
    return None if transport is None else str(transport).lower()


def adapt(r: Case, q: Query, budget: float, accept: AcceptanceModel,
          library: CaseBase) -> AdaptationOutcome:
    """Apply R1, R2, R3, the budget check and R4 in that order.

    Rule guards that compare against a missing query value do not fire.
    """
    problem = dict(r.problem)
    rules = set()
    persons = r.problem["Persons"]
    per_person = r.price / persons

    q_persons = q.value("Persons")
    if q_persons is not None and persons > q_persons:
        problem["Persons"] = q_persons
        rules.add(R1)

    r_transport, q_transport = _mode(r.problem.get("Transport")), _mode(q.value("Transport"))
    if r_transport == "train" and q_transport == "coach":
        per_person *= PRICE_STEP
        rules.add(R2)
    elif r_transport == "coach" and q_transport == "train":
        per_person /= PRICE_STEP
        rules.add(R3)

    price = per_person * problem["Persons"]
    if price > budget:
        return AdaptationOutcome(None, frozenset(rules), OVER_BUDGET)

    hotel = r.hotel
    if not evaluate_acceptance(accept, r.hotel.name, q.id):
        alt = _hotel_index(library).alternative(q.value("Accommodation"),
                                                q.value("Destination"), r.hotel.name)
        if alt is None:
            return AdaptationOutcome(None, frozenset(rules), NO_ALTERNATIVE_HOTEL)
        problem["Accommodation"] = alt.category
        problem["Destination"] = alt.location
        hotel = alt
        rules.add(R4)

    adapted = replace(r, problem=problem, price=price, hotel=hotel)
    return AdaptationOutcome(adapted, frozenset(rules))


def level_of(outcome: AdaptationOutcome, mapping: LevelMapping = LevelMapping.BINARY) -> int:
    if mapping is LevelMapping.BINARY:
        return 2 if outcome.flagged_not_adaptable else 1
    if outcome.flagged_not_adaptable:
        return 4
    if not outcome.rules_applied:
        return 1
    if outcome.rules_applied == {R1}:
        return 2
    return 3


def adaptable_mask(q: Query, library: CaseBase, budget: float,
                   accept: AcceptanceModel) -> np.ndarray:
    """Vectorised ``level_of(adapt(c, q, ...), BINARY) == 1`` for every library case."""
    cols = library.columns
    persons = cols["Persons"]
    per_person = library.prices / persons
    q_persons = q.value("Persons")
    new_persons = persons if q_persons is None else np.minimum(persons, q_persons)

    transport = np.array([_mode(c.problem.get("Transport")) for c in library.cases], dtype=object)
    q_transport = _mode(q.value("Transport"))
    if q_transport == "coach":
        per_person = np.where(transport == "train", per_person * PRICE_STEP, per_person)
    elif q_transport == "train":
        per_person = np.where(transport == "coach", per_person / PRICE_STEP, per_person)
    within_budget = per_person * new_persons <= budget

    hotels = _hotel_index(library)
    pocket = hotels.pockets.get((q.value("Accommodation"), q.value("Destination")), [])
    if q.value("Accommodation") is None or q.value("Destination") is None:
        pocket = []
    accepted = {}
    ok = np.empty(len(library), dtype=bool)
    for i, c in enumerate(library.cases):
        name = c.hotel.name
        if name not in accepted:
            accepted[name] = (evaluate_acceptance(accept, name, q.id)
                              or any(h.name != name for h in pocket))
        ok[i] = accepted[name]
    return within_budget & ok

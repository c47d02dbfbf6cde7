import numpy as np
import pytest

from mrfcbr.adaptation import (NO_ALTERNATIVE_HOTEL, OVER_BUDGET, R1, R2, R3, R4,
                               AcceptanceModel, AdaptationOutcome, LevelMapping, adapt,
                               adaptable_mask, evaluate_acceptance, level_of)
from mrfcbr.dataset import CaseBase, MissingnessProfile, inject_missing
from mrfcbr.model import Query, travel_schema

from conftest import make_case

ALWAYS = AcceptanceModel.always()
NEVER = AcceptanceModel("bernoulli", 0.0)


def _query(**kw):
    problem = {"Duration": 7.0, "Persons": 2.0, "Accommodation": 3, "Season": 6,
               "HolidayType": "City", "Destination": "Crete", "Transport": "Plane"}
    problem.update(kw)
    return Query(problem, id=1)


def _library(*cases):
    return CaseBase(travel_schema(), tuple(cases))


def test_no_rule_fires():
    r = make_case(0, 300.0)
    out = adapt(r, _query(), 500.0, ALWAYS, _library(r))
    assert out.rules_applied == frozenset()
    assert not out.flagged_not_adaptable
    assert out.adapted.price == 300.0
    assert level_of(out, LevelMapping.FOUR_LEVEL) == 1


def test_train_for_coach_raises_price_ten_percent():
    r = make_case(0, 200.0, transport="Train")
    out = adapt(r, _query(Transport="Coach"), 500.0, ALWAYS, _library(r))
    assert out.rules_applied == {R2}
    assert out.adapted.price == pytest.approx(220.0, abs=1e-9)
    assert out.adapted.problem["Transport"] == "Train"


def test_coach_for_train_lowers_price():
    r = make_case(0, 220.0, transport="Coach")
    out = adapt(r, _query(Transport="Train"), 500.0, ALWAYS, _library(r))
    assert out.rules_applied == {R3}
    assert out.adapted.price == pytest.approx(200.0, abs=1e-9)


def test_r1_scales_to_fewer_people():
    r = make_case(0, 600.0, persons=6.0)
    out = adapt(r, _query(), 500.0, ALWAYS, _library(r))
    assert out.rules_applied == {R1}
    assert out.adapted.price == pytest.approx(200.0)
    assert out.adapted.problem["Persons"] == 2.0
    assert level_of(out, LevelMapping.FOUR_LEVEL) == 2


def test_r1_not_fired_for_more_people():
    r = make_case(0, 100.0, persons=1.0)
    out = adapt(r, _query(), 500.0, ALWAYS, _library(r))
    assert out.rules_applied == frozenset() and out.adapted.price == 100.0


def test_budget_boundary_after_r2():
    # 2 persons at 100 each -> 220 after R2; budget just below that flags
    r = make_case(0, 200.0, transport="Train")
    lib = _library(r)
    over = adapt(r, _query(Transport="Coach"), 219.99, NEVER, lib)
    assert over.failure_point == OVER_BUDGET
    assert over.adapted is None
    assert over.rules_applied == {R2}  # R4 never attempted
    ok = adapt(r, _query(Transport="Coach"), 220.0 + 1e-9, ALWAYS, lib)
    assert not ok.flagged_not_adaptable


def test_r4_finds_alternative_hotel_lowest_id():
    r = make_case(5, 300.0, hotel="Old")
    alt1 = make_case(2, 900.0, hotel="Alt A")
    alt2 = make_case(3, 900.0, hotel="Alt B")
    out = adapt(r, _query(), 500.0, NEVER, _library(r, alt1, alt2))
    assert out.rules_applied == {R4}
    assert out.adapted.hotel.name == "Alt A"
    assert level_of(out, LevelMapping.FOUR_LEVEL) == 3


def test_r4_rebinds_to_query_destination():
    r = make_case(0, 300.0, acc=2, dest="Cyprus", hotel="Old")
    alt = make_case(1, 900.0, hotel="New")
    out = adapt(r, _query(), 500.0, NEVER, _library(r, alt))
    assert out.adapted.problem["Accommodation"] == 3
    assert out.adapted.problem["Destination"] == "Crete"


def test_r4_without_alternative_flags():
    r = make_case(0, 300.0, hotel="Only")
    out = adapt(r, _query(), 500.0, NEVER, _library(r, make_case(1, 200.0, hotel="Only")))
    assert out.failure_point == NO_ALTERNATIVE_HOTEL
    assert level_of(out, LevelMapping.FOUR_LEVEL) == 4
    assert level_of(out, LevelMapping.BINARY) == 2


def test_missing_query_values_do_not_fire_guards():
    r = make_case(0, 300.0, transport="Train", persons=4.0, hotel="A")
    lib = _library(r, make_case(1, 300.0, hotel="B"))
    out = adapt(r, _query(Transport=None, Persons=None), 1e9, ALWAYS, lib)
    assert out.rules_applied == frozenset()
    out = adapt(r, _query(Accommodation=None), 1e9, NEVER, lib)
    assert out.failure_point == NO_ALTERNATIVE_HOTEL


@pytest.mark.parametrize("rules, flagged, four, binary", [
    (frozenset(), False, 1, 1),
    (frozenset({R1}), False, 2, 1),
    (frozenset({R1, R3}), False, 3, 1),
    (frozenset({R2}), False, 3, 1),
    (frozenset({R4}), False, 3, 1),
    (frozenset({R1, R2, R4}), False, 3, 1),
    (frozenset(), True, 4, 2),
    (frozenset({R1, R2}), True, 4, 2),
])
def test_level_mapping(rules, flagged, four, binary):
    out = AdaptationOutcome(None if flagged else make_case(0, 1.0), rules,
                            OVER_BUDGET if flagged else None)
    assert level_of(out, LevelMapping.FOUR_LEVEL) == four
    assert level_of(out, LevelMapping.BINARY) == binary


def test_acceptance_modes():
    assert evaluate_acceptance(ALWAYS, "x", 3)
    assert not any(evaluate_acceptance(NEVER, f"h{i}", i) for i in range(200))
    custom = AcceptanceModel("custom", predicate=lambda h, q: h.startswith("A"))
    assert evaluate_acceptance(custom, "Alpha", 1) and not evaluate_acceptance(custom, "B", 1)


def test_acceptance_frequency():
    model = AcceptanceModel("bernoulli", 0.8, seed=5)
    hits = sum(evaluate_acceptance(model, f"hotel {i % 97}", i) for i in range(10_000))
    assert abs(hits / 10_000 - 0.8) <= 0.02


def test_acceptance_keyed_not_stateful():
    model = AcceptanceModel("bernoulli", 0.5, seed=1)
    first = [evaluate_acceptance(model, "H", q) for q in range(50)]
    assert first == [evaluate_acceptance(model, "H", q) for q in range(50)]


def test_mask_matches_scalar_adaptation(small_base):
    accept = AcceptanceModel("bernoulli", 0.8, seed=2)
    budget = small_base.stats.mean_price
    for i, case in enumerate(small_base.cases[:40]):
        q = inject_missing(Query.from_case(case), MissingnessProfile(0.3, 0.3, 0.3), 8)
        if i % 3 == 0:
            q = Query({**q.problem, "Transport": "Coach"}, id=q.id)
        elif i % 3 == 1:
            q = Query({**q.problem, "Transport": "Train"}, id=q.id)
        mask = adaptable_mask(q, small_base, budget, accept)
        want = [level_of(adapt(c, q, budget, accept, small_base)) == 1 for c in small_base]
        np.testing.assert_array_equal(mask, want)

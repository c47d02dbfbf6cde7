import pytest

from mrfcbr.dataset import CaseBase, generate_synthetic
from mrfcbr.model import Case, Hotel, Query, travel_schema


def make_case(cid, price, *, duration=7.0, persons=2.0, acc=3, season=6, htype="City",
              dest="Crete", transport="Plane", hotel=None):
    problem = {"Duration": duration, "Persons": persons, "Accommodation": acc,
               "Season": season, "HolidayType": htype, "Destination": dest,
               "Transport": transport}
    return Case(cid, problem, price, Hotel(hotel or f"H{cid}", acc, dest))


@pytest.fixture
def six_cases() -> CaseBase:
    """Hand-traceable base.

    Relative to ``fixture_query`` (uniform weights over 7 features):
      0  identical                      d = 0    s = 1
      1  Season 7                       d = 1/7  s = 7/8    price over budget
      3  HolidayType, Transport         d = 2/7  s = 7/9
      4  + Season 8                     d = 4/7  s = 7/11
      2  HolidayType, Transport, Season 12   d = 8/7  s = 7/15
      5  other destination/category     farthest
    Cases 0, 2, 3, 4 share price/category/destination, so they form a clique
    with solution similarity exactly 1; 1 and 5 are isolated at st = 0.9.
    """
    cases = [
        make_case(0, 800.0),
        make_case(1, 1500.0, season=7),
        make_case(2, 800.0, htype="Bathing", transport="Car", season=12),
        make_case(3, 800.0, htype="Bathing", transport="Car"),
        make_case(4, 800.0, htype="Bathing", transport="Car", season=8),
        make_case(5, 600.0, duration=14.0, persons=4.0, acc=1, dest="Rhodes",
                  htype="Skiing", transport="Car", season=12),
    ]
    return CaseBase(travel_schema(), tuple(cases))


@pytest.fixture
def fixture_query() -> Query:
    return Query({"Duration": 7.0, "Persons": 2.0, "Accommodation": 3, "Season": 6,
                  "HolidayType": "City", "Destination": "Crete", "Transport": "Plane"},
                 budget=1000.0, id=99)


@pytest.fixture(scope="session")
def small_base() -> CaseBase:
    return generate_synthetic(120, seed=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrfcbr.adaptation import AcceptanceModel, LevelMapping
from mrfcbr.dataset import MissingnessProfile, generate_synthetic, inject_missing
from mrfcbr.model import Query
from mrfcbr.mrf import MetricMrf, build_mrf, exact_marginals, mean_field
from mrfcbr.retrieval import (KNN, MRF, AdaptationContext, CondSpec, agr_retrieve, cond,
                              knn_retrieve, mrf_candidates, structural_similarities)


def _ctx(cb, budget=1000.0, accept=None):
    return AdaptationContext(cb, budget, accept or AcceptanceModel.always())


# --- kNN -----------------------------------------------------------------------

def test_knn_stored_case_ranks_first(small_base):
    for case in small_base.cases[:10]:
        top = knn_retrieve(Query.from_case(case), small_base, 1)[0]
        assert top.similarity == 1.0
        # an exact duplicate with a lower id would win the tie
        assert top.case_id <= case.id


def test_knn_full_size_is_permutation(small_base):
    out = knn_retrieve(Query.from_case(small_base.cases[0]), small_base, len(small_base))
    assert sorted(r.case_id for r in out) == small_base.ids.tolist()


def test_knn_matches_full_sort_oracle(small_base):
    q = inject_missing(Query.from_case(small_base.cases[7]), MissingnessProfile(), 3)
    sims = structural_similarities(q, small_base)
    pairs = sorted(zip(sims.tolist(), small_base.ids.tolist()), key=lambda t: (-t[0], t[1]))
    for k in (1, 5, 17, 120):
        assert [r.case_id for r in knn_retrieve(q, small_base, k)] == [c for _, c in pairs[:k]]


def test_knn_fixture_order(six_cases, fixture_query):
    out = knn_retrieve(fixture_query, six_cases, 5)
    assert [r.case_id for r in out] == [0, 1, 3, 4, 2]
    np.testing.assert_allclose([r.similarity for r in out], [1, 7 / 8, 7 / 9, 7 / 11, 7 / 15])


def test_knn_k_bounds(six_cases, fixture_query):
    for k in (0, 7):
        with pytest.raises(ValueError):
            knn_retrieve(fixture_query, six_cases, k)


# --- cond ----------------------------------------------------------------------

@pytest.mark.parametrize("bel, spec, want", [
    ([0.6, 0.4], CondSpec("argmax"), 1),
    ([0.5, 0.5], CondSpec("argmax"), 1),
    ([0.1, 0.2, 0.3, 0.4], CondSpec("argmax"), 4),
    ([0.95, 0.05], CondSpec("threshold", 1, 0.9), 1),
    ([0.9, 0.1], CondSpec("threshold", 1, 0.9), None),
    ([0.5, 0.45, 0.05, 0.0], CondSpec("threshold", 2, 0.9), 2),
    ([0.3, 0.3, 0.4, 0.0], CondSpec("threshold", 2, 0.9), None),
])
def test_cond(bel, spec, want):
    assert cond(bel, spec) == want


def test_cond_spec_validation():
    for bad in (dict(mode="median"), dict(a=0), dict(pt=1.5), dict(pt=0.0)):
        with pytest.raises(ValueError):
            CondSpec(**bad)


# --- MRF candidates ------------------------------------------------------------

def test_two_node_candidates_depend_on_pt():
    mrf = MetricMrf(np.arange(2), 2, np.array([[0, 1]]), np.array([1.0]))
    # P(node 1 at level 1) = 1 / (1 + e^-1) = 0.7311
    assert mrf_candidates(mrf, {0: 1}, CondSpec(pt=0.7), "exact").levels == {1: 1}
    assert mrf_candidates(mrf, {0: 1}, CondSpec(pt=0.9), "exact").levels == {}


def test_evidenced_nodes_never_candidates(six_cases):
    mrf = build_mrf(six_cases, 0.9, 2)
    found = mrf_candidates(mrf, {i: 1 for i in range(6)}, CondSpec("argmax"))
    assert found.levels == {}


def test_untouched_components_use_prior():
    mrf = MetricMrf(np.arange(4), 2, np.array([[0, 1], [2, 3]]), np.array([1.0, 1.0]))
    # the untouched pair sits at the uniform prior: argmax tie goes to level 1
    found = mrf_candidates(mrf, {0: 2}, CondSpec("argmax"), "exact")
    assert found.levels == {1: 2, 2: 1, 3: 1}


def test_vectorised_cond_matches_scalar(small_base):
    mrf = build_mrf(small_base, 0.85, 4)
    ev = {int(i): 1 + int(i) % 4 for i in small_base.ids[::7]}
    bel = mean_field(mrf, ev)
    for spec in (CondSpec("argmax"), CondSpec("threshold", 1, 0.5),
                 CondSpec("threshold", 2, 0.8)):
        want = {}
        for nid in mrf.node_ids.tolist():
            lev = cond(bel[nid], spec)
            if nid not in ev and lev is not None:
                want[nid] = lev
        assert mrf_candidates(mrf, ev, spec).levels == want


# --- hybrid retrieval on the fixture ------------------------------------------

def test_fixture_k4(six_cases, fixture_query):
    mrf = build_mrf(six_cases, 0.9, 2)
    out = agr_retrieve(fixture_query, six_cases, mrf, 4, CondSpec(pt=0.9), _ctx(six_cases))
    assert [(r.case_id, r.source) for r in out] == [(0, KNN), (3, KNN), (4, KNN), (2, MRF)]
    assert out[-1].level == 1
    # the completed node's belief, for reference: 1 / (1 + e^-3)
    p = exact_marginals(mrf, {0: 1, 1: 2, 3: 1, 4: 1})[2][0]
    assert p == pytest.approx(1 / (1 + np.exp(-3)))


def test_fixture_k3(six_cases, fixture_query):
    mrf = build_mrf(six_cases, 0.9, 2)
    for engine in ("mean_field", "loopy_bp", "exact"):
        out = agr_retrieve(fixture_query, six_cases, mrf, 3, CondSpec(pt=0.9),
                           _ctx(six_cases), engine)
        assert [(r.case_id, r.source) for r in out] == [(0, KNN), (3, KNN), (4, MRF)]


def test_fixture_strict_pt_leaves_gap(six_cases, fixture_query):
    mrf = build_mrf(six_cases, 0.9, 2)
    out = agr_retrieve(fixture_query, six_cases, mrf, 4, CondSpec(pt=0.96), _ctx(six_cases))
    assert [r.case_id for r in out] == [0, 3, 4]


def test_fixture_k1_all_adaptable(six_cases, fixture_query):
    mrf = build_mrf(six_cases, 0.9, 2)
    out = agr_retrieve(fixture_query, six_cases, mrf, 1, CondSpec(), _ctx(six_cases))
    assert [(r.case_id, r.source) for r in out] == [(0, KNN)]


def test_four_level_mapping(six_cases, fixture_query):
    ctx = AdaptationContext(six_cases, 1000.0, AcceptanceModel.always(),
                            LevelMapping.FOUR_LEVEL)
    mrf = build_mrf(six_cases, 0.9, 4)
    out = agr_retrieve(fixture_query, six_cases, mrf, 4, CondSpec(pt=0.5), ctx)
    assert [r.case_id for r in out][:3] == [0, 3, 4]
    assert 1 not in {r.case_id for r in out}


_BASE = generate_synthetic(120, seed=3)
_MRF = build_mrf(_BASE, 0.9, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 119), st.integers(1, 30), st.floats(0.55, 0.99))
def test_hybrid_no_duplicates_and_bounded(qi, k, pt):
    small_base, mrf = _BASE, _MRF
    q = inject_missing(Query.from_case(small_base.cases[qi]), MissingnessProfile(), 1)
    ctx = _ctx(small_base, small_base.stats.mean_price, AcceptanceModel("bernoulli", 0.8))
    out = agr_retrieve(q, small_base, mrf, k, CondSpec(pt=pt), ctx)
    ids = [r.case_id for r in out]
    assert len(ids) == len(set(ids)) <= k
    assert all(r.level == 1 for r in out)


def test_pt_monotone(small_base):
    mrf = build_mrf(small_base, 0.9, 2)
    ctx = _ctx(small_base, small_base.stats.mean_price, AcceptanceModel("bernoulli", 0.8))
    for qi in range(0, 120, 11):
        q = inject_missing(Query.from_case(small_base.cases[qi]), MissingnessProfile(), 2)
        sizes = [len(agr_retrieve(q, small_base, mrf, 15, CondSpec(pt=pt), ctx))
                 for pt in (0.6, 0.75, 0.9, 0.99)]
        assert sizes == sorted(sizes, reverse=True)

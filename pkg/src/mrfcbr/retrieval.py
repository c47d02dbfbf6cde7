"""kNN structural retrieval and its MRF-based completion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptation import AcceptanceModel, LevelMapping, adapt, level_of
from .dataset import CaseBase
from .model import Case, Query, local_distance_column
from .mrf import ENGINES, Beliefs, Evidence, MetricMrf

KNN = "KNN"
MRF = "MRF"


@dataclass(frozen=True)
class RankedCase:
    case_id: int
    similarity: float
    source: str = KNN
    level: int | None = None


@dataclass(frozen=True)
class CondSpec:
    """Belief selector: ``"argmax"`` or ``"threshold"`` (mass on levels 1..a above pt)."""

    mode: str = "threshold"
    a: int = 1
    pt: float = 0.9

    def __post_init__(self):
        if self.mode not in ("argmax", "threshold"):
            raise ValueError(f"unknown cond mode {self.mode!r}")
        if self.a < 1:
            raise ValueError("a must be >= 1")
        if self.mode == "threshold" and not 0.0 < self.pt < 1.0:
            raise ValueError(f"pt must lie in (0, 1), got {self.pt}")


@dataclass(frozen=True)
class AdaptationContext:
    library: CaseBase
    budget: float
    accept: AcceptanceModel
    mapping: LevelMapping = LevelMapping.BINARY

    def level(self, case: Case, q: Query) -> int:
        return level_of(adapt(case, q, self.budget, self.accept, self.library), self.mapping)

    def adaptable(self, level: int) -> bool:
        return level < self.mapping.num_states


def structural_similarities(q: Query | Case, cb: CaseBase) -> np.ndarray:
    """Structural similarity of ``q`` to every case of ``cb`` (case-base order)."""
    schema, stats = cb.schema, cb.stats
    x = cb.encode(q)
    w = {k: v for k, v in schema.weights_structural.items() if v > 0}
    d = np.zeros(len(cb))
    for name, wf in w.items():
        d += wf * local_distance_column(schema.feature(name).kind, x[name], cb.columns[name],
                                        stats.sigma.get(name), stats.maxd[name])
    return 1.0 / (1.0 + d / sum(w.values()))


def rank_order(sims: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Positions sorted by similarity descending, ties by ascending id."""
    return np.lexsort((ids, -sims))


def knn_retrieve(q: Query, cb: CaseBase, k: int) -> list[RankedCase]:
    if len(cb) == 0:
        raise ValueError("empty case base")
    if not 1 <= k <= len(cb):
        raise ValueError(f"k must lie in 1..{len(cb)}, got {k}")
    sims = structural_similarities(q, cb)
    top = rank_order(sims, cb.ids)[:k]
    return [RankedCase(int(cb.ids[i]), float(sims[i])) for i in top]


def cond(bel, spec: CondSpec) -> int | None:
    bel = np.asarray(bel)
    if spec.mode == "argmax":
        return int(np.argmax(bel)) + 1
    if bel[:spec.a].sum() > spec.pt:
        return spec.a
    return None


@dataclass
class CandidateSet:
    levels: dict[int, int]
    converged: bool = True


def _prior(mrf: MetricMrf, engine: str, options: dict) -> Beliefs:
    key = ("prior", engine, tuple(sorted(options.items())))
    if key not in mrf._cache:
        mrf._cache[key] = ENGINES[engine](mrf, {}, **options)
    return mrf._cache[key]


def mrf_candidates(mrf: MetricMrf, retrieved_levels: Evidence, spec: CondSpec,
                   engine: str = "mean_field", **options) -> CandidateSet:
    """Clamp the retrieved cases, infer, and keep non-retrieved nodes passing ``cond``.

    Only components touched by evidence are re-inferred; the remaining nodes
    use the (query independent) evidence-free beliefs, which is exactly what a
    whole-graph run produces since components never interact.
    """
    if not retrieved_levels:
        raise ValueError("need at least one evidenced case")
    if engine not in ENGINES:
        raise ValueError(f"unknown inference engine {engine!r}")
    positions = np.array([mrf.index[int(i)] for i in retrieved_levels])
    labels = mrf.component_labels
    touched = np.unique(labels[positions])
    groups = [np.flatnonzero(labels == lab) for lab in touched]
    bel = ENGINES[engine](mrf, retrieved_levels, components=groups, **options)
    probs = bel.probs
    in_touched = np.isin(labels, touched)
    if not in_touched.all():
        prior = _prior(mrf, engine, options).probs
        probs = np.where(in_touched[:, None], probs, prior)
    if spec.mode == "argmax":
        levels = np.argmax(probs, axis=1) + 1
    else:
        levels = np.where(probs[:, :spec.a].sum(axis=1) > spec.pt, spec.a, 0)
    levels[positions] = 0
    keep = np.flatnonzero(levels)
    return CandidateSet(dict(zip(mrf.node_ids[keep].tolist(), levels[keep].tolist())),
                        bel.converged)


def complete_with_mrf(knn: list[RankedCase], sims: np.ndarray, cb: CaseBase,
                      mrf: MetricMrf, k: int, spec: CondSpec, ctx: AdaptationContext,
                      engine: str = "mean_field", **options) -> list[RankedCase]:
    """Keep the adaptable kNN cases and fill up to ``k`` with MRF candidates.

    ``knn`` entries must carry their adaptation level; ``sims`` are the
    structural similarities of the query to ``cb`` in case-base order.
    """
    kept = [r for r in knn if ctx.adaptable(r.level)]
    if len(kept) == len(knn):
        return list(knn)
    found = mrf_candidates(mrf, {r.case_id: r.level for r in knn}, spec, engine, **options)
    retrieved = {r.case_id for r in knn}
    cand = np.array(sorted(c for c, lev in found.levels.items()
                           if c not in retrieved and ctx.adaptable(lev)), dtype=np.int64)
    if len(cand) == 0:
        return kept
    pos = np.array([cb.index[int(c)] for c in cand])
    best = rank_order(sims[pos], cand)[:k - len(kept)]
    return kept + [RankedCase(int(cand[i]), float(sims[pos[i]]), MRF, found.levels[int(cand[i])])
                   for i in best]


def agr_retrieve(q: Query, cb: CaseBase, mrf: MetricMrf, k: int, spec: CondSpec,
                 ctx: AdaptationContext, engine: str = "mean_field",
                 **options) -> list[RankedCase]:
    """Hybrid retrieval: kNN, adaptation of the retrieved cases, MRF completion.

    Unadaptable kNN cases are dropped; the result may hold fewer than ``k``
    cases when the MRF proposes too few candidates.
    """
    if not 1 <= k <= len(cb):
        raise ValueError(f"k must lie in 1..{len(cb)}, got {k}")
    sims = structural_similarities(q, cb)
    top = rank_order(sims, cb.ids)[:k]
    knn = [RankedCase(int(cb.ids[i]), float(sims[i]), KNN, ctx.level(cb.cases[i], q))
           for i in top]
    return complete_with_mrf(knn, sims, cb, mrf, k, spec, ctx, engine, **options)

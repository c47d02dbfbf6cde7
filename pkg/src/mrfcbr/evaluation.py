"""Cross-validated comparison of plain kNN against kNN + MRF completion."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .adaptation import AcceptanceModel, LevelMapping, adaptable_mask
from .dataset import CaseBase, MissingnessProfile, inject_missing
from .model import Query
from .mrf import build_mrf
from .retrieval import (KNN, AdaptationContext, CondSpec, RankedCase,
                        complete_with_mrf, rank_order, structural_similarities)

DEFAULT_KS = tuple(range(1, 16)) + tuple(range(20, 101, 10))
DEFAULT_ALPHAS = (0.75, 0.95, 1.0, 1.25, 1.5)
STRATEGIES = ("knn", "mrf")
METRICS = ("accuracy", "precision", "recall", "f1")


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> float:
        retrieved = self.tp + self.fp
        return 1.0 if retrieved == 0 else self.tp / retrieved

    @property
    def recall(self) -> float:
        return 1.0 if self.positives == 0 else self.tp / self.positives

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    def metrics(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}


def score(retrieved: Iterable[int], positives: Iterable[int], n: int) -> ConfusionCounts:
    retrieved, positives = set(retrieved), set(positives)
    tp = len(retrieved & positives)
    fp = len(retrieved - positives)
    fn = len(positives - retrieved)
    tn = n - tp - fp - fn
    if tn < 0:
        raise ValueError("retrieved and positive sets exceed the library size")
    return ConfusionCounts(tp, fp, fn, tn)


def positive_set(q: Query, library: CaseBase, thr: float, ctx: AdaptationContext,
                 sims: np.ndarray | None = None) -> set[int]:
    """Library cases at least ``thr`` similar to ``q`` that adapt without being flagged."""
    if not thr > 0:
        raise ValueError("thr must be positive")
    if sims is None:
        sims = structural_similarities(q, library)
    mask = (sims >= thr) & adaptable_mask(q, library, ctx.budget, ctx.accept)
    return set(library.ids[mask].tolist())


# ---------------------------------------------------------------------------
# PR curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrPoint:
    recall: float
    precision: float
    k: int | None = None


def pr_curve(points: Sequence[PrPoint], P: float, N: float) -> list[PrPoint]:
    """Sort by recall and close the curve at ``(1, P/N)`` unless recall already reached ~1."""
    curve = sorted(points, key=lambda p: (p.recall, -1 if p.k is None else p.k))
    if not curve or max(p.recall for p in curve) < 0.999:
        curve.append(PrPoint(1.0, P / N))
    return curve


def auc(curve: Sequence[PrPoint]) -> float:
    if len(curve) < 2:
        raise ValueError("need at least two points")
    r = np.array([p.recall for p in curve])
    p = np.array([p.precision for p in curve])
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


# ---------------------------------------------------------------------------
# sweep configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    ks: tuple[int, ...] = DEFAULT_KS
    folds: int = 10
    st: float = 0.9
    pt: float = 0.9
    seed: int = 0
    missingness: MissingnessProfile = field(default_factory=MissingnessProfile)
    engine: str = "mean_field"
    acceptance_p: float = 0.8
    tol: float = 1e-6
    max_iter: int = 200

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "ks", tuple(sorted(int(k) for k in self.ks)))
        if self.folds < 2:
            raise ValueError("need at least two folds")
        if not self.ks or min(self.ks) < 1:
            raise ValueError("every k must be >= 1")
        if not self.alphas or min(self.alphas) <= 0:
            raise ValueError("every alpha must be positive")
        if not 0 < self.st:
            raise ValueError("st must be positive")
        if not 0 < self.pt < 1:
            raise ValueError("pt must lie in (0, 1)")
        if self.engine not in ("mean_field", "loopy_bp", "exact"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if isinstance(self.missingness, dict):
            object.__setattr__(self, "missingness", MissingnessProfile(**self.missingness))
        AcceptanceModel(p=self.acceptance_p)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# cross validation
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    config: SweepConfig
    # one dict per (strategy, alpha, k, fold)
    rows: list[dict]
    # per (alpha, fold): mean positives per query and library size
    positives: list[dict]
    fold_sizes: list[int] = field(default_factory=list)

    def means(self) -> list[dict]:
        return self._means

    @cached_property
    def _means(self) -> list[dict]:
        out = []
        for strategy in STRATEGIES:
            for alpha in self.config.alphas:
                for k in self.config.ks:
                    cell = [r for r in self.rows
                            if r["strategy"] == strategy and r["alpha"] == alpha and r["k"] == k]
                    out.append({"strategy": strategy, "alpha": alpha, "k": k,
                                **{m: float(np.mean([r[m] for r in cell])) for m in METRICS}})
        return out

    def mean_metric(self, strategy: str, alpha: float, k: int, metric: str) -> float:
        for row in self.means():
            if (row["strategy"], row["alpha"], row["k"]) == (strategy, alpha, k):
                return row[metric]
        raise KeyError((strategy, alpha, k))

    def positive_ratio(self, alpha: float) -> tuple[float, float]:
        """Mean positives per query and mean library size for one alpha."""
        cell = [r for r in self.positives if r["alpha"] == alpha]
        return (float(np.mean([r["mean_positives"] for r in cell])),
                float(np.mean([r["n"] for r in cell])))

    def curve(self, strategy: str, alpha: float) -> list[PrPoint]:
        pts = [PrPoint(r["recall"], r["precision"], r["k"]) for r in self.means()
               if r["strategy"] == strategy and r["alpha"] == alpha]
        P, N = self.positive_ratio(alpha)
        return pr_curve(pts, P, N)


def fold_partition(ids: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(np.asarray(ids))
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _evaluate_fold(cb: CaseBase, cfg: SweepConfig, fold: int,
                   test_ids: np.ndarray) -> tuple[list[dict], list[dict]]:
    library = cb.subset(np.setdiff1d(cb.ids, test_ids))
    n = len(library)
    if n < max(cfg.ks):
        raise ValueError(f"fold {fold} has {n} training cases, fewer than k={max(cfg.ks)}")
    stats = library.stats
    mrf = build_mrf(library, cfg.st, LevelMapping.BINARY.num_states)
    accept = AcceptanceModel("bernoulli", cfg.acceptance_p, cfg.seed)
    ctx = AdaptationContext(library, stats.mean_price, accept)
    spec = CondSpec("threshold", 1, cfg.pt)
    options = {} if cfg.engine == "exact" else {"tol": cfg.tol, "max_iter": cfg.max_iter}
    thrs = {a: a * stats.mu_c for a in cfg.alphas}

    sums = {(s, a, k): np.zeros(len(METRICS)) for s in STRATEGIES for a in cfg.alphas
            for k in cfg.ks}
    pos_total = dict.fromkeys(cfg.alphas, 0)
    for qid in test_ids.tolist():
        q = inject_missing(Query.from_case(cb.get(qid), stats.mean_price), cfg.missingness,
                           cfg.seed)
        sims = structural_similarities(q, library)
        order = rank_order(sims, library.ids)
        ok = adaptable_mask(q, library, ctx.budget, accept)
        positives = {a: set(library.ids[(sims >= t) & ok].tolist()) for a, t in thrs.items()}
        for a in cfg.alphas:
            pos_total[a] += len(positives[a])
        for k in cfg.ks:
            top = order[:k]
            knn = [RankedCase(int(library.ids[i]), float(sims[i]), KNN, 1 if ok[i] else 2)
                   for i in top]
            hybrid = complete_with_mrf(knn, sims, library, mrf, k, spec, ctx, cfg.engine,
                                       **options)
            for strategy, chosen in (("knn", knn), ("mrf", hybrid)):
                ids = [r.case_id for r in chosen]
                for a in cfg.alphas:
                    m = score(ids, positives[a], n).metrics()
                    sums[strategy, a, k] += [m[x] for x in METRICS]
    nq = len(test_ids)
    rows = [{"strategy": s, "alpha": a, "k": k, "fold": fold,
             **dict(zip(METRICS, (v / nq).tolist()))} for (s, a, k), v in sums.items()]
    pos = [{"alpha": a, "fold": fold, "mean_positives": pos_total[a] / nq, "n": n}
           for a in cfg.alphas]
    return rows, pos


def _fold_job(args):
    return _evaluate_fold(*args)


def cross_validate(cb: CaseBase, cfg: SweepConfig, jobs: int = 1,
                   folds: Sequence[int] | None = None) -> SweepResult:
    """Run the sweep; ``folds`` optionally restricts evaluation to some fold indices."""
    parts = fold_partition(cb.ids, cfg.folds, cfg.seed)
    if min(len(p) for p in parts) == 0:
        raise ValueError("fold too small: some fold has no query")
    selected = range(cfg.folds) if folds is None else folds
    work = [(cb, cfg, f, parts[f]) for f in selected]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_fold_job, work))
    else:
        results = [_fold_job(w) for w in work]
    rows = [r for fold_rows, _ in results for r in fold_rows]
    pos = [p for _, fold_pos in results for p in fold_pos]
    return SweepResult(cfg, rows, pos, [len(parts[f]) for f in selected])


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def _csv_text(header_line: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(header_line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_results(result: SweepResult, outdir: str | Path, provenance: str) -> list[Path]:
    """Write per-fold results, aggregated means and one PR/AUC file per (strategy, alpha)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    head = f"# {provenance}"
    written = []

    cols = ("strategy", "alpha", "k", "fold") + METRICS
    path = outdir / "results.csv"
    path.write_text(_csv_text(head, cols, ([r[c] for c in cols] for r in result.rows)))
    written.append(path)

    cols = ("strategy", "alpha", "k") + METRICS
    path = outdir / "means.csv"
    path.write_text(_csv_text(head, cols, ([r[c] for c in cols] for r in result.means())))
    written.append(path)

    for strategy in STRATEGIES:
        for alpha in result.config.alphas:
            curve = result.curve(strategy, alpha)
            rows = [(p.recall, p.precision) for p in curve] + [("AUC", auc(curve))]
            path = outdir / f"pr_{strategy}_alpha{alpha:g}.csv"
            path.write_text(_csv_text(head, ("recall", "precision"), rows))
            written.append(path)
    return written

"""Adaptation-guided case retrieval with metric Markov random fields."""
from .adaptation import AcceptanceModel, AdaptationOutcome, LevelMapping, adapt, level_of
from .dataset import (CaseBase, MissingnessProfile, compute_stats, generate_synthetic,
                      inject_missing, load_csv, write_csv)
from .evaluation import SweepConfig, auc, cross_validate, positive_set, pr_curve, score
from .model import (Case, CaseBaseStats, FeatureSchema, Hotel, Query, local_distance,
                    similarity, solution_distance, structural_distance, travel_schema)
from .mrf import (Beliefs, MetricMrf, build_mrf, connected_components, exact_marginals,
                  joint_unnormalized, loopy_bp, mean_field)
from .retrieval import (AdaptationContext, CondSpec, RankedCase, agr_retrieve, cond,
                        knn_retrieve, mrf_candidates)

__version__ = "0.1.0"

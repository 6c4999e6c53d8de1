"""Top-k recommendation with trust/distrust-aware pairwise ranking.

The pipeline factorizes the interaction matrix into user/item embeddings,
trains a three-branch tower scorer (or a linear scorer) with a pairwise
loss over six friend/foe ranking cases, and evaluates Recall@k / NDCG@k.
"""
from .criteria import CriterionContext, PartialRelation, enumerate_relations, sample_relation
from .data import (
    Dataset,
    ObservedSets,
    SignedSocialGraph,
    Split,
    ingest_interactions,
    ingest_signed_graph,
    observed_sets,
    split_ratings,
)
from .evaluate import EvalConfig, EvalReport, evaluate_model, ndcg_at_k, recall_at_k
from .mf import EmbeddingTable, MFConfig, factorize, factorize_explicit, factorize_implicit
from .sampler import SamplerConfig, draw_negatives, eligible_negatives
from .tower import LinearScorer, TowerNetwork, load_checkpoint
from .train import (
    TrainConfig,
    TrainingData,
    adam_step,
    pretrain_dpl,
    train_bpr,
    train_mode,
    train_sdpl,
    train_spl,
)

__version__ = "0.1.0"

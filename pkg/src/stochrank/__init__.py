"""stochrank: calibration and uncertainty for a desk-scale pointwise ranker.

Stochastic relevance scoring via seed-ensembles and test-time dropout,
empirical calibration error, risk-aware re-ranking, negative-sampling
shift protocols, and unanswerable-context (NOTA) prediction.
"""

from .calibration import ReliabilityReport, balanced_ece, compute_ece
from .data import (
    CandidateResponse,
    DialogueInstance,
    PredictiveDistribution,
    RankedList,
    load_corpus,
    save_corpus,
    tokenize,
    truncate_candidates,
)
from .evaluation import paired_t_test, recall_at_k, run_experiment_grid
from .negatives import ResponsePool, build_pool, ns_embedding, ns_lexical, ns_random
from .nota import NotaFeatureSpec, NotaInstance, build_nota_dataset, extract_nota_features, train_eval_nota
from .ranker import (
    ScorerParameters,
    TrainConfig,
    corpus_feature_table,
    extract_features,
    forward,
    gradient_check,
    train,
)
from .risk import RiskConfig, rerank, risk_adjusted_scores, select_b, sweep_report
from .stochastic import (
    DropoutSpec,
    EnsembleSpec,
    distribution_stats,
    predict_deterministic,
    predict_dropout,
    predict_ensemble,
)
from .synth import SyntheticCorpusSpec, generate_synthetic_corpus
from .text import corpus_stats

__version__ = "0.1.0"

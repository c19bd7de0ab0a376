"""Zero-shot visual word sense disambiguation over precomputed embedding stores.

Rank ten candidate images per (target word, context phrase) instance with
pluggable query systems (raw phrase, generated context, translation,
diffusion-sample matching), ensemble them by probability averaging, and
evaluate with hit rate, MRR and cross-system analyses.
"""

__version__ = "0.1.0"

from .dataset import (
    AuxQueryFile,
    Dataset,
    Instance,
    parse_aux_samples,
    parse_aux_text,
    parse_dataset,
    parse_gold,
    serialize_dataset,
)
from .ensemble import EnsembleSpec, ensemble_tables
from .errors import (
    AlignmentError,
    DomainError,
    MissingAuxRowError,
    MissingKeyError,
    ParseError,
    PartialFailureError,
    ProtocolError,
    RequestError,
    TransportError,
    ValidationError,
    VwsdError,
)
from .metrics import (
    ConfusionReport,
    MetricsReport,
    RoundTripReport,
    confusion,
    evaluate,
    gold_similarities,
    hit_rate,
    mean_sim_stats,
    mrr,
    roundtrip_stats,
    sim_gap_quadrants,
)
from .scoring import (
    CoverageReport,
    QueryPlan,
    QuerySource,
    ScoreRow,
    ScoreTable,
    SystemSpec,
    cosine,
    coverage_check,
    resolve_query,
    score_sample_query,
    score_system,
    score_text_query,
    softmax,
    table_from_json,
    table_to_json,
)
from .store import (
    EmbeddingSpace,
    EmbeddingStore,
    load_store_binary,
    load_store_jsonl,
    save_store_binary,
    save_store_jsonl,
)

__all__ = [name for name in dir() if not name.startswith("_")]

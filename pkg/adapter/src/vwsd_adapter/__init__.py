"""Model-side companion for the vwsd engine.

Serves the /embed wire protocol over an encoder registry and exports the
engine's input files: embedding stores, context sentences, translations with
round trips, and diffusion-sample embeddings. Strictly a producer; scores and
metrics stay in the engine.
"""

__version__ = "0.1.0"

from .exporters import (
    export_contexts,
    export_sd_samples,
    export_store,
    export_translations,
    read_dataset_rows,
    sample_key,
)
from .generators import (
    HttpTranslator,
    PseudoTranslator,
    context_generator,
    translator_from_name,
)
from .registry import (
    EncoderSpec,
    ModelRegistry,
    hashed_feature_vector,
    hashed_unit_vector,
    stub_registry,
)
from .service import create_app, serve_embed

__all__ = [name for name in dir() if not name.startswith("_")]

"""ttfr: grow a small trained transformer into a larger one.

The package implements zero-padding / near-identity weight transfer for
decoder-causal (GPT-style) and encoder-bidirectional (BERT-style) stacks,
a minimal transformer core so function preservation can be measured
exactly, a hand-written trainer, and a `.ttfr` checkpoint container.
"""

from ttfr.tensor import BACKEND
from ttfr.model import ModelConfig, ModelWeights
from ttfr.growth import GrowthPlan, grow_model
from ttfr.checkpoint import load, save
from ttfr.verify import compare_models

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GrowthPlan",
    "ModelConfig",
    "ModelWeights",
    "compare_models",
    "grow_model",
    "load",
    "save",
    "__version__",
]

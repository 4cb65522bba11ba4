"""Hierarchical motion-concept toolkit for 2D keypoint sequences.

Pipeline: fit spline primitives (`primitives`), recognize and localize
concepts from weak annotations (`training`, `ctc`), fit per-concept
generative models and synthesize scripts (`generator`), measure everything
(`evaluation`), and drive it all from the CLI/HTTP service (`cli`,
`service`). `synth_bench` provides seeded ground-truth datasets.
"""

from .errors import PmcError
from .types import (
    ConceptVocabulary,
    Description,
    PoseSequence,
    PrimitiveSequence,
    SplinePrimitive,
    WeakAnnotation,
)

__version__ = "0.1.0"

__all__ = [
    "PmcError",
    "PoseSequence",
    "SplinePrimitive",
    "PrimitiveSequence",
    "ConceptVocabulary",
    "WeakAnnotation",
    "Description",
    "__version__",
]

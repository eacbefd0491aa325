"""Language-bias analysis for multilingual retrieval-augmented generation.

The package covers corpus chunking, vanilla and oracle (per-language) RAG
runs against pluggable model services, ranking and generation metrics,
language-distribution analytics, significance testing, and construction of
answer-utility-driven listwise training data for rerankers.
"""

__version__ = "0.1.0"

from mrag_bias.exceptions import (
    ConfigError,
    NotApplicableError,
    ProtocolError,
    QueryDropped,
    ServiceError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "NotApplicableError",
    "ProtocolError",
    "QueryDropped",
    "ServiceError",
]

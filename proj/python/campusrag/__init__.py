"""Hybrid BM25/vector retrieval and grounded chat over a campus knowledge base."""

from ._campusrag import (
    App,
    CampusragError,
    HashingEmbedder,
    Index,
    InvalidInput,
    ScoredDoc,
    __version__,
    analyze,
    bleu,
    bm25_topk,
    content_hash,
    cosine,
    embed_score,
    fuse,
    lemmatize,
    meteor,
    normalize,
    rouge_l,
    split_recursive,
    tokenize,
)

__all__ = [
    "App",
    "CampusragError",
    "HashingEmbedder",
    "Index",
    "InvalidInput",
    "ScoredDoc",
    "__version__",
    "analyze",
    "bleu",
    "bm25_topk",
    "content_hash",
    "cosine",
    "embed_score",
    "fuse",
    "lemmatize",
    "meteor",
    "normalize",
    "rouge_l",
    "split_recursive",
    "tokenize",
]

"""Per-second language embeddings from a transcript.

Sentences are cleaned, embedded, and averaged per frame according to the
alignment rule; frames without speech get the zero vector.  Model ids:

    all-MiniLM-L6-v2   sentence-transformers model (needs download access)
    hash:DIM           deterministic hashing embedder, for offline testing

The hashing embedder sums a seeded unit vector per token (seed from the
token's SHA-256), normalized per sentence: stable across runs and
platforms, carries token-overlap structure, no model weights needed.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .transcript import Sentence, align_sentences, clean_sentences

DEFAULT_DIM = 384


class ModelUnavailableError(RuntimeError):
    """Embedding weights could not be loaded in this environment."""


def _hash_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    vec = np.random.default_rng(seed).standard_normal(dim)
    return vec / np.linalg.norm(vec)


def hash_embed(texts: list[str], dim: int = DEFAULT_DIM) -> np.ndarray:
    out = np.zeros((len(texts), dim))
    for i, text in enumerate(texts):
        tokens = text.split()
        if not tokens:
            continue
        acc = np.zeros(dim)
        for tok in tokens:
            acc += _hash_vector(tok.lower(), dim)
        norm = np.linalg.norm(acc)
        out[i] = acc / norm if norm > 0 else acc
    return out


def embed_sentences(texts: list[str], model_id: str = "all-MiniLM-L6-v2") -> np.ndarray:
    """Embed sentences; (len(texts), d) with d = 384 for the default model."""
    if model_id.startswith("hash:"):
        return hash_embed(texts, dim=int(model_id.split(":", 1)[1]))
    try:
        from sentence_transformers import SentenceTransformer

        model = SentenceTransformer(model_id)
        return np.asarray(model.encode(texts, show_progress_bar=False), dtype=np.float64)
    except Exception as exc:
        raise ModelUnavailableError(f"{model_id}: {exc}") from exc


def extract_language(n: int, sentences: list[Sentence],
                     model_id: str = "all-MiniLM-L6-v2",
                     dim: int = DEFAULT_DIM):
    """(n, d) per-frame embeddings plus the alignment bookkeeping.

    Each frame's vector is the mean of its sentences' embeddings; empty
    frames stay zero.  Returns (features, per_frame, dropped).
    """
    cleaned = clean_sentences(sentences)
    per_frame, dropped = align_sentences(n, cleaned)
    if cleaned:
        embeddings = embed_sentences([s.text for s in cleaned], model_id)
        dim = embeddings.shape[1]
    else:
        embeddings = np.zeros((0, dim))
    features = np.zeros((n, dim))
    for t, idx in enumerate(per_frame):
        if idx:
            features[t] = embeddings[list(idx)].mean(axis=0)
    return features, per_frame, dropped

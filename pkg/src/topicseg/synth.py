"""Synthetic multimodal sequence generator with known boundaries.

Segments get well separated visual means; language features are a noisy
saturating map of the clean visual signal, so they share the segment
structure but stay untouched by the injected one-frame visual spikes
(the generator's stand-in for abrupt camera/folder changes).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import (
    LANGUAGE,
    VISUAL,
    FeatureSequence,
    Manifest,
    Segmentation,
    Sentence,
    write_feature_file,
    write_manifest,
)
from .errors import DataError

VOCAB_WORDS = 12
SENTENCE_WORDS = 4


@dataclass(frozen=True)
class SynthConfig:
    T: int = 1800
    K: int = 8
    d_v: int = 64
    d_l: int = 32
    sep: float = 0.5
    noise: float = 0.1
    coupling: float = 3.0
    coupling_rank: int | None = 2  # None: full-rank coupling matrix
    spike_rate: float = 0.02
    min_len: int = 120
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.T < self.K * self.min_len:
            raise DataError(
                f"need T >= K*min_len, got T={self.T}, K={self.K}, min_len={self.min_len}"
            )
        if self.d_v < 1 or self.d_l < 1 or self.min_len < 1:
            raise DataError("dimensions and min_len must be positive")
        if self.sep < 0 or self.noise < 0 or not (0 <= self.spike_rate <= 1):
            raise DataError("sep/noise must be >= 0 and spike_rate in [0, 1]")
        if self.coupling_rank is not None and not (
            1 <= self.coupling_rank <= min(self.d_v, self.d_l)
        ):
            raise DataError("coupling_rank must be in [1, min(d_v, d_l)]")


def _segment_lengths(cfg: SynthConfig, rng) -> np.ndarray:
    extra = cfg.T - cfg.K * cfg.min_len
    shares = rng.dirichlet(np.full(cfg.K, 5.0)) * extra
    lengths = cfg.min_len + np.floor(shares).astype(int)
    for i in range(cfg.T - int(lengths.sum())):
        lengths[i % cfg.K] += 1
    return lengths


def generate(cfg: SynthConfig):
    """Draw one synthetic video.

    Returns (V1, L1, sentences, truth) where truth carries the segment
    boundaries in seconds.  Deterministic per cfg.seed.
    """
    # independent child streams so e.g. the spike draws cannot shift the
    # language noise: the language view is bit-identical across spike rates
    streams = np.random.SeedSequence(cfg.seed).spawn(5)
    rng_seg, rng_vis, rng_spike, rng_lang, rng_text = map(np.random.default_rng, streams)

    lengths = _segment_lengths(cfg, rng_seg)
    labels = np.repeat(np.arange(cfg.K), lengths)

    means = cfg.sep * rng_seg.standard_normal((cfg.K, cfg.d_v)) / np.sqrt(cfg.d_v)
    clean = means[labels]
    visual = clean + cfg.noise * rng_vis.standard_normal((cfg.T, cfg.d_v))
    spikes = rng_spike.random(cfg.T) < cfg.spike_rate
    n_spikes = int(spikes.sum())
    if n_spikes:
        visual[spikes] = (
            10.0 * cfg.sep * rng_spike.standard_normal((n_spikes, cfg.d_v)) / np.sqrt(cfg.d_v)
        )

    # low-rank coupling: the transcript reflects a topical subspace of the
    # visuals, so some segment contrasts are weak in language even though
    # the two views share structure
    if cfg.coupling_rank is None:
        A = cfg.coupling * rng_lang.standard_normal((cfg.d_l, cfg.d_v)) / np.sqrt(cfg.d_v)
    else:
        r = cfg.coupling_rank
        U = rng_lang.standard_normal((cfg.d_l, r))
        W = rng_lang.standard_normal((r, cfg.d_v))
        A = cfg.coupling * (U @ W) / np.sqrt(r * cfg.d_v)
    language = np.tanh(clean @ A.T) + cfg.noise * rng_lang.standard_normal((cfg.T, cfg.d_l))

    vocab = [
        [f"w{k}_{j}" for j in range(VOCAB_WORDS)] for k in range(cfg.K)
    ]
    sentences = []
    for t in range(cfg.T):
        k = labels[t]
        words = [vocab[k][rng_text.integers(VOCAB_WORDS)] for _ in range(SENTENCE_WORDS)]
        sentences.append(
            Sentence(text=f"topic{k:02d} " + " ".join(words), offset=float(t), duration=1.0)
        )

    truth = Segmentation(
        duration=float(cfg.T),
        boundaries=tuple(float(b) for b in np.cumsum(lengths)[:-1]),
        labels=tuple(range(cfg.K)),
    )
    return (
        FeatureSequence(visual, modality=VISUAL),
        FeatureSequence(language, modality=LANGUAGE),
        sentences,
        truth,
    )


def write_bundle(out_dir, cfg: SynthConfig, video_id: str = "synth") -> dict:
    """Emit feature files, manifest and ground truth for one synthetic video.

    Returns the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    V1, L1, sentences, truth = generate(cfg)
    paths = {
        "visual": out / f"{video_id}_visual.lsg1",
        "language": out / f"{video_id}_language.lsg1",
        "manifest": out / f"{video_id}_manifest.json",
        "truth": out / f"{video_id}_truth.json",
    }
    write_feature_file(paths["visual"], V1.data)
    write_feature_file(paths["language"], L1.data)
    write_manifest(
        paths["manifest"],
        Manifest(
            video_id=video_id,
            visual_path=paths["visual"].name,
            language_path=paths["language"].name,
            sentences=sentences,
            reference_boundaries=[float(b) for b in truth.boundaries],
        ),
    )
    import json

    with open(paths["truth"], "w") as fh:
        json.dump(truth.to_dict(video_id), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {k: str(v) for k, v in paths.items()}

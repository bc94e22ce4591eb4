"""End-to-end per-video segmentation: transcript alignment, deep CCA
transforms, transport/correlation signals, fusion, the duration-explicit
sampler, and short-segment merging.

Also owns the run configuration aggregate that the CLI loads from JSON.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .datamodel import Segmentation, align_transcript, clean_transcript
from .dcca import DccaConfig, dcca_train, default_hidden, linear_cca_fit, mlp_apply
from .errors import ConfigError, TopicsegError
from .fusion import CHANNELS, ablation_select
from .hsmm import HdpHsmmHyper, fit_segment
from .ot import OtConfig, temporal_signals
from .postprocess import MergeConfig, merge_short_segments
from .baseline_hca import HcaConfig
from .synth import SynthConfig

MODALITY_CHANNELS = {
    "multimodal": CHANNELS,
    "visual": ("visual", "wd_v"),
    "language": ("language", "wd_l"),
}


@dataclass
class HsmmConfig:
    """Sampler settings carried by the run configuration."""

    S: int = 20
    gamma: float = 6.0
    alpha: float = 6.0
    a_dur: float = 3.0
    b_dur: float = 0.01
    D_max: int = 600
    sweeps: int = 200

    def to_hyper(self) -> HdpHsmmHyper:
        return HdpHsmmHyper(S=self.S, gamma=self.gamma, alpha=self.alpha,
                            a_dur=self.a_dur, b_dur=self.b_dur, D_max=self.D_max)


@dataclass
class RunConfig:
    """Aggregate configuration for every stage, JSON-loadable."""

    dcca: DccaConfig = field(default_factory=DccaConfig)
    # signal extraction runs thousands of small solves; the budgeted
    # settings keep the per-window cost in the ms range (cost drift vs
    # full convergence is a few percent, uniform across timesteps)
    ot: OtConfig = field(default_factory=lambda: OtConfig(
        max_iter=150, tol=1e-5, gw_outer_iter=10))
    hsmm: HsmmConfig = field(default_factory=HsmmConfig)
    merge: MergeConfig = field(default_factory=MergeConfig)
    hca: HcaConfig = field(default_factory=HcaConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    window: int = 10
    d_obs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.d_obs < 1:
            raise ConfigError("window and d_obs must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        def build(dc_type, data, path):
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: expected an object")
            names = {f.name: f for f in dataclasses.fields(dc_type)}
            unknown = set(data) - set(names)
            if unknown:
                raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
            kwargs = {}
            for key, value in data.items():
                if isinstance(value, list):
                    value = tuple(value)
                kwargs[key] = value
            try:
                return dc_type(**kwargs)
            except TopicsegError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: {exc}") from exc

        if not isinstance(payload, dict):
            raise ConfigError("run config must be a JSON object")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(payload) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        kwargs = {}
        for name, value in payload.items():
            f = sections[name]
            if dataclasses.is_dataclass(f.type) or name in (
                "dcca", "ot", "hsmm", "merge", "hca", "synth"
            ):
                section_type = {
                    "dcca": DccaConfig, "ot": OtConfig, "hsmm": HsmmConfig,
                    "merge": MergeConfig, "hca": HcaConfig, "synth": SynthConfig,
                }[name]
                kwargs[name] = build(section_type, value, name)
            else:
                kwargs[name] = value
        try:
            return cls(**kwargs)
        except TopicsegError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(payload)


def channels_for(modality: str | None, channels: tuple | None) -> tuple:
    """Resolve the fused channel set from --modality / --channels flags."""
    if channels:
        unknown = set(channels) - set(CHANNELS)
        if unknown:
            raise ConfigError(f"unknown channels {sorted(unknown)}")
        return tuple(c for c in CHANNELS if c in channels)
    if modality is None:
        return CHANNELS
    try:
        return MODALITY_CHANNELS[modality]
    except KeyError:
        raise ConfigError(
            f"modality must be one of {sorted(MODALITY_CHANNELS)}, got {modality!r}"
        ) from None


@dataclass
class StageTimer:
    timings: dict = field(default_factory=dict)

    def run(self, stage, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except TopicsegError as exc:
            raise TopicsegError(f"stage {stage}: {exc}") from exc
        self.timings[stage] = round(time.perf_counter() - t0, 3)
        return out


def resolve_dcca(cfg: DccaConfig, d_v: int, d_l: int, seed: int) -> DccaConfig:
    """Clamp k to the input widths and pin the derived hidden sizes.

    k = min(k, d_v, d_l): narrower outputs shrink the class-mean
    separation by sqrt(k/d) while per-direction noise stays fixed, so the
    projection should stay as wide as the narrower view allows.
    """
    k = max(1, min(cfg.k, d_v, d_l))
    return DccaConfig(
        hidden_v=cfg.hidden_v if cfg.hidden_v is not None else default_hidden(d_v, k),
        hidden_l=cfg.hidden_l if cfg.hidden_l is not None else default_hidden(d_l, k),
        k=k, r=cfg.r, lr=cfg.lr, epochs=cfg.epochs, batch=cfg.batch, seed=seed,
    )


def train_transforms(V1: np.ndarray, L1: np.ndarray, cfg: RunConfig,
                     seed: int | None = None):
    """Fit the branch networks and the linear CCA head on one sequence pair."""
    seed = cfg.seed if seed is None else seed
    dcca_cfg = resolve_dcca(cfg.dcca, V1.shape[1], L1.shape[1], seed)
    f, g, trace = dcca_train(V1, L1, dcca_cfg)
    V2 = mlp_apply(f, V1)
    L2 = mlp_apply(g, L1)
    cca = linear_cca_fit(V2, L2, k=dcca_cfg.k, r=dcca_cfg.r)
    return f, g, cca, trace


def segment_video(V1, L1, sentences, cfg: RunConfig,
                  channels: tuple = CHANNELS,
                  transforms=None, seed: int | None = None) -> dict:
    """Run the full per-video pipeline.

    ``transforms`` may carry pre-trained (f, g, cca) to share transforms
    across videos; otherwise they are fit on this video.  Returns the raw
    and merged segmentations plus signals and diagnostics.
    """
    seed = cfg.seed if seed is None else seed
    V1 = np.asarray(V1.data if hasattr(V1, "data") and not isinstance(V1, np.ndarray) else V1,
                    dtype=np.float64)
    L1 = np.asarray(L1.data if hasattr(L1, "data") and not isinstance(L1, np.ndarray) else L1,
                    dtype=np.float64)
    timer = StageTimer()

    def stage_align():
        if not sentences:
            return None
        cleaned = clean_transcript(sentences)
        return align_transcript(V1.shape[0], cleaned)

    aligned = timer.run("align", stage_align)

    if transforms is None:
        f, g, cca = timer.run("dcca", lambda: train_transforms(V1, L1, cfg, seed))[:3]
    else:
        f, g, cca = transforms
    V2 = mlp_apply(f, V1)
    L2 = mlp_apply(g, L1)

    signals = timer.run(
        "signals", lambda: temporal_signals(V2, L2, cca, w=cfg.window, cfg=cfg.ot)
    )
    obs = timer.run(
        "fusion", lambda: ablation_select(V2, L2, signals, channels, cfg.d_obs, seed)
    )
    raw_seg, diagnostics = timer.run(
        "hsmm",
        lambda: fit_segment(obs, cfg.hsmm.to_hyper(), sweeps=cfg.hsmm.sweeps, seed=seed),
    )
    merged = timer.run(
        "merge", lambda: merge_short_segments(raw_seg, V2, L2, cfg.merge)
    )
    return {
        "segmentation": merged,
        "raw_segmentation": raw_seg,
        "signals": signals,
        "diagnostics": diagnostics,
        "aligned": aligned,
        "pca_energy": obs.energy,
        "channels": obs.channels,
        "timings": timer.timings,
    }


def segmentation_json(seg: Segmentation, video_id: str) -> str:
    """Canonical byte-stable JSON for a segmentation result."""
    return json.dumps(seg.to_dict(video_id), indent=2, sort_keys=True) + "\n"

"""YAML config files for the lab and codec CLIs.

Lab schema (all keys optional, defaults shown):

    seed: 0
    task:
      vocab_size: 16
      frames_per_token: 4
      S: 9
      d: 8
      frames_per_second: 50
    backbone:
      preset: desk          # desk (4x128) or paper (16x768)
      n_experts: 4
    flow:
      schedule: linear      # linear | cosine
      steps: 25
      guidance_scale: 5.0
      sq_regularize: true
    optimizer:
      steps: 2000
      batch: 8
      lr: 0.001
      warmup: 100
    data:
      n_utts: 192
      len_min: 3
      len_max: 8
      corrupt_fraction: 0.1
      corrupt_mode: empty   # empty | shuffle

Codec schema:

    codec:
      S: 9
      d: 32
      sample_rate: 16000
      frames_per_second: 50
      channels: [32, 64]
      strides: [4, 8, 10]
      kernel_sizes: [16, 32, 40]
    train:
      steps: 3000
      batch: 8
      lr: 0.002
      lambda_stft: 1.0
      n_clips: 256
      seed: 0
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .backbone import BackboneConfig, desk_preset, paper_preset
from .codec import CodecConfig, CodecTrainConfig
from .flow import FlowConfig
from .lab import FlowTrainConfig, OracleCodecTask
from .sqlat import LatticeSpec


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    n_utts: int = 192
    len_min: int = 3
    len_max: int = 8
    corrupt_fraction: float = 0.1
    corrupt_mode: str = "empty"


@dataclass
class LabConfig:
    seed: int = 0
    task: OracleCodecTask = field(default_factory=OracleCodecTask)
    backbone_preset: str = "desk"
    n_experts: int = 4
    flow: FlowConfig = None
    optimizer: FlowTrainConfig = field(default_factory=FlowTrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def backbone(self) -> BackboneConfig:
        make = desk_preset if self.backbone_preset == "desk" else paper_preset
        kwargs = {"n_experts": self.n_experts} if self.backbone_preset == "desk" else {}
        return make(vocab_size=self.task.vocab_size + 1, latent_dim=self.task.spec.d, **kwargs)


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return sec


def load_lab_config(path: str) -> LabConfig:
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError("lab config must be a mapping")
    seed = int(raw.get("seed", 0))
    t = _section(raw, "task")
    task = OracleCodecTask(
        vocab_size=int(t.get("vocab_size", 16)),
        frames_per_token=int(t.get("frames_per_token", 4)),
        spec=LatticeSpec(int(t.get("S", 9)), int(t.get("d", 8))),
        frames_per_second=int(t.get("frames_per_second", 50)),
        seed=int(t.get("seed", seed)),
    )
    b = _section(raw, "backbone")
    preset = str(b.get("preset", "desk"))
    if preset not in ("desk", "paper"):
        raise ConfigError(f"backbone.preset must be desk or paper, got {preset!r}")
    f_ = _section(raw, "flow")
    flow_cfg = FlowConfig(
        spec=task.spec,
        schedule=str(f_.get("schedule", "linear")),
        steps=int(f_.get("steps", 25)),
        guidance_scale=float(f_.get("guidance_scale", 5.0)),
        sq_regularize=bool(f_.get("sq_regularize", True)),
    )
    o = _section(raw, "optimizer")
    opt_cfg = FlowTrainConfig(
        steps=int(o.get("steps", 2000)),
        batch=int(o.get("batch", 8)),
        lr=float(o.get("lr", 1e-3)),
        warmup=int(o.get("warmup", 100)),
        seed=seed,
    )
    d = _section(raw, "data")
    data = DataConfig(
        n_utts=int(d.get("n_utts", 192)),
        len_min=int(d.get("len_min", 3)),
        len_max=int(d.get("len_max", 8)),
        corrupt_fraction=float(d.get("corrupt_fraction", 0.1)),
        corrupt_mode=str(d.get("corrupt_mode", "empty")),
    )
    if data.corrupt_mode not in ("empty", "shuffle"):
        raise ConfigError(f"data.corrupt_mode must be empty or shuffle, got {data.corrupt_mode!r}")
    return LabConfig(seed=seed, task=task, backbone_preset=preset,
                     n_experts=int(b.get("n_experts", 4)), flow=flow_cfg,
                     optimizer=opt_cfg, data=data)


def load_codec_config(path: str) -> tuple[CodecConfig, CodecTrainConfig]:
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError("codec config must be a mapping")
    c = _section(raw, "codec")
    cfg = CodecConfig(
        spec=LatticeSpec(int(c.get("S", 9)), int(c.get("d", 32))),
        sample_rate=int(c.get("sample_rate", 16000)),
        frames_per_second=int(c.get("frames_per_second", 50)),
        channels=tuple(c.get("channels", (32, 64))),
        strides=tuple(c.get("strides", (4, 8, 10))),
        kernel_sizes=tuple(c.get("kernel_sizes", (16, 32, 40))),
    )
    t = _section(raw, "train")
    train = CodecTrainConfig(
        steps=int(t.get("steps", 3000)),
        batch=int(t.get("batch", 8)),
        lr=float(t.get("lr", 2e-3)),
        lambda_stft=float(t.get("lambda_stft", 1.0)),
        seed=int(t.get("seed", 0)),
        n_clips=int(t.get("n_clips", 256)),
    )
    return cfg, train

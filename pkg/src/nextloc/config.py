"""Experiment configuration: one JSON file drives the whole pipeline.

Every stage (preprocess, pretrain, train, evaluate, visualize) reads the
same ExperimentConfig, so a fixed config plus its seed list pins the full
artifact chain. All randomness flows from the explicit seeds here; nothing
reads the wall clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from nextloc.calliper import PretrainConfig
from nextloc.geoenc import GridSpec
from nextloc.predictor import PredictorConfig
from nextloc.util import stable_json

EMBEDDER_KINDS = ("calliper-encoder", "lookup-table", "skipgram-table")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    checkins_path: str
    pois_path: str
    out_dir: str
    grid: GridSpec
    pretrain: PretrainConfig
    predictor: PredictorConfig
    split_mode: str = "conventional"
    holdout_fraction: float = 0.1
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    embedder_kinds: tuple[str, ...] = EMBEDDER_KINDS
    min_visits_per_user: int = 10
    min_visits_per_location: int = 10
    window_days: int = 7
    min_context: int = 3
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    train_epochs: int = 100
    train_patience: int = 3
    train_batch_size: int = 128
    train_learning_rate: float = 0.001
    max_train_sequences: int = 0  # 0 disables the cap
    skipgram_window: int = 2
    skipgram_negatives: int = 5
    skipgram_epochs: int = 5
    skipgram_learning_rate: float = 0.025

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "embedder_kinds", tuple(self.embedder_kinds))
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        if self.split_mode not in ("conventional", "inductive"):
            raise ValueError(f"unknown split mode {self.split_mode!r}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError(f"holdout fraction must be in (0, 1), got {self.holdout_fraction}")
        if not self.seeds:
            raise ValueError("seeds list must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not self.embedder_kinds:
            raise ValueError("at least one embedder kind is required")
        for kind in self.embedder_kinds:
            if kind not in EMBEDDER_KINDS:
                raise ValueError(f"unknown embedder kind {kind!r}; valid: {EMBEDDER_KINDS}")
        if len(set(self.embedder_kinds)) != len(self.embedder_kinds):
            raise ValueError("embedder kinds must be distinct")
        if len(self.split_ratios) != 3 or min(self.split_ratios) <= 0:
            raise ValueError("split ratios must be three positive numbers")
        if self.grid != self.pretrain.grid:
            raise ValueError("config grid and contrastive-pretraining grid must agree")
        if min(
            self.min_visits_per_user,
            self.min_visits_per_location,
            self.window_days,
            self.min_context,
            self.train_epochs,
            self.train_patience,
            self.train_batch_size,
            self.skipgram_window,
            self.skipgram_negatives,
            self.skipgram_epochs,
        ) < 1:
            raise ValueError("count and size settings must be positive")
        if self.max_train_sequences < 0:
            raise ValueError("max_train_sequences must be >= 0")
        if self.train_learning_rate <= 0 or self.skipgram_learning_rate <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "checkins_path": self.checkins_path,
            "pois_path": self.pois_path,
            "out_dir": self.out_dir,
            "grid": self.grid.to_dict(),
            "pretrain": {
                "batch_size": self.pretrain.batch_size,
                "temperature": self.pretrain.temperature,
                "epochs": self.pretrain.epochs,
                "learning_rate": self.pretrain.learning_rate,
                "embed_dim": self.pretrain.embed_dim,
                "hidden_dim": self.pretrain.hidden_dim,
                "seed": self.pretrain.seed,
            },
            "predictor": self.predictor.to_dict(),
            "split_mode": self.split_mode,
            "holdout_fraction": self.holdout_fraction,
            "seeds": list(self.seeds),
            "embedder_kinds": list(self.embedder_kinds),
            "min_visits_per_user": self.min_visits_per_user,
            "min_visits_per_location": self.min_visits_per_location,
            "window_days": self.window_days,
            "min_context": self.min_context,
            "split_ratios": list(self.split_ratios),
            "train_epochs": self.train_epochs,
            "train_patience": self.train_patience,
            "train_batch_size": self.train_batch_size,
            "train_learning_rate": self.train_learning_rate,
            "max_train_sequences": self.max_train_sequences,
            "skipgram_window": self.skipgram_window,
            "skipgram_negatives": self.skipgram_negatives,
            "skipgram_epochs": self.skipgram_epochs,
            "skipgram_learning_rate": self.skipgram_learning_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        grid = GridSpec.from_dict(d.pop("grid"))
        pretrain = PretrainConfig(grid=grid, **d.pop("pretrain"))
        predictor = PredictorConfig.from_dict(d.pop("predictor"))
        return cls(grid=grid, pretrain=pretrain, predictor=predictor, **d)

    def validate_paths(self) -> None:
        """Input files must exist before any stage runs."""
        missing = [p for p in (self.checkins_path, self.pois_path) if not Path(p).is_file()]
        if missing:
            raise FileNotFoundError("missing input file(s): " + ", ".join(missing))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(stable_json(cfg.to_dict()) + "\n", encoding="utf-8")


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return ExperimentConfig.from_dict(json.loads(p.read_text(encoding="utf-8")))


# ----------------------------------------------------------------------
# named presets
#
# The four check-in presets carry the published per-dataset settings:
# radii 0.01-10 except gowalla-ld at 1-1000, contrastive batch sizes
# 128 / 256 / 1024 / 256. The synthetic-desk preset shrinks every stage
# so a full three-embedder, five-seed comparison finishes in minutes on
# one CPU.

_CHECKIN_PRESETS = {
    "fsq-nyc": {"r_min": 0.01, "r_max": 10.0, "batch_size": 128},
    "fsq-tky": {"r_min": 0.01, "r_max": 10.0, "batch_size": 256},
    "gowalla-ld": {"r_min": 1.0, "r_max": 1000.0, "batch_size": 1024},
    "geolife": {"r_min": 0.01, "r_max": 10.0, "batch_size": 256},
}

PRESET_NAMES = tuple(sorted(_CHECKIN_PRESETS)) + ("synthetic-desk",)


def make_preset(
    name: str,
    checkins_path: str,
    pois_path: str,
    out_dir: str,
    split_mode: str = "conventional",
) -> ExperimentConfig:
    if name in _CHECKIN_PRESETS:
        p = _CHECKIN_PRESETS[name]
        grid = GridSpec(p["r_min"], p["r_max"], 32)
        return ExperimentConfig(
            name=name,
            checkins_path=checkins_path,
            pois_path=pois_path,
            out_dir=out_dir,
            grid=grid,
            pretrain=PretrainConfig(grid=grid, batch_size=p["batch_size"]),
            predictor=PredictorConfig(),
            split_mode=split_mode,
        )
    if name == "synthetic-desk":
        # city coordinates live on a radius-6 ring with sigma-0.8 spread,
        # so useful structure spans roughly 0.1 to 20 units
        grid = GridSpec(0.1, 20.0, 16)
        return ExperimentConfig(
            name=name,
            checkins_path=checkins_path,
            pois_path=pois_path,
            out_dir=out_dir,
            grid=grid,
            pretrain=PretrainConfig(
                grid=grid, batch_size=64, epochs=40, embed_dim=64, hidden_dim=128
            ),
            predictor=PredictorConfig(
                layers=2,
                heads=4,
                ff_dim=128,
                dropout=0.1,
                d_model=64,
                max_context=16,
                time_dim=8,
                dow_dim=4,
                user_dim=8,
            ),
            split_mode=split_mode,
            min_visits_per_user=10,
            min_visits_per_location=10,
            train_epochs=12,
            train_patience=2,
            train_batch_size=128,
            max_train_sequences=2500,
            skipgram_epochs=5,
        )
    raise ValueError(f"unknown preset {name!r}; valid: {', '.join(PRESET_NAMES)}")

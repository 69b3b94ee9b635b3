"""Next-location prediction over visit sequences.

A causal transformer encoder reads the embedded context visits (location
embedding concatenated with learned time-of-day, day-of-week, and user
features, linearly mapped to the model width, plus learned positions). The
final position's hidden state goes through a fully connected head and a
softmax over every class in the LocationIndex. Trained with cross-entropy
and early stopping on validation loss; the best-validation parameters are
restored at the end.

Location embeddings come from a pluggable source: frozen sources (skip-gram
tables, coordinate encoders) enter as constants and receive no gradients;
the trainable lookup table is registered as a parameter and learned jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nextloc.mobdata.model import DatasetSplit, LocationIndex, MobilitySequence
from nextloc.numcore import (
    AdamState,
    ParameterStore,
    Tensor,
    adam_step,
    add,
    backward,
    concat,
    cross_entropy,
    dropout,
    gather_rows,
    he_std,
    layer_norm,
    matmul,
    multi_head_attention,
    relu,
    reshape,
    softmax,
)
from nextloc.numcore.checkpoint import load_checkpoint, save_checkpoint
from nextloc.util import make_rng

UNKNOWN_USER = "<unknown>"
MASK_VALUE = -1e30


@dataclass(frozen=True)
class PredictorConfig:
    layers: int = 6
    heads: int = 8
    ff_dim: int = 256
    dropout: float = 0.1
    d_model: int = 128
    max_context: int = 32
    time_dim: int = 16
    dow_dim: int = 8
    user_dim: int = 16
    hour_buckets: int = 24

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model={self.d_model} must be divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.layers, self.ff_dim, self.max_context, self.time_dim, self.dow_dim, self.user_dim) < 1:
            raise ValueError("all dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "heads": self.heads,
            "ff_dim": self.ff_dim,
            "dropout": self.dropout,
            "d_model": self.d_model,
            "max_context": self.max_context,
            "time_dim": self.time_dim,
            "dow_dim": self.dow_dim,
            "user_dim": self.user_dim,
            "hour_buckets": self.hour_buckets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        return cls(**d)


class NextLocPredictor:
    def __init__(
        self,
        index: LocationIndex,
        users: list[str],
        embedder,
        cfg: PredictorConfig,
        seed: int = 0,
    ):
        self.index = index
        self.cfg = cfg
        self.embedder_kind = embedder.kind
        self.embedder_frozen = bool(embedder.frozen)
        self.users = sorted(set(users))
        self._user_row = {u: i for i, u in enumerate(self.users)}
        self.store = ParameterStore()
        rng = make_rng(seed, "predictor-init")

        matrix = np.asarray(embedder.embedding_matrix(index), dtype=np.float64)
        if matrix.shape[0] != len(index):
            raise ValueError(f"embedding matrix rows {matrix.shape[0]} != |index| {len(index)}")
        self.emb_dim = matrix.shape[1]
        if self.embedder_frozen:
            self.loc_matrix = matrix
        else:
            self.store.add("loc_table", matrix)
            self.loc_matrix = None

        c = cfg
        self.store.add("user_emb", rng.standard_normal((len(self.users) + 1, c.user_dim)) * 0.1)
        self.store.add("tod_emb", rng.standard_normal((c.hour_buckets, c.time_dim)) * 0.1)
        self.store.add("dow_emb", rng.standard_normal((7, c.dow_dim)) * 0.1)
        self.store.add("pos_emb", rng.standard_normal((c.max_context, c.d_model)) * 0.02)
        feat = self.emb_dim + c.time_dim + c.dow_dim + c.user_dim
        self.store.add("in_proj.w", rng.standard_normal((feat, c.d_model)) / np.sqrt(feat))
        self.store.add("in_proj.b", np.zeros(c.d_model))
        for l in range(c.layers):
            p = f"layer{l}"
            self.store.add(f"{p}.ln1.g", np.ones(c.d_model))
            self.store.add(f"{p}.ln1.b", np.zeros(c.d_model))
            for nm in ("wq", "wk", "wv", "wo"):
                self.store.add(f"{p}.attn.{nm}", rng.standard_normal((c.d_model, c.d_model)) / np.sqrt(c.d_model))
                self.store.add(f"{p}.attn.{nm.replace('w', 'b')}", np.zeros(c.d_model))
            self.store.add(f"{p}.ln2.g", np.ones(c.d_model))
            self.store.add(f"{p}.ln2.b", np.zeros(c.d_model))
            self.store.add(f"{p}.ff.w1", rng.standard_normal((c.d_model, c.ff_dim)) * he_std(c.d_model))
            self.store.add(f"{p}.ff.b1", np.zeros(c.ff_dim))
            self.store.add(f"{p}.ff.w2", rng.standard_normal((c.ff_dim, c.d_model)) / np.sqrt(c.ff_dim))
            self.store.add(f"{p}.ff.b2", np.zeros(c.d_model))
        self.store.add("final_ln.g", np.ones(c.d_model))
        self.store.add("final_ln.b", np.zeros(c.d_model))
        self.store.add("head.w", rng.standard_normal((c.d_model, len(index))) / np.sqrt(c.d_model))
        self.store.add("head.b", np.zeros(len(index)))

    # ------------------------------------------------------------------
    # featurization

    def _user_index(self, user: str) -> int:
        return self._user_row.get(user, len(self.users))

    def _featurize(self, batch: list[MobilitySequence]):
        t_max = min(self.cfg.max_context, max(len(s.visits) for s in batch))
        b = len(batch)
        loc_idx = np.zeros((b, t_max), dtype=np.int64)
        tod = np.zeros((b, t_max), dtype=np.int64)
        dow = np.zeros((b, t_max), dtype=np.int64)
        users = np.zeros(b, dtype=np.int64)
        lengths = np.zeros(b, dtype=np.int64)
        targets = np.zeros(b, dtype=np.int64)
        for i, seq in enumerate(batch):
            visits = seq.visits[-t_max:]  # keep the most recent context
            lengths[i] = len(visits)
            users[i] = self._user_index(seq.user)
            targets[i] = self.index.class_of(seq.target_location)
            for j, (loc, t) in enumerate(visits):
                loc_idx[i, j] = self.index.class_of(loc)
                tod[i, j] = (t % 86400) * self.cfg.hour_buckets // 86400
                dow[i, j] = (t // 86400 + 3) % 7  # epoch day 0 was a Thursday
        return loc_idx, tod, dow, users, lengths, targets

    def _attention_mask(self, lengths: np.ndarray, t_max: int) -> np.ndarray:
        causal = np.tril(np.ones((t_max, t_max), dtype=bool))
        valid_key = np.arange(t_max)[None, :] < lengths[:, None]  # (B, T)
        allowed = causal[None, :, :] & valid_key[:, None, :]
        return np.where(allowed, 0.0, MASK_VALUE)[:, None, :, :]

    # ------------------------------------------------------------------
    # forward

    def forward_logits(self, batch: list[MobilitySequence], training: bool = False, rng=None) -> Tensor:
        if not batch:
            raise ValueError("empty batch")
        cfg = self.cfg
        loc_idx, tod, dow, users, lengths, _ = self._featurize(batch)
        b, t_max = loc_idx.shape
        flat = loc_idx.reshape(-1)
        if self.embedder_frozen:
            loc_vecs = Tensor(self.loc_matrix[flat].reshape(b, t_max, self.emb_dim))
        else:
            loc_vecs = reshape(gather_rows(self.store["loc_table"], flat), (b, t_max, self.emb_dim))
        tod_vecs = reshape(gather_rows(self.store["tod_emb"], tod.reshape(-1)), (b, t_max, cfg.time_dim))
        dow_vecs = reshape(gather_rows(self.store["dow_emb"], dow.reshape(-1)), (b, t_max, cfg.dow_dim))
        user_rows = np.repeat(users, t_max)
        user_vecs = reshape(gather_rows(self.store["user_emb"], user_rows), (b, t_max, cfg.user_dim))
        x = matmul(concat([loc_vecs, tod_vecs, dow_vecs, user_vecs], axis=-1), self.store["in_proj.w"])
        x = add(x, self.store["in_proj.b"])
        x = add(x, gather_rows(self.store["pos_emb"], np.arange(t_max)))

        mask = self._attention_mask(lengths, t_max)
        for l in range(cfg.layers):
            p = f"layer{l}"
            normed = layer_norm(x, self.store[f"{p}.ln1.g"], self.store[f"{p}.ln1.b"])
            attended = multi_head_attention(
                normed,
                cfg.heads,
                self.store[f"{p}.attn.wq"], self.store[f"{p}.attn.bq"],
                self.store[f"{p}.attn.wk"], self.store[f"{p}.attn.bk"],
                self.store[f"{p}.attn.wv"], self.store[f"{p}.attn.bv"],
                self.store[f"{p}.attn.wo"], self.store[f"{p}.attn.bo"],
                mask=mask,
            )
            if training and rng is not None:
                attended = dropout(attended, cfg.dropout, rng, training=True)
            x = add(x, attended)
            normed = layer_norm(x, self.store[f"{p}.ln2.g"], self.store[f"{p}.ln2.b"])
            ff = relu(add(matmul(normed, self.store[f"{p}.ff.w1"]), self.store[f"{p}.ff.b1"]))
            ff = add(matmul(ff, self.store[f"{p}.ff.w2"]), self.store[f"{p}.ff.b2"])
            if training and rng is not None:
                ff = dropout(ff, cfg.dropout, rng, training=True)
            x = add(x, ff)
        x = layer_norm(x, self.store["final_ln.g"], self.store["final_ln.b"])
        final_pos = np.arange(b) * t_max + (lengths - 1)
        h_n = gather_rows(reshape(x, (b * t_max, cfg.d_model)), final_pos)
        return add(matmul(h_n, self.store["head.w"]), self.store["head.b"])

    def forward(self, seq: MobilitySequence) -> np.ndarray:
        """Probability distribution over all location classes."""
        return softmax(self.forward_logits([seq])).data[0]

    def predict_proba(self, sequences: list[MobilitySequence], batch_size: int = 256) -> np.ndarray:
        out = np.zeros((len(sequences), len(self.index)))
        for start in range(0, len(sequences), batch_size):
            chunk = sequences[start : start + batch_size]
            out[start : start + len(chunk)] = softmax(self.forward_logits(chunk)).data
        return out

    def predict_ranked(self, seq: MobilitySequence) -> list[tuple[str, float]]:
        """Locations by descending probability; ties go to the lower class index."""
        probs = self.forward(seq)
        order = np.lexsort((np.arange(len(probs)), -probs))
        ids = self.index.ids()
        return [(ids[i], float(probs[i])) for i in order]

    # ------------------------------------------------------------------
    # training

    def _epoch_loss(self, sequences: list[MobilitySequence], batch_size: int) -> float:
        total, count = 0.0, 0
        for start in range(0, len(sequences), batch_size):
            chunk = sequences[start : start + batch_size]
            logits = self.forward_logits(chunk)
            _, _, _, _, _, targets = self._featurize(chunk)
            loss = cross_entropy(logits, targets)
            total += loss.item() * len(chunk)
            count += len(chunk)
        return total / count

    def train(
        self,
        split: DatasetSplit,
        epochs: int = 100,
        patience: int = 3,
        batch_size: int = 128,
        learning_rate: float = 0.001,
        seed: int = 0,
    ) -> dict:
        if not split.train or not split.validation:
            raise ValueError("training needs non-empty train and validation sets")
        rng = make_rng(seed, "predictor-train")
        optimizer = AdamState(self.store, lr=learning_rate)
        params = self.store.tensors()
        frozen_before = self.loc_matrix.tobytes() if self.embedder_frozen else None
        log: list[dict] = []
        best_val = np.inf
        best_state = self.store.state_dict()
        wait = 0
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(split.train))
            total, count = 0.0, 0
            for start in range(0, len(order), batch_size):
                chunk = [split.train[i] for i in order[start : start + batch_size]]
                logits = self.forward_logits(chunk, training=True, rng=rng)
                _, _, _, _, _, targets = self._featurize(chunk)
                loss = cross_entropy(logits, targets)
                backward(loss, params=params)
                adam_step(self.store, optimizer)
                total += loss.item() * len(chunk)
                count += len(chunk)
            val_loss = self._epoch_loss(split.validation, batch_size)
            log.append({"epoch": epoch, "train_loss": total / count, "val_loss": val_loss})
            if val_loss < best_val:
                best_val = val_loss
                best_state = self.store.state_dict()
                wait = 0
            else:
                wait += 1
                if wait >= patience:
                    break
        self.store.load_state_dict(best_state)
        if self.embedder_frozen:
            assert self.loc_matrix.tobytes() == frozen_before
        return {"log": log, "best_val_loss": float(best_val), "epochs_run": len(log)}

    # ------------------------------------------------------------------
    # persistence

    def save(self, path, extra_meta: dict | None = None) -> None:
        params = self.store.state_dict()
        if self.embedder_frozen:
            params["frozen.loc_matrix"] = self.loc_matrix
        meta = {
            "kind": "predictor",
            "config": self.cfg.to_dict(),
            "embedder_kind": self.embedder_kind,
            "embedder_frozen": self.embedder_frozen,
            "users": self.users,
            "index_hash": self.index.content_hash(),
        }
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, params, meta=meta)

    @classmethod
    def load(cls, path, index: LocationIndex) -> "NextLocPredictor":
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "predictor":
            raise ValueError(f"{path}: not a predictor checkpoint")
        if meta["index_hash"] != index.content_hash():
            raise ValueError(f"{path}: checkpoint was trained against a different location index")
        cfg = PredictorConfig.from_dict(meta["config"])
        frozen = meta["embedder_frozen"]
        matrix = params.pop("frozen.loc_matrix", None)

        class _Stub:
            kind = meta["embedder_kind"]

            def __init__(self):
                self.frozen = frozen
                self.dim = None

            def embedding_matrix(self, idx):
                if matrix is not None:
                    return matrix
                return params["loc_table"]

        model = cls(index, meta["users"], _Stub(), cfg, seed=0)
        model.store.load_state_dict(params)
        return model

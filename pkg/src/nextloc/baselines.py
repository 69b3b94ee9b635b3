"""Reference location-embedding sources for the downstream predictor.

Three kinds plug into the same EmbedderHandle shape:

  - lookup-table: a trainable table learned jointly with the predictor;
    rows of locations that never occur in training data keep their
    initialization.
  - skipgram-table: a frozen table pretrained with skip-gram negative
    sampling over per-user visit streams.
  - calliper-encoder: frozen embeddings computed from coordinates by a
    pretrained contrastive model (works for any location, seen or not).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nextloc.calliper import CaLLiPerModel
from nextloc.mobdata.model import LocationIndex, MobilitySequence
from nextloc.util import make_rng


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (|L|, d)
    init_scheme: str
    trainable: bool


class VanillaE2EEmbedder:
    """Plain lookup table, trained end-to-end inside the predictor."""

    kind = "lookup-table"
    frozen = False

    def __init__(self, dim: int = 128, seed: int = 0):
        self.dim = int(dim)
        self.seed = int(seed)

    def embedding_matrix(self, index: LocationIndex) -> np.ndarray:
        rng = make_rng(self.seed, "vanilla-e2e-init")
        bound = 0.5 / self.dim
        return rng.uniform(-bound, bound, size=(len(index), self.dim))


class SkipgramEmbedder:
    """Frozen rows from a skip-gram run; untouched rows stay at init."""

    kind = "skipgram-table"
    frozen = True

    def __init__(self, table: EmbeddingTable):
        self.table = table
        self.dim = table.matrix.shape[1]

    def embedding_matrix(self, index: LocationIndex) -> np.ndarray:
        if self.table.matrix.shape[0] != len(index):
            raise ValueError(
                f"table has {self.table.matrix.shape[0]} rows but the index has {len(index)} locations"
            )
        return self.table.matrix


class CalliperEmbedder:
    """Frozen coordinate-derived embeddings from a pretrained model."""

    kind = "calliper-encoder"
    frozen = True

    def __init__(self, model: CaLLiPerModel):
        self.model = model
        self.dim = model.embed_dim

    def embedding_matrix(self, index: LocationIndex) -> np.ndarray:
        coords = np.array([[loc.centroid.x, loc.centroid.y] for loc in index])
        if len(coords) == 0:
            return np.zeros((0, self.dim))
        return self.model.encode_location(coords)


def visit_streams(sequences: list[MobilitySequence]) -> dict[str, list[tuple[str, int]]]:
    """Reconstruct each user's visit stream from (overlapping) sequences.

    Context windows repeat the same visits many times, so visits are
    deduplicated on (user, time, location) before sorting by time.
    """
    seen: dict[str, set[tuple[int, str]]] = {}
    for seq in sequences:
        bag = seen.setdefault(seq.user, set())
        for loc, t in seq.visits:
            bag.add((t, loc))
        bag.add((seq.target_t, seq.target_location))
    return {user: [(loc, t) for t, loc in sorted(bag)] for user, bag in sorted(seen.items())}


def extract_pairs(stream: list[int], window: int) -> list[tuple[int, int]]:
    """(center, context) pairs within the window, in scan order."""
    pairs = []
    for i, center in enumerate(stream):
        for j in range(max(0, i - window), min(len(stream), i + window + 1)):
            if j != i:
                pairs.append((center, stream[j]))
    return pairs


def skipgram_pretrain(
    sequences: list[MobilitySequence],
    index: LocationIndex,
    dim: int = 128,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 5,
    learning_rate: float = 0.025,
    batch_size: int = 512,
    seed: int = 0,
    plateau_tol: float = 1e-3,
) -> tuple[EmbeddingTable, dict]:
    """Skip-gram with negative sampling over location-id streams.

    Negative draws follow unigram^0.75 over the corpus; draws equal to the
    positive context word are skipped rather than redrawn. Input vectors
    start uniform(-0.5/dim, 0.5/dim), output vectors at zero; the input
    vectors are the returned embeddings. Stops early once the epoch loss
    improves by less than plateau_tol relative.
    """
    streams = visit_streams(sequences)
    corpus = [[index.class_of(loc) for loc, _ in visits] for _, visits in streams.items()]
    vocab_counts = np.zeros(len(index))
    for stream in corpus:
        for c in stream:
            vocab_counts[c] += 1
    if (vocab_counts > 0).sum() < 2:
        raise ValueError("skip-gram needs a vocabulary of at least 2 locations")

    pairs = np.array(
        [pair for stream in corpus for pair in extract_pairs(stream, window)], dtype=np.int64
    )
    noise = vocab_counts**0.75
    noise /= noise.sum()

    rng = make_rng(seed, "skipgram")
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(index), dim))
    w_out = np.zeros((len(index), dim))

    def sigmoid(z):
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    epoch_losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[order[start : start + batch_size]]
            centers, contexts = chunk[:, 0], chunk[:, 1]
            b = len(chunk)
            negs = rng.choice(len(index), size=(b, negatives), p=noise)
            keep = negs != contexts[:, None]  # skip accidental positives

            u = w_in[centers]
            v_pos = w_out[contexts]
            s_pos = sigmoid((u * v_pos).sum(axis=1))
            v_neg = w_out[negs]
            s_neg = sigmoid(np.einsum("bd,bkd->bk", u, v_neg)) * keep

            g_pos = s_pos - 1.0
            grad_u = g_pos[:, None] * v_pos + np.einsum("bk,bkd->bd", s_neg, v_neg)
            np.add.at(w_in, centers, -learning_rate * grad_u)
            np.add.at(w_out, contexts, -learning_rate * (g_pos[:, None] * u))
            grad_vneg = s_neg[:, :, None] * u[:, None, :]
            np.add.at(w_out, negs.reshape(-1), -learning_rate * grad_vneg.reshape(-1, dim))

            eps = 1e-12
            total += float(
                -(np.log(s_pos + eps).sum() + (np.log(1.0 - s_neg + eps) * keep).sum())
            )
            count += b
        epoch_losses.append(total / count)
        if len(epoch_losses) >= 2:
            prev, cur = epoch_losses[-2], epoch_losses[-1]
            if prev - cur < plateau_tol * abs(prev):
                break
    table = EmbeddingTable(matrix=w_in, init_scheme="uniform(-0.5/d, 0.5/d)", trainable=False)
    history = {"epoch_losses": epoch_losses, "n_pairs": int(len(pairs)), "output_vectors": w_out}
    return table, history

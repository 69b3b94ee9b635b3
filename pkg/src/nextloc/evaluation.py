"""Ranking metrics, repeated-run aggregation, and embedding projection.

Metrics operate on 1-based ranks: for each test sample, the rank of the
true location in the model's descending score order. Ties in scores are
broken toward the lower class index, so identical inputs always produce
identical ranks. Reports store raw metric values in [0, 1]; any scaling
for display happens at formatting time only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

METRIC_NAMES = ("acc@1", "acc@5", "acc@10", "mrr", "ndcg@10")

# ----------------------------------------------------------------------
# ranks


def validate_ranks(ranks) -> np.ndarray:
    """Coerce to a 1-d int64 array of 1-based ranks, rejecting bad input."""
    arr = np.asarray(ranks)
    if arr.size == 0:
        raise ValueError("ranks must be non-empty")
    if arr.ndim != 1:
        raise ValueError(f"ranks must be 1-d, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError("ranks must be integers")
        arr = arr.astype(np.int64)
    else:
        arr = arr.astype(np.int64)
    if np.any(arr < 1):
        raise ValueError("ranks are 1-based; found a value < 1")
    return arr


def ranks_from_scores(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """1-based rank of each target class in the descending score order.

    A class outranks the target if its score is strictly higher, or equal
    with a lower class index (the deterministic tie rule used everywhere
    in this package).
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.ndim != 2:
        raise ValueError(f"scores must be 2-d, got shape {scores.shape}")
    if targets.shape != (scores.shape[0],):
        raise ValueError(f"targets shape {targets.shape} does not match {scores.shape[0]} samples")
    if not np.issubdtype(targets.dtype, np.integer):
        raise ValueError("targets must be integer class indices")
    n, k = scores.shape
    if np.any(targets < 0) or np.any(targets >= k):
        raise ValueError("target class index out of range")
    true_scores = scores[np.arange(n), targets]
    better = (scores > true_scores[:, None]).sum(axis=1)
    tied_lower = ((scores == true_scores[:, None]) & (np.arange(k)[None, :] < targets[:, None])).sum(axis=1)
    return (1 + better + tied_lower).astype(np.int64)


# ----------------------------------------------------------------------
# metrics


def acc_at_k(ranks, k: int) -> float:
    """Fraction of samples whose true location ranks within the top k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    r = validate_ranks(ranks)
    return float(np.mean(r <= k))


def mrr(ranks) -> float:
    """Mean reciprocal rank over the full (untruncated) ordering."""
    r = validate_ranks(ranks)
    return float(np.mean(1.0 / r))


def ndcg_at_k(ranks, k: int = 10) -> float:
    """Mean discounted gain of the single relevant item within the top k.

    With one relevant item per sample the ideal gain is 1, so each sample
    contributes 1/log2(rank+1) when rank <= k and 0 otherwise.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    r = validate_ranks(ranks)
    gains = np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0)
    return float(np.mean(gains))


def rank_metrics(ranks) -> dict[str, float]:
    """The standard metric bundle, keyed by METRIC_NAMES."""
    r = validate_ranks(ranks)
    return {
        "acc@1": acc_at_k(r, 1),
        "acc@5": acc_at_k(r, 5),
        "acc@10": acc_at_k(r, 10),
        "mrr": mrr(r),
        "ndcg@10": ndcg_at_k(r, 10),
    }


# ----------------------------------------------------------------------
# repeated runs


@dataclass(frozen=True)
class RunMetrics:
    seed: int
    n_samples: int
    values: tuple[float, ...]  # aligned with METRIC_NAMES

    def __post_init__(self):
        if len(self.values) != len(METRIC_NAMES):
            raise ValueError(f"expected {len(METRIC_NAMES)} metric values")
        for name, v in zip(METRIC_NAMES, self.values):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def from_ranks(cls, seed: int, ranks) -> "RunMetrics":
        r = validate_ranks(ranks)
        m = rank_metrics(r)
        return cls(seed=seed, n_samples=int(r.size), values=tuple(m[n] for n in METRIC_NAMES))

    def value(self, name: str) -> float:
        return self.values[METRIC_NAMES.index(name)]


@dataclass(frozen=True)
class MetricsReport:
    embedder_kind: str
    split_mode: str
    runs: tuple[RunMetrics, ...]

    def __post_init__(self):
        if not self.runs:
            raise ValueError("a report needs at least one run")
        if self.split_mode not in ("conventional", "inductive"):
            raise ValueError(f"unknown split mode {self.split_mode!r}")

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(r.seed for r in self.runs)

    def per_run(self, name: str) -> np.ndarray:
        return np.array([r.value(name) for r in self.runs])

    def mean(self, name: str) -> float:
        return float(np.mean(self.per_run(name)))

    def std(self, name: str) -> float:
        """Sample standard deviation (n-1 denominator); 0 for a single run."""
        vals = self.per_run(name)
        if vals.size < 2:
            return 0.0
        return float(np.std(vals, ddof=1))


def run_experiment(
    run_fn: Callable[[int], np.ndarray],
    seeds: Sequence[int],
    split_mode: str,
    embedder_kind: str,
) -> MetricsReport:
    """Evaluate run_fn once per seed and aggregate the rank metrics.

    run_fn(seed) must return the 1-based ranks of the true locations on
    the test samples for that run. In the conventional protocol the seeds
    vary only the training randomness on a fixed split; in the inductive
    protocol each seed selects an independently resampled holdout split.
    """
    if len(seeds) < 1:
        raise ValueError("at least one run is required")
    runs = tuple(RunMetrics.from_ranks(seed, run_fn(seed)) for seed in seeds)
    return MetricsReport(embedder_kind=embedder_kind, split_mode=split_mode, runs=runs)


# ----------------------------------------------------------------------
# reports


def _fmt(v: float) -> str:
    return f"{v:.10f}"


def format_report(report: MetricsReport, dataset: str, provenance: Mapping[str, str] | None = None) -> str:
    """Deterministic key-value text: raw stored values plus a x100 display block."""
    lines = [
        f"dataset: {dataset}",
        f"embedder_kind: {report.embedder_kind}",
        f"split_mode: {report.split_mode}",
        f"runs: {report.n_runs}",
        "seeds: " + " ".join(str(s) for s in report.seeds),
        "samples_per_run: " + " ".join(str(r.n_samples) for r in report.runs),
    ]
    for key in sorted(provenance or {}):
        lines.append(f"{key}: {(provenance or {})[key]}")
    for name in METRIC_NAMES:
        lines.append(f"per_run {name}: " + " ".join(_fmt(v) for v in report.per_run(name)))
    for name in METRIC_NAMES:
        lines.append(f"mean {name}: {_fmt(report.mean(name))} std: {_fmt(report.std(name))}")
    lines.append("display_x100: " + "  ".join(
        f"{name} {100 * report.mean(name):.2f}±{100 * report.std(name):.2f}" for name in METRIC_NAMES
    ))
    return "\n".join(lines) + "\n"


def relative_difference(target: MetricsReport, others: Sequence[MetricsReport]) -> dict[str, float | None]:
    """Per metric: (target - best competing) / best competing, or None when
    the best competing mean is zero."""
    if not others:
        raise ValueError("need at least one competing report")
    out: dict[str, float | None] = {}
    for name in METRIC_NAMES:
        best = max(r.mean(name) for r in others)
        out[name] = None if best == 0.0 else (target.mean(name) - best) / best
    return out


def format_comparison(
    reports: Mapping[str, MetricsReport],
    target_kind: str = "calliper-encoder",
) -> str:
    """Side-by-side mean±std table plus a relative-difference row for the
    target kind against the best competing mean of each metric (displayed
    as a percentage)."""
    kinds = sorted(reports)
    lines = ["metric  " + "  ".join(kinds)]
    for name in METRIC_NAMES:
        cells = [f"{_fmt(reports[k].mean(name))}±{_fmt(reports[k].std(name))}" for k in kinds]
        lines.append(f"{name}  " + "  ".join(cells))
    if target_kind in reports and len(reports) > 1:
        others = [reports[k] for k in kinds if k != target_kind]
        rel = relative_difference(reports[target_kind], others)
        cells = ["n/a" if rel[name] is None else f"{100 * rel[name]:+.2f}%" for name in METRIC_NAMES]
        lines.append(f"relative_to_best ({target_kind})  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# 2-D projection


@dataclass(frozen=True)
class Projection:
    coords: np.ndarray  # (N, 2)
    explained_variance: np.ndarray  # (2,)
    total_variance: float
    labels: tuple[str, ...]


def project_2d(embeddings: np.ndarray, labels: Sequence[str]) -> Projection:
    """Top-2 principal components of the embedding cloud.

    Deterministic sign convention: within each component, the loading of
    largest magnitude is made positive. Rank-deficient inputs degrade
    gracefully (missing components carry zero variance).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"embeddings must be 2-d, got shape {x.shape}")
    n, d = x.shape
    if n < 3:
        raise ValueError(f"need at least 3 embeddings, got {n}")
    labels = tuple(str(l) for l in labels)
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} embeddings")
    centered = x - x.mean(axis=0)
    total_var = float(np.sum(centered * centered) / (n - 1))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    coords = np.zeros((n, 2))
    explained = np.zeros(2)
    n_comp = min(2, d, len(s))
    for j in range(n_comp):
        v = vt[j]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        coords[:, j] = centered @ v
        explained[j] = s[j] ** 2 / (n - 1)
    return Projection(coords=coords, explained_variance=explained, total_variance=total_var, labels=labels)


_LABEL_COLORS = {"seen": "#1f77b4", "new": "#d62728"}
_EXTRA_COLORS = ("#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _color_map(labels: Sequence[str]) -> dict[str, str]:
    out = {}
    extra = 0
    for lab in sorted(set(labels)):
        if lab in _LABEL_COLORS:
            out[lab] = _LABEL_COLORS[lab]
        else:
            out[lab] = _EXTRA_COLORS[extra % len(_EXTRA_COLORS)]
            extra += 1
    return out


def projection_svg(proj: Projection, width: int = 640, height: int = 480, margin: int = 40) -> str:
    """Self-contained SVG scatter of the projection, coloured by label."""
    coords = proj.coords
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def to_px(p):
        sx = margin + (p[0] - lo[0]) / span[0] * (width - 2 * margin)
        sy = height - margin - (p[1] - lo[1]) / span[1] * (height - 2 * margin)
        return sx, sy

    colors = _color_map(proj.labels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for p, lab in zip(coords, proj.labels):
        sx, sy = to_px(p)
        parts.append(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="3" fill="{colors[lab]}" fill-opacity="0.8"/>')
    for i, (lab, col) in enumerate(sorted(colors.items())):
        y = margin + 16 * i
        parts.append(f'<circle cx="{width - margin - 90}" cy="{y}" r="4" fill="{col}"/>')
        parts.append(
            f'<text x="{width - margin - 80}" y="{y + 4}" font-family="sans-serif" font-size="12">{lab}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def projection_coords_text(proj: Projection) -> str:
    """'x y label' per line, full float precision."""
    lines = [f"{float(p[0])!r} {float(p[1])!r} {lab}" for p, lab in zip(proj.coords, proj.labels)]
    return "\n".join(lines) + "\n"

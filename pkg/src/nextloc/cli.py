"""Command-line pipeline over the library modules.

Subcommands: synth, preprocess, pretrain, train, evaluate, visualize.
Every stage is driven by one ExperimentConfig JSON file, writes its
artifacts under the config's output directory, and prints the content
hashes that later stages verify. Rerunning any stage with the same
config and seeds reproduces its artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from nextloc.baselines import (
    CalliperEmbedder,
    EmbeddingTable,
    SkipgramEmbedder,
    VanillaE2EEmbedder,
    skipgram_pretrain,
)
from nextloc.calliper import CaLLiPerModel, HashedNgramEmbedder, read_poi_file
from nextloc.config import (
    EMBEDDER_KINDS,
    PRESET_NAMES,
    ExperimentConfig,
    load_config,
    make_preset,
    save_config,
)
from nextloc.evaluation import (
    METRIC_NAMES,
    format_comparison,
    format_report,
    project_2d,
    projection_coords_text,
    projection_svg,
    ranks_from_scores,
    run_experiment,
)
from nextloc.mobdata import (
    DatasetSplit,
    LocationIndex,
    apply_split_manifest,
    build_sequences,
    filter_min_counts,
    generate_synthetic_city,
    load_checkins,
    read_sequences,
    read_split_manifest,
    split_conventional,
    split_inductive,
    write_sequences,
    write_split_manifest,
)
from nextloc.numcore.checkpoint import load_checkpoint, save_checkpoint
from nextloc.predictor import NextLocPredictor
from nextloc.util import make_rng, stable_json

TEXT_HASH_DIM = 512  # trigram text features for the location-text encoder

# ----------------------------------------------------------------------
# artifact paths


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir)


def sequences_path(cfg) -> Path:
    return _out(cfg) / "sequences.json"


def index_path(cfg) -> Path:
    return _out(cfg) / "locations.json"


def manifest_path(cfg, seed: int | None = None) -> Path:
    if cfg.split_mode == "conventional":
        return _out(cfg) / "manifest_conventional.json"
    return _out(cfg) / f"manifest_inductive_seed{seed}.json"


def calliper_path(cfg, seed: int | None = None) -> Path:
    if cfg.split_mode == "conventional":
        return _out(cfg) / "calliper.nlck"
    return _out(cfg) / f"calliper_seed{seed}.nlck"


def skipgram_path(cfg, seed: int | None = None) -> Path:
    if cfg.split_mode == "conventional":
        return _out(cfg) / "skipgram.nlck"
    return _out(cfg) / f"skipgram_seed{seed}.nlck"


def predictor_path(cfg, kind: str, seed: int) -> Path:
    return _out(cfg) / f"predictor_{kind}_seed{seed}.nlck"


def report_path(cfg, kind: str, subset: str = "full") -> Path:
    stem = f"report_{kind}_{cfg.split_mode}"
    if subset != "full":
        stem += f"_{subset}"
    return _out(cfg) / f"{stem}.txt"


def metrics_json_path(cfg) -> Path:
    return _out(cfg) / f"metrics_{cfg.split_mode}.json"


# ----------------------------------------------------------------------
# shared loading


def _load_store(cfg) -> tuple[list, str, LocationIndex]:
    seq_file = sequences_path(cfg)
    idx_file = index_path(cfg)
    for p in (seq_file, idx_file):
        if not p.is_file():
            raise FileNotFoundError(f"{p}: missing; run `nextloc preprocess` first")
    sequences, seq_hash = read_sequences(seq_file)
    index = LocationIndex.from_dict(json.loads(idx_file.read_text(encoding="utf-8")))
    return sequences, seq_hash, index


def _load_split(cfg, sequences, seq_hash, seed: int | None) -> tuple[DatasetSplit, dict]:
    path = manifest_path(cfg, seed)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: missing; run `nextloc preprocess` first")
    manifest = read_split_manifest(path)
    return apply_split_manifest(sequences, manifest, seq_hash), manifest


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(stable_json(payload) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# preprocess


def cmd_preprocess(cfg: ExperimentConfig) -> int:
    cfg.validate_paths()
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    records, index = load_checkins(cfg.checkins_path)
    records = filter_min_counts(records, cfg.min_visits_per_location, cfg.min_visits_per_user)
    surviving = sorted({r.location for r in records})
    if len(surviving) != len(index):
        index = LocationIndex([index.location(i) for i in surviving])
    sequences = build_sequences(
        records, window_seconds=cfg.window_days * 86400, min_context=cfg.min_context
    )
    if not sequences:
        raise ValueError("no usable sequences after filtering; lower the thresholds")
    seq_hash = write_sequences(sequences_path(cfg), sequences)
    index_path(cfg).write_text(stable_json(index.to_dict()) + "\n", encoding="utf-8")
    extra = {"dataset": cfg.name, "index_hash": index.content_hash()}
    conventional = split_conventional(sequences, cfg.split_ratios, records=records)
    print(f"locations: {len(index)}  visits: {len(records)}  sequences: {len(sequences)}")
    print(f"sequences_hash: {seq_hash}")
    print(f"index_hash: {index.content_hash()}")
    if cfg.split_mode == "conventional":
        manifest = write_split_manifest(manifest_path(cfg), conventional, seq_hash, extra)
        print(
            f"conventional split: train={len(conventional.train)} "
            f"val={len(conventional.validation)} test={len(conventional.test)} "
            f"digest={manifest['manifest_digest']}"
        )
    else:
        for seed in cfg.seeds:
            ind = split_inductive(conventional, cfg.holdout_fraction, seed)
            manifest = write_split_manifest(manifest_path(cfg, seed), ind, seq_hash, extra)
            print(
                f"inductive split seed {seed}: |L_new|={len(ind.l_new)} "
                f"train={len(ind.train)} val={len(ind.validation)} test={len(ind.test)} "
                f"digest={manifest['manifest_digest']}"
            )
    return 0


# ----------------------------------------------------------------------
# pretrain


def _pretrain_calliper(cfg: ExperimentConfig) -> None:
    pois = read_poi_file(cfg.pois_path)
    text_embedder = HashedNgramEmbedder(TEXT_HASH_DIM)
    if cfg.split_mode == "conventional":
        jobs = [(None, pois)]
    else:
        # held-out locations must stay unseen during contrastive pretraining,
        # so each resampled split gets its own encoder without their POIs
        sequences, seq_hash, _ = _load_store(cfg)
        jobs = []
        for seed in cfg.seeds:
            _, manifest = _load_split(cfg, sequences, seq_hash, seed)
            l_new = set(manifest["l_new"])
            jobs.append((seed, [p for p in pois if p.id not in l_new]))
    for seed, corpus in jobs:
        model = CaLLiPerModel(
            cfg.grid,
            text_embedder,
            embed_dim=cfg.pretrain.embed_dim,
            hidden_dim=cfg.pretrain.hidden_dim,
            seed=cfg.pretrain.seed,
        )
        history = model.pretrain(corpus, cfg.pretrain)
        path = calliper_path(cfg, seed)
        model.save(path, extra_meta={"n_pois": len(corpus), "split_seed": seed})
        _write_json(
            path.with_suffix(".log.json"),
            {"epoch_losses": history["epoch_losses"], "n_pois": len(corpus)},
        )
        losses = history["epoch_losses"]
        tag = "" if seed is None else f" (split seed {seed}, {len(pois) - len(corpus)} POIs held out)"
        print(f"calliper{tag}: loss {losses[0]:.4f} -> {losses[-1]:.4f}, saved {path}")


def _pretrain_skipgram(cfg: ExperimentConfig) -> None:
    sequences, seq_hash, index = _load_store(cfg)
    seeds = [None] if cfg.split_mode == "conventional" else list(cfg.seeds)
    for seed in seeds:
        split, manifest = _load_split(cfg, sequences, seq_hash, seed)
        table, history = skipgram_pretrain(
            split.train,
            index,
            dim=cfg.pretrain.embed_dim,
            window=cfg.skipgram_window,
            negatives=cfg.skipgram_negatives,
            epochs=cfg.skipgram_epochs,
            learning_rate=cfg.skipgram_learning_rate,
            seed=cfg.pretrain.seed,
        )
        path = skipgram_path(cfg, seed)
        save_checkpoint(
            path,
            {"table": table.matrix},
            meta={
                "kind": "skipgram-table",
                "dim": cfg.pretrain.embed_dim,
                "index_hash": index.content_hash(),
                "init_scheme": table.init_scheme,
                "manifest_digest": manifest["manifest_digest"],
            },
        )
        _write_json(
            path.with_suffix(".log.json"),
            {"epoch_losses": history["epoch_losses"], "n_pairs": history["n_pairs"]},
        )
        tag = "" if seed is None else f" (split seed {seed})"
        print(f"skipgram{tag}: {history['n_pairs']} pairs, saved {path}")


def cmd_pretrain(cfg: ExperimentConfig, kind: str | None = None) -> int:
    _out(cfg).mkdir(parents=True, exist_ok=True)
    kinds = [kind] if kind else [k for k in cfg.embedder_kinds if k != "lookup-table"]
    for k in kinds:
        if k == "calliper-encoder":
            _pretrain_calliper(cfg)
        elif k == "skipgram-table":
            _pretrain_skipgram(cfg)
        elif k == "lookup-table":
            print("lookup-table embeddings are learned jointly with the predictor; nothing to pretrain")
        else:
            raise ValueError(f"unknown embedder kind {k!r}")
    return 0


# ----------------------------------------------------------------------
# train


def _build_embedder(cfg: ExperimentConfig, kind: str, index: LocationIndex, split_seed: int | None, run_seed: int):
    if kind == "lookup-table":
        return VanillaE2EEmbedder(dim=cfg.pretrain.embed_dim, seed=run_seed)
    if kind == "calliper-encoder":
        path = calliper_path(cfg, split_seed)
        if not path.is_file():
            raise FileNotFoundError(f"{path}: missing; run `nextloc pretrain` first")
        return CalliperEmbedder(CaLLiPerModel.load(path))
    if kind == "skipgram-table":
        path = skipgram_path(cfg, split_seed)
        if not path.is_file():
            raise FileNotFoundError(f"{path}: missing; run `nextloc pretrain` first")
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "skipgram-table":
            raise ValueError(f"{path}: not a skip-gram table checkpoint")
        if meta["index_hash"] != index.content_hash():
            raise ValueError(f"{path}: table was trained against a different location index")
        table = EmbeddingTable(
            matrix=params["table"], init_scheme=meta["init_scheme"], trainable=False
        )
        return SkipgramEmbedder(table)
    raise ValueError(f"unknown embedder kind {kind!r}")


def _cap_train(split: DatasetSplit, cap: int, seed: int) -> DatasetSplit:
    if cap <= 0 or len(split.train) <= cap:
        return split
    rng = make_rng(seed, "train-subsample")
    keep = np.sort(rng.choice(len(split.train), size=cap, replace=False))
    return DatasetSplit(
        train=[split.train[i] for i in keep],
        validation=split.validation,
        test=split.test,
        mode=split.mode,
        l_new=split.l_new,
        seed=split.seed,
    )


def cmd_train(cfg: ExperimentConfig, kind: str | None = None) -> int:
    sequences, seq_hash, index = _load_store(cfg)
    kinds = [kind] if kind else list(cfg.embedder_kinds)
    for k in kinds:
        for seed in cfg.seeds:
            split_seed = None if cfg.split_mode == "conventional" else seed
            split, manifest = _load_split(cfg, sequences, seq_hash, split_seed)
            split = _cap_train(split, cfg.max_train_sequences, seed)
            embedder = _build_embedder(cfg, k, index, split_seed, seed)
            users = sorted({s.user for s in split.train})
            model = NextLocPredictor(index, users, embedder, cfg.predictor, seed=seed)
            history = model.train(
                split,
                epochs=cfg.train_epochs,
                patience=cfg.train_patience,
                batch_size=cfg.train_batch_size,
                learning_rate=cfg.train_learning_rate,
                seed=seed,
            )
            path = predictor_path(cfg, k, seed)
            model.save(
                path,
                extra_meta={
                    "train_seed": seed,
                    "manifest_digest": manifest["manifest_digest"],
                    "dataset": cfg.name,
                },
            )
            log_lines = [stable_json(rec) for rec in history["log"]]
            path.with_suffix(".log.ndjson").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
            print(
                f"{k} seed {seed}: {history['epochs_run']} epochs, "
                f"best val loss {history['best_val_loss']:.4f}, saved {path}"
            )
    return 0


# ----------------------------------------------------------------------
# evaluate


def _test_ranks(cfg, index, split: DatasetSplit, kind: str, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Full-test ranks plus the mask of samples whose target is held out."""
    path = predictor_path(cfg, kind, seed)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: missing; run `nextloc train` first")
    model = NextLocPredictor.load(path, index)
    probs = model.predict_proba(split.test, batch_size=cfg.train_batch_size)
    targets = np.array([index.class_of(s.target_location) for s in split.test])
    ranks = ranks_from_scores(probs, targets)
    lnew_mask = np.array([s.target_location in split.l_new for s in split.test], dtype=bool)
    return ranks, lnew_mask


def cmd_evaluate(cfg: ExperimentConfig, kind: str | None = None) -> int:
    sequences, seq_hash, index = _load_store(cfg)
    kinds = [kind] if kind else list(cfg.embedder_kinds)
    provenance = {"sequences_hash": seq_hash, "index_hash": index.content_hash()}
    splits: dict[int | None, DatasetSplit] = {}
    for seed in cfg.seeds:
        split_seed = None if cfg.split_mode == "conventional" else seed
        if split_seed not in splits:
            split, manifest = _load_split(cfg, sequences, seq_hash, split_seed)
            splits[split_seed] = split
            key = "manifest_digest" if split_seed is None else f"manifest_digest_seed{split_seed}"
            provenance[key] = manifest["manifest_digest"]

    cache: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}
    for k in kinds:
        for seed in cfg.seeds:
            split_seed = None if cfg.split_mode == "conventional" else seed
            cache[(k, seed)] = _test_ranks(cfg, index, splits[split_seed], k, seed)

    reports_full = {}
    reports_lnew = {}
    metrics_payload: dict = {"split_mode": cfg.split_mode, "seeds": list(cfg.seeds), "kinds": {}}
    for k in kinds:
        report = run_experiment(
            lambda seed, kk=k: cache[(kk, seed)][0],
            cfg.seeds,
            split_mode=cfg.split_mode,
            embedder_kind=k,
        )
        reports_full[k] = report
        report_path(cfg, k).write_text(
            format_report(report, dataset=cfg.name, provenance=provenance), encoding="utf-8"
        )
        if cfg.split_mode == "inductive":
            def lnew_ranks(seed, kk=k):
                ranks, mask = cache[(kk, seed)]
                if not mask.any():
                    raise ValueError(f"split seed {seed} has no test samples targeting held-out locations")
                return ranks[mask]

            lnew_report = run_experiment(lnew_ranks, cfg.seeds, split_mode="inductive", embedder_kind=k)
            reports_lnew[k] = lnew_report
            report_path(cfg, k, subset="lnew").write_text(
                format_report(
                    lnew_report,
                    dataset=cfg.name,
                    provenance={**provenance, "subset": "targets in held-out locations"},
                ),
                encoding="utf-8",
            )

    for k, report in reports_full.items():
        metrics_payload["kinds"][k] = {
            "full": {name: [float(v) for v in report.per_run(name)] for name in METRIC_NAMES}
        }
        if k in reports_lnew:
            metrics_payload["kinds"][k]["lnew"] = {
                name: [float(v) for v in reports_lnew[k].per_run(name)] for name in METRIC_NAMES
            }
    _write_json(metrics_json_path(cfg), metrics_payload)

    if len(reports_full) > 1:
        (_out(cfg) / f"comparison_{cfg.split_mode}.txt").write_text(
            format_comparison(reports_full), encoding="utf-8"
        )
        if reports_lnew:
            (_out(cfg) / "comparison_inductive_lnew.txt").write_text(
                format_comparison(reports_lnew), encoding="utf-8"
            )

    for k in kinds:
        line = f"{k}: " + "  ".join(
            f"{name}={reports_full[k].mean(name):.4f}" for name in METRIC_NAMES
        )
        if k in reports_lnew:
            line += "  | held-out targets: " + "  ".join(
                f"{name}={reports_lnew[k].mean(name):.4f}" for name in METRIC_NAMES
            )
        print(line)
    print(f"metrics written to {metrics_json_path(cfg)}")
    return 0


# ----------------------------------------------------------------------
# visualize


def cmd_visualize(cfg: ExperimentConfig, kind: str, seed: int | None = None) -> int:
    if kind not in ("calliper-encoder", "skipgram-table"):
        raise ValueError("visualize supports the pretrained kinds: calliper-encoder, skipgram-table")
    _, seq_hash, index = _load_store(cfg)
    split_seed = None if cfg.split_mode == "conventional" else (cfg.seeds[0] if seed is None else seed)
    if cfg.split_mode == "inductive":
        manifest = read_split_manifest(manifest_path(cfg, split_seed))
        l_new = set(manifest["l_new"])
    else:
        l_new = set()
    if kind == "calliper-encoder":
        model = CaLLiPerModel.load(calliper_path(cfg, split_seed))
        coords = np.array([[index.location(i).centroid.x, index.location(i).centroid.y] for i in index.ids()])
        matrix = model.encode_location(coords)
    else:
        params, meta = load_checkpoint(skipgram_path(cfg, split_seed))
        if meta["index_hash"] != index.content_hash():
            raise ValueError("table was trained against a different location index")
        matrix = params["table"]
    labels = ["new" if i in l_new else "seen" for i in index.ids()]
    proj = project_2d(matrix, labels)
    stem = f"projection_{kind}_{cfg.split_mode}"
    if split_seed is not None:
        stem += f"_seed{split_seed}"
    svg_file = _out(cfg) / f"{stem}.svg"
    coords_file = _out(cfg) / f"{stem}.txt"
    svg_file.write_text(projection_svg(proj), encoding="utf-8")
    coords_file.write_text(projection_coords_text(proj), encoding="utf-8")
    share = proj.explained_variance.sum() / proj.total_variance if proj.total_variance > 0 else 1.0
    print(f"projection of {len(matrix)} embeddings ({100 * share:.1f}% variance) -> {svg_file}")
    return 0


# ----------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    city = generate_synthetic_city(
        seed=args.seed,
        n_users=args.users,
        n_locations=args.locations,
        n_categories=args.categories,
        days=args.days,
        visits_per_day=args.visits_per_day,
        out_dir=args.out,
    )
    hashes = city.hashes()
    print(f"checkins: {city.checkins_path} ({city.n_visits} visits, sha256 {hashes['checkins']})")
    print(f"pois: {city.pois_path} (sha256 {hashes['pois']})")
    if args.write_config:
        cfg = make_preset(
            "synthetic-desk",
            checkins_path=str(city.checkins_path),
            pois_path=str(city.pois_path),
            out_dir=str(Path(args.out) / "artifacts"),
            split_mode=args.split_mode,
        )
        save_config(cfg, args.write_config)
        print(f"config: {args.write_config} ({cfg.split_mode} protocol)")
    return 0


# ----------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, with_kind: bool = False) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed-override", type=int, default=None, help="run only this seed")
    p.add_argument("--out", default=None, help="override the config's output directory")
    if with_kind:
        p.add_argument("--kind", choices=EMBEDDER_KINDS, default=None, help="restrict to one embedder kind")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nextloc",
        description="location-embedding experiments: preprocess, pretrain, train, evaluate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic check-in city")
    p.add_argument("--out", required=True, help="directory for the generated files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--locations", type=int, default=120)
    p.add_argument("--categories", type=int, default=6)
    p.add_argument("--days", type=int, default=180)
    p.add_argument("--visits-per-day", type=int, default=2)
    p.add_argument("--write-config", default=None, help="also write a ready-to-run config here")
    p.add_argument("--split-mode", choices=("conventional", "inductive"), default="inductive")

    _add_common(sub.add_parser("preprocess", help="build sequences and split manifests"))
    _add_common(sub.add_parser("pretrain", help="pretrain location embeddings"), with_kind=True)
    _add_common(sub.add_parser("train", help="train next-location predictors"), with_kind=True)
    _add_common(sub.add_parser("evaluate", help="score trained predictors and write reports"), with_kind=True)
    pv = sub.add_parser("visualize", help="project location embeddings to 2-D")
    _add_common(pv)
    pv.add_argument("--kind", choices=("calliper-encoder", "skipgram-table"), default="calliper-encoder")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = load_config(args.config)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.seed_override is not None and args.command != "visualize":
            cfg = replace(cfg, seeds=(args.seed_override,))
        if args.command == "preprocess":
            return cmd_preprocess(cfg)
        if args.command == "pretrain":
            return cmd_pretrain(cfg, kind=args.kind)
        if args.command == "train":
            return cmd_train(cfg, kind=args.kind)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, kind=args.kind)
        if args.command == "visualize":
            return cmd_visualize(cfg, kind=args.kind, seed=args.seed_override)
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

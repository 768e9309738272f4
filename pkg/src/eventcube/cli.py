"""Command-line pipeline: gen, tensorize, train, encode, project, cluster,
knn, score, fit-head, report.

Every command validates its inputs up front, writes its outputs under a run
directory, and finishes by writing ``manifest.json`` listing the effective
configuration (hashed), the seeds, input digests, and a digest for every
file produced. Exit codes: 0 success, 1 usage error, 2 data error. Set
``EVENTCUBE_LOG=debug|info|warning`` for verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analyze, datagen, report
from .embed import (
    Embedding2D,
    LatentMatrix,
    TsneConfig,
    extract_latents,
    tsne_project,
    write_embedding_csv,
)
from .errors import EmptySplit, EventCubeError
from .ingest import (
    Catalog,
    ValidationPolicy,
    load_catalog,
    parse_event_csv,
    split_catalog,
    validate_series,
)
from .sae import (
    TrainConfig,
    cube_architecture,
    load_checkpoint,
    map_architecture,
    save_checkpoint,
    train,
)
from .tensorize import (
    BinningConfig,
    GlobalBounds,
    PerSeriesBounds,
    dataset_modality_bounds,
    read_tensor,
    tensor_suffix,
    tensorize_series,
    write_tensor,
)

log = logging.getLogger("eventcube")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract wants 1
        raise UsageError(message)


DEFAULT_CONFIG: dict = {
    "binning": {
        "n_tau": 24,
        "n_eps": 16,
        "n_dtau": 16,
        "modality_transform": "log10",
        "modality_bounds": "global",
        "count_scaling": "unit_sum",
    },
    "arch": {"preset": "cube", "bottleneck_dim": None, "hidden": None},
    "train": {
        "lambda_sparsity": 0.1,
        "batch_size": 1024,
        "max_epochs": 200,
        "lr": 0.01,
        "plateau_factor": 10.0,
        "plateau_patience": 10,
        "early_stop_patience": 25,
        "seed": 0,
    },
    "gen": {"count_per_class": 50, "duration": 2000.0, "seed": 0},
    "tsne": {"perplexity": 30.0, "iters": 1000, "lr": 200.0, "seed": 0},
    "dbscan": {"eps": None, "min_pts": 5, "quantile": 0.9},
    "knn": {"k": 3},
    "score": {"k": 5},
    "head": {
        "n_estimators": 100,
        "max_depth": 3,
        "learning_rate": 0.1,
        "test_fraction": 0.2,
        "seed": 0,
    },
}


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise UsageError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {where!r} must be an object")
            out[key] = _merge_config(base[key], value, where)
        else:
            out[key] = value
    return out


def load_run_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise UsageError("config root must be a JSON object")
    return _merge_config(DEFAULT_CONFIG, user)


def _sha256_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _digest_path(path: Path) -> str:
    if path.is_dir():
        acc = hashlib.sha256()
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            acc.update(child.name.encode())
            acc.update(hashlib.sha256(child.read_bytes()).digest())
        return "sha256:" + acc.hexdigest()
    return _sha256_bytes(path.read_bytes())


class RunDir:
    """Output directory plus the bookkeeping for its manifest."""

    def __init__(self, out: str | Path, command: str, config: dict, seed: int | None):
        self.path = Path(out)
        self.path.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.seed = seed
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        self.inputs[str(p)] = _digest_path(p)

    def register(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def write_manifest(self) -> None:
        config_json = json.dumps(self.config, sort_keys=True)
        manifest = {
            "command": self.command,
            "config": self.config,
            "config_hash": _sha256_bytes(config_json.encode()),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": {
                str(p.relative_to(self.path)): _digest_path(p) for p in sorted(self.outputs)
            },
        }
        (self.path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--dims must be comma-separated integers, got {text!r}") from None
    if len(dims) not in (2, 3) or any(d < 1 for d in dims):
        raise UsageError("--dims needs 2 or 3 positive integers")
    return dims


def _binning_from_config(cfg: dict, dims: tuple[int, ...] | None) -> BinningConfig:
    b = cfg["binning"]
    if dims is None:
        dims = (b["n_tau"], b["n_eps"], b["n_dtau"])
        if dims[2] == 0:
            dims = dims[:2]
    n_dtau = dims[2] if len(dims) == 3 else 0
    bounds = b["modality_bounds"]
    if bounds == "per_series":
        mb = PerSeriesBounds()
    elif bounds == "global":
        mb = PerSeriesBounds()  # placeholder; replaced by the dataset scan
    elif isinstance(bounds, (list, tuple)) and len(bounds) == 2:
        mb = GlobalBounds(lo=float(bounds[0]), hi=float(bounds[1]))
    else:
        raise UsageError("binning.modality_bounds must be 'global', 'per_series' or [lo, hi]")
    return BinningConfig(
        n_tau=dims[0],
        n_eps=dims[1],
        n_dtau=n_dtau,
        modality_transform=b["modality_transform"],
        modality_bounds=mb,
        count_scaling=b["count_scaling"],
    )


# --- commands ----------------------------------------------------------------


def cmd_gen(args, cfg: dict) -> None:
    g = cfg["gen"]
    seed = args.seed if args.seed is not None else g["seed"]
    count = args.count_per_class or g["count_per_class"]
    run = RunDir(args.out, "gen", cfg, seed)
    models = datagen.default_class_models(duration=g["duration"], master_seed=seed)
    spec = [(m, count) for m in models.values()]
    catalog = datagen.generate_dataset(spec, run.path)
    run.register(run.path / "catalog.jsonl")
    for entry in catalog.entries:
        run.register(entry.file_path)
    run.write_manifest()
    log.info("generated %d series under %s", len(catalog), run.path)


def _tensorize_one(entry, out_dir: Path, bcfg: BinningConfig, policy: ValidationPolicy):
    series = validate_series(parse_event_csv(entry.file_path), policy)
    tensor = tensorize_series(series, bcfg)
    dest = out_dir / f"{entry.series_id}{tensor_suffix(bcfg)}"
    write_tensor(tensor, dest)
    return dest


def cmd_tensorize(args, cfg: dict) -> None:
    dims = _parse_dims(args.dims) if args.dims else None
    bcfg = _binning_from_config(cfg, dims)
    catalog = load_catalog(args.catalog)
    run = RunDir(args.out, "tensorize", cfg, args.seed)
    run.add_input(args.catalog)
    policy = ValidationPolicy(
        require_positive_modality=bcfg.modality_transform == "log10"
    )
    if cfg["binning"]["modality_bounds"] == "global":
        all_series = [
            validate_series(parse_event_csv(e.file_path), policy) for e in catalog.entries
        ]
        bounds = dataset_modality_bounds(all_series, bcfg)
        bcfg = BinningConfig(
            n_tau=bcfg.n_tau,
            n_eps=bcfg.n_eps,
            n_dtau=bcfg.n_dtau,
            modality_transform=bcfg.modality_transform,
            modality_bounds=bounds,
            count_scaling=bcfg.count_scaling,
        )
        cfg["binning"]["modality_bounds"] = [bounds.lo, bounds.hi]

    workers = max(1, args.workers)
    if workers == 1:
        paths = [_tensorize_one(e, run.path, bcfg, policy) for e in catalog.entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(
                pool.map(lambda e: _tensorize_one(e, run.path, bcfg, policy), catalog.entries)
            )
    for p in paths:
        run.register(p)
    run.write_manifest()
    log.info("tensorized %d series into %s", len(paths), run.path)


def _collect_tensors(tensor_dir: Path, catalog: Catalog | None):
    files = sorted(
        list(tensor_dir.glob("*.etdt")) + list(tensor_dir.glob("*.etmp")),
        key=lambda p: p.name,
    )
    tensors = {}
    for p in files:
        t = read_tensor(p)
        tensors[t.series_id or p.stem] = t
    if catalog is not None:
        ordered = {}
        for e in catalog.entries:
            if e.series_id in tensors:
                ordered[e.series_id] = tensors[e.series_id]
        tensors = ordered
    return tensors


def cmd_train(args, cfg: dict) -> None:
    t = cfg["train"]
    seed = args.seed if args.seed is not None else t["seed"]
    tensor_dir = Path(args.tensors)
    catalog = load_catalog(args.catalog)
    tensors = _collect_tensors(tensor_dir, catalog)
    if not tensors:
        raise EmptySplit(f"no tensor files under {tensor_dir}")
    missing = [sid for sid in catalog.ids() if sid not in tensors]
    kept = Catalog(
        entries=[e for e in catalog.entries if e.series_id in tensors],
        dataset_root=catalog.dataset_root,
    )
    if missing:
        log.warning("%d catalog entries have no tensor and are skipped", len(missing))
    splits = split_catalog(kept, seed)
    dims = tuple(next(iter(tensors.values())).dims)

    arch_cfg = cfg["arch"]
    preset = args.arch or arch_cfg["preset"]
    bottleneck = args.bottleneck or arch_cfg["bottleneck_dim"]
    if preset == "cube":
        if len(dims) != 3:
            raise UsageError(f"cube architecture needs 3-D tensors, found dims {dims}")
        arch = cube_architecture(
            input_dims=dims,
            hidden=tuple(arch_cfg["hidden"]) if arch_cfg["hidden"] else (1536, 384, 92),
            bottleneck_dim=bottleneck or 24,
        )
    elif preset == "map":
        if len(dims) != 2:
            raise UsageError(f"map architecture needs 2-D tensors, found dims {dims}")
        arch = map_architecture(input_dims=dims, bottleneck_dim=bottleneck or 12)
    else:
        raise UsageError(f"unknown architecture preset {preset!r}")

    def stack(cat: Catalog) -> np.ndarray:
        return np.stack([tensors[e.series_id].values for e in cat.entries])

    tcfg = TrainConfig(
        lambda_sparsity=args.lambda_sparsity if args.lambda_sparsity is not None else t["lambda_sparsity"],
        batch_size=args.batch_size or t["batch_size"],
        max_epochs=args.epochs or t["max_epochs"],
        lr=args.lr or t["lr"],
        plateau_factor=t["plateau_factor"],
        plateau_patience=t["plateau_patience"],
        early_stop_patience=t["early_stop_patience"],
        seed=seed,
    )
    run = RunDir(args.out, "train", cfg, seed)
    run.add_input(args.catalog)
    run.add_input(tensor_dir)
    result = train(stack(splits.train), stack(splits.val), arch, tcfg)
    ckpt_path = run.register(run.path / "checkpoint.saec")
    save_checkpoint(result.model, ckpt_path)
    hist_path = run.register(run.path / "history.json")
    hist_path.write_text(
        json.dumps(
            {
                "best_epoch": result.best_epoch,
                "best_val_loss": result.best_val_loss,
                "epochs": [r.to_dict() for r in result.history],
                "splits": {
                    "train": len(splits.train),
                    "val": len(splits.val),
                    "test": len(splits.test),
                },
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    run.write_manifest()
    log.info(
        "trained %d epochs, best val loss %.6g at epoch %d",
        len(result.history), result.best_val_loss, result.best_epoch,
    )


def write_latents_csv(latents: LatentMatrix, path: Path) -> None:
    d = latents.rows.shape[1]
    cols = sorted(latents.labels)
    header = ["series_id"] + [f"z{i}" for i in range(d)] + cols
    lines = [",".join(header)]
    for i, sid in enumerate(latents.ids):
        row = [sid] + [repr(float(v)) for v in latents.rows[i]]
        for c in cols:
            v = latents.labels[c][i]
            row.append("" if v is None else str(v))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_latents_csv(path: str | Path) -> LatentMatrix:
    with Path(path).open(encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        z_cols = [i for i, name in enumerate(header) if name.startswith("z") and name[1:].isdigit()]
        label_cols = [
            (i, name) for i, name in enumerate(header) if i != 0 and i not in z_cols
        ]
        ids, rows = [], []
        labels: dict[str, list] = {name: [] for _, name in label_cols}
        for rec in reader:
            ids.append(rec[0])
            rows.append([float(rec[i]) for i in z_cols])
            for i, name in label_cols:
                raw = rec[i]
                if raw == "":
                    labels[name].append(None)
                else:
                    try:
                        labels[name].append(float(raw))
                    except ValueError:
                        labels[name].append(raw)
    return LatentMatrix(rows=np.array(rows), ids=ids, labels=labels)


def cmd_encode(args, cfg: dict) -> None:
    model, _ = load_checkpoint(args.checkpoint)
    catalog = load_catalog(args.catalog)
    run = RunDir(args.out, "encode", cfg, args.seed)
    run.add_input(args.checkpoint)
    run.add_input(args.catalog)
    run.add_input(args.tensors)
    latents = extract_latents(model, catalog, Path(args.tensors))
    out = run.register(run.path / "latents.csv")
    write_latents_csv(latents, out)
    run.write_manifest()
    log.info("encoded %d series (d=%d)", latents.n, latents.rows.shape[1])


def cmd_project(args, cfg: dict) -> None:
    p = cfg["tsne"]
    seed = args.seed if args.seed is not None else p["seed"]
    latents = read_latents_csv(args.latents)
    tcfg = TsneConfig(
        perplexity=args.perplexity or p["perplexity"],
        iters=args.iters or p["iters"],
        lr=p["lr"],
        seed=seed,
    )
    run = RunDir(args.out, "project", cfg, seed)
    run.add_input(args.latents)
    embedding = tsne_project(latents, tcfg)
    out = run.register(run.path / "embedding.csv")
    write_embedding_csv(embedding, out, labels=latents.labels)
    kl = run.register(run.path / "kl_history.json")
    kl.write_text(json.dumps(embedding.kl_history) + "\n", encoding="utf-8")
    run.write_manifest()
    log.info("projected %d points, final KL %.4f", latents.n, embedding.kl_history[-1])


def read_embedding_csv(path: str | Path) -> tuple[Embedding2D, dict[str, list]]:
    with Path(path).open(encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids, pts = [], []
        labels: dict[str, list] = {name: [] for name in header[3:]}
        for rec in reader:
            ids.append(rec[0])
            pts.append((float(rec[1]), float(rec[2])))
            for name, raw in zip(header[3:], rec[3:]):
                if raw == "":
                    labels[name].append(None)
                else:
                    try:
                        labels[name].append(float(raw))
                    except ValueError:
                        labels[name].append(raw)
    return Embedding2D(points=np.array(pts), ids=ids, kl_history=[]), labels


def cmd_cluster(args, cfg: dict) -> None:
    d = cfg["dbscan"]
    latents = read_latents_csv(args.latents)
    min_pts = args.min_pts or d["min_pts"]
    eps = args.eps if args.eps is not None else d["eps"]
    if eps is None:
        eps = report.suggest_eps(latents, min_pts, quantile=d["quantile"])
        log.info("k-distance helper suggests eps=%.4g (min_pts=%d)", eps, min_pts)
    run = RunDir(args.out, "cluster", cfg, args.seed)
    run.add_input(args.latents)
    result = analyze.dbscan(latents, eps=eps, min_pts=min_pts)
    out = run.register(run.path / "clusters.csv")
    lines = ["series_id,cluster"]
    lines += [f"{sid},{int(c)}" for sid, c in zip(latents.ids, result.labels)]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    if args.embedding:
        embedding, emb_labels = read_embedding_csv(args.embedding)
        run.add_input(args.embedding)
        emb_labels = dict(emb_labels)
        by_id = dict(zip(latents.ids, (int(c) for c in result.labels)))
        emb_labels["cluster"] = [by_id.get(sid) for sid in embedding.ids]
        svg = run.register(run.path / "report.svg")
        report.render_scatter_svg(embedding, "cluster", emb_labels, svg, title="dbscan clusters")
    run.write_manifest()
    log.info(
        "dbscan: eps=%.4g min_pts=%d -> %d clusters, %d noise points",
        eps, min_pts, result.n_clusters, int((result.labels == -1).sum()),
    )


def cmd_knn(args, cfg: dict) -> None:
    latents = read_latents_csv(args.latents)
    k = args.k or cfg["knn"]["k"]
    run = RunDir(args.out, "knn", cfg, args.seed)
    run.add_input(args.latents)
    queries = args.query or latents.ids
    lines = ["query_id,rank,neighbor_id,distance"]
    for q in queries:
        result = analyze.knn_query(latents, q, k)
        for rank, (sid, dist) in enumerate(result.neighbors, start=1):
            lines.append(f"{q},{rank},{sid},{repr(dist)}")
    out = run.register(run.path / "neighbors.csv")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    run.write_manifest()
    log.info("wrote %d neighbor rows", len(lines) - 1)


def cmd_score(args, cfg: dict) -> None:
    latents = read_latents_csv(args.latents)
    k = args.k or cfg["score"]["k"]
    run = RunDir(args.out, "score", cfg, args.seed)
    run.add_input(args.latents)
    scores = analyze.anomaly_scores(latents, k)
    order = np.argsort(-scores, kind="stable")
    lines = ["series_id,score"]
    lines += [f"{latents.ids[i]},{repr(float(scores[i]))}" for i in order]
    out = run.register(run.path / "scores.csv")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    run.write_manifest()
    log.info("scored %d series (k=%d)", latents.n, k)


def cmd_fit_head(args, cfg: dict) -> None:
    h = cfg["head"]
    seed = args.seed if args.seed is not None else h["seed"]
    latents = read_latents_csv(args.latents)
    run = RunDir(args.out, "fit-head", cfg, seed)
    run.add_input(args.latents)

    if args.task == "variability":
        col, kind, task = "variability_index", "classifier", "classification"
    elif args.task == "hardness":
        col, kind, task = "hardness_ratio", "regressor", "regression"
    else:
        raise UsageError(f"unknown task {args.task!r}")
    if col not in latents.labels:
        raise UsageError(f"latents file has no {col!r} column")
    raw = latents.labels[col]
    keep = [i for i, v in enumerate(raw) if v is not None]
    if not keep:
        raise EmptySplit(f"no labeled rows for {col}")
    x = latents.rows[keep]
    y = np.array([float(raw[i]) for i in keep])
    if kind == "classifier":
        y = analyze.threshold_variability(y).astype(np.float64)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keep))
    n_test = max(1, int(round(h["test_fraction"] * len(keep))))
    test_idx, train_idx = order[:n_test], order[n_test:]
    hcfg = analyze.HeadConfig(
        n_estimators=args.n_estimators or h["n_estimators"],
        max_depth=h["max_depth"],
        learning_rate=h["learning_rate"],
        seed=seed,
    )
    model = analyze.fit_head(x[train_idx], y[train_idx], kind, hcfg)
    preds = analyze.predict_head(model, x[test_idx])
    scores = analyze.metrics(preds, y[test_idx], task)

    out = run.register(run.path / "head_metrics.json")
    out.write_text(
        json.dumps(
            {"task": args.task, "kind": kind, "n_train": len(train_idx), "n_test": len(test_idx),
             "metrics": scores},
            indent=2,
            default=float,
        )
        + "\n",
        encoding="utf-8",
    )
    pred_path = run.register(run.path / "predictions.csv")
    lines = ["series_id,prediction,truth"]
    for local_i, pred in zip(test_idx, preds):
        sid = latents.ids[keep[local_i]]
        lines.append(f"{sid},{repr(float(pred))},{repr(float(y[local_i]))}")
    pred_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    run.write_manifest()
    log.info("%s head: %s", args.task, scores)


def cmd_report(args, cfg: dict) -> None:
    run = RunDir(args.out, "report", cfg, args.seed)
    wrote = False
    if args.embedding:
        embedding, labels = read_embedding_csv(args.embedding)
        run.add_input(args.embedding)
        color_by = args.color_by or (sorted(labels)[0] if labels else None)
        if color_by is None:
            raise UsageError("embedding has no label columns; pass --color-by")
        try:
            svg = run.register(run.path / "embedding.svg")
            report.render_scatter_svg(embedding, color_by, labels, svg, title=f"colored by {color_by}")
        except KeyError:
            raise UsageError(f"embedding has no column {color_by!r}") from None
        wrote = True
    if args.series:
        series = validate_series(parse_event_csv(args.series), ValidationPolicy())
        run.add_input(args.series)
        map_tensor = None
        if args.map:
            map_tensor = read_tensor(args.map)
            run.add_input(args.map)
        svg = run.register(run.path / f"{series.series_id}.svg")
        report.render_series_svg(series, args.bin_seconds, map_tensor, svg)
        wrote = True
    if args.kdist_latents:
        latents = read_latents_csv(args.kdist_latents)
        run.add_input(args.kdist_latents)
        svg = run.register(run.path / "kdistance.svg")
        report.render_kdistance_svg(latents, args.kdist_k, svg)
        wrote = True
    if not wrote:
        raise UsageError("report needs --embedding, --series or --kdist-latents")
    run.write_manifest()


# --- wiring -------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="eventcube", description="Event time series representation pipeline")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=1, help="parallel workers where supported")
        p.add_argument("--out", required=True, help="run output directory")

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    common(p)
    p.add_argument("--count-per-class", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("tensorize", help="bin every catalog series into tensors")
    common(p)
    p.add_argument("--catalog", required=True)
    p.add_argument("--dims", help="e.g. 24,16,16 for cubes or 24,16 for maps")
    p.set_defaults(func=cmd_tensorize)

    p = sub.add_parser("train", help="train the sparse autoencoder")
    common(p)
    p.add_argument("--catalog", required=True)
    p.add_argument("--tensors", required=True)
    p.add_argument("--arch", choices=("cube", "map"), default=None)
    p.add_argument("--bottleneck", type=int, default=None)
    p.add_argument("--lambda", dest="lambda_sparsity", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="extract latent vectors with a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--tensors", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("project", help="2-D embedding of the latent matrix")
    common(p)
    p.add_argument("--latents", required=True)
    p.add_argument("--perplexity", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("cluster", help="DBSCAN over the latent matrix")
    common(p)
    p.add_argument("--latents", required=True)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--min-pts", type=int, default=None)
    p.add_argument("--embedding", help="embedding.csv for a cluster-colored scatter")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("knn", help="nearest-neighbor retrieval")
    common(p)
    p.add_argument("--latents", required=True)
    p.add_argument("--query", action="append", help="series id (repeatable; default: all)")
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("score", help="k-NN anomaly scores")
    common(p)
    p.add_argument("--latents", required=True)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fit-head", help="supervised head on the latents")
    common(p)
    p.add_argument("--latents", required=True)
    p.add_argument("--task", required=True, choices=("variability", "hardness"))
    p.add_argument("--n-estimators", type=int, default=None)
    p.set_defaults(func=cmd_fit_head)

    p = sub.add_parser("report", help="render SVG reports")
    common(p)
    p.add_argument("--embedding")
    p.add_argument("--color-by")
    p.add_argument("--series", help="event CSV for a light-curve panel")
    p.add_argument("--bin-seconds", type=float, default=300.0)
    p.add_argument("--map", help="optional map tensor file for a heatmap panel")
    p.add_argument("--kdist-latents")
    p.add_argument("--kdist-k", type=int, default=5)
    p.set_defaults(func=cmd_report)

    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("EVENTCUBE_LOG", "info").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return 1
        cfg = load_run_config(args.config)
        args.func(args, cfg)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except EventCubeError as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

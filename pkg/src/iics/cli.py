"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure (divergence, failed gradient check).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError, RunConfig
from .core import Dataset, cosine_matrix, l2_normalize_rows, spawn_rngs
from .evaluation import (
    RetrievalProtocol,
    cmc_map,
    similarity_histogram,
    write_histogram_csv,
    write_metrics,
)
from .nn import load_checkpoint
from .nn.checks import run_all
from .pipeline import ABLATIONS, TrainingDiverged, run, similarity_features
from .synthgen import generate, load_dataset, make_query_gallery, save_dataset

log = logging.getLogger("iics")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _load_config(args, overrides: list[str]) -> RunConfig:
    return config_mod.load(getattr(args, "config", None), overrides)


def _threads(n: int | None):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_gen(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    ds = generate(cfg.gen)
    save_dataset(ds, args.out)
    P = int(np.unique(ds.identities).size)
    print(f"n={len(ds)} C={ds.num_cameras} P={P} -> {args.out}")
    return EXIT_OK


def cmd_run(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    pipe = cfg.pipeline
    if args.ablation:
        pipe = replace(pipe, ablation=args.ablation)
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_dict()
    resolved["pipeline"]["ablation"] = pipe.ablation
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    start = time.perf_counter()
    with _threads(args.threads):
        _, reports = run(pipe, ds, cfg.similarity, out, cfg.eval.query_fraction)
    elapsed = time.perf_counter() - start
    # wall-clock data lives apart from the deterministic outputs
    (out / "timing.json").write_text(json.dumps({"seconds": elapsed}, indent=2) + "\n")
    final = reports[-1].metrics
    if final is not None:
        print(f"rounds={len(reports)} mAP={final['mAP']:.4f} rank1={final['rank1']:.4f} "
              f"({elapsed:.1f}s)")
    else:
        print(f"rounds={len(reports)} (no identities, metrics skipped) ({elapsed:.1f}s)")
    return EXIT_OK


def _load_pair(args):
    model, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if ds.signals.shape[1:] != (model.in_channels, model.length):
        raise CliError(
            f"checkpoint expects signals [{model.in_channels}, {model.length}], "
            f"dataset has {list(ds.signals.shape[1:])}"
        )
    return model, ds


def _split_seed(ds: Dataset, cfg: RunConfig) -> int:
    gen = ds.meta.get("gen") if isinstance(ds.meta, dict) else None
    if isinstance(gen, dict) and isinstance(gen.get("seed"), int):
        return gen["seed"]
    return cfg.seed


def cmd_eval(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    model, ds = _load_pair(args)
    if ds.identities is None:
        raise CliError("evaluation needs a dataset with identities")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # same stream the training run uses for its split
    eval_rng = spawn_rngs(_split_seed(ds, cfg), 4)[3]
    q, g = make_query_gallery(ds, eval_rng, cfg.eval.query_fraction)
    protocol = RetrievalProtocol(q, g)
    with _threads(args.threads):
        E = similarity_features(model, ds.signals, cfg.pipeline)
    U = l2_normalize_rows(E)
    result = cmc_map(U[q] @ U[g].T, protocol, ds.identities, ds.cameras)
    metrics = result.to_metrics()
    write_metrics(out / "metrics.json", metrics)
    hist = similarity_histogram(cosine_matrix(E), ds.identities, ds.cameras, cfg.eval.bins)
    write_histogram_csv(out / "histogram.csv", hist)
    print(f"mAP={metrics['mAP']:.4f} rank1={metrics['rank1']:.4f} "
          f"queries={metrics['num_queries']}")
    return EXIT_OK


def cmd_sim_hist(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    model, ds = _load_pair(args)
    if ds.identities is None:
        raise CliError("similarity histogram needs a dataset with identities")
    bins = args.bins if args.bins is not None else cfg.eval.bins
    E = similarity_features(model, ds.signals, cfg.pipeline)
    hist = similarity_histogram(cosine_matrix(E), ds.identities, ds.cameras, bins)
    write_histogram_csv(args.out, hist)
    print(f"gap={hist.gap():.4f} -> {args.out}")
    return EXIT_OK


def read_embeddings_csv(path: str | Path, identity_column: bool = False):
    """Rows of ``camera, v_1 .. v_d[, identity]``; returns
    (features, cameras, identities or None)."""
    feats, cams, ids = [], [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
                if width < 2 + int(identity_column):
                    raise CliError(f"row {lineno}: too few columns")
            elif len(row) != width:
                raise CliError(f"row {lineno}: expected {width} columns, got {len(row)}")
            try:
                cams.append(int(row[0]))
                if identity_column:
                    ids.append(int(row[-1]))
                    feats.append([float(v) for v in row[1:-1]])
                else:
                    feats.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise CliError(f"row {lineno}: {exc}") from exc
    if not feats:
        raise CliError(f"{path}: no rows")
    return (np.array(feats), np.array(cams, dtype=np.int64),
            np.array(ids, dtype=np.int64) if identity_column else None)


def read_embeddings_npz(path: str | Path):
    with np.load(path) as z:
        if "features" not in z or "cameras" not in z:
            raise CliError(f"{path}: npz needs 'features' and 'cameras' arrays")
        feats = np.asarray(z["features"], dtype=np.float64)
        cams = np.asarray(z["cameras"], dtype=np.int64)
        ids = np.asarray(z["identities"], dtype=np.int64) if "identities" in z else None
    if feats.ndim != 2 or cams.shape != (feats.shape[0],):
        raise CliError(f"{path}: features must be [n, d] with one camera per row")
    if ids is not None and ids.shape != cams.shape:
        raise CliError(f"{path}: identities must have one entry per row")
    return feats, cams, ids


def embeddings_dataset(feats, cams, ids=None, meta=None) -> Dataset:
    if np.any(cams < 0):
        raise CliError("camera ids must be non-negative")
    return Dataset(
        signals=feats.astype(np.float32).astype(np.float64)[:, None, :],
        cameras=cams,
        num_cameras=int(cams.max()) + 1,
        identities=ids,
        embedding_mode=True,
        meta=meta or {"source": "imported"},
    )


def write_embeddings_csv(ds: Dataset, path: str | Path) -> None:
    """Inverse of read_embeddings_csv; identities go in the last column."""
    flat = ds.signals.reshape(len(ds), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i in range(len(ds)):
            row = [int(ds.cameras[i])] + [repr(float(v)) for v in flat[i]]
            if ds.identities is not None:
                row.append(int(ds.identities[i]))
            w.writerow(row)


def cmd_import(args, overrides) -> int:
    if overrides:
        raise CliError(f"unexpected arguments: {' '.join(overrides)}")
    src = Path(args.input)
    if src.suffix == ".npz":
        feats, cams, ids = read_embeddings_npz(src)
    else:
        feats, cams, ids = read_embeddings_csv(src, args.identity_column)
    ds = embeddings_dataset(feats, cams, ids, {"source": "imported", "file": src.name})
    save_dataset(ds, args.out)
    print(f"n={len(ds)} C={ds.num_cameras} d={feats.shape[1]} -> {args.out}")
    return EXIT_OK


def cmd_grad_check(args, overrides) -> int:
    if overrides:
        raise CliError(f"unexpected arguments: {' '.join(overrides)}")
    reports = run_all(args.seed, args.probes, args.h, args.tol)
    for r in reports:
        print(r.summary())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="iics",
        description="Unsupervised re-identification by alternating intra- and "
                    "inter-camera pseudo-label training.",
        epilog="Config overrides: --section.key=value (e.g. --pipeline.rounds=3).",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=True):
        sp.add_argument("--config", help="JSON run configuration")
        if threads:
            sp.add_argument("--threads", type=int, help="cap on numeric library threads")

    sp = sub.add_parser("gen", help="generate a synthetic dataset")
    common(sp, threads=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("run", help="train on a dataset")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--ablation", choices=ABLATIONS)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("eval", help="retrieval metrics and similarity histogram")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("import-embeddings", help="convert feature vectors to a dataset")
    sp.add_argument("input", help="CSV (camera, values..., [identity]) or .npz")
    sp.add_argument("--out", required=True)
    sp.add_argument("--identity-column", action="store_true",
                    help="CSV rows end with an identity label")
    sp.set_defaults(func=cmd_import)

    sp = sub.add_parser("grad-check", help="finite-difference gradient checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--probes", type=int, default=20)
    sp.add_argument("--h", type=float, default=1e-5)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(func=cmd_grad_check)

    sp = sub.add_parser("sim-hist", help="similarity histogram CSV")
    common(sp, threads=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="CSV path")
    sp.add_argument("--bins", type=int)
    sp.set_defaults(func=cmd_sim_hist)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    bad = [a for a in extra if not (a.startswith("--") and "=" in a and "." in a.split("=")[0])]
    if bad and args.func not in (cmd_import, cmd_grad_check):
        print(f"error: unrecognized arguments: {' '.join(bad)}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args, extra)
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

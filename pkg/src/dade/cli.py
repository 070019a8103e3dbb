"""Command-line front end.

Subcommands: ``synth``, ``fit``, ``calibrate``, ``build``, ``gt``, ``sweep``,
``feasibility``. Exit status is 0 on success, 2 on configuration errors
(mismatched artifacts, bad parameters) and 1 on any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .calibration import DEFAULT_P_S, calibrate, load_calibration, save_calibration
from .errors import ConfigurationError, DadeError, InvalidInputError
from .estimator import DEFAULT_DELTA_D, DEFAULT_EPS0
from .hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_M, build_hnsw, load_hnsw, save_hnsw
from .io import (GroundTruth, compute_ground_truth, generate_synthetic, load_synthetic_config, read_fvecs,
                 read_ivecs, write_fvecs, write_ivecs)
from .ivf import build_ivf, load_ivf, save_ivf
from .transform import apply_transform, fit_pca, fit_random_orthogonal, load_transform, save_transform

log = logging.getLogger("dade")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _expand(text))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in _expand(text))


def _expand(text: str) -> list[str]:
    """``"1,2,5"`` or ``"start:stop:step"`` (inclusive stop)."""
    text = str(text)
    if ":" in text:
        start, stop, step = (float(p) for p in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError(f"range step must be positive in {text!r}")
        values, v = [], start
        while v <= stop + 1e-9:
            values.append(repr(round(v, 10)) if not float(v).is_integer() else str(int(v)))
            v += step
        return values
    return [p for p in text.split(",") if p]


def _strs(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _load_gt(path, data_n=None) -> GroundTruth:
    ids = read_ivecs(path).astype("int64")
    if data_n is not None and ids.size and ids.max() >= data_n:
        raise ConfigurationError(f"ground truth references id {int(ids.max())} but data has {data_n} vectors")
    return GroundTruth(ids, ids * 0.0)


def cmd_synth(args) -> None:
    cfg = load_synthetic_config(args.config)
    data, queries = generate_synthetic(cfg)
    write_fvecs(args.data_out, data)
    write_fvecs(args.queries_out, queries)


def cmd_fit(args) -> None:
    data = read_fvecs(args.data)
    if args.kind == "pca":
        t = fit_pca(data)
    else:
        t = fit_random_orthogonal(data.shape[1], args.seed, data)
    save_transform(t, args.out)
    log.info("fitted %s transform, D=%d", t.kind, t.dim)


def cmd_calibrate(args) -> None:
    t = load_transform(args.transform)
    data = read_fvecs(args.data)
    if data.shape[1] != t.dim:
        raise ConfigurationError(f"transform dimension {t.dim} differs from data dimension {data.shape[1]}")
    cal = calibrate(t, apply_transform(t, data), args.p_s, args.delta_d, args.n_pairs, args.seed)
    save_calibration(cal, args.out)
    for d, eps in zip(cal.checkpoints, cal.epsilons):
        log.info("d=%d eps=%.6f", d, eps)


def cmd_build(args) -> None:
    t = load_transform(args.transform)
    data = read_fvecs(args.data)
    if data.shape[1] != t.dim:
        raise ConfigurationError(f"transform dimension {t.dim} differs from data dimension {data.shape[1]}")
    rotated = apply_transform(t, data)
    if args.index == "ivf":
        save_ivf(build_ivf(rotated, args.n_clusters, args.layout, args.delta_d, args.seed), args.out)
    else:
        save_hnsw(build_hnsw(rotated, args.m, args.ef_construction, args.seed), args.out)


def cmd_gt(args) -> None:
    data = read_fvecs(args.data)
    queries = read_fvecs(args.queries)
    gt = compute_ground_truth(data, queries, args.k)
    write_ivecs(args.out, gt.ids)


def _spec_from_args(args) -> bench.SweepSpec:
    fields = dict(
        index=args.index, dcos=args.dco, k=args.k, n_probe=args.n_probe, ef=args.ef, p_s=args.p_s,
        eps0=args.eps0, delta_d=args.delta_d, d_fixed=args.d_fixed, layout=args.layout,
        decoupled=args.decoupled, n_clusters=args.n_clusters, m=args.m, ef_construction=args.ef_construction,
        n_pairs=args.n_pairs, transform_seed=args.seed, calibration_seed=args.calibration_seed,
        index_seed=args.index_seed, timing=args.timing == "on",
    )
    if args.spec:
        overrides = json.loads(Path(args.spec).read_text())
        unknown = set(overrides) - set(fields)
        if unknown:
            raise ConfigurationError(f"unknown spec keys: {sorted(unknown)}")
        for key, value in overrides.items():
            fields[key] = tuple(value) if isinstance(value, list) else value
    return bench.SweepSpec(**fields)


def _workspace(args, seed: int, calibration_seed: int, n_pairs) -> bench.Workspace:
    data = read_fvecs(args.data)
    queries = read_fvecs(args.queries)
    pca = load_transform(args.transform) if args.transform else None
    if pca is not None and pca.kind != "pca":
        raise ConfigurationError(f"--transform must be a pca transform, got kind {pca.kind}")
    rand = load_transform(args.random_transform) if args.random_transform else None
    if rand is not None and rand.kind != "random":
        raise ConfigurationError(f"--random-transform must be a random transform, got kind {rand.kind}")
    ws = bench.Workspace(data, queries, pca, rand, seed, calibration_seed, n_pairs)
    if args.calibration:
        ws.add_calibration(load_calibration(args.calibration, dim=ws.dim))
    return ws


def _check_calibration(ws: bench.Workspace, p_s_grid, delta_grid, args) -> None:
    if not args.calibration:
        return
    (cal_key,) = list(ws.calibrations)
    if cal_key[1] not in delta_grid:
        raise ConfigurationError(f"calibration delta_d={cal_key[1]} but requested delta_d={list(delta_grid)}")
    if cal_key[0] not in p_s_grid:
        raise ConfigurationError(f"calibration p_s={cal_key[0]} but requested p_s={list(p_s_grid)}")


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> None:
    spec = _spec_from_args(args)
    ws = _workspace(args, spec.transform_seed, spec.calibration_seed, spec.n_pairs)
    if "dade" in spec.dcos:
        _check_calibration(ws, spec.p_s, spec.delta_d, args)
    truth = _load_gt(args.gt, len(ws.data)) if args.gt else None
    index = None
    if args.index_file:
        index = load_ivf(args.index_file) if spec.index == "ivf" else load_hnsw(args.index_file)
        if spec.index == "ivf" and index.layout != spec.layout:
            raise ConfigurationError(f"index file layout {index.layout} but requested layout {spec.layout}")
    rows = bench.run_sweep(spec, ws, truth, index)
    _emit(bench.write_csv(rows, timing=spec.timing), args.out)


def cmd_feasibility(args) -> None:
    ws = _workspace(args, args.seed, args.calibration_seed, args.n_pairs)
    if "dade" in args.dco:
        _check_calibration(ws, args.p_s, args.delta_d, args)
    truth = _load_gt(args.gt, len(ws.data)) if args.gt else None
    rows = bench.run_feasibility(ws, args.k, args.dco, args.p_s, args.eps0, args.d_fixed, args.delta_d,
                                 truth, args.timing == "on")
    _emit(bench.write_csv(rows, timing=args.timing == "on"), args.out)


def _add_workspace_args(p) -> None:
    p.add_argument("--data", required=True, help="base vectors (.fvecs)")
    p.add_argument("--queries", required=True, help="query vectors (.fvecs)")
    p.add_argument("--gt", help="ground-truth ids (.ivecs); enables recall and failure auditing")
    p.add_argument("--transform", help="fitted pca transform; fitted on the fly if omitted")
    p.add_argument("--random-transform", help="fitted random transform for ads/fixed-random")
    p.add_argument("--calibration", help="calibration table matching --transform")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--delta-d", type=_ints, default=(DEFAULT_DELTA_D,))
    p.add_argument("--n-pairs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="random-transform seed")
    p.add_argument("--calibration-seed", type=int, default=0)
    p.add_argument("--timing", choices=("on", "off"), default="on",
                   help="include latency/QPS columns (off makes output byte-reproducible)")
    p.add_argument("--out", help="CSV path; stdout if omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic data from a key=value config")
    p.add_argument("config")
    p.add_argument("--data-out", required=True)
    p.add_argument("--queries-out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit and save an orthogonal transform")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=("pca", "random"), default="pca")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="estimate per-checkpoint error bounds")
    p.add_argument("--transform", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--p-s", type=float, default=DEFAULT_P_S)
    p.add_argument("--delta-d", type=int, default=DEFAULT_DELTA_D)
    p.add_argument("--n-pairs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("build", help="build and save an index over transformed data")
    p.add_argument("--index", choices=("ivf", "hnsw"), required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-clusters", type=int, default=None, help="default: about sqrt(N)")
    p.add_argument("--layout", choices=("contiguous", "split"), default="contiguous")
    p.add_argument("--delta-d", type=int, default=DEFAULT_DELTA_D)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--ef-construction", type=int, default=DEFAULT_EF_CONSTRUCTION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("gt", help="exact ground truth by brute force")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("sweep", help="recall / dimension-fraction / QPS over a parameter grid")
    _add_workspace_args(p)
    p.add_argument("--spec", help="JSON file whose keys override the flags (SweepSpec field names)")
    p.add_argument("--index", choices=bench.INDEX_KINDS, default="ivf")
    p.add_argument("--index-file", help="prebuilt index from `build` (over the pca transform)")
    p.add_argument("--dco", type=_strs, default=("fd", "dade"))
    p.add_argument("--n-probe", type=_ints, default=(20,))
    p.add_argument("--ef", type=_ints, default=(100,))
    p.add_argument("--p-s", type=_floats, default=(DEFAULT_P_S,))
    p.add_argument("--eps0", type=_floats, default=(DEFAULT_EPS0,))
    p.add_argument("--d-fixed", type=_ints, default=(32,))
    p.add_argument("--layout", choices=("contiguous", "split"), default="contiguous")
    p.add_argument("--decoupled", action="store_true")
    p.add_argument("--n-clusters", type=int, default=None)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--ef-construction", type=int, default=DEFAULT_EF_CONSTRUCTION)
    p.add_argument("--index-seed", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("feasibility", help="linear-scan curves per DCO strategy")
    _add_workspace_args(p)
    p.add_argument("--dco", type=_strs, default=("fd", "fixed-random", "fixed-pca", "ads", "dade"))
    p.add_argument("--p-s", type=_floats, default=bench.DEFAULT_P_S_GRID)
    p.add_argument("--eps0", type=_floats, default=bench.DEFAULT_EPS0_GRID)
    p.add_argument("--d-fixed", type=_ints, default=None)
    p.set_defaults(func=cmd_feasibility)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigurationError, InvalidInputError) as exc:
        print(f"dade: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DadeError, OSError) as exc:
        print(f"dade: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: generate -> field -> persist -> bootstrap.

Every command writes into ``--out-dir`` and records its artifacts in
``manifest.json`` there, together with a hash of the effective configuration.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import __version__
from ._validation import is_prime
from .cubical import PersistenceDiagram, build_complex, persistence
from .diagrams import SignificanceReport, significant_points
from .exceptions import CloudMismatch, DegenerateDistance, DuplicateOverload, GridError
from .filtration import (
    DEFAULT_M_DTM,
    KINDS,
    FiltrationSpec,
    ScalarField,
    build_field,
    grid_from_rectangle,
    make_grid,
)
from .inference import BootstrapConfig, Pipeline, oracle_bootstrap, subsample_bootstrap
from .neighbors import PointCloud, jitter
from .synthgen import (
    PRESET_DELTA_X,
    TOWER_RECTANGLE,
    TWO_SQUARE_PRESETS,
    VORONOI_PRESETS,
    generate,
    params_dict,
    preset_params,
    preset_sampler,
    read_points_csv,
    write_points_csv,
)

log = logging.getLogger("rdad")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

PRESETS = tuple(TWO_SQUARE_PRESETS) + tuple(VORONOI_PRESETS) + ("towers",)
FAMILIES = {"two-square": tuple(TWO_SQUARE_PRESETS), "voronoi": tuple(VORONOI_PRESETS)}

# keys accepted in a --config file and their types
CONFIG_KEYS = {
    "kind": str,
    "k_den": int,
    "k_dtm": int,
    "m_dtm": float,
    "delta_x": float,
    "padding": float,
    "p": int,
    "B": int,
    "alpha": float,
    "mode": str,
    "dim": int,
    "method": str,
}

DEFAULTS = {
    "kind": "rdad",
    "k_den": None,
    "k_dtm": None,
    "m_dtm": DEFAULT_M_DTM,
    "delta_x": None,
    "padding": 0.05,
    "p": 11,
    "B": 100,
    "alpha": 0.05,
    "mode": "subsample",
    "dim": 1,
    "method": "matrix",
}

FALLBACK_DELTA_X = 0.02
JITTER_STREAM = 0x6A17


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = None if value.lower() in ("none", "") else CONFIG_KEYS[key](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def effective_config(args):
    """Built-in defaults, overridden by the config file, overridden by flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    if cfg["mode"] not in ("subsample", "oracle"):
        raise ConfigError("mode must be 'subsample' or 'oracle'")
    if cfg["method"] not in ("matrix", "union_find"):
        raise ConfigError("method must be 'matrix' or 'union_find'")
    if not is_prime(cfg["p"]):
        raise ConfigError(f"p must be prime, got {cfg['p']}")
    if cfg["delta_x"] is not None and not cfg["delta_x"] > 0:
        raise ConfigError("delta_x must be positive")
    if not 0 < cfg["alpha"] < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if cfg["B"] < 1:
        raise ConfigError("B must be at least 1")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def resolve_seed(seed):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def threads(args):
    n = getattr(args, "threads", None)
    return n if n else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# files


def out_path(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def update_manifest(out_dir, command, artifacts, cfg):
    """Merge ``{artifact name: file}`` into ``out_dir/manifest.json``."""
    path = os.path.join(out_dir, "manifest.json")
    manifest = {"version": __version__, "artifacts": {}}
    if os.path.exists(path):
        with open(path) as fh:
            manifest = json.load(fh)
    digest = config_hash(cfg)
    for name, file in artifacts.items():
        manifest["artifacts"][name] = {"path": os.path.basename(file), "command": command, "config_hash": digest}
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)


def load_points(path, x_col="x", y_col="y"):
    if not os.path.exists(path):
        raise DataError(f"points file not found: {path}")
    try:
        cloud = read_points_csv(path, x_col, y_col)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if cloud is None:
        raise DataError(f"{path}: no points")
    return cloud


def load_field(path):
    if not os.path.exists(path):
        raise DataError(f"field file not found: {path}")
    try:
        return ScalarField.load(path)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: corrupt field file ({exc})") from None


def maybe_jitter(cloud, scale, seed):
    if not scale:
        return cloud
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(JITTER_STREAM,)))
    return PointCloud(jitter(cloud.points, scale, rng), cloud.labels)


# ---------------------------------------------------------------------------
# pipeline pieces


def filtration_spec(cfg):
    return FiltrationSpec(cfg["kind"], cfg["k_dtm"], cfg["k_den"], cfg["m_dtm"])


def grid_for(cloud, cfg, preset=None, rectangle=None):
    """Explicit rectangle, else the preset's window, else the padded bounding box."""
    delta_x = cfg["delta_x"]
    if delta_x is None:
        delta_x = PRESET_DELTA_X.get(preset) or FALLBACK_DELTA_X
    if rectangle is not None:
        lo, hi = (rectangle[0], rectangle[1]), (rectangle[2], rectangle[3])
        return grid_from_rectangle(lo, hi, delta_x)
    if preset == "towers":
        return grid_from_rectangle(*TOWER_RECTANGLE, delta_x)
    if preset in VORONOI_PRESETS:
        return grid_from_rectangle(*preset_params(preset).crop_rectangle, delta_x)
    return make_grid(cloud, delta_x, cfg["padding"])


def log_spec(cloud, spec):
    resolved = spec.resolve(len(cloud))
    log.info("N=%d kind=%s k_den=%s k_dtm=%d", len(cloud), resolved.kind, resolved.k_den, resolved.k_dtm)
    return resolved


def run_bootstrap(cloud, cfg, grid, seed, preset, n_jobs):
    pipeline = Pipeline(filtration_spec(cfg), grid, cfg["p"], cfg["method"])
    field = build_field(cloud, pipeline.spec, grid, n_jobs=n_jobs)
    diagram = persistence(build_complex(field), p=cfg["p"], method=cfg["method"])
    bcfg = BootstrapConfig(cfg["B"], cfg["alpha"], seed, cfg["mode"], cfg["dim"])
    if cfg["mode"] == "oracle":
        if preset is None or preset == "towers":
            raise ConfigError("--mode oracle needs a generator --preset")
        result = oracle_bootstrap(preset_sampler(preset), len(cloud), pipeline, bcfg, reference=diagram, n_jobs=n_jobs)
    else:
        result = subsample_bootstrap(cloud, pipeline, bcfg, reference=diagram, n_jobs=n_jobs)
    return field, diagram, result


def write_bootstrap(args, cfg, diagram, result, extra=None):
    sig = significant_points(diagram, cfg["dim"], result.radius)
    obj = result.to_dict()
    obj["n_significant"] = len(sig)
    obj["grid"] = result.grid.to_dict()
    obj.update(extra or {})
    json_path = out_path(args, "bootstrap.json")
    write_json(json_path, obj)
    csv_path = out_path(args, "significant.csv")
    SignificanceReport(diagram, cfg["dim"], result.radius).to_csv(csv_path)
    log.info("radius=%.6g significant dim-%d points=%d", result.radius, cfg["dim"], len(sig))
    return json_path, csv_path


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    if args.preset not in FAMILIES[args.family]:
        raise ConfigError(f"preset {args.preset!r} is not a {args.family} preset; choose from {FAMILIES[args.family]}")
    seed = resolve_seed(args.seed)
    overrides = {}
    if args.n is not None:
        overrides["n" if args.family == "two-square" else "n_super"] = args.n
    try:
        cloud = generate(args.preset, np.random.default_rng(seed), **overrides)
        params = preset_params(args.preset, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    points = out_path(args, "points.csv")
    write_points_csv(cloud, points)
    provenance = out_path(args, "provenance.json")
    prov = {"preset": args.preset, "seed": seed, "n_points": len(cloud), "params": params_dict(params)}
    write_json(provenance, prov)
    update_manifest(args.out_dir, "generate", {"points": points, "provenance": provenance}, prov)
    log.info("wrote %d points to %s", len(cloud), points)
    return EXIT_OK


def cmd_field(args):
    cfg = effective_config(args)
    cloud = load_points(args.points)
    seed = resolve_seed(args.seed) if args.jitter else args.seed
    cloud = maybe_jitter(cloud, args.jitter, seed)
    grid = grid_for(cloud, cfg, args.preset, args.rectangle)
    spec = log_spec(cloud, filtration_spec(cfg))
    field = build_field(cloud, spec, grid, n_jobs=threads(args))
    path = out_path(args, "field.json")
    field.save(path)
    artifacts = {"field": path}
    if args.csv:
        csv_path = out_path(args, "field.csv")
        field.to_csv(csv_path)
        artifacts["field_csv"] = csv_path
    update_manifest(args.out_dir, "field", artifacts, {**cfg, "jitter": args.jitter, "seed": seed})
    return EXIT_OK


def cmd_persist(args):
    cfg = effective_config(args)
    field = load_field(args.field)
    diagram = persistence(build_complex(field), p=cfg["p"], method=cfg["method"])
    path = out_path(args, "diagram.csv")
    diagram.to_csv(path)
    update_manifest(args.out_dir, "persist", {"diagram": path}, {"p": cfg["p"], "method": cfg["method"]})
    log.info("%d diagram points", len(diagram))
    return EXIT_OK


def cmd_bootstrap(args):
    cfg = effective_config(args)
    seed = resolve_seed(args.seed)
    cloud = maybe_jitter(load_points(args.points), args.jitter, seed)
    grid = grid_for(cloud, cfg, args.preset, args.rectangle)
    log_spec(cloud, filtration_spec(cfg))
    _, diagram, result = run_bootstrap(cloud, cfg, grid, seed, args.preset, threads(args))
    json_path, csv_path = write_bootstrap(args, cfg, diagram, result)
    update_manifest(
        args.out_dir, "bootstrap", {"bootstrap": json_path, "significant": csv_path}, {**cfg, "seed": seed}
    )
    return EXIT_OK


def cmd_ingest(args):
    if args.bbox is not None:
        x0, x1, y0, y1 = args.bbox
    elif args.preset == "towers":
        (x0, y0), (x1, y1) = TOWER_RECTANGLE
    else:
        raise ConfigError("ingest needs --bbox or --preset towers")
    if not (x0 < x1 and y0 < y1):
        raise ConfigError("bounding box must satisfy xmin < xmax and ymin < ymax")
    path = out_path(args, "points.csv")
    if not os.path.exists(args.points):
        raise DataError(f"points file not found: {args.points}")
    try:
        cloud = read_points_csv(args.points, args.x_col, args.y_col, args.label_col)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{args.points}: {exc}") from None
    n_in = 0 if cloud is None else len(cloud)
    if cloud is not None:
        pts = cloud.points
        keep = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
        kept = cloud.take(np.flatnonzero(keep)) if keep.any() else None
    else:
        kept = None
    if kept is None:
        warnings.warn("no rows inside the bounding box; writing an empty points file", stacklevel=1)
        log.warning("no rows inside the bounding box")
        with open(path, "w") as fh:
            fh.write("x,y,label\n")
    else:
        write_points_csv(kept, path)
    n_out = 0 if kept is None else len(kept)
    log.info("kept %d of %d rows", n_out, n_in)
    update_manifest(
        args.out_dir,
        "ingest",
        {"points": path},
        {"bbox": [x0, x1, y0, y1], "x_col": args.x_col, "y_col": args.y_col, "source": args.points},
    )
    return EXIT_OK


def cmd_run(args):
    """generate (or read) -> field -> persist -> bootstrap in one go."""
    cfg = effective_config(args)
    seed = resolve_seed(args.seed)
    artifacts = {}
    if args.points is not None:
        cloud = load_points(args.points)
    else:
        if args.preset is None or args.preset == "towers":
            raise ConfigError("run needs --points or a generator --preset")
        cloud = generate(args.preset, np.random.default_rng(seed))
        points = out_path(args, "points.csv")
        write_points_csv(cloud, points)
        provenance = out_path(args, "provenance.json")
        prov = {"preset": args.preset, "seed": seed, "n_points": len(cloud), "params": params_dict(preset_params(args.preset))}
        write_json(provenance, prov)
        artifacts.update(points=points, provenance=provenance)
        # reread so the pipeline sees exactly what is on disk
        cloud = load_points(points)
    cloud = maybe_jitter(cloud, args.jitter, seed)
    grid = grid_for(cloud, cfg, args.preset, args.rectangle)
    log_spec(cloud, filtration_spec(cfg))
    field, diagram, result = run_bootstrap(cloud, cfg, grid, seed, args.preset, threads(args))
    field_path = out_path(args, "field.json")
    field.save(field_path)
    diagram_path = out_path(args, "diagram.csv")
    diagram.to_csv(diagram_path)
    json_path, csv_path = write_bootstrap(args, cfg, diagram, result)
    artifacts.update(field=field_path, diagram=diagram_path, bootstrap=json_path, significant=csv_path)
    update_manifest(args.out_dir, "run", artifacts, {**cfg, "seed": seed, "preset": args.preset, "jitter": args.jitter})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--out-dir", default=".", help="directory for outputs and manifest.json")
    p.add_argument("--config", help="flat key = value file (k_den, m_dtm, delta_x, B, alpha, ...)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_filtration(p):
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--k-den", dest="k_den", type=int)
    p.add_argument("--k-dtm", dest="k_dtm", type=int)
    p.add_argument("--m-dtm", dest="m_dtm", type=float)
    p.add_argument("--delta-x", dest="delta_x", type=float)
    p.add_argument("--padding", type=float, help="grid padding as a fraction of each bounding-box side")
    p.add_argument("--rectangle", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.add_argument("--preset", choices=PRESETS, help="use the preset's grid window and spacing")
    p.add_argument("--jitter", type=float, default=0.0, help="perturb points by this fraction of the bbox diagonal")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")


def _add_persistence(p):
    p.add_argument("--p", type=int, help="prime coefficient field (default 11)")
    p.add_argument("--method", choices=("matrix", "union_find"))


def _add_bootstrap(p):
    p.add_argument("--B", dest="B", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=("subsample", "oracle"))
    p.add_argument("--dim", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="rdad", description="Density-aware distance filtrations and persistence.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("family", choices=tuple(FAMILIES))
    p.add_argument("--preset", required=True)
    p.add_argument("--n", type=int, help="sample size (super-sample size for voronoi)")
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("field", help="evaluate a filtration function on a grid")
    p.add_argument("points")
    p.add_argument("--seed", type=int, help="seed for --jitter")
    p.add_argument("--csv", action="store_true", help="also write field.csv (x,y,value)")
    _add_common(p)
    _add_filtration(p)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("persist", help="persistence diagram of a field file")
    p.add_argument("field")
    _add_common(p)
    _add_persistence(p)
    p.set_defaults(func=cmd_persist)

    p = sub.add_parser("bootstrap", help="bootstrap confidence radius and significant loops")
    p.add_argument("points")
    p.add_argument("--seed", type=int)
    _add_common(p)
    _add_filtration(p)
    _add_persistence(p)
    _add_bootstrap(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("ingest", help="crop a points file to a bounding box")
    p.add_argument("points")
    p.add_argument("--bbox", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--preset", choices=("towers",))
    p.add_argument("--x-col", default="x")
    p.add_argument("--y-col", default="y")
    p.add_argument("--label-col", default="label")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="full pipeline from a preset or points file")
    p.add_argument("--points")
    p.add_argument("--seed", type=int)
    _add_common(p)
    _add_filtration(p)
    _add_persistence(p)
    _add_bootstrap(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s: %(message)s",
        force=True,
    )
    # the summary lines (N, k_den, k_dtm, counts) are always shown
    log.setLevel(logging.INFO)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GridError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DuplicateOverload, DegenerateDistance, CloudMismatch, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

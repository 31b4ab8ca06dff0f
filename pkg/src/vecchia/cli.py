"""Command-line interface.

Every subcommand reads locations from ``--data`` (CSV with a header) or a
synthetic ``--grid`` such as ``30x30``, writes its table to ``--out`` (stdout
by default) and, when writing a file, a reproducibility stamp next to it.

All randomness derives from ``--seed``: random orderings use the seed
itself, prediction-point orderings ``seed + 1``, synthetic responses
``seed + 2`` and simulation draws ``seed + 3``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures.
"""

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, _backend
from .core import (
    LikelihoodPlan,
    NumericalError,
    build_gamma_tilde,
    dense_loglik,
    vecchia_loglik,
)
from .covariance import FAMILIES, CovarianceModel
from .grouping import RULES, BlockPartition, group_blocks, lossless_partition
from .inference import FitConfig, fit
from .locations import LocationSet, lonlat_to_xyz, parse_grid
from .neighbors import nn_ordered_brute, nn_ordered_fast
from .ordering import SCHEMES, order_points
from .quality import (
    ORACLE_CAP,
    DenseGaussian,
    godambe_information,
    kl_divergence_vecchia,
)
from .simulate import conditional_draw, conditional_expectation, prediction_setup, unconditional_draw

SEED_ORDER, SEED_PRED_ORDER, SEED_DATA, SEED_DRAWS = 0, 1, 2, 3
MISSING = {"", "na", "nan", "null", "none"}


class ConfigError(Exception):
    """Invalid configuration or input data (exit status 2)."""


# ---------------------------------------------------------------------------
# data ingestion


@dataclass
class Dataset:
    locs: LocationSet
    y: np.ndarray | None
    X: np.ndarray | None
    columns: dict
    rejected: list = field(default_factory=list)

    @property
    def n(self):
        return self.locs.n


def _split(text):
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return list(text)
    return [c.strip() for c in str(text).split(",") if c.strip()]


def ingest_csv(path, coords=None, response=None, time_col=None, covariates=None,
               sphere_time=False, skip_bad=False, require_response=False):
    """Read a CSV with a header row into a :class:`Dataset`.

    Parameters
    ----------
    coords : list of str, optional
        Coordinate columns.  Defaults to ``lon,lat`` with ``sphere_time``,
        otherwise every column not used as response, time or covariate.
    response : str, optional
        Response column; used only if present unless ``require_response``.
    time_col : str, optional
        Time column (defaults to ``time`` with ``sphere_time``).
    covariates : list of str, optional
        Columns of the design matrix.
    sphere_time : bool
        Treat ``coords`` as longitude/latitude in degrees, converted to
        unit 3-vectors.
    skip_bad : bool
        Drop rows with missing or non-numeric fields (reported in
        ``rejected``) instead of failing.

    Raises
    ------
    ConfigError
        Unknown columns, or malformed rows when ``skip_bad`` is false.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file, expected a header row") from None
        covariates = _split(covariates)
        if sphere_time:
            time_col = time_col or "time"
            coords = _split(coords) or ["lon", "lat"]
        if response is not None and response not in header:
            if require_response:
                raise ConfigError(f"{path}: response column {response!r} not in header {header}")
            response = None
        used = set(covariates) | {c for c in (response, time_col) if c}
        coords = _split(coords) or [h for h in header if h not in used]
        wanted = coords + ([time_col] if time_col else []) + covariates + ([response] if response else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ConfigError(f"{path}: columns {missing} not in header {header}")
        if not coords:
            raise ConfigError(f"{path}: no coordinate columns")
        idx = [header.index(c) for c in wanted]
        rows, rejected = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            problem = None
            if len(row) != len(header):
                problem = f"expected {len(header)} fields, found {len(row)}"
            else:
                vals = []
                for i in idx:
                    cell = row[i].strip()
                    if cell.lower() in MISSING:
                        problem = f"missing value in column {header[i]!r}"
                        break
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        problem = f"non-numeric value {cell!r} in column {header[i]!r}"
                        break
            if problem:
                if not skip_bad:
                    raise ConfigError(f"{path}:{lineno}: {problem} (use --skip-bad to drop such rows)")
                rejected.append((lineno, problem))
                continue
            rows.append(vals)
    if not rows:
        raise ConfigError(f"{path}: no usable rows")
    A = np.array(rows, dtype=float)
    d = len(coords)
    C = A[:, :d]
    k = d
    times = None
    if time_col:
        times = A[:, k]
        k += 1
    X = A[:, k:k + len(covariates)] if covariates else None
    k += len(covariates)
    y = A[:, k] if response else None
    if sphere_time:
        if d != 2:
            raise ConfigError("--sphere-time needs exactly two coordinate columns (lon, lat)")
        C = lonlat_to_xyz(C[:, 0], C[:, 1])
    if C.shape[1] > 4:
        raise ConfigError(f"at most 4 coordinate columns supported, got {C.shape[1]}")
    columns = {"coords": coords, "time": time_col, "covariates": covariates, "response": response}
    return Dataset(LocationSet(C, times), y, X, columns, rejected)


# ---------------------------------------------------------------------------
# configuration


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def apply_config(parser, values):
    """Install config-file values as parser defaults, rejecting unknown keys."""
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[key] = _bool(raw)
            elif act.type is not None:
                defaults[key] = act.type(raw)
            else:
                defaults[key] = raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
        if act.choices is not None and defaults[key] not in act.choices:
            raise ConfigError(f"config key {key!r}: {raw!r} not in {list(act.choices)}")
    parser.set_defaults(**defaults)


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(choices=None):
    def parse(text):
        vals = [v.strip() for v in str(text).split(",") if v.strip()]
        bad = [v for v in vals if choices and v not in choices]
        if bad or not vals:
            raise argparse.ArgumentTypeError(f"expected values from {choices}, got {text!r}")
        return vals
    return parse


def _on_off(text):
    try:
        return _bool(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _threads_default():
    return _backend.default_threads()


def _common(p):
    g = p.add_argument_group("common")
    g.add_argument("--config", help="key = value file mirroring these options")
    g.add_argument("--data", help="CSV input with a header row")
    g.add_argument("--grid", help="synthetic regular grid on the unit square/cube, e.g. 30x30")
    g.add_argument("--coords", help="comma-separated coordinate columns")
    g.add_argument("--time-col", dest="time_col", help="time column")
    g.add_argument("--response", default="z", help="response column (default z)")
    g.add_argument("--covariates", help="comma-separated design-matrix columns")
    g.add_argument("--sphere-time", dest="sphere_time", action="store_true",
                   help="coordinates are lon,lat in degrees plus a time column")
    g.add_argument("--skip-bad", dest="skip_bad", action="store_true",
                   help="drop malformed rows instead of failing")
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--stamp", help="reproducibility stamp path (default OUT.stamp.json)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $VECCHIA_THREADS or 1)")
    g.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")
    g.add_argument("--order", choices=SCHEMES, default="ammd")
    g.add_argument("--axis", default="0", help="coordinate index or 'sum' for --order coord")
    g.add_argument("--neighbors", type=int, default=30, help="neighbor count m")
    g.add_argument("--group", type=_on_off, default=True, help="grouping on/off")
    g.add_argument("--group-rule", dest="group_rule", choices=RULES, default="literal")
    g.add_argument("--full-distance", dest="full_distance", action="store_true",
                   help="use space-time distance for neighbor search (default spatial only)")
    m = p.add_argument_group("model")
    m.add_argument("--family", choices=FAMILIES, default="matern-isotropic")
    m.add_argument("--variance", type=float, default=1.0)
    m.add_argument("--range", dest="range_", type=float, default=0.1)
    m.add_argument("--time-range", dest="time_range", type=float, default=None)
    m.add_argument("--smoothness", type=float, default=0.5)
    m.add_argument("--nugget", type=float, default=0.0)
    m.add_argument("--mean", type=float, default=0.0)
    m.add_argument("--jitter", type=float, default=0.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="vecchia", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("order", help="write the ordering as CSV (position,index)")
    _common(p)

    p = sub.add_parser("neighbors", help="write ordered nearest-neighbor sets")
    _common(p)
    p.add_argument("--nn-check", dest="nn_check", action="store_true",
                   help="compare against the brute-force search")

    p = sub.add_parser("group", help="write the block partition")
    _common(p)
    p.add_argument("--group-stats", dest="group_stats", action="store_true",
                   help="write one CSV row of block statistics instead")

    p = sub.add_parser("loglik", help="evaluate the Vecchia log-likelihood")
    _common(p)
    p.add_argument("--exact", action="store_true", help="also evaluate the dense log-density")

    p = sub.add_parser("fit", help="estimate parameters with an increasing neighbor schedule")
    _common(p)
    p.add_argument("--schedule", type=_int_list, default=list(range(10, 101, 10)))
    p.add_argument("--window", type=float, default=0.02)
    p.add_argument("--fixed", type=_str_list(), default=None,
                   help="parameters held at their configured values, e.g. smoothness")
    p.add_argument("--max-evals", dest="max_evals", type=int, default=2000)
    p.add_argument("--xtol", type=float, default=1e-6)

    p = sub.add_parser("predict", help="kriging means and conditional-draw spread")
    _common(p)
    p.add_argument("--pred", required=False, help="CSV of prediction coordinates")
    p.add_argument("--pred-grid", dest="pred_grid", help="synthetic prediction grid")
    p.add_argument("--pred-neighbors", dest="pred_neighbors", type=int, default=None)
    p.add_argument("--pred-order", dest="pred_order", choices=("random", "ammd"), default="random")
    p.add_argument("--ensemble", type=int, default=0, help="conditional draws for the sd column")
    p.add_argument("--draws", help="also write every member's draws to this CSV")
    p.add_argument("--corr", help="write the empirical correlation matrix of the draws to this CSV")

    p = sub.add_parser("sim", help="unconditional draws at the locations")
    _common(p)
    p.add_argument("--ensemble", type=int, default=1)

    p = sub.add_parser("benchmark", help="KL / efficiency table over orderings and m")
    _common(p)
    p.add_argument("--orders", type=_str_list(SCHEMES), default=["coord", "middle", "random", "ammd"])
    p.add_argument("--m-list", dest="m_list", type=_int_list, default=[30, 60])
    p.add_argument("--grouped", type=_str_list(("on", "off")), default=["off", "on"])
    p.add_argument("--releff", action="store_true",
                   help="add relative efficiencies of variance, range and smoothness")

    p = sub.add_parser("timing", help="per-phase wall time as JSON")
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _model(args):
    kw = dict(variance=args.variance, range=args.range_, smoothness=args.smoothness,
              nugget=args.nugget, family=args.family, mean=args.mean)
    if args.family == "matern-spacetime":
        kw["time_range"] = args.time_range
    try:
        return CovarianceModel(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _dataset(args, require_response=False):
    if args.data and args.grid:
        raise ConfigError("give either --data or --grid, not both")
    if args.data:
        ds = ingest_csv(args.data, coords=args.coords, response=args.response,
                        time_col=args.time_col, covariates=args.covariates,
                        sphere_time=args.sphere_time, skip_bad=args.skip_bad,
                        require_response=require_response)
        for lineno, problem in ds.rejected:
            print(f"skipped line {lineno}: {problem}", file=sys.stderr)
        if ds.rejected:
            print(f"skipped {len(ds.rejected)} malformed rows", file=sys.stderr)
        return ds
    if args.grid:
        try:
            locs = parse_grid(args.grid)
        except ValueError as exc:
            raise ConfigError(f"bad --grid {args.grid!r}") from exc
        return Dataset(locs, None, None, {"grid": args.grid})
    raise ConfigError("need --data or --grid")


def _axis(args):
    return "sum" if args.axis == "sum" else int(args.axis)


def _perm(args, locs):
    return order_points(locs, args.order, seed=args.seed + SEED_ORDER, axis=_axis(args))


def _sets(args, locs, perm, m=None):
    m = args.neighbors if m is None else m
    m = min(m, locs.n - 1)
    return nn_ordered_fast(locs, perm, m, spatial_only=not args.full_distance)


def _partition(args, sets):
    return group_blocks(sets, rule=args.group_rule) if args.group else sets


def _synthetic_y(args, model, locs):
    """Draw a response from the Vecchia approximation (exact for m = n - 1)."""
    perm = _perm(args, locs)
    sets = _sets(args, locs, perm)
    G = build_gamma_tilde(model, locs, perm, lossless_partition(sets), threads=args.threads,
                          jitter=args.jitter)
    return unconditional_draw(G, seed=args.seed + SEED_DATA, mean=model.mean)


def _response(args, ds, model):
    if ds.y is not None:
        return ds.y
    if args.data:
        raise ConfigError(f"response column {args.response!r} not found in {args.data}")
    return _synthetic_y(args, model, ds.locs)


class _Output:
    def __init__(self, path):
        self.path = path
        self.buf = io.StringIO()

    def write(self, text):
        self.buf.write(text)

    def close(self):
        if self.path:
            with open(self.path, "w", newline="") as fh:
                fh.write(self.buf.getvalue())
        else:
            sys.stdout.write(self.buf.getvalue())


def _csv(out, header, rows):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def stamp(args, argv):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "stamp", "config")}
    blob = json.dumps(cfg, sort_keys=True, default=str)
    return {
        "command": args.command,
        "argv": list(argv),
        "config": json.loads(blob),
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": args.seed,
        "version": __version__,
        "backend": _backend.name(),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_order(args, out):
    ds = _dataset(args)
    perm = _perm(args, ds.locs)
    _csv(out, ["position", "index"], enumerate(perm.forward.tolist()))


def cmd_neighbors(args, out):
    ds = _dataset(args)
    perm = _perm(args, ds.locs)
    sets = _sets(args, ds.locs, perm)
    if args.nn_check:
        brute = nn_ordered_brute(ds.locs, perm, min(args.neighbors, ds.n - 1),
                                 spatial_only=not args.full_distance)
        if not sets.same_sets(brute):
            raise NumericalError("fast neighbor search disagrees with brute force")
        print("nn-check: fast search matches brute force", file=sys.stderr)
    rows = (
        (i, int(perm.forward[i]), " ".join(str(int(j)) for j in sets[i]))
        for i in range(len(sets))
    )
    _csv(out, ["position", "index", "neighbors"], rows)


def _stats_row(part):
    s = part.stats()
    return [s["K"], _fmt(s["mean_U"]), s["max_U"], _fmt(s["mean_Jbar"]), s["max_Jbar"]]


def cmd_group(args, out):
    ds = _dataset(args)
    perm = _perm(args, ds.locs)
    sets = _sets(args, ds.locs, perm)
    part = group_blocks(sets, rule=args.group_rule) if args.group else BlockPartition.singletons(sets)
    if args.group_stats:
        _csv(out, ["K", "mean_U", "max_U", "mean_Jbar", "max_Jbar"], [_stats_row(part)])
        return
    rows = (
        (k, " ".join(map(str, B.tolist())), " ".join(map(str, U.tolist())))
        for k, (B, U) in enumerate(zip(part.blocks, part.unions))
    )
    _csv(out, ["block", "members", "union"], rows)


def cmd_loglik(args, out):
    ds = _dataset(args)
    model = _model(args)
    y = _response(args, ds, model)
    perm = _perm(args, ds.locs)
    sets = _sets(args, ds.locs, perm)
    part = _partition(args, sets)
    plan = LikelihoodPlan.build(perm, part)
    res = vecchia_loglik(model, ds.locs, plan, y, X=ds.X, threads=args.threads, jitter=args.jitter)
    rec = {"n": ds.n, "m": min(args.neighbors, ds.n - 1), "grouped": bool(args.group),
           "loglik": res.loglik}
    if res.beta is not None:
        rec["beta"] = [float(b) for b in res.beta]
    if args.exact:
        if ds.n > ORACLE_CAP:
            raise ConfigError(f"--exact needs n <= {ORACLE_CAP}, got {ds.n}")
        rec["exact_loglik"] = dense_loglik(model, ds.locs, y, X=ds.X, beta=res.beta, jitter=args.jitter)
        rec["difference"] = rec["loglik"] - rec["exact_loglik"]
    out.write(json.dumps(rec) + "\n")


def cmd_fit(args, out):
    ds = _dataset(args)
    model = _model(args)
    y = _response(args, ds, model)
    fixed = {k: model.get(k) for k in (args.fixed or [])}
    unknown = [k for k in fixed if k not in model.param_names]
    if unknown:
        raise ConfigError(f"unknown parameters in --fixed: {unknown}")
    try:
        cfg = FitConfig(order=args.order, seed=args.seed + SEED_ORDER, schedule=tuple(args.schedule),
                        group=args.group, group_rule=args.group_rule, xtol=args.xtol,
                        max_evals=args.max_evals, window=args.window, fixed=fixed,
                        smoothness=args.smoothness, threads=args.threads, jitter=args.jitter,
                        spatial_only=not args.full_distance)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = fit(ds.locs, y, family=args.family, config=cfg, X=ds.X)
    for st in res.stages:
        rec = st.as_json()
        rec["converged"] = res.converged
        out.write(json.dumps(rec) + "\n")


def _pred_locs(args, obs):
    if args.pred and args.pred_grid:
        raise ConfigError("give either --pred or --pred-grid")
    if args.pred:
        ds = ingest_csv(args.pred, coords=args.coords, response=None, time_col=args.time_col,
                        sphere_time=args.sphere_time, skip_bad=args.skip_bad)
        return ds.locs, ds.columns["coords"]
    if args.pred_grid:
        return parse_grid(args.pred_grid), None
    raise ConfigError("need --pred or --pred-grid")


def cmd_predict(args, out):
    if (args.draws or args.corr) and args.ensemble < 2:
        raise ConfigError("--draws and --corr need --ensemble of at least 2")
    ds = _dataset(args, require_response=bool(args.data))
    model = _model(args)
    y = _response(args, ds, model)
    pred, _ = _pred_locs(args, ds.locs)
    if pred.d != ds.locs.d or pred.has_time != ds.locs.has_time:
        raise ConfigError("prediction coordinates do not match the observed layout")
    obs_perm = _perm(args, ds.locs)
    setup = prediction_setup(
        model, ds.locs, pred, m=min(args.neighbors, ds.n - 1), m_pred=args.pred_neighbors,
        pred_order=args.pred_order, seed=args.seed + SEED_PRED_ORDER - 1, group=args.group,
        group_rule=args.group_rule, spatial_only=not args.full_distance, threads=args.threads,
        obs_perm=obs_perm, jitter=args.jitter,
    )
    mean = conditional_expectation(setup, y)
    sd = np.full(pred.n, np.nan)
    draws = None
    if args.ensemble > 1:
        draws = conditional_draw(setup, y, seed=args.seed + SEED_DRAWS, size=args.ensemble)
        sd = draws.std(axis=0, ddof=1)
    coords = pred.points()
    header = [f"x{k}" for k in range(coords.shape[1])] + ["mean", "sd"]
    rows = ([*map(_fmt, c), _fmt(mu), _fmt(s)] for c, mu, s in zip(coords, mean, sd))
    _csv(out, header, rows)
    if args.corr and draws is not None:
        with open(args.corr, "w", newline="") as fh:
            _csv(fh, [f"p{j}" for j in range(pred.n)],
                 ([_fmt(v) for v in row] for row in np.corrcoef(draws, rowvar=False)))
    if args.draws and draws is not None:
        with open(args.draws, "w", newline="") as fh:
            _csv(fh, [f"member{r}" for r in range(draws.shape[0])],
                 ([_fmt(v) for v in col] for col in draws.T))


def cmd_sim(args, out):
    ds = _dataset(args)
    model = _model(args)
    perm = _perm(args, ds.locs)
    sets = _sets(args, ds.locs, perm)
    G = build_gamma_tilde(model, ds.locs, perm, _partition(args, sets), threads=args.threads,
                          jitter=args.jitter)
    Y = unconditional_draw(G, seed=args.seed + SEED_DRAWS, size=max(1, args.ensemble),
                           mean=model.mean)
    coords = ds.locs.points()
    header = [f"x{k}" for k in range(coords.shape[1])] + [f"draw{r}" for r in range(Y.shape[0])]
    rows = ([*map(_fmt, c), *map(_fmt, Y[:, i])] for i, c in enumerate(coords))
    _csv(out, header, rows)


def cmd_benchmark(args, out):
    ds = _dataset(args)
    model = _model(args)
    locs = ds.locs
    if locs.n > ORACLE_CAP:
        raise ConfigError(f"benchmark needs n <= {ORACLE_CAP} for the dense oracle")
    params = ("variance", "range", "smoothness")
    header = ["family", "variance", "range", "smoothness", "nugget", "ordering", "m", "grouped",
              "K", "mean_U", "kl", "seconds"] + [f"releff_{p}" for p in params]
    rows = []
    for order in args.orders:
        perm = order_points(locs, order, seed=args.seed + SEED_ORDER, axis=_axis(args))
        dense = DenseGaussian.from_model(model, locs, perm)
        for m in args.m_list:
            sets = nn_ordered_fast(locs, perm, min(m, locs.n - 1),
                                   spatial_only=not args.full_distance)
            for g in args.grouped:
                t0 = time.perf_counter()
                if g == "on":
                    part = group_blocks(sets, rule=args.group_rule)
                else:
                    part = BlockPartition.singletons(sets)
                kl = kl_divergence_vecchia(model, locs, perm, part, dense=dense, threads=args.threads)
                secs = time.perf_counter() - t0
                rel = [""] * len(params)
                if args.releff:
                    info = godambe_information(model, locs, perm, part, params=params)
                    rel = [_fmt(v) for v in info.relative_efficiency]
                st = part.stats()
                rows.append([model.family, _fmt(model.variance), _fmt(model.range),
                             _fmt(model.smoothness), _fmt(model.nugget), order, m, g,
                             st["K"], _fmt(st["mean_U"]), _fmt(kl), _fmt(secs), *rel])
    _csv(out, header, rows)


def cmd_timing(args, out):
    ds = _dataset(args)
    model = _model(args)
    locs = ds.locs
    rec = {"n": locs.n, "m": args.neighbors, "order_scheme": args.order,
           "backend": _backend.name(), "threads": args.threads or _threads_default()}
    t = time.perf_counter()
    perm = _perm(args, locs)
    rec["order"] = time.perf_counter() - t
    t = time.perf_counter()
    sets = _sets(args, locs, perm)
    rec["neighbors"] = time.perf_counter() - t
    t = time.perf_counter()
    part = _partition(args, sets)
    plan = LikelihoodPlan.build(perm, part)
    rec["group"] = time.perf_counter() - t
    y = _response(args, ds, model) if ds.y is not None else \
        np.random.Generator(np.random.Philox(args.seed + SEED_DATA)).standard_normal(locs.n)
    t = time.perf_counter()
    vecchia_loglik(model, locs, plan, y, threads=args.threads, jitter=args.jitter)
    rec["loglik"] = time.perf_counter() - t
    out.write(json.dumps(rec) + "\n")


COMMANDS = {
    "order": cmd_order,
    "neighbors": cmd_neighbors,
    "group": cmd_group,
    "loglik": cmd_loglik,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "sim": cmd_sim,
    "benchmark": cmd_benchmark,
    "timing": cmd_timing,
}


def _subparser(parser, command):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices.get(command)
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("command", nargs="?")
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config and known.command in COMMANDS:
            apply_config(_subparser(parser, known.command), read_config(known.config))
        args = parser.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.backend != "auto":
            try:
                _backend.set_backend(args.backend)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if args.neighbors < 1:
            raise ConfigError("--neighbors must be at least 1")
        out = _Output(args.out)
        COMMANDS[args.command](args, out)
        out.close()
        stamp_path = args.stamp or (f"{args.out}.stamp.json" if args.out else None)
        if stamp_path:
            with open(stamp_path, "w") as fh:
                json.dump(stamp(args, argv), fh, indent=2, default=str)
                fh.write("\n")
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # argparse
        return int(exc.code or 0) if not isinstance(exc.code, str) else 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line harness: ``artifact <subcommand> [--config PATH] ...``.

Configuration is INI text.  Every run writes ``manifest.json``,
``results.csv`` and matrix dumps under ``raw/`` into the output directory.
Exit codes: 0 when every row passes, 1 on an identity failure, 2 on a
configuration or input error (a JSON error block goes to stderr).
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import click
import numpy as np

from . import __version__
from . import experiments as ex
from .backward_adjoint import representation_P, solve_adjoint_bqsde
from .clifford_core import MAX_MODES, ModeGrid, save_matrix
from .identity_lab import convergence_order
from .presets import PRESETS, preset_problem

CSV_VERSION = "artifact-results v1"
SUBCOMMANDS = ("car-check", "isometry", "forward-sweep", "adjoint-solve", "duality-check",
               "relaxed-verify", "galerkin-sweep")
RELAXED_CAP = 6
OPERATOR_CAP = 9

SCHEMA = {
    "grid": {"T": float, "N": int, "n_modes": int, "times": str, "decouple": bool},
    "data": {"preset": str, "lam": float, "scale": float, "seed": int},
    "scheme": {"forward": str, "adjoint": str, "tol": float},
    "anchors": {"list": str},
    "experiment": {"pairs": int, "count": int, "probes": int, "levels": str, "n_max": int},
    "output": {"dir": str},
}


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass
class ExperimentConfig:
    T: float = 1.0
    N: int = 4
    n_modes: int = 4
    times: tuple | None = None
    preset: str = "random"
    lam: float = 0.3
    scale: float = 0.5
    seed: int = 0
    forward: str = "euler"
    adjoint: str = "implicit"
    tol: float = 1e-12
    anchors: tuple | None = None
    pairs: int = 200
    count: int = 50
    probes: int = 20
    levels: tuple = (2, 3, 4)
    n_max: int = 8
    out: str = "runs"
    warnings: list = field(default_factory=list)

    def grid(self) -> ModeGrid:
        if self.times is not None:
            return ModeGrid(self.times)
        return ModeGrid.uniform(self.T, self.N)


def _int_list(key, text):
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(key, f"expected a comma-separated list of integers, got {text!r}") from None


def _convert(key, typ, raw):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        return typ(raw)
    except ValueError:
        raise ConfigError(key, f"cannot read {raw!r} as {typ.__name__}") from None


def load_config(path=None, text=None) -> ExperimentConfig:
    """Parse and validate an INI config; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        if path is not None:
            with open(path) as fh:
                parser.read_file(fh)
        elif text is not None:
            parser.read_string(text)
    except OSError as err:
        raise ConfigError("--config", str(err)) from None
    except configparser.Error as err:
        raise ConfigError("config", str(err).splitlines()[0]) from None
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, raw in parser.items(section):
            full = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(full, "unknown key")
            values[full] = _convert(full, SCHEMA[section][key], raw)
    cfg = ExperimentConfig()
    cfg.T = values.get("grid.T", cfg.T)
    cfg.N = values.get("grid.N", cfg.N)
    cfg.n_modes = values.get("grid.n_modes", cfg.N)
    if "grid.times" in values:
        try:
            cfg.times = tuple(float(x) for x in values["grid.times"].split(","))
            ModeGrid(cfg.times)
        except ValueError as err:
            raise ConfigError("grid.times", str(err)) from None
        cfg.N = len(cfg.times) - 1
        cfg.T = cfg.times[-1]
        cfg.n_modes = values.get("grid.n_modes", cfg.N)
    if cfg.T <= 0:
        raise ConfigError("grid.T", "must be positive")
    if not 1 <= cfg.N <= MAX_MODES:
        raise ConfigError("grid.N", f"must lie in 1..{MAX_MODES}")
    if cfg.n_modes != cfg.N:
        if not values.get("grid.decouple", False):
            raise ConfigError("grid.n_modes", f"differs from grid.N ({cfg.n_modes} != {cfg.N}); set decouple = true")
        cfg.warnings.append(f"n_modes={cfg.n_modes} decoupled from N={cfg.N}; one mode per step is used")
        cfg.n_modes = cfg.N
    cfg.preset = values.get("data.preset", cfg.preset)
    if cfg.preset not in PRESETS:
        raise ConfigError("data.preset", f"unknown preset {cfg.preset!r}; expected one of {PRESETS}")
    cfg.lam = values.get("data.lam", cfg.lam)
    cfg.scale = values.get("data.scale", cfg.scale)
    cfg.seed = values.get("data.seed", cfg.seed)
    cfg.forward = values.get("scheme.forward", cfg.forward)
    if cfg.forward not in ("euler", "picard"):
        raise ConfigError("scheme.forward", "expected euler or picard")
    cfg.adjoint = values.get("scheme.adjoint", cfg.adjoint)
    if cfg.adjoint not in ("implicit", "explicit"):
        raise ConfigError("scheme.adjoint", "expected implicit or explicit")
    cfg.tol = values.get("scheme.tol", cfg.tol)
    if "anchors.list" in values and values["anchors.list"].strip() != "all":
        cfg.anchors = _int_list("anchors.list", values["anchors.list"])
        if any(not 0 <= a < cfg.N for a in cfg.anchors):
            raise ConfigError("anchors.list", f"anchors must lie in 0..{cfg.N - 1}")
    cfg.pairs = values.get("experiment.pairs", cfg.pairs)
    cfg.count = values.get("experiment.count", cfg.count)
    cfg.probes = values.get("experiment.probes", cfg.probes)
    cfg.n_max = values.get("experiment.n_max", cfg.n_max)
    if "experiment.levels" in values:
        cfg.levels = _int_list("experiment.levels", values["experiment.levels"])
        if len(cfg.levels) < 2 or any(not 1 <= x <= MAX_MODES for x in cfg.levels):
            raise ConfigError("experiment.levels", f"need at least two levels in 1..{MAX_MODES}")
    cfg.out = values.get("output.dir", cfg.out)
    return cfg


# ---------------------------------------------------------------- thresholds


def threshold(name: str, profile: dict):
    """``(kind, value)`` used to decide a row's pass flag."""
    if name.endswith("_order"):
        return "order", profile["order_min"]
    if name == "galerkin_monotone":
        return "monotone", profile["monotone_factor"]
    if name == "apriori_spread":
        return "below", profile["ratio_spread"]
    if name in ("transposition", "relaxed", "uniqueness", "consistency", "linear_duality",
                "rank_one_propagation", "galerkin_rank", "apriori_ratio", "forward_hs_ratio",
                "adjoint_residual", "scalar_level", "adjoint_consistency"):
        return "info", None
    if name.startswith("scalar_"):
        return "below", 1.0
    if name.startswith("car") or name.startswith("brownian"):
        return "rel", profile["exact"]
    return "rel", profile["derived"]


def evaluate(rows, thresholds: dict) -> list:
    """Recompute pass flags from stored numbers; idempotent."""
    out = []
    rank_errs = [r["abs_error"] for r in rows if r["name"] == "galerkin_rank"]
    for r in rows:
        r = dict(r)
        kind, val = thresholds.get(r["name"], ("rel", 1e-10))
        if kind == "order":
            r["pass"] = bool(r["order"] >= val)
        elif kind == "monotone":
            e = np.asarray(rank_errs)
            r["pass"] = bool(e.size == 0 or np.all(e[1:] <= val * e[:-1] + 1e-14))
        elif kind == "below":
            r["pass"] = bool(math.isfinite(r["rel_error"]) and r["rel_error"] < val)
        elif kind == "info":
            r["pass"] = bool(math.isfinite(r["abs_error"]))
        else:
            r["pass"] = bool(r["rel_error"] <= val)
        out.append(r)
    return out


# ---------------------------------------------------------------- runners


def _adjoint_solve(cfg: ExperimentConfig, profile, raw):
    rows = []
    errs, devs, rels = [], [], []
    target = math.exp(2 * cfg.lam * cfg.T)
    for N in cfg.levels:
        grid = ModeGrid.uniform(cfg.T, N)
        data = preset_problem(cfg.preset, cfg.lam, cfg.seed, cfg.scale).adjoint_data(grid)
        sol = solve_adjoint_bqsde(data, 0, cfg.adjoint, tol=cfg.tol)
        rep = representation_P(data, 0)
        gap = float(np.linalg.norm(sol.P[0] - rep, 2))
        ref = max(float(np.linalg.norm(rep, 2)), 1e-300)
        errs.append(gap)
        rels.append(gap / ref)
        rows.append(ex.row("adjoint_consistency", N, N, cfg.seed, gap, gap / ref))
        rows.append(ex.row("adjoint_residual", N, N, cfg.seed, float(sol.residual.max()), float(sol.residual.max())))
        raw[f"P0_recursion_N{N}"] = sol.P[0]
        raw[f"P0_representation_N{N}"] = rep
        if cfg.preset == "scalar":
            dev = abs(sol.P[0][0, 0] - target)
            devs.append(dev)
            rows.append(ex.row("scalar_level", N, N, cfg.seed, dev, dev / target))
    dts = [cfg.T / N for N in cfg.levels]
    order = convergence_order(dts, errs)
    rows.append(ex.row("adjoint_consistency_order", cfg.levels[-1], cfg.levels[-1], cfg.seed,
                       errs[-1], rels[-1], order))
    if devs:
        rows.append(ex.row("scalar_deviation_order", cfg.levels[-1], cfg.levels[-1], cfg.seed, devs[-1],
                           devs[-1] / target, convergence_order(dts, devs)))
    return rows


def run_suite(name: str, cfg: ExperimentConfig, profile: dict):
    """Rows and raw matrices for one subcommand."""
    raw = {}
    if name in ("adjoint-solve", "duality-check") and max(cfg.levels) > OPERATOR_CAP:
        raise ConfigError("experiment.levels", f"{name} stores dense operator paths; keep levels <= {OPERATOR_CAP}")
    if name == "car-check":
        rows = ex.car_check(cfg.n_max, cfg.pairs, cfg.seed, profile["exact"])
        rows += ex.brownian_check(cfg.N, cfg.T, profile["exact"])
    elif name == "isometry":
        rows = ex.isometry_check(cfg.N, cfg.count, cfg.seed, profile["derived"])
    elif name == "forward-sweep":
        rows = []
        for N in cfg.levels:
            rows += ex.forward_check(N, cfg.seed, profile["derived"])
    elif name == "adjoint-solve":
        rows = _adjoint_solve(cfg, profile, raw)
    elif name == "duality-check":
        levels = tuple(cfg.levels)
        rows = ex.linear_duality_sweep(levels, cfg.seed, profile)
        rows += ex.transposition_sweep(levels, cfg.seed, 4, profile)
        rows += ex.rank_one_sweep(cfg.N, levels, cfg.seed, profile)
    elif name == "relaxed-verify":
        levels = tuple(x for x in cfg.levels if x <= RELAXED_CAP)
        if len(levels) < 2:
            raise ConfigError("experiment.levels", f"relaxed-verify needs two levels <= {RELAXED_CAP}")
        rows = ex.relaxed_sweep(levels, cfg.seed, cfg.probes, profile)
        rows += ex.apriori_sweep(levels, cfg.seed, profile)
    elif name == "galerkin-sweep":
        rows, errs = ex.galerkin_sweep(min(cfg.N, 6), min(cfg.probes, 10), cfg.seed, profile)
        raw["galerkin_errors"] = errs
    else:
        raise ConfigError("subcommand", f"unknown subcommand {name!r}")
    return rows, raw


def _suite_worker(args):
    name, cfg, profile = args
    return run_suite(name, cfg, profile)


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_results(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ex.COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in ex.COLUMNS])


def read_results(path):
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# artifact-results"):
            raise ValueError(f"{path}: missing version header")
        rows = []
        for r in csv.DictReader(fh):
            rows.append({
                "name": r["name"], "n": int(r["n"]), "N": int(r["N"]),
                "seed": None if r["seed"] == "" else int(r["seed"]),
                "abs_error": float(r["abs_error"]), "rel_error": float(r["rel_error"]),
                "order": float(r["order"]), "pass": r["pass"] == "true",
            })
    return first[2:], rows


def execute(names, cfg: ExperimentConfig, profile_name: str, jobs: int = 1) -> int:
    profile = ex.PROFILES[profile_name]
    out = cfg.out
    os.makedirs(os.path.join(out, "raw"), exist_ok=True)
    started = time.time()
    tasks = [(n, cfg, profile) for n in names]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_suite_worker, tasks))
    else:
        results = [_suite_worker(t) for t in tasks]
    rows = []
    raw_files = []
    for name, (r, raw) in zip(names, results):
        rows += r
        for key, arr in raw.items():
            fname = f"{name}__{key}.npy"
            save_matrix(os.path.join(out, "raw", fname), np.asarray(arr))
            raw_files.append(fname)
    thresholds = {r["name"]: threshold(r["name"], profile) for r in rows}
    rows = evaluate(rows, thresholds)
    write_results(os.path.join(out, "results.csv"), rows)
    cfg_dict = asdict(cfg)
    manifest = {
        "version": __version__,
        "csv_version": CSV_VERSION,
        "subcommands": list(names),
        "config": cfg_dict,
        "profile": profile_name,
        "thresholds": thresholds,
        "raw": raw_files,
        "warnings": cfg.warnings,
        "started": started,
        "elapsed_s": time.time() - started,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    failed = [r for r in rows if not r["pass"]]
    for r in rows:
        flag = "PASS" if r["pass"] else "FAIL"
        click.echo(f"{flag}  {r['name']:<28} N={r['N']:<3} abs={r['abs_error']:.3e} "
                   f"rel={r['rel_error']:.3e} order={r['order']:.3f}")
    click.echo(f"{len(rows) - len(failed)}/{len(rows)} rows pass; results in {out}")
    return 1 if failed else 0


def report(run_dir: str) -> int:
    """Merge every ``results.csv`` under ``run_dir`` and recompute pass flags."""
    found = []
    for root, _, files in os.walk(run_dir):
        if "results.csv" in files:
            found.append(root)
    if not found:
        click.echo("no runs")
        return 0
    merged = []
    seen = {}
    dupes = 0
    for root in sorted(found):
        man_path = os.path.join(root, "manifest.json")
        if not os.path.exists(man_path):
            raise ConfigError(man_path, "missing manifest")
        with open(man_path) as fh:
            man = json.load(fh)
        thresholds = {k: tuple(v) for k, v in man.get("thresholds", {}).items()}
        _, rows = read_results(os.path.join(root, "results.csv"))
        for r in evaluate(rows, thresholds):
            key = tuple(_fmt(r[c]) for c in ex.COLUMNS)
            if key in seen:
                dupes += 1
                continue
            seen[key] = root
            merged.append((root, r))
    failed = 0
    for root, r in merged:
        failed += not r["pass"]
        flag = "PASS" if r["pass"] else "FAIL"
        click.echo(f"{flag}  {os.path.relpath(root, run_dir):<16} {r['name']:<28} N={r['N']:<3} "
                   f"rel={r['rel_error']:.3e} order={r['order']:.3f}")
    click.echo(f"{len(found)} run(s), {len(merged)} rows, {failed} failing, {dupes} duplicate rows dropped")
    return 1 if failed else 0


def _config_error(err: ConfigError):
    click.echo(json.dumps({"error": "config", "key": err.key, "message": err.message}), err=True)
    sys.exit(2)


def _options(f):
    f = click.option("--tolerance-profile", type=click.Choice(["strict", "default"]), default="default")(f)
    f = click.option("--jobs", type=int, default=1, show_default=True)(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None)(f)
    f = click.option("--seed", type=int, default=None)(f)
    f = click.option("--config", "config_path", type=click.Path(), default=None)(f)
    return f


@click.group()
@click.version_option(__version__)
def main():
    """Numerical checks for operator-valued backward equations on fermion Fock space."""


def _make(name):
    @_options
    def cmd(config_path, seed, out, jobs, tolerance_profile):
        try:
            cfg = load_config(config_path)
            if seed is not None:
                cfg.seed = seed
            if out is not None:
                cfg.out = out
            names = SUBCOMMANDS if name == "all" else (name,)
            code = execute(names, cfg, tolerance_profile, jobs)
        except ConfigError as err:
            _config_error(err)
        sys.exit(code)

    cmd.__doc__ = f"Run the {name} experiment." if name != "all" else "Run every experiment."
    return main.command(name)(cmd)


for _name in SUBCOMMANDS + ("all",):
    _make(_name)


@main.command("report")
@click.argument("run_dir", type=click.Path(file_okay=False))
def report_cmd(run_dir):
    """Merge results below RUN_DIR and re-apply stored tolerances."""
    try:
        code = report(run_dir)
    except ConfigError as err:
        _config_error(err)
    sys.exit(code)


if __name__ == "__main__":
    main()

"""``graphon-ldp <subcommand> --config <path> [--out <dir>] [--threads <k>]``

All numerics come from the JSON config.  Every run writes CSV tables, SVG
plots derived from them, and ``manifest.json`` echoing the config, the
package version and the seeds.

Exit codes:
    0  success
    2  usage error or unknown subcommand
    3  malformed config
    4  referenced file missing
    5  numerical failure during the run
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .dynamics import CouplingSpec, simulate
from .graphon import project
from .io import (
    read_coupling,
    read_gridfunction,
    to_json,
    write_adjacency,
    write_bijection,
    write_coupling,
    write_rows,
    write_trajectory,
)
from .ldp import (
    ball_predicate,
    dynamical_rate_search,
    estimate_rare_event,
    exact_event_probability,
    legendre_rate,
    upsilon,
)
from .plotting import plot_rows, plot_trajectory
from .random_graphs import (
    FiniteLaw,
    GridFunction,
    cell_average,
    derive_seed,
    embed,
    make_parameters,
    sample_sparse,
    sample_w_random,
)
from .staircase import random_coupling, staircase_bijection, staircase_convergence

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4, 5
OUT_ENV = "GRAPHON_LDP_OUT"

log = logging.getLogger("graphon_ldp")


class ConfigError(Exception):
    pass


class MissingFile(Exception):
    pass


# ---------------------------------------------------------------------------
# config helpers


def _get(cfg: dict, key: str, kind=None, default=...):
    if key not in cfg:
        if default is ...:
            raise ConfigError(f"config is missing {key!r}")
        return default
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"config field {key!r} has the wrong type")
    return val


def _ladder(cfg: dict, key: str = "resolutions") -> list[int]:
    vals = _get(cfg, key, list)
    if not vals or not all(isinstance(v, int) and v > 0 for v in vals):
        raise ConfigError(f"{key!r} must be a non-empty list of positive integers")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{key!r} must be strictly increasing")
    return vals


def _check_file(spec):
    if isinstance(spec, str) and ":" not in spec and spec not in ("product",):
        if not Path(spec).exists():
            raise MissingFile(spec)


def _kernel(spec) -> object:
    _check_file(spec)
    return spec


DYNAMICS_KEYS = {"coupling", "T", "dt", "save_every"}


def _coupling(dyn: dict) -> CouplingSpec:
    unknown = set(dyn) - DYNAMICS_KEYS
    if unknown:
        raise ConfigError(f"unknown dynamics fields {sorted(unknown)}")
    c = _get(dyn, "coupling", dict, {"f": "zero", "D": "kuramoto"})
    try:
        return CouplingSpec(**c)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _initial(spec, n: int) -> GridFunction:
    """Initial data by name: ``identity``, ``constant:<c>``, ``scaled:<a>`` or a gridfn file."""
    if isinstance(spec, list):
        return GridFunction(spec)
    name, _, arg = str(spec).partition(":")
    if name == "identity":
        return cell_average(lambda x: x, n)
    if name == "constant":
        return GridFunction(np.full(n, float(arg)))
    if name == "scaled":
        return cell_average(lambda x: float(arg) * x, n)
    _check_file(spec)
    gf = read_gridfunction(spec)
    return gf.coarsen(n) if gf.n % n == 0 else gf.refine(n)


def _initial_callable(spec):
    name, _, arg = str(spec).partition(":")
    if name == "identity":
        return lambda x: x
    if name == "constant":
        return lambda x: np.full_like(x, float(arg))
    if name == "scaled":
        return lambda x: float(arg) * x
    raise ConfigError(f"continuum runs need an analytic initial function, got {spec!r}")


def _law(cfg) -> FiniteLaw:
    try:
        return FiniteLaw(tuple(cfg["support"]), tuple(cfg["probs"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad law {cfg!r}: {exc}") from None


def _norm(cfg: dict) -> tuple[int, int]:
    norm = _get(cfg, "norm", dict, {})
    return int(norm.get("restarts", 8)), int(norm.get("seed", 0))


def _table(out: Path, name: str, rows: list[dict]) -> str:
    cols = list(rows[0].keys()) if rows else []
    for r in rows:
        for c in r:
            if c not in cols:
                cols.append(c)
    write_rows(out / name, cols, rows)
    return name


# ---------------------------------------------------------------------------
# subcommands: each returns (list of written files, seeds used)


def cmd_sample(cfg, out, threads):
    kernel = _kernel(_get(cfg, "kernel", str))
    seed = _get(cfg, "seed", int)
    replicas = _get(cfg, "seeds", int, 1)
    directed = bool(cfg.get("directed", True))
    alpha_exp = cfg.get("alpha_exponent")
    files, rows = [], []
    for n in _ladder(cfg):
        Wn = project(kernel, n)
        for r in range(replicas):
            s = derive_seed(seed, n * 1_000_003 + r)
            if alpha_exp is None:
                g = sample_w_random(Wn, s, directed)
            else:
                g = sample_sparse(Wn, float(n) ** (-alpha_exp), s, directed)
            name = f"graph_n{n}_r{r}.csv"
            write_adjacency(out / name, g)
            files.append(name)
            rows.append({"n": n, "replica": r, "seed": s, "edges": int(g.bits.sum()), "alpha": g.alpha})
    files.append(_table(out, "samples.csv", rows))
    return files


def cmd_norms(cfg, out, threads):
    restarts, nseed = _norm(cfg)
    pairs = [("tight_pair",) + experiments.tight_pair()]
    for p in _get(cfg, "pairs", list, []):
        n = int(p.get("n", 8))
        pairs.append((p.get("name", f"pair{len(pairs)}"), project(_kernel(p["f"]), n), project(_kernel(p["g"]), n)))
    rows = experiments.norms_table(pairs, restarts, nseed)
    return [_table(out, "norms.csv", rows)]


def _lln(cfg, out, threads, sparse: bool):
    restarts, nseed = _norm(cfg)
    exponent = float(cfg.get("alpha_exponent", 0.4)) if sparse else None
    rows = experiments.lln_ladder(
        _kernel(_get(cfg, "kernel", str)),
        _ladder(cfg),
        _get(cfg, "seeds", int),
        _get(cfg, "seed", int),
        restarts,
        nseed,
        sparse_exponent=exponent,
        threads=threads,
    )
    stem = "sparse_lln" if sparse else "lln"
    plot_rows(out / f"{stem}.svg", rows, "n", ["median"], logx=True, ylabel="d_inf_one(H^n, W^n)")
    return [_table(out, f"{stem}.csv", rows), f"{stem}.svg"]


def cmd_lln(cfg, out, threads):
    return _lln(cfg, out, threads, sparse=False)


def cmd_sparse_lln(cfg, out, threads):
    return _lln(cfg, out, threads, sparse=True)


def cmd_simulate(cfg, out, threads):
    dyn = _get(cfg, "dynamics", dict)
    coupling = _coupling(dyn)
    kernel = _kernel(_get(cfg, "kernel", str))
    seed = _get(cfg, "seed", int)
    T, dt = float(_get(dyn, "T")), float(_get(dyn, "dt"))
    save_every = int(dyn.get("save_every", 1))
    graph = cfg.get("graph", "sampled")
    params = None
    files, rows = [], []
    for n in _ladder(cfg):
        Wn = project(kernel, n)
        K = embed(sample_w_random(Wn, derive_seed(seed, n))) if graph == "sampled" else Wn
        g = _initial(cfg.get("initial", "identity"), n)
        if "parameters" in cfg:
            law = _law(cfg["parameters"])
            params = make_parameters(law, n, derive_seed(seed, 7 * n + 1), float(cfg["parameters"].get("rho", 0.05)))
        traj = simulate(K, g, coupling, T, dt, save_every, params)
        name = f"trajectory_n{n}.csv"
        write_trajectory(out / name, traj)
        plot_trajectory(out / f"trajectory_n{n}.svg", traj)
        files += [name, f"trajectory_n{n}.svg"]
        rows.append({"n": n, "graph": graph, "final_mean": float(traj.states[-1].mean()),
                     "final_spread": float(np.ptp(traj.states[-1]))})
    files.append(_table(out, "simulate.csv", rows))
    return files


def cmd_continuum(cfg, out, threads):
    dyn = _get(cfg, "dynamics", dict)
    T = float(_get(dyn, "T"))
    coupling = _coupling(dyn)
    rows = experiments.continuum_ladder(
        _ladder(cfg),
        _get(cfg, "seeds", int),
        _get(cfg, "seed", int),
        kernel=_kernel(_get(cfg, "kernel", str)),
        g=_initial_callable(cfg.get("initial", "identity")),
        coupling=coupling,
        T=T,
        dt=dyn.get("dt"),
        reference=int(cfg.get("reference", 1024)),
        save_every=int(dyn.get("save_every", 16)),
        threads=threads,
    )
    plot_rows(out / "continuum.svg", rows, "n", ["median"], logx=True, ylabel="sup_t L2 distance")
    return [_table(out, "continuum.csv", rows), "continuum.svg"]


def cmd_continuity(cfg, out, threads):
    dyn = _get(cfg, "dynamics", dict, {"T": 1.0})
    restarts, _ = _norm(cfg)
    rows = experiments.continuity_batches(
        n=int(cfg.get("n", 128)),
        pairs=int(cfg.get("pairs", 50)),
        batches=int(cfg.get("batches", 2)),
        seed=_get(cfg, "seed", int),
        coupling=_coupling(dyn),
        T=float(dyn.get("T", 1.0)),
        dt=dyn.get("dt"),
        restarts=restarts,
        threads=threads,
    )
    summary = []
    for b in sorted({r["batch"] for r in rows}):
        ratios = [r["ratio"] for r in rows if r["batch"] == b]
        summary.append({"batch": b, "max_ratio": max(ratios), "median_ratio": float(np.median(ratios))})
    return [_table(out, "continuity.csv", rows), _table(out, "continuity_summary.csv", summary)]


def cmd_ldp_mc(cfg, out, threads):
    ldp = _get(cfg, "ldp", dict)
    restarts, nseed = _norm(cfg)
    W = _kernel(_get(ldp, "W", str))
    V = _kernel(_get(ldp, "target", str))
    delta = float(_get(ldp, "delta"))
    replicas = _get(cfg, "replicas", int)
    seed = _get(cfg, "seed", int)

    def point(n):
        est = estimate_rare_event(W, V, n, delta, "heuristic", replicas, derive_seed(seed, n), restarts, nseed)
        Wn, Vn = project(W, n), project(V, n)
        row = {"n": n, "p_hat": est.p_hat, "std_err": est.std_err, "hits": est.hits,
               "rate_estimate": est.log_p_per_n2, "upsilon": upsilon(Vn, Wn).value}
        if n <= 3:
            exact = exact_event_probability(Wn, ball_predicate(Vn, delta, "heuristic", restarts, nseed))
            row["exact"] = exact
            row["within_3se"] = abs(est.p_hat - exact) <= max(3 * est.std_err, 1e-12)
        return row

    rows = experiments.parallel_map(point, _ladder(cfg), threads)
    plot_rows(out / "ldp_mc.svg", rows, "n", ["rate_estimate", "upsilon"], ylabel="-(1/n^2) log p")
    return [_table(out, "ldp_mc.csv", rows), "ldp_mc.svg"]


def cmd_rate(cfg, out, threads):
    ldp = _get(cfg, "ldp", dict)
    n = int(cfg.get("n", _get(cfg, "resolutions", list, [4])[-1]))
    Wn = project(_kernel(_get(ldp, "W", str)), n)
    Vn = project(_kernel(_get(ldp, "target", str)), n)
    rows = experiments.rate_table(Vn, Wn)
    if "law" in ldp:
        law = _law(ldp["law"])
        for b in ldp.get("levels", [law.mean]):
            rows.append({"functional": f"legendre@{b!r}", "value": legendre_rate(law, float(b)), "mode": "exact"})
    return [_table(out, "rate.csv", rows)]


def cmd_staircase(cfg, out, threads):
    seed = _get(cfg, "seed", int)
    count = int(cfg.get("count", 10))
    k = int(cfg.get("k", 32))
    files, rows = [], []
    couplings = []
    if "coupling" in cfg:
        _check_file(cfg["coupling"])
        couplings.append(read_coupling(cfg["coupling"]))
    for idx in range(count):
        couplings.append(random_coupling(k, np.random.default_rng(derive_seed(seed, idx))))
    for idx, nu in enumerate(couplings):
        theta = staircase_bijection(nu)
        if idx == 0:
            write_coupling(out / "coupling_0.csv", nu)
            write_bijection(out / "bijection_0.csv", theta)
            files += ["coupling_0.csv", "bijection_0.csv"]
        for r in staircase_convergence(nu):
            rows.append({"coupling": idx, "level": r.level, "k": r.k, "weak_distance": r.distance})
    first = [r for r in rows if r["coupling"] == 0]
    plot_rows(out / "staircase.svg", first, "k", ["weak_distance"], logx=True, logy=True)
    return files + [_table(out, "staircase.csv", rows), "staircase.svg"]


def cmd_dynrate(cfg, out, threads):
    dyn = _get(cfg, "dynamics", dict)
    ldp = _get(cfg, "ldp", dict)
    n = int(cfg.get("n", 16))
    r = int(ldp.get("resolution", 2))
    lambdas = ldp.get("lambdas", [10.0])
    if not lambdas or any(not isinstance(v, (int, float)) or v <= 0 for v in lambdas):
        raise ConfigError("'lambdas' must be a non-empty list of positive numbers")
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError("'lambdas' must be strictly increasing")
    rows, init = [], None
    for lam in lambdas:
        res = dynamical_rate_search(
            _kernel(_get(cfg, "kernel", str)),
            _initial(cfg.get("initial", "identity"), n),
            _coupling(dyn),
            ldp.get("observable", "terminal_mean"),
            float(_get(ldp, "target_level")),
            r,
            T=float(_get(dyn, "T")),
            dt=float(_get(dyn, "dt")),
            lam=float(lam),
            iterations=int(ldp.get("iterations", 20)),
            step=float(ldp.get("step", 0.5)),
            seed=_get(cfg, "seed", int),
            init=init,
        )
        init = res.best_V
        rows.append({"lambda": float(lam), "cost": res.cost, "upsilon": res.upsilon, "penalty": res.penalty,
                     "observable": res.observable, "converged": res.converged,
                     "best_V": " ".join(repr(float(v)) for v in res.best_V.values.ravel())})
    return [_table(out, "dynrate.csv", rows)]


COMMANDS = {
    "sample": cmd_sample,
    "norms": cmd_norms,
    "lln": cmd_lln,
    "sparse-lln": cmd_sparse_lln,
    "simulate": cmd_simulate,
    "continuum": cmd_continuum,
    "continuity": cmd_continuity,
    "ldp-mc": cmd_ldp_mc,
    "rate": cmd_rate,
    "staircase": cmd_staircase,
    "dynrate": cmd_dynrate,
}


def _version() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _collect_seeds(cfg) -> dict:
    seeds = {}

    def walk(obj, prefix):
        if isinstance(obj, dict):
            for k, v in obj.items():
                key = f"{prefix}.{k}" if prefix else k
                if (k == "seed" or k.endswith("_seed")) and isinstance(v, int):
                    seeds[key] = v
                walk(v, key)

    walk(cfg, "")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphon-ldp", description="Large-deviation experiments for W-random graphs.")
    p.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent ladder points")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    path = Path(args.config)
    if not path.exists():
        print(f"error: config file {path} not found", file=sys.stderr)
        return EXIT_MISSING
    try:
        cfg = json.loads(path.read_text())
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        if not isinstance(cfg.get("seed"), int) or isinstance(cfg.get("seed"), bool):
            raise ConfigError("an explicit integer 'seed' is required")
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
    except (json.JSONDecodeError, ConfigError) as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or os.environ.get(OUT_ENV) or cfg.get("output", "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        files = COMMANDS[args.command](cfg, out, max(1, args.threads))
    except ConfigError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingFile as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (KeyError, TypeError) as exc:
        print(f"error: malformed config: {exc!r}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = {
        "command": args.command,
        "version": _version(),
        "config": cfg,
        "seeds": _collect_seeds(cfg),
        "outputs": files,
    }
    to_json(manifest, out / "manifest.json")
    print(f"{args.command}: wrote {len(files)} files to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

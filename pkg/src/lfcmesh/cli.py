"""Command-line entry point: ``lfcmesh <command> [options]``.

Commands
    simulate-prior  independent prior realisations
    synth           synthetic truth, elastic field and seismic cube
    invert          posterior sampling for a seismic cube
    analyze         posterior summaries from a sample directory
    tune            acceptance rate per truncation lag nu

Exit status: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .chain import ChainSizeError
from .config import ConfigError, RunConfig, load_config
from .forward import ForwardConfigError, ForwardNumericError, read_cube, synthesize_data, write_cube
from .lattice import LatticeError, LfcField, read_field, write_field
from .likelihood import StateAuditError, UnsupportedModeError, build
from .mesh_prior import PriorFileError
from .sampler import run, tune_nu, write_run

log = logging.getLogger("lfcmesh")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
_USAGE_ERRORS = (ConfigError, LatticeError, PriorFileError, ForwardConfigError,
                 analysis.EmptyStreamError, UnsupportedModeError, ChainSizeError, FileNotFoundError)
_NUMERIC_ERRORS = (ForwardNumericError, np.linalg.LinAlgError, StateAuditError, ArithmeticError)


class UsageError(Exception):
    pass


def _prepare_out(cfg: RunConfig, out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    cfg.write(path / "effective_config.txt")
    return path


def _write_manifest(path: Path, entries: dict) -> None:
    text = "".join(f"{k}={v}\n" for k, v in entries.items())
    (path / "manifest.txt").write_text(text, encoding="utf-8", newline="\n")


def _write_elastic(path: Path, mfield: np.ndarray) -> None:
    m, n, _ = mfield.shape
    lines = [f"{m} {n}"] + [f"{a!r} {b!r}" for a, b in mfield.reshape(m * n, 2).tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _load_cube(cfg: RunConfig, path):
    if path is None:
        raise UsageError("--cube is required")
    cube = read_cube(path)
    if cube.dims != cfg.dims:
        raise UsageError(f"cube is {cube.dims.m}x{cube.dims.n} but config says "
                         f"{cfg.dims.m}x{cfg.dims.n}")
    return cube


# --- commands ----------------------------------------------------------------


def cmd_simulate_prior(cfg: RunConfig, out) -> list[Path]:
    path = _prepare_out(cfg, out)
    prior = cfg.prior()
    rng = np.random.default_rng(cfg.int("seed"))
    written = []
    for k in range(1, cfg.int("count") + 1):
        f = path / f"prior_{k:03d}.txt"
        write_field(f, prior.simulate(cfg.dims, rng))
        written.append(f)
    _write_manifest(path, {"command": "simulate-prior", "prior": prior.name,
                           "seed": cfg.int("seed"), "count": cfg.int("count")})
    return written


def cmd_synth(cfg: RunConfig, out) -> dict:
    path = _prepare_out(cfg, out)
    prior = cfg.prior()
    fm = cfg.forward_model()
    truth = prior.simulate(cfg.dims, np.random.default_rng(cfg.int("truth_seed")))
    cube, mfield = synthesize_data(fm, truth, cfg.int("data_seed"))
    write_field(path / "truth.txt", truth)
    _write_elastic(path / "elastic.txt", mfield)
    write_cube(path / "cube.txt", cube)
    _write_manifest(path, {"command": "synth", "prior": prior.name,
                           "truth_seed": cfg.int("truth_seed"), "data_seed": cfg.int("data_seed")})
    return {"truth": truth, "cube": cube, "elastic": mfield}


def _chain_job(values: dict, cube_path: str, out: str, chain: int, chains: int, nu: int):
    cfg = RunConfig(values)
    cube = read_cube(cube_path)
    engine = build(cfg.forward_model(), cfg.dims)
    seed = cfg.int("seed")
    rng = (np.random.default_rng(seed) if chains == 1
           else np.random.default_rng(np.random.SeedSequence(seed).spawn(chains)[chain]))
    result = run(cfg.sampler(nu=nu), cfg.prior(), engine, cube.column_matrix(), dims=cfg.dims, rng=rng)
    write_run(out, result)
    return chain, result.mean_acceptance, result.geweke


def _tune(cfg: RunConfig, cube, path: Path):
    engine = build(cfg.forward_model(), cfg.dims)
    if getattr(engine, "mode", "") != "constant":
        raise UnsupportedModeError("sampling needs sigma0 == sigma1 (class-independent covariance)")
    best, table = tune_nu(cfg.prior(), engine, cube.column_matrix(), cfg.dims,
                          nu_grid=cfg.nu_grid(), sweeps=cfg.int("tune_sweeps"),
                          seed=cfg.int("seed"), target=cfg.float("tune_target"))
    with (path / "tune.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nu", "mean_acceptance"])
        for nu, acc in table:
            w.writerow([nu, f"{acc:.6f}"])
    print("nu  mean_acceptance")
    for nu, acc in table:
        print(f"{nu:<3d} {acc:.4f}")
    print(f"chosen nu = {best}")
    return best, table


def cmd_tune(cfg: RunConfig, cube_path, out):
    cube = _load_cube(cfg, cube_path)
    path = _prepare_out(cfg, out)
    return _tune(cfg, cube, path)


def cmd_invert(cfg: RunConfig, cube_path, out, tune: bool = False) -> list:
    cube = _load_cube(cfg, cube_path)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    fm = cfg.forward_model()
    if not fm.elastic.constant_covariance:
        raise UnsupportedModeError("sampling needs sigma0 == sigma1 (class-independent covariance)")
    cfg.sampler()  # validate before any work
    if tune:
        best, _ = _tune(cfg, cube, path)
        cfg = RunConfig({**cfg.values, "nu": str(best)})
    _prepare_out(cfg, path)
    chains = cfg.int("chains")
    if chains < 1:
        raise ConfigError("chains must be >= 1")
    nu = cfg.int("nu")
    dirs = [path if chains == 1 else path / f"chain_{c + 1}" for c in range(chains)]
    jobs = [(cfg.values, str(cube_path), str(d), c, chains, nu) for c, d in enumerate(dirs)]
    if chains == 1:
        results = [_chain_job(*jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=chains) as ex:
            results = list(ex.map(_chain_job, *zip(*jobs)))
    manifest = {"command": "invert", "prior": cfg.get("prior"), "seed": cfg.int("seed"),
                "chains": chains, "nu": nu}
    for c, acc, z in results:
        log.info("chain %d: mean acceptance %.3f, Geweke z %.2f", c + 1, acc, z)
        manifest[f"chain_{c + 1}_seed"] = (f"{cfg.int('seed')}" if chains == 1
                                           else f"SeedSequence({cfg.int('seed')}).spawn({chains})[{c}]")
    _write_manifest(path, manifest)
    return results


def collect_samples(directory) -> list[LfcField]:
    """Sample files from ``directory`` and from any ``chain_*`` subdirectories, in order."""
    root = Path(directory)
    if not root.is_dir():
        raise UsageError(f"sample directory {root} not found")
    files = sorted(root.glob("sample_*.txt"))
    for sub in sorted(p for p in root.glob("chain_*") if p.is_dir()):
        files.extend(sorted(sub.glob("sample_*.txt")))
    if not files:
        raise analysis.EmptyStreamError(f"no sample_*.txt files under {root}")
    return [read_field(f) for f in files]


def cmd_analyze(cfg: RunConfig, samples_dir, out, truth_path=None) -> dict:
    samples = collect_samples(samples_dir)
    path = _prepare_out(cfg, out)
    truth = read_field(truth_path) if truth_path else None
    seeds = cfg.contact_seeds()
    top_k = cfg.int("top_k")
    if top_k > 0:
        suggested = analysis.top_marginal_nodes(analysis.marginal_map(samples), top_k)
        (path / "suggested_seeds.txt").write_text(
            ";".join(f"{i},{j}" for i, j in suggested) + "\n", encoding="utf-8", newline="\n")
        print("suggested contact_seeds=" + ";".join(f"{i},{j}" for i, j in suggested))
        if not seeds:
            seeds = suggested
    return analysis.write_analysis(
        path, samples, trace_columns=cfg.trace_columns(), contact_seeds=seeds,
        draws_per_sample=cfg.connectivity_draws(), seed=cfg.int("seed"), truth=truth,
        connectivity=cfg.int("connectivity"),
    )


# --- argument handling -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfcmesh", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", required=True, help="output directory")

    common(sub.add_parser("simulate-prior", help="write prior realisations"))
    common(sub.add_parser("synth", help="generate a synthetic experiment"))
    p = sub.add_parser("invert", help="sample the posterior for a seismic cube")
    common(p)
    p.add_argument("--cube", required=True)
    p.add_argument("--tune", action="store_true", help="pick nu by short preliminary runs first")
    p = sub.add_parser("analyze", help="summarise a sample directory")
    common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--truth", help="true field, added to the trace files")
    p = sub.add_parser("tune", help="acceptance table over nu_grid")
    common(p)
    p.add_argument("--cube", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "simulate-prior":
            cmd_simulate_prior(cfg, args.out)
        elif args.command == "synth":
            cmd_synth(cfg, args.out)
        elif args.command == "invert":
            cmd_invert(cfg, args.cube, args.out, tune=args.tune)
        elif args.command == "analyze":
            cmd_analyze(cfg, args.samples, args.out, args.truth)
        elif args.command == "tune":
            cmd_tune(cfg, args.cube, args.out)
    except (UsageError, *_USAGE_ERRORS) as exc:
        print(f"lfcmesh: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"lfcmesh: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

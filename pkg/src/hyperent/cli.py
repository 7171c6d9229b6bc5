"""Command-line front end.

Subcommands: ``make-state``, ``simulate``, ``reconstruct``, ``metrics``,
``bell`` and ``settings-gen``. Every command validates and computes in
memory first, then writes its outputs atomically together with a
``<command>.manifest.json`` recording the arguments, seed and config.

Exit codes: 0 success, 2 invalid input, 3 I/O error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import io as hio
from .analyzers import SPATIAL_KETS, STANDARD_KETS
from .bell import (
    ChshSettings,
    chsh_from_counts,
    chsh_from_state,
    chsh_setting_pairs,
    optimal_chsh,
    subspace_project,
)
from .metrics import report, visibility
from .qcore import DensityOperator, set_tolerances
from .source import SourceConfig, build_hyper_state, catalog, make_named_state, simulate_counts
from .tomography import TomographyProblem, canonical_set, linear_inversion, mle_reconstruct, product_set

log = logging.getLogger("hyperent")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class _Outputs:
    """Collects output files so nothing is written until every step succeeded."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def commit(self, manifest: dict) -> None:
        for name, text in self.files.items():
            hio.write_atomic(self.out_dir / name, text)
        manifest["outputs"] = sorted(self.files)
        hio.write_atomic(self.out_dir / f"{manifest['command']}.manifest.json", hio.dumps(manifest))


def _grid_csv(rho: DensityOperator) -> str:
    lines = ["row,col,re,im"]
    m = rho.matrix
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            lines.append(f"{i},{j},{m[i, j].real!r},{m[i, j].imag!r}")
    return "\n".join(lines) + "\n"


def _source_config(args) -> SourceConfig:
    cfg, tol = (hio.load_config(args.config) if args.config else (SourceConfig(), {}))
    if tol:
        set_tolerances(**tol)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


# ---------------------------------------------------------------- commands

def cmd_make_state(args, out: _Outputs) -> dict:
    if args.name and args.config:
        raise ValueError("give either --name or --config, not both")
    if args.name:
        rho = make_named_state(args.name)
    elif args.config:
        rho = build_hyper_state(_source_config(args))
    else:
        raise ValueError("make-state needs --name or --config")
    out.add(args.output, hio.dumps(hio.state_to_dict(rho)))
    if args.grid:
        out.add(Path(args.output).stem + "_grid.csv", _grid_csv(rho))
    print(f"dimension {rho.dim}  purity {rho.purity:.12g}")
    return {"inputs": [args.config] if args.config else []}


def cmd_simulate(args, out: _Outputs) -> dict:
    rho = hio.load_state(args.state)
    pairs = hio.load_settings(args.settings)
    cfg = _source_config(args)
    if args.duration <= 0:
        raise ValueError("--duration must be positive")
    records = simulate_counts(rho, pairs, cfg, args.duration, threads=args.threads)
    out.add(args.output, hio.counts_to_csv(records))
    print(f"{len(records)} records, {sum(r.counts for r in records)} total counts")
    return {"inputs": [args.state, args.settings] + ([args.config] if args.config else []), "config": cfg.to_dict()}


def _problem(args) -> TomographyProblem:
    if args.bundle:
        pairs, records, opts = hio.load_bundle(args.bundle)
    else:
        if not (args.counts and args.settings):
            raise ValueError("reconstruct needs --bundle or both --counts and --settings")
        pairs = hio.load_settings(args.settings)
        records = hio.load_counts(args.counts)
        opts = json.loads(Path(args.options).read_text()) if args.options else {}
    method, options, layout = hio.options_from_dict(opts)
    if args.method:
        method = args.method
    layout = layout or hio.infer_layout(pairs)
    ps = hio.projector_set_from_settings(pairs, layout)
    return TomographyProblem(ps, tuple(records), method, options, layout)


def cmd_reconstruct(args, out: _Outputs) -> dict:
    problem = _problem(args)
    if problem.method == "linear":
        res = linear_inversion(problem)
        rho, diag = res.rho, {"method": "linear", "intensity": res.intensity, "physical": res.physical}
    else:
        res = mle_reconstruct(problem)
        rho, diag = res.rho, {"method": "mle", **res.diagnostics()}
        if not res.converged:
            log.warning("MLE did not converge in %d iterations; returning the best iterate", res.iterations)
    out.add("rho.json", hio.dumps(hio.state_to_dict(rho)))
    out.add("diagnostics.json", hio.dumps(diag))
    if args.grid:
        out.add("rho_grid.csv", _grid_csv(rho))
    print(hio.dumps(diag), end="")
    return {"inputs": [p for p in (args.bundle, args.counts, args.settings, args.options) if p]}


def cmd_metrics(args, out: _Outputs) -> dict:
    rho = hio.load_state(args.rho)
    target = hio.load_state(args.target) if args.target else None
    if not isinstance(rho, DensityOperator) or (target is not None and not isinstance(target, DensityOperator)):
        rho = rho.density() if not isinstance(rho, DensityOperator) else rho
        target = target.density() if target is not None and not isinstance(target, DensityOperator) else target
    rep = report(rho, target).to_dict()
    out.add(args.output, hio.dumps(rep))
    print(hio.dumps(rep), end="")
    return {"inputs": [p for p in (args.rho, args.target) if p]}


_LOCAL_NAMES = {
    "poln": {k: v for k, v in STANDARD_KETS.items()},
    "spatial": dict(SPATIAL_KETS),
    "etime": {"s": np.array([1, 0], dtype=complex), "f": np.array([0, 1], dtype=complex)},
}


def _parse_local(spec: str, rho: DensityOperator) -> tuple[int, str]:
    party, _, dof = spec.partition(".")
    if party not in ("A", "B") or not dof:
        raise ValueError(f"subsystem must look like A.spatial, got {spec!r}")
    return rho.layout.index_of(party, dof), dof


def _named_ket(name: str, dof: str, dim: int) -> np.ndarray:
    table = _LOCAL_NAMES[dof]
    if name not in table:
        raise ValueError(f"unknown {dof} ket {name!r}; known: {', '.join(table)}")
    v = table[name]
    if dof == "spatial" and dim == 2:
        if v[1] != 0:
            raise ValueError("the Gaussian mode is absent from the truncated spatial space")
        v = v[[0, 2]]
    return v


def _project(rho: DensityOperator, args) -> DensityOperator:
    project, restrict = {}, {}
    for item in args.project or []:
        key, _, name = item.partition("=")
        idx, dof = _parse_local(key, rho)
        project[idx] = _named_ket(name, dof, rho.layout.dims[idx])
    for item in args.restrict or []:
        key, _, names = item.partition("=")
        idx, dof = _parse_local(key, rho)
        cols = [_named_ket(n, dof, rho.layout.dims[idx]) for n in names.split(",")]
        restrict[idx] = np.column_stack(cols)
    trace = []
    if args.dof:
        for i, d in enumerate(rho.layout.dofs or ()):
            if d != args.dof and i not in project and i not in restrict:
                trace.append(i)
    if not (project or restrict or trace):
        return rho
    return subspace_project(rho, project, restrict, trace)


def _fringe(rho: DensityOperator, pair_rate: float, n: int = 16) -> list[tuple[float, float]]:
    b = np.array([1, 1], dtype=complex) / np.sqrt(2)
    out = []
    for ph in np.linspace(0, 2 * np.pi, n, endpoint=False):
        a = np.array([1, np.exp(1j * ph)]) / np.sqrt(2)
        k = np.kron(a, b)
        out.append((float(ph), float(pair_rate * np.real(np.vdot(k, rho.matrix @ k)))))
    return out


def cmd_bell(args, out: _Outputs) -> dict:
    inputs = []
    if bool(args.state) == bool(args.counts):
        raise ValueError("bell needs exactly one of --state or --counts")
    if args.counts:
        inputs.append(args.counts)
        result = chsh_from_counts(hio.load_counts(args.counts))
        doc = result.to_dict()
    else:
        inputs.append(args.state)
        rho = hio.load_state(args.state)
        if not isinstance(rho, DensityOperator):
            rho = rho.density()
        rho = _project(rho, args)
        if rho.dim != 4:
            raise ValueError(f"CHSH needs a 2x2 subspace, got dimension {rho.dim}; use --dof/--project/--restrict")
        if args.optimize:
            opt = optimal_chsh(rho)
            result = chsh_from_state(rho, opt.settings)
            doc = result.to_dict()
            doc["S_max"] = opt.S_max
        elif args.chsh_settings:
            inputs.append(args.chsh_settings)
            settings = ChshSettings.from_dict(json.loads(Path(args.chsh_settings).read_text()))
            doc = chsh_from_state(rho, settings).to_dict()
        else:
            raise ValueError("state mode needs --optimize or --chsh-settings")
        if args.fringe:
            cfg = _source_config(args)
            fr = _fringe(rho, cfg.pair_rate)
            out.add("fringe.csv", hio.fringe_to_csv(fr))
            doc["visibility"] = visibility(fr)
    out.add(args.output, hio.dumps(doc))
    print(f"S = {doc['S']:.6f}" + (f"  sigma = {doc['sigma']:.6f}" if doc.get("sigma") is not None else ""))
    return {"inputs": inputs}


def cmd_settings_gen(args, out: _Outputs) -> dict:
    if args.family == "tomo":
        pairs = canonical_set(args.dim).settings()
    elif args.family == "product":
        dofs = tuple(args.dofs.split(","))
        ps = product_set(dofs, spatial_dim=args.spatial_dim)
        pairs = ps.settings()
    elif args.family == "chsh":
        if args.state:
            rho = hio.load_state(args.state)
            settings = optimal_chsh(rho).settings
        else:
            settings = ChshSettings.canonical()
        pairs = chsh_setting_pairs(settings, args.chsh_dof)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(args.family)
    out.add(args.output, hio.dumps(hio.settings_to_list(pairs)))
    print(f"{len(pairs)} setting pairs")
    return {"inputs": [args.state] if getattr(args, "state", None) else []}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".", help="directory for outputs and the manifest")
    common.add_argument("--config", default=None, help="source config JSON")

    p = argparse.ArgumentParser(prog="hyperent", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-state", parents=[common], help="write a named or configured state")
    s.add_argument("--name", help="catalog name: " + ", ".join(sorted(catalog())))
    s.add_argument("--output", default="state.json")
    s.add_argument("--grid", action="store_true", help="also write a real/imag grid CSV")
    s.set_defaults(func=cmd_make_state)

    s = sub.add_parser("simulate", parents=[common], help="Poisson coincidence counts")
    s.add_argument("--state", required=True)
    s.add_argument("--settings", required=True)
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--output", default="counts.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reconstruct", parents=[common], help="tomographic reconstruction")
    s.add_argument("--bundle", help="directory with settings.json, counts.csv, options.json")
    s.add_argument("--counts")
    s.add_argument("--settings")
    s.add_argument("--options")
    s.add_argument("--method", choices=["mle", "linear"])
    s.add_argument("--grid", action="store_true")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("metrics", parents=[common], help="entanglement and mixedness metrics")
    s.add_argument("--rho", required=True)
    s.add_argument("--target")
    s.add_argument("--output", default="metrics.json")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("bell", parents=[common], help="CHSH Bell parameter")
    s.add_argument("--state")
    s.add_argument("--counts")
    s.add_argument("--optimize", action="store_true")
    s.add_argument("--chsh-settings", help="JSON with kets a, a_prime, b, b_prime")
    s.add_argument("--dof", choices=["poln", "spatial", "etime"], help="trace every other DOF")
    s.add_argument("--project", action="append", help="e.g. A.spatial=g (repeatable)")
    s.add_argument("--restrict", action="append", help="e.g. A.spatial=g,r (repeatable)")
    s.add_argument("--fringe", action="store_true", help="write fringe.csv for plotting")
    s.add_argument("--output", default="bell.json")
    s.set_defaults(func=cmd_bell)

    s = sub.add_parser("settings-gen", parents=[common], help="generate settings files")
    s.add_argument("--family", choices=["tomo", "product", "chsh"], required=True)
    s.add_argument("--dim", type=int, default=2, help="local dimension for --family tomo")
    s.add_argument("--dofs", default="poln,spatial", help="DOFs for --family product")
    s.add_argument("--spatial-dim", type=int, default=3)
    s.add_argument("--chsh-dof", default="poln", choices=["poln", "spatial", "etime"])
    s.add_argument("--state", help="optimize CHSH settings for this 2-qubit state")
    s.add_argument("--output", default="settings.json")
    s.set_defaults(func=cmd_settings_gen)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    out = _Outputs(Path(args.out_dir))
    t0 = time.time()
    try:
        info = args.func(args, out)
        manifest = {
            "command": args.command,
            "argv": argv,
            "seed": args.seed,
            "config": info.get("config"),
            "inputs": info.get("inputs", []),
            "version": __version__,
            "wall_time": time.time() - t0,
        }
        out.commit(manifest)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError, IndexError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

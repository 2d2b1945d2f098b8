"""Batch command-line front end.

Subcommands: criterion, nse, ode, alpha-sweep, hausdorff, verify.  Every
output file carries a machine-readable provenance header (config hash, tool
version, command, seed, timestamp); ``verify`` re-derives the hash and
checks it across an output directory.  Identical config and seed give
byte-identical outputs apart from the timestamp field.

Exit codes: 0 success (an inadmissible verdict is data, not failure),
1 numerical failure (blow-up, overflow), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .criterion import (
    LogDecay,
    LogGrowth,
    NormInfiniteError,
    admissibility,
    synth_radial_profile,
)
from .fieldio import read_field, sidecar_path, write_field, write_mask
from .hausdorff import box_counting_dim, dim_bound_scan, lambda_threshold
from .limit_ode import OdeParams, integrate, z_star
from .nestedlog import DivergentDeltaError, alpha, phi_threshold
from .nse_solver import (
    BlowUpError,
    CflDt,
    FixedDt,
    SolverConfig,
    SolverState,
    TRAJECTORY_COLUMNS,
    random_divergence_free,
    run,
    shear_mode,
    taylor_green,
)
from .spectral import Grid3, VectorField, derivative, leray_project, to_physical

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

_KNOWN_OUTPUTS = ("trajectory.csv", "ode_trajectory.csv", "alpha_sweep.csv",
                  "hausdorff_scan.csv", "verdict.json", "zstar.json",
                  "blowup.json")


# -- provenance and deterministic serialization ------------------------------

def _provenance(cfg: RunConfig, command: str, seed: int, threads: int) -> dict:
    return {
        "tool": "nselog",
        "version": __version__,
        "command": command,
        "config_sha256": cfg.sha256,
        "seed": seed,
        "threads": threads,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence],
              provenance: dict) -> None:
    """Comma-separated, '.' decimal, LF endings, '#'-prefixed provenance."""
    lines = [f"# {key}: {provenance[key]}" for key in sorted(provenance)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    newline="\n")


def read_csv_provenance(path: Path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].partition(": ")
            out[key] = value.strip()
    return out


# -- initial data construction ------------------------------------------------

def _build_field(kind_table: dict, grid: Grid3, seed: int) -> SolverState:
    kind = kind_table["kind"]
    if kind == "taylor_green":
        return taylor_green(float(kind_table["amplitude"]), grid)
    if kind == "shear":
        return shear_mode(float(kind_table["amplitude"]), int(kind_table["k"]), grid)
    if kind == "random":
        return random_divergence_free(grid, float(kind_table["kmax"]),
                                      float(kind_table["amplitude"]), seed)
    raise ConfigError(f"unknown field kind {kind!r}")


def _load_source_field(table: dict, cfg: RunConfig, seed: int) -> VectorField:
    if table["kind"] == "field_file":
        path = Path(table["path"])
        if not path.is_absolute():
            path = cfg.path.parent / path
        if not path.exists():
            raise ConfigError(f"field file not found: {path}")
        field, _ = read_field(path)
        if not isinstance(field, VectorField):
            raise ConfigError(f"{path}: expected a 3-component field")
        return field
    if table["kind"] == "radial":
        return _synth_radial_vector(table, cfg.grid())
    return _build_field(table, cfg.grid(), seed).u


def _synth_radial_vector(table: dict, grid: Grid3) -> VectorField:
    """Divergence-free data from a radial profile: three identical copies,
    Leray-projected (the projector is a bounded multiplier, so the nested-log
    envelope of the spectrum survives)."""
    profile_kind = table["profile"]
    exponent = float(table["exponent"])
    if profile_kind == "log_decay":
        kind = LogDecay(exponent)
    elif profile_kind == "log_growth":
        kind = LogGrowth(exponent)
    else:
        raise ConfigError(f"criterion.source: unknown profile {profile_kind!r} "
                          "(expected log_decay or log_growth)")
    scalar = synth_radial_profile(kind, float(table["p"]), float(table["s"]), grid)
    return leray_project(VectorField(scalar, scalar, scalar))


# -- subcommands ---------------------------------------------------------------

def cmd_criterion(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    table = cfg.require("criterion")
    q = float(table["q"])
    C0 = float(table["C0"])
    tol = float(table.get("tol", 1e-8))
    deltas = cfg.deltas()
    provenance = _provenance(cfg, "criterion", seed, threads)
    u0 = _load_source_field(table["source"], cfg, seed)
    payload = {"provenance": provenance, "q": q, "C0": C0,
               "deltas": deltas.as_record()}
    sweep = table.get("amplitude_sweep")
    if sweep:
        records = []
        crossing = None
        for lam in sweep:
            scaled = VectorField(
                *[type(c)(c.grid, c.coeffs * float(lam)) for c in u0.components],
                divergence_free=u0.divergence_free)
            verdict = admissibility(scaled, q, deltas, C0, tol)
            records.append({"scale": float(lam), **verdict.as_dict()})
            if crossing is None and not verdict.admissible:
                crossing = float(lam)
        payload["sweep"] = records
        payload["first_inadmissible_scale"] = crossing
    else:
        payload["verdict"] = admissibility(u0, q, deltas, C0, tol).as_dict()
    write_json(out / "verdict.json", payload)
    return EXIT_OK


def cmd_nse(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    table = cfg.require("solver")
    grid = cfg.grid()
    policy = FixedDt(float(table["dt"])) if "dt" in table else CflDt(float(table["cfl"]))
    try:
        solver_cfg = SolverConfig(
            nu=float(table["nu"]),
            t_end=float(table["t_end"]),
            dt_policy=policy,
            deltas=cfg.deltas(),
            dealias=bool(table.get("dealias", True)),
            monitor_stride=int(table.get("monitor_stride", 1)),
            sigma=float(table.get("sigma", 0.1)),
            q=float(table.get("q", 4.0)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[solver]: {exc}") from None
    initial = _build_field(table["initial"], grid, seed)
    provenance = _provenance(cfg, "nse", seed, threads)
    provenance["identity_residual_stencil"] = (
        "central-4 interior / central-2 or one-sided-2 at window edges")
    try:
        rows, final = run(solver_cfg, initial)
    except BlowUpError as exc:
        write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS,
                  [r.as_tuple() for r in exc.rows], provenance)
        write_json(out / "blowup.json", {
            "provenance": provenance,
            "message": str(exc),
            "last_time": exc.last_state.t if exc.last_state else None,
        })
        print(f"nse: blow-up reported: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS,
              [r.as_tuple() for r in rows], provenance)
    write_field(out / "final_field.nsef", final.u, provenance=provenance)
    return EXIT_OK


def cmd_ode(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    table = cfg.require("ode")
    deltas = cfg.deltas()
    try:
        params = OdeParams(C=float(table["C"]), K=float(table["K"]),
                           deltas=deltas, Z0=float(table["Z0"]),
                           constant_rhs_test_hook=bool(
                               table.get("constant_rhs_test_hook", False)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[ode]: {exc}") from None
    t_end = float(table["t_end"])
    tol = float(table.get("tol", 1e-8))
    provenance = _provenance(cfg, "ode", seed, threads)
    if params.constant_rhs_test_hook:
        provenance["non_physical_test_hook"] = "constant-rhs mode"
    traj = integrate(params, t_end, tol)
    rows = list(zip(traj.t, traj.z, traj.rhs, traj.dt))
    write_csv(out / "ode_trajectory.csv", ("t", "Z", "rhs_value", "step_size"),
              rows, provenance)
    if "zstar_eps" in table:
        res = z_star(params.C, params.K, deltas, float(table["zstar_eps"]),
                     float(table.get("zstar_cap", 1e9)),
                     constant_rhs_test_hook=params.constant_rhs_test_hook)
        write_json(out / "zstar.json", {
            "provenance": provenance,
            "epsilon": res.epsilon,
            "search_cap": res.search_cap,
            "found": res.found,
            "z_star": res.z,
            "grid_left_neighbor": res.grid_left_neighbor,
        })
    if traj.blowup is not None:
        write_json(out / "blowup.json", {
            "provenance": provenance,
            "message": "finite-time blow-up of the numerical trajectory",
            "escape_bracket": list(traj.blowup),
        })
        print(f"ode: blow-up bracketed in {traj.blowup}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_alpha_sweep(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    table = cfg.require("alpha_sweep")
    try:
        n_max = int(table["n_max"])
        s_values = [float(s) for s in table["s_values"]]
        q = float(table["q"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[alpha_sweep]: {exc}") from None
    deltas = cfg.deltas()
    consts = cfg.constants()
    columns = ["n", "alpha"] + [f"phi_s_{_fmt(s)}" for s in s_values]
    rows = []
    for n in range(n_max + 1):
        a = alpha(deltas, n, consts)
        row = [n, a] + [phi_threshold(s, q, deltas, n, consts) for s in s_values]
        rows.append(row)
    write_csv(out / "alpha_sweep.csv", columns, rows,
              _provenance(cfg, "alpha-sweep", seed, threads))
    return EXIT_OK


def cmd_hausdorff(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    table = cfg.require("hausdorff")
    deltas = cfg.deltas()
    spec = table["eps_grid"]
    eps_grid = np.geomspace(float(spec["start"]), float(spec["stop"]),
                            int(spec["count"]))
    tol = float(table.get("tol", 1e-10))
    term_cap = int(table["term_cap"]) if "term_cap" in table else None
    rows = dim_bound_scan(deltas, eps_grid, tol, term_cap)
    provenance = _provenance(cfg, "hausdorff", seed, threads)

    box_dims = {}
    if "field" in table:
        path = Path(table["field"])
        if not path.is_absolute():
            path = cfg.path.parent / path
        if not path.exists():
            raise ConfigError(f"field file not found: {path}")
        field, _ = read_field(path)
        if not isinstance(field, VectorField):
            raise ConfigError(f"{path}: expected a 3-component velocity field")
        grid = field.grid
        gradmag = np.zeros((grid.n,) * 3)
        for comp in field.components:
            for axis in range(3):
                gradmag += to_physical(derivative(comp, axis)) ** 2
        gradmag = np.sqrt(gradmag)
        scales = [int(s) for s in table.get("scales", (1, 2, 4, 8))]
        for i, row in enumerate(rows):
            # the scan epsilon doubles as the absolute set-measure budget
            exc_set = lambda_threshold(gradmag, row.epsilon, grid)
            result = box_counting_dim(exc_set.mask, scales)
            box_dims[row.epsilon] = "" if result.empty else result.dimension
            if table.get("write_masks", False):
                write_mask(out / f"mask_{i:03d}.nsef", exc_set.mask, grid,
                           provenance=provenance)

    columns = ("epsilon", "bound_unclamped", "bound", "box_dim_if_computed")
    csv_rows = [(r.epsilon, r.bound_unclamped, r.bound,
                 box_dims.get(r.epsilon, "")) for r in rows]
    write_csv(out / "hausdorff_scan.csv", columns, csv_rows, provenance)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    """Re-derive the config hash and check it against every output file."""
    expected = cfg.sha256
    checked = 0
    failures = []
    for name in _KNOWN_OUTPUTS:
        path = out / name
        if not path.exists():
            continue
        if name.endswith(".csv"):
            found = read_csv_provenance(path).get("config_sha256")
        else:
            found = json.loads(path.read_text()).get("provenance", {}).get(
                "config_sha256")
        checked += 1
        if found != expected:
            failures.append((name, found))
    for container in sorted(out.glob("*.nsef")):
        sidecar = sidecar_path(container)
        if not sidecar.exists():
            failures.append((container.name, "missing sidecar"))
            continue
        meta = json.loads(sidecar.read_text())
        found = meta.get("provenance", {}).get("config_sha256")
        checked += 1
        if found != expected:
            failures.append((container.name, found))
    if checked == 0:
        print(f"verify: no known outputs found in {out}", file=sys.stderr)
        return EXIT_USAGE
    for name, found in failures:
        print(f"verify: {name}: config hash {found!r} != {expected!r}",
              file=sys.stderr)
    if failures:
        return EXIT_NUMERICAL
    print(f"verify: {checked} file(s) match config {expected[:12]}")
    return EXIT_OK


_COMMANDS = {
    "criterion": cmd_criterion,
    "nse": cmd_nse,
    "ode": cmd_ode,
    "alpha-sweep": cmd_alpha_sweep,
    "hausdorff": cmd_hausdorff,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nselog",
        description="Nested-logarithm regularity criteria on spectral "
                    "Navier-Stokes trajectories")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None,
                       help="output directory (default from [run].out or cwd)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (recorded; transforms run "
                            "sequentially for determinism)")
        p.add_argument("--seed", type=int, default=None,
                       help="override [run].seed for randomized fields")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        out = Path(args.out or cfg.default_out or ".")
        out.mkdir(parents=True, exist_ok=True)
        seed = cfg.seed if args.seed is None else args.seed
        return _COMMANDS[args.command](cfg, out, seed, args.threads)
    except ConfigError as exc:
        print(f"{args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergentDeltaError, NormInfiniteError, OverflowError) as exc:
        print(f"{args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

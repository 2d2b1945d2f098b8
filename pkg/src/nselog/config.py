"""Run-configuration loading and schema validation.

One TOML document drives every subcommand, with one section per concern:
``[run]``, ``[grid]``, ``[deltas]``, ``[constants]``, ``[solver]``, ``[ode]``,
``[criterion]``, ``[alpha_sweep]``, ``[hausdorff]``.  Validation is strict:
unknown keys anywhere are rejected before any computation starts.
"""

from __future__ import annotations

import hashlib
import math
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .nestedlog import CriticalConstants, DeltaSequence, delta_sequence_from_record
from .spectral import Grid3

__all__ = ["ConfigError", "RunConfig", "load_config", "config_sha256"]


class ConfigError(ValueError):
    """Schema violation in the run configuration (exit code 2 territory)."""


_SECTIONS = ("run", "grid", "deltas", "constants", "solver", "ode",
             "criterion", "alpha_sweep", "hausdorff")

_KEYS = {
    "run": {"seed", "out"},
    "grid": {"n", "length"},
    "constants": {"c", "C_q"},
    "solver": {"nu", "t_end", "dt", "cfl", "dealias", "monitor_stride",
               "sigma", "q", "initial"},
    "ode": {"C", "K", "Z0", "t_end", "tol", "constant_rhs_test_hook",
            "zstar_eps", "zstar_cap"},
    "criterion": {"q", "C0", "tol", "source", "amplitude_sweep"},
    "alpha_sweep": {"n_max", "s_values", "q"},
    "hausdorff": {"eps_grid", "tol", "term_cap", "field", "scales",
                  "write_masks"},
}

_INITIAL_KINDS = {
    "taylor_green": {"amplitude"},
    "shear": {"amplitude", "k"},
    "random": {"amplitude", "kmax"},
}

_SOURCE_KINDS = dict(_INITIAL_KINDS,
                     field_file={"path"},
                     radial={"profile", "exponent", "p", "s"})


def _check_keys(section: str, table: dict, allowed: set) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")


class RunConfig:
    """Validated configuration document plus the source-file hash."""

    def __init__(self, doc: dict, sha256: str, path: Path):
        self.doc = doc
        self.sha256 = sha256
        self.path = path
        self.seed = int(doc.get("run", {}).get("seed", 0))
        self.default_out = doc.get("run", {}).get("out")

    # -- section accessors (validated on demand) ----------------------------

    def require(self, section: str) -> dict:
        if section not in self.doc:
            raise ConfigError(f"config is missing the [{section}] section")
        return self.doc[section]

    def grid(self) -> Grid3:
        table = self.require("grid")
        try:
            return Grid3(int(table["n"]), float(table.get("length", 2.0 * math.pi)))
        except KeyError as exc:
            raise ConfigError(f"[grid]: missing key {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"[grid]: {exc}") from None

    def deltas(self) -> DeltaSequence:
        table = self.require("deltas")
        try:
            return delta_sequence_from_record(table)
        except ValueError as exc:
            raise ConfigError(f"[deltas]: {exc}") from None

    def constants(self) -> CriticalConstants:
        table = self.doc.get("constants", {})
        try:
            return CriticalConstants(c=tuple(table.get("c", ())),
                                     C_q=float(table.get("C_q", 1.0)))
        except ValueError as exc:
            raise ConfigError(f"[constants]: {exc}") from None


def _validate(doc: dict) -> None:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    for section, table in doc.items():
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        if section == "deltas":
            continue  # validated by the generator parser
        _check_keys(section, table, _KEYS[section])
    solver = doc.get("solver", {})
    if solver:
        if ("dt" in solver) == ("cfl" in solver):
            raise ConfigError("[solver]: exactly one of dt / cfl is required")
        _validate_kind_table("solver.initial", solver.get("initial"),
                             _INITIAL_KINDS, required=True)
    criterion = doc.get("criterion", {})
    if criterion:
        _validate_kind_table("criterion.source", criterion.get("source"),
                             _SOURCE_KINDS, required=True)
    hausdorff = doc.get("hausdorff", {})
    if "eps_grid" in hausdorff:
        grid_spec = hausdorff["eps_grid"]
        if not isinstance(grid_spec, dict):
            raise ConfigError("[hausdorff].eps_grid must be a table")
        _check_keys("hausdorff.eps_grid", grid_spec, {"start", "stop", "count"})
        missing = {"start", "stop", "count"} - set(grid_spec)
        if missing:
            raise ConfigError(f"[hausdorff].eps_grid: missing {sorted(missing)}")


def _validate_kind_table(name: str, table, kinds: dict, required: bool) -> None:
    if table is None:
        if required:
            raise ConfigError(f"{name} is required")
        return
    if not isinstance(table, dict) or "kind" not in table:
        raise ConfigError(f"{name} must be a table with a 'kind' key")
    kind = table["kind"]
    if kind not in kinds:
        raise ConfigError(f"{name}: unknown kind {kind!r} "
                          f"(expected one of {sorted(kinds)})")
    allowed = kinds[kind] | {"kind"}
    _check_keys(name, table, allowed)
    missing = kinds[kind] - set(table)
    if missing:
        raise ConfigError(f"{name}: missing keys {sorted(missing)}")


def config_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _validate(doc)
    return RunConfig(doc, config_sha256(path), path)

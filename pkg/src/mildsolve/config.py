"""Run configuration: a single YAML file driving every CLI subcommand.

The file has four blocks (system, control, solver, diagnostic) plus optional
counterexample/gamma blocks.  Parsing is strict: unknown semigroup kinds,
inconsistent dimensions or invalid ranges raise `ConfigError`, which the CLI
maps to exit code 2 before any numerical work starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .spaces import (
    Semigroup,
    StateVector,
    VectorField,
    builtin_field,
    certify_class_constants,
    dense_semigroup,
    diagonal_semigroup,
    heat_semigroup,
)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _parse_extended_float(value, name: str) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return np.inf
        raise ConfigError(f"{name} must be a number or 'inf', got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    """Validated configuration for one pipeline run."""

    system: dict
    control: dict
    solver: dict
    diagnostic: dict
    counterexample: dict
    gamma: dict
    raw: dict = field(repr=False, default_factory=dict)

    @staticmethod
    def from_file(path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return RunConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        cfg = RunConfig(
            system=dict(raw.get("system", {})),
            control=dict(raw.get("control", {})),
            solver=dict(raw.get("solver", {})),
            diagnostic=dict(raw.get("diagnostic", {})),
            counterexample=dict(raw.get("counterexample", {})),
            gamma=dict(raw.get("gamma", {})),
            raw=raw,
        )
        cfg.validate()
        return cfg

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        sysb = self.system
        if sysb:
            if float(sysb.get("T", 1.0)) <= 0:
                raise ConfigError("system.T must be > 0")
            if int(sysb.get("n_t", 1)) < 1:
                raise ConfigError("system.n_t must be >= 1")
            nk = sysb.get("norm_kind", 2)
            if nk not in (1, 2, "inf", np.inf):
                raise ConfigError("system.norm_kind must be 1, 2 or 'inf'")
        ctrl = self.control
        if ctrl:
            p = _parse_extended_float(ctrl.get("p", 2), "control.p")
            if p < 1:
                raise ConfigError("control.p must be >= 1")
            if float(ctrl.get("r", 1.0)) <= 0:
                raise ConfigError("control.r must be > 0")
            if int(ctrl.get("count", 1)) < 1:
                raise ConfigError("control.count must be >= 1")
        if self.solver:
            if float(self.solver.get("tol", 1e-8)) <= 0:
                raise ConfigError("solver.tol must be > 0")
            mode = self.solver.get("certificate_mode", "auto")
            if mode not in ("auto", "omega", "hidden"):
                raise ConfigError("solver.certificate_mode must be auto/omega/hidden")
        diag = self.diagnostic
        if diag:
            dims = diag.get("dims", [])
            if dims != sorted(set(dims)):
                raise ConfigError("diagnostic.dims must be strictly increasing")
            ladder = diag.get("eps_ladder", [])
            if any(e <= 0 for e in ladder):
                raise ConfigError("diagnostic.eps_ladder entries must be > 0")
            if sorted(set(ladder), reverse=True) != list(ladder):
                raise ConfigError("diagnostic.eps_ladder must be strictly decreasing")

    # -- typed accessors ---------------------------------------------------

    @property
    def horizon_T(self) -> float:
        return float(self.system.get("T", 1.0))

    @property
    def n_t(self) -> int:
        return int(self.system.get("n_t", 128))

    @property
    def norm_kind(self):
        nk = self.system.get("norm_kind", 2)
        return np.inf if nk == "inf" else nk

    @property
    def p(self) -> float:
        return _parse_extended_float(self.control.get("p", 2), "control.p")

    @property
    def radius(self) -> float:
        return float(self.control.get("r", 1.0))

    @property
    def count(self) -> int:
        return int(self.control.get("count", 1))

    @property
    def seed(self) -> int:
        return int(self.control.get("seed", 0))

    @property
    def tol(self) -> float:
        return float(self.solver.get("tol", 1e-8))

    # -- builders ----------------------------------------------------------

    def build_semigroup(self) -> Semigroup:
        spec = self.system.get("semigroup")
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError("system.semigroup.kind is required")
        kind = spec["kind"]
        if kind == "diagonal":
            if "eigenvalues" not in spec:
                raise ConfigError("diagonal semigroup needs eigenvalues")
            sg = diagonal_semigroup(spec["eigenvalues"])
        elif kind == "heat":
            if "dim" not in spec:
                raise ConfigError("heat semigroup needs dim")
            sg = heat_semigroup(int(spec["dim"]))
        elif kind == "dense":
            if "matrix" not in spec:
                raise ConfigError("dense semigroup needs matrix")
            matrix = np.asarray(spec["matrix"], dtype=float)
            if "class_M" in spec and "class_mu" in spec:
                sg = dense_semigroup(matrix, float(spec["class_M"]),
                                     float(spec["class_mu"]))
            else:
                probe = dense_semigroup(matrix, 1.0, 0.0)
                t_grid = np.linspace(0.0, self.horizon_T, 17)[1:]
                m_const, mu = certify_class_constants(
                    probe, t_grid, sample_count=256,
                    safety=float(spec.get("safety", 1.1)),
                    norm_kind=self.norm_kind)
                sg = dense_semigroup(matrix, m_const, mu)
        else:
            raise ConfigError(f"unknown semigroup kind {kind!r}")
        if "class_M" in spec and kind != "dense":
            sg = Semigroup(eigenvalues=sg.eigenvalues,
                           class_M=float(spec["class_M"]),
                           class_mu=float(spec.get("class_mu", sg.class_mu)))
        return sg

    def build_fields(self, dim: int) -> list[VectorField]:
        specs = self.system.get("fields")
        if not specs:
            raise ConfigError("system.fields must list at least one field")
        out = []
        for fs in specs:
            kind = fs.get("kind")
            if kind == "bilinear":
                matrix = np.eye(dim) if fs.get("identity") else np.asarray(
                    fs.get("matrix"), dtype=float)
                out.append(builtin_field("bilinear", self.norm_kind, matrix=matrix))
            elif kind == "constant":
                out.append(builtin_field("constant", self.norm_kind,
                                         vector=np.asarray(fs.get("vector"), dtype=float)))
            elif kind == "saturation":
                out.append(builtin_field("saturation", scale=float(fs.get("scale", 1.0))))
            else:
                raise ConfigError(f"unknown field kind {kind!r}")
        for f in out:
            probe = f(0.0, np.zeros(dim))
            if probe.shape != (dim,):
                raise ConfigError("field output dimension mismatch")
        return out

    def build_xi0(self, dim: int) -> StateVector:
        xi0 = self.system.get("xi0")
        if xi0 is None:
            raise ConfigError("system.xi0 is required")
        coords = np.asarray(xi0, dtype=float)
        if coords.shape != (dim,):
            raise ConfigError(f"xi0 must have dimension {dim}")
        return StateVector(coords, self.norm_kind)

    def to_metadata(self) -> dict[str, Any]:
        return {"config": self.raw}

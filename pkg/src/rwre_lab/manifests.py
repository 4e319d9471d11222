"""Experiment manifests and deterministic result emission.

A manifest is a flat JSON document that fully determines a recipe run:
re-running the same manifest reproduces every numeric CSV field bit for bit
(reductions are ordered, so this holds for any worker count).  CSV floats
are written with 17 significant digits; no wall-clock or host-dependent
value ever reaches an output file.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field as dc_field, asdict
from typing import Any

ARTIFACT_VERSION = "0.1.0"


class ManifestError(ValueError):
    """Raised when a manifest fails schema validation."""


#: per-recipe parameter schema: name -> (type, default); None default means
#: the parameter is required
RECIPE_SCHEMAS: dict[str, dict[str, tuple]] = {
    "kernel-table": {
        "radius": (int, 4),
        "fourier_grid": (int, 512),
        "truncated_n_max": (int, 5000),
        "cross_check_radius": (int, 4),
    },
    "corollary2-verify": {
        "epsilon_list": (list, [0.04, 0.08, 0.16]),
        "primary_epsilon": (float, 0.08),
        "n_replicas": (int, 20),
        "total_steps": (int, 20_000_000),
        "small_eps_factor": (int, 4),
    },
    "velocity-verify": {
        "epsilon_list": (list, [0.05, 0.1]),
        "n_steps": (int, 400_000),
        "n_replicas": (int, 300),
        "burn_in": (int, 2000),
    },
    "green-lemma-verify": {
        "n_instances": (int, 100),
        "delta": (float, 0.9),
        "epsilon": (float, 0.05),
        "max_sites": (int, 3),
        "max_delta_pert": (float, 0.02),
        "tol": (float, 1e-12),
    },
    "mu-delta-vs-cesaro": {
        "delta": (float, 0.99),
        "identity_delta": (float, 0.9),
        "epsilon": (float, 0.08),
        "n_traj": (int, 200_000),
        "identity_n_traj": (int, 200_000),
        "identity_n_env": (int, 200),
        "cesaro_steps": (int, 2_000_000),
        "cesaro_replicas": (int, 10),
    },
    "kalikow-jdelta": {
        "deltas": (list, [0.9, 0.95, 0.99]),
        "epsilon": (float, 0.1),
        "n_env": (int, 48),
        "tol": (float, 5e-3),
    },
    "ballisticity-check": {
        "L": (int, 20),
        "M": (float, 2.0),
        "epsilon": (float, 0.1),
        "n_traj": (int, 100_000),
        "step_cap": (int, 1_000_000),
    },
}

RECIPE_NAMES = tuple(RECIPE_SCHEMAS)


@dataclass
class ExperimentManifest:
    """Everything a recipe needs: parameters, seed, output paths."""

    recipe: str
    seed: int = 20240
    out_dir: str = "out"
    workers: int = 1
    params: dict = dc_field(default_factory=dict)
    artifact_version: str = ARTIFACT_VERSION

    def validate(self) -> "ExperimentManifest":
        if self.recipe not in RECIPE_SCHEMAS:
            raise ManifestError(
                f"unknown recipe {self.recipe!r}; known: {RECIPE_NAMES}")
        schema = RECIPE_SCHEMAS[self.recipe]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ManifestError(f"unknown parameters {sorted(unknown)} "
                                f"for recipe {self.recipe}")
        merged = {}
        for key, (typ, default) in schema.items():
            if key in self.params:
                val = self.params[key]
            elif default is not None:
                val = default
            else:
                raise ManifestError(f"missing required parameter {key!r}")
            if typ is float and isinstance(val, int):
                val = float(val)
            if typ is int and isinstance(val, float) and val.is_integer():
                val = int(val)
            if not isinstance(val, typ):
                raise ManifestError(
                    f"parameter {key!r} must be {typ.__name__}, "
                    f"got {type(val).__name__}")
            if typ is list and len(val) == 0:
                raise ManifestError(f"parameter {key!r} must be non-empty")
            merged[key] = val
        if not isinstance(self.seed, int):
            raise ManifestError("seed must be an integer")
        if self.workers < 1:
            raise ManifestError("workers must be >= 1")
        self.params = merged
        return self

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "ExperimentManifest":
        with open(path) as fh:
            doc = json.load(fh)
        known = {"recipe", "seed", "out_dir", "workers", "params",
                 "artifact_version"}
        unknown = set(doc) - known
        if unknown:
            raise ManifestError(f"unknown manifest fields {sorted(unknown)}")
        if "recipe" not in doc:
            raise ManifestError("manifest must name a recipe")
        return cls(**doc).validate()


def default_manifest(recipe: str, **overrides) -> ExperimentManifest:
    """The acceptance-suite manifest for a recipe."""
    m = ExperimentManifest(recipe=recipe)
    for key in ("seed", "out_dir", "workers"):
        if key in overrides:
            setattr(m, key, overrides.pop(key))
    m.params.update(overrides)
    return m.validate()


@dataclass
class CheckResult:
    """One pass/fail line of a recipe run."""

    id: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.tolerance = float(self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.id}: value={self.value:.6g} "
                f"tolerance={self.tolerance:.6g} {self.detail}".rstrip())


@dataclass
class RecipeResult:
    """Outputs and check verdicts of one recipe run."""

    recipe: str
    manifest: ExperimentManifest
    checks: list
    outputs: list
    summary: dict = dc_field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write_summary(self, path) -> None:
        doc = {"recipe": self.recipe,
               "artifact_version": self.manifest.artifact_version,
               "manifest": asdict(self.manifest),
               "checks": [asdict(c) for c in self.checks],
               "all_passed": self.all_passed,
               "summary": _jsonable(self.summary)}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)


def _jsonable(obj: Any):
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def write_csv(path, header: list, rows: list) -> None:
    """Fixed column order; floats at 17 significant digits."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([f"{v:.17g}" if isinstance(v, float) else v
                         for v in row])

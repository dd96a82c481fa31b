"""Experiment configuration
Parses and validates the JSON document that drives a batch run, and turns
it into a trajectory, a base ensemble and probe specifications.
"""
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from backflow_lab.config import (
    BACKFLOW_THRESHOLD,
    DEFAULT_GRID_POINTS,
    DEFAULT_LAMBDAS,
    DEFAULT_N_BAR,
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    ENSEMBLE_SOURCES,
    GAP_TOL,
    PRESETS,
)
from backflow_lab.dynamics import DynamicsFamily, make_trajectory, uniform_grid
from backflow_lab.errors import BackflowLabError, ConfigError
from backflow_lab.quantum_core import DensityMatrix, Ensemble, random_state


def _matrix(data):
    """A matrix given as nested real lists or as {"re": ..., "im": ...}."""
    if isinstance(data, dict):
        return np.asarray(data["re"], dtype=float) + 1j * np.asarray(data.get("im", 0.0), dtype=float)
    return np.asarray(data, dtype=complex)


def _number(section, key, default, kind=float):
    value = section.get(key, default)
    try:
        return kind(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"'{key}' must be a {kind.__name__}, got {value!r}") from e


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    dynamics: DynamicsFamily
    times: List[float]
    n_bar: int = DEFAULT_N_BAR
    lambdas: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    sigma: object = "maximally_mixed"
    base_ensemble: object = "preset:computational"
    d_anc: int = 1
    perturbation: float = 0.0
    gap_tol: float = GAP_TOL
    n_restarts: int = DEFAULT_RESTARTS
    seed: int = DEFAULT_SEED
    threshold: float = BACKFLOW_THRESHOLD
    p_samples: int = 0
    csv_path: Optional[str] = None
    svg_path: Optional[str] = None
    json_path: Optional[str] = None

    @property
    def t0(self):
        return self.times[0]

    @property
    def d_s(self):
        return self.dynamics.dim

    @classmethod
    def load(cls, path):
        """Read and validate a JSON config; relative output paths resolve next to it."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config ({e})") from e
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        dynamics = data.get("dynamics")
        if isinstance(dynamics, str):
            if dynamics not in PRESETS:
                raise ConfigError(f"unknown preset {dynamics!r}; expected one of {sorted(PRESETS)}")
            dynamics = {"kind": PRESETS[dynamics]["kind"], "params": PRESETS[dynamics]["params"]}
        family = DynamicsFamily.from_dict(dynamics)

        grid = data.get("grid") or {}
        if "times" in grid:
            try:
                times = [float(t) for t in grid["times"]]
            except (TypeError, ValueError) as e:
                raise ConfigError(f"grid.times must be numbers: {e}") from e
        else:
            t_start = _number(grid, "t_start", 0.0)
            t_end = _number(grid, "t_end", 1.0)
            n_points = _number(grid, "n_points", DEFAULT_GRID_POINTS, int)
            if n_points < 2 or t_end <= t_start:
                raise ConfigError("grid needs n_points >= 2 and t_end > t_start")
            times = list(uniform_grid(t_start, t_end, n_points))

        probe = data.get("probe") or {}
        solver = data.get("solver") or {}
        outputs = data.get("outputs") or {}

        def out_path(key):
            value = outputs.get(key)
            if value is None:
                return None
            return value if os.path.isabs(value) else os.path.join(base_dir, value)

        try:
            lambdas = [float(x) for x in probe.get("lambda_list", probe.get("lambdas", DEFAULT_LAMBDAS))]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"probe.lambda_list must be a list of numbers: {e}") from e
        cfg = cls(
            dynamics=family,
            times=times,
            n_bar=_number(probe, "n_bar", DEFAULT_N_BAR, int),
            lambdas=lambdas,
            sigma=probe.get("sigma", "maximally_mixed"),
            base_ensemble=probe.get("base_ensemble", "preset:computational"),
            d_anc=_number(probe, "ancilla_dim", 1, int),
            perturbation=_number(probe, "perturbation", 0.0),
            gap_tol=_number(solver, "gap_tol", GAP_TOL),
            n_restarts=_number(solver, "n_restarts", DEFAULT_RESTARTS, int),
            seed=_number(solver, "seed", DEFAULT_SEED, int),
            threshold=_number(solver, "threshold", BACKFLOW_THRESHOLD),
            p_samples=_number(solver, "p_samples", 0, int),
            csv_path=out_path("csv_path"),
            svg_path=out_path("svg_path"),
            json_path=out_path("json_path"),
        )
        cfg.validate()
        return cfg

    def validate(self):
        """Check ranges and resolve the state inputs once."""
        if len(self.times) < 2 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("grid times must be strictly increasing with at least two points")
        if self.n_bar < 1:
            raise ConfigError("n_bar must be at least 1")
        if not self.lambdas or any(not 0.0 <= lam < 1.0 for lam in self.lambdas):
            raise ConfigError("every lambda must lie in [0, 1)")
        if not 1 <= self.d_anc <= self.d_s:
            raise ConfigError(f"ancilla_dim must lie in 1..{self.d_s}")
        if not 0.0 <= self.perturbation < 1.0:
            raise ConfigError("perturbation must lie in [0, 1)")
        if self.gap_tol <= 0 or self.threshold <= 0:
            raise ConfigError("gap_tol and threshold must be positive")
        if self.n_restarts < 0 or self.p_samples < 0:
            raise ConfigError("n_restarts and p_samples must be non-negative")
        if isinstance(self.base_ensemble, str) and self.base_ensemble not in ENSEMBLE_SOURCES:
            raise ConfigError(f"unknown base_ensemble {self.base_ensemble!r}; expected one of {ENSEMBLE_SOURCES} or an inline ensemble")
        self.sigma_state()
        if not isinstance(self.base_ensemble, str):
            self.inline_ensemble()

    def sigma_state(self):
        d_sa = self.d_s * self.d_anc
        source = self.sigma
        try:
            if source == "maximally_mixed":
                return DensityMatrix.maximally_mixed(d_sa)
            if isinstance(source, str) and source.startswith("random:"):
                return random_state(d_sa, seed=int(source.split(":", 1)[1]))
            if isinstance(source, str):
                raise ConfigError(f"unknown sigma source {source!r}")
            state = DensityMatrix(_matrix(source))
        except BackflowLabError as e:
            raise ConfigError(f"invalid sigma: {e}") from e
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"invalid sigma: {e}") from e
        if state.dim != d_sa:
            raise ConfigError(f"sigma has dimension {state.dim}, expected {d_sa}")
        return state

    def inline_ensemble(self):
        data = self.base_ensemble
        try:
            states = [_matrix(s) for s in data["states"]]
            ensemble = Ensemble(np.asarray(data["probs"], dtype=float), tuple(states))
        except BackflowLabError as e:
            raise ConfigError(f"invalid base_ensemble: {e}") from e
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"invalid base_ensemble: {e}") from e
        if ensemble.n != self.n_bar:
            raise ConfigError(f"base_ensemble has {ensemble.n} states but n_bar is {self.n_bar}")
        if ensemble.dim != self.d_s * self.d_anc:
            raise ConfigError(f"base_ensemble states have dimension {ensemble.dim}, expected {self.d_s * self.d_anc}")
        return ensemble

    def trajectory(self, workers=None):
        return make_trajectory(self.dynamics, self.t0, self.times, workers)

    def to_dict(self):
        return {
            "dynamics": self.dynamics.to_dict(),
            "grid": {"times": list(self.times)},
            "probe": {
                "n_bar": self.n_bar,
                "lambda_list": list(self.lambdas),
                "sigma": self.sigma,
                "base_ensemble": self.base_ensemble,
                "ancilla_dim": self.d_anc,
                "perturbation": self.perturbation,
            },
            "solver": {
                "gap_tol": self.gap_tol,
                "n_restarts": self.n_restarts,
                "seed": self.seed,
                "threshold": self.threshold,
                "p_samples": self.p_samples,
            },
            "outputs": {"csv_path": self.csv_path, "svg_path": self.svg_path, "json_path": self.json_path},
        }

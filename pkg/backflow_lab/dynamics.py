"""Dynamics presets and sampled trajectories
Analytic families of time-dependent channels Λ(t) and their evaluation on
a time grid. Rates and amplitudes are given as coefficient tables with
closed-form integrals, so no numerical quadrature is involved.
"""
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from backflow_lab import config
from backflow_lab.channels import channel_from_choi, channel_from_kraus, check_cptp
from backflow_lab.color_utils import print_diagnostic
from backflow_lab.config import CPTP_TOL, GRID_TOL, DynamicsKind
from backflow_lab.errors import ConfigError, CPTPViolationError
from backflow_lab.utils import parallel_map

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class DampedCosine:
    """amplitude * exp(-decay t) * cos(freq t)."""

    amplitude: float
    decay: float = 0.0
    freq: float = 0.0

    def value(self, t):
        return self.amplitude * np.exp(-self.decay * t) * np.cos(self.freq * t)

    def integral(self, t):
        b, w = self.decay, self.freq
        norm = b * b + w * w
        if norm == 0.0:
            return self.amplitude * t
        return self.amplitude * (b - np.exp(-b * t) * (b * np.cos(w * t) - w * np.sin(w * t))) / norm


@dataclass(frozen=True)
class RateTable:
    """γ(t) = constant + tanh_coeff * tanh(t) + Σ damped cosines."""

    constant: float = 0.0
    tanh_coeff: float = 0.0
    terms: Tuple[DampedCosine, ...] = ()

    def rate(self, t):
        return self.constant + self.tanh_coeff * np.tanh(t) + sum(c.value(t) for c in self.terms)

    def integral(self, t):
        """∫_0^t γ(s) ds."""
        log_cosh = np.logaddexp(t, -t) - np.log(2.0)
        return self.constant * t + self.tanh_coeff * log_cosh + sum(c.integral(t) for c in self.terms)

    def to_dict(self):
        return {
            "constant": self.constant,
            "tanh_coeff": self.tanh_coeff,
            "terms": [[c.amplitude, c.decay, c.freq] for c in self.terms],
        }

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, (int, float)):
            return cls(constant=float(data))
        try:
            terms = tuple(DampedCosine(*(float(x) for x in term)) for term in data.get("terms", ()))
            return cls(float(data.get("constant", 0.0)), float(data.get("tanh_coeff", 0.0)), terms)
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigError(f"invalid rate table {data!r}: {e}") from e


ETERNAL_RATES = (RateTable(1.0), RateTable(1.0), RateTable(tanh_coeff=-1.0))


def dephasing_at(t, rates):
    """Qubit dephasing with coherence factor q = exp(-2 ∫γ)."""
    q = float(np.exp(-2.0 * rates.integral(t)))
    if not 0.0 < q <= 1.0 + 1e-12:
        raise CPTPViolationError(f"dephasing factor {q:.6g} at t={t:.6g} is outside (0, 1]")
    q = min(q, 1.0)
    kraus = [np.sqrt((1 + q) / 2) * PAULI["I"], np.sqrt((1 - q) / 2) * PAULI["Z"]]
    return channel_from_kraus(kraus, label=f"dephasing(t={t:.6g})")


def pauli_eigenvalues(t, rates):
    """λ_j = exp(-2 ∫(γ_k + γ_l)) for {j, k, l} = {1, 2, 3}."""
    g = [r.integral(t) for r in rates]
    return (
        float(np.exp(-2.0 * (g[1] + g[2]))),
        float(np.exp(-2.0 * (g[0] + g[2]))),
        float(np.exp(-2.0 * (g[0] + g[1]))),
    )


def pauli_channel(lams, label="pauli"):
    """Pauli channel with Pauli-transfer eigenvalues (λ_1, λ_2, λ_3)."""
    l1, l2, l3 = lams
    probs = [
        (1 + l1 + l2 + l3) / 4,
        (1 + l1 - l2 - l3) / 4,
        (1 - l1 + l2 - l3) / 4,
        (1 - l1 - l2 + l3) / 4,
    ]
    if min(probs) < -CPTP_TOL:
        raise CPTPViolationError(f"Pauli weights {probs} are not a distribution")
    kraus = [np.sqrt(max(p, 0.0)) * PAULI[k] for p, k in zip(probs, "IXYZ")]
    return channel_from_kraus(kraus, label=label)


def random_unitary_qubit_at(t, rates=ETERNAL_RATES):
    """Random-unitary (Pauli) qubit channel generated by rates γ_1, γ_2, γ_3."""
    return pauli_channel(pauli_eigenvalues(t, rates), label=f"pauli(t={t:.6g})")


def damping_amplitude(t, terms):
    """G(t) = Σ a e^{-b t} cos(w t)."""
    return float(sum(c.value(t) for c in terms))


def amplitude_damping_at(t, terms):
    """Amplitude damping with excited-state amplitude G(t)."""
    g = damping_amplitude(t, terms)
    if abs(g) > 1.0 + 1e-12:
        raise CPTPViolationError(f"|G(t)| = {abs(g):.6g} exceeds 1 at t={t:.6g}")
    g = float(np.clip(g, -1.0, 1.0))
    k0 = np.array([[1, 0], [0, g]], dtype=complex)
    k1 = np.array([[0, np.sqrt(1 - g * g)], [0, 0]], dtype=complex)
    return channel_from_kraus([k0, k1], label=f"amplitude_damping(t={t:.6g})")


def depolarizing_at(t, rate, dim=2):
    """ρ ↦ e^{-rate t} ρ + (1 - e^{-rate t}) I/d."""
    f = float(np.exp(-rate * t))
    if dim == 2:
        p = (1 - f) / 4
        kraus = [np.sqrt(1 - 3 * p) * PAULI["I"]] + [np.sqrt(p) * PAULI[k] for k in "XYZ"]
        return channel_from_kraus(kraus, label=f"depolarizing(t={t:.6g})")
    omega = np.eye(dim, dtype=complex).reshape(-1)
    choi = f * np.outer(omega, omega) + (1 - f) * np.eye(dim * dim, dtype=complex) / dim
    return channel_from_choi(choi, dim, dim, label=f"depolarizing{dim}(t={t:.6g})")


@dataclass(frozen=True)
class DynamicsFamily:
    """A named family t ↦ Λ(t) with its parameters."""

    kind: str
    params: Dict = field(default_factory=dict)

    @property
    def dim(self):
        if self.kind == DynamicsKind.DEPOLARIZING:
            return int(self.params.get("dim", 2))
        return 2

    def channel_at(self, t):
        """Λ at time t measured from the family's own origin."""
        p = self.params
        if self.kind == DynamicsKind.DEPHASING:
            return dephasing_at(t, _dephasing_rates(p))
        if self.kind == DynamicsKind.AMPLITUDE_DAMPING:
            return amplitude_damping_at(t, _damping_terms(p))
        if self.kind == DynamicsKind.RANDOM_UNITARY_QUBIT:
            return random_unitary_qubit_at(t, _pauli_rates(p))
        if self.kind == DynamicsKind.DEPOLARIZING:
            return depolarizing_at(t, float(p.get("rate", 1.0)), int(p.get("dim", 2)))
        raise ConfigError(f"unknown dynamics kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError("dynamics must be an object with a 'kind'")
        kind = data["kind"]
        if kind not in DynamicsKind.ALL:
            raise ConfigError(f"unknown dynamics kind {kind!r}; expected one of {DynamicsKind.ALL}")
        params = dict(config.PRESETS[kind]["params"])
        params.update(data.get("params") or {})
        family = cls(kind, params)
        family.validate()
        return family

    def validate(self):
        """Parse the parameter tables once so malformed input fails early."""
        p = self.params
        if self.kind == DynamicsKind.DEPHASING:
            _dephasing_rates(p)
        elif self.kind == DynamicsKind.AMPLITUDE_DAMPING:
            terms = _damping_terms(p)
            if abs(damping_amplitude(0.0, terms) - 1.0) > 1e-12:
                raise ConfigError("amplitude-damping table must satisfy G(0) = 1")
        elif self.kind == DynamicsKind.RANDOM_UNITARY_QUBIT:
            _pauli_rates(p)
        elif self.kind == DynamicsKind.DEPOLARIZING:
            if float(p.get("rate", 1.0)) < 0:
                raise ConfigError("depolarizing rate must be non-negative")
            if int(p.get("dim", 2)) < 2:
                raise ConfigError("depolarizing dimension must be at least 2")


def _dephasing_rates(p):
    if "rates" in p:
        return RateTable.from_dict(p["rates"])
    return RateTable(float(p.get("gamma_const", 1.0)))


def _damping_terms(p):
    if "terms" in p:
        try:
            return tuple(DampedCosine(*(float(x) for x in term)) for term in p["terms"])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid damping terms {p['terms']!r}") from e
    return (DampedCosine(1.0, float(p.get("g_decay", 1.0)), float(p.get("g_freq", 3.0))),)


def _pauli_rates(p):
    preset = p.get("preset")
    if preset == "eternal":
        return ETERNAL_RATES
    if preset is not None:
        raise ConfigError(f"unknown random-unitary preset {preset!r}")
    try:
        return tuple(RateTable.from_dict(p[f"gamma_{k}"]) for k in (1, 2, 3))
    except KeyError as e:
        raise ConfigError(f"random_unitary_qubit needs gamma_1..gamma_3 or preset, missing {e}") from e


def preset_family(name, **overrides):
    """DynamicsFamily for a named preset, with optional parameter overrides."""
    if name not in config.PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(config.PRESETS)}")
    entry = config.PRESETS[name]
    return DynamicsFamily.from_dict({"kind": entry["kind"], "params": {**entry["params"], **overrides}})


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Λ(t) sampled on an increasing grid starting at t0."""

    family: DynamicsFamily
    t0: float
    grid: Tuple[float, ...]
    channels: Tuple

    @property
    def dim(self):
        return self.channels[0].dim_in

    def index_of(self, t):
        idx = int(np.argmin(np.abs(np.asarray(self.grid) - t)))
        if abs(self.grid[idx] - t) > GRID_TOL * max(1.0, abs(t)):
            raise ValueError(f"time {t!r} is not on the trajectory grid")
        return idx

    def channel_at(self, t):
        return self.channels[self.index_of(t)]


def make_trajectory(family, t0, grid, workers=None):
    """Evaluate family on grid, checking CPTP at every sample.

    grid must be strictly increasing and start at t0; Λ is evaluated at the
    elapsed time t - t0, so the first channel is the identity.
    """
    grid = tuple(float(t) for t in grid)
    if not grid:
        raise ValueError("trajectory grid is empty")
    if abs(grid[0] - t0) > GRID_TOL * max(1.0, abs(t0)):
        raise ValueError(f"grid starts at {grid[0]!r}, expected t0={t0!r}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("trajectory grid must be strictly increasing")

    channels = parallel_map(lambda t: family.channel_at(t - t0), grid, workers)
    for t, ch in zip(grid, channels):
        lowest, defect, ok = check_cptp(ch)
        if not ok:
            raise CPTPViolationError(
                f"{family.kind} is not CPTP at t={t:.6g} (min Choi eig {lowest:.3e}, TP defect {defect:.3e})"
            )
    print_diagnostic(f"[Dynamics] {family.kind}: {len(grid)} channels on [{grid[0]:.4g}, {grid[-1]:.4g}]")
    return Trajectory(family, float(t0), grid, tuple(channels))


def uniform_grid(t_start, t_end, n_points):
    return tuple(float(t) for t in np.linspace(t_start, t_end, int(n_points)))

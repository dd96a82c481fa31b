"""Witness report state
Per-time and per-step records of a backflow scan, with dictionary
conversion for JSON persistence and row formatting for CSV output.
"""
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from backflow_lab.config import CSV_CONVERGED_COLUMN


def matrix_to_dict(m):
    m = np.asarray(m, dtype=complex)
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def matrix_from_dict(data):
    return np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)


@dataclass
class TimePoint:
    """Correlation values at one grid time."""

    time: float
    c_value: float
    pg_inner: float
    c_projective: float
    pg_ensemble: float
    pg_perp: Optional[float] = None
    pg_par: Optional[float] = None
    split_defect: Optional[float] = None
    gap: float = 0.0
    restarts_used: int = 0
    converged: bool = True
    a_povm: List[np.ndarray] = field(default_factory=list)
    seesaw_trace: List[List[float]] = field(default_factory=list)

    def to_dict(self):
        data = asdict(self)
        data["a_povm"] = [matrix_to_dict(e) for e in self.a_povm]
        data["seesaw_trace"] = [[int(r), float(v)] for r, v in self.seesaw_trace]
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["a_povm"] = [matrix_from_dict(e) for e in data.get("a_povm", [])]
        data["seesaw_trace"] = [[int(r), float(v)] for r, v in data.get("seesaw_trace", [])]
        return cls(**data)


@dataclass
class StepRecord:
    """Divisibility verdict and correlation change between consecutive grid times.

    cp_flag is None when Λ(t_start) could not be inverted.
    """

    t_start: float
    t_end: float
    delta_c: float
    backflow: bool
    cp_flag: Optional[bool] = None
    min_choi_eig: Optional[float] = None
    tp_defect: Optional[float] = None
    inversion_condition: Optional[float] = None
    p_positive: Optional[bool] = None
    min_output_eig: Optional[float] = None

    @property
    def indeterminate(self):
        return self.cp_flag is None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class StepConsistency:
    """Backflow flag of one step set against its CP verdict."""

    t_start: float
    t_end: float
    backflow: bool
    cp_flag: Optional[bool]

    @classmethod
    def of(cls, step):
        return cls(step.t_start, step.t_end, step.backflow, step.cp_flag)

    @property
    def sound(self):
        """Backflow never appears on a CP step."""
        return not (self.backflow and self.cp_flag is True)

    @property
    def agrees(self):
        """Backflow exactly when the step is non-CP; undecided steps agree."""
        return self.cp_flag is None or self.backflow == (not self.cp_flag)

    def to_dict(self):
        data = asdict(self)
        data["sound"] = self.sound
        data["agrees"] = self.agrees
        return data


@dataclass
class WitnessReport:
    """Outcome of scan_backflow for one mixing weight λ."""

    lam: float
    threshold: float
    seed: int
    p_bar: List[float]
    dynamics: dict
    points: List[TimePoint] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)

    @property
    def grid(self):
        return [p.time for p in self.points]

    @property
    def c_values(self):
        return [p.c_value for p in self.points]

    @property
    def pg_ensemble(self):
        return [p.pg_ensemble for p in self.points]

    @property
    def choi_min_eigs(self):
        return [s.min_choi_eig for s in self.steps]

    @property
    def cp_flags(self):
        return [s.cp_flag for s in self.steps]

    @property
    def backflow_intervals(self):
        """(t_start, t_end, ΔC) for every step with ΔC above the threshold."""
        return [(s.t_start, s.t_end, s.delta_c) for s in self.steps if s.backflow]

    @property
    def converged(self):
        return all(p.converged for p in self.points)

    @property
    def verdict_consistency(self):
        """One StepConsistency per grid step, in grid order."""
        return [StepConsistency.of(s) for s in self.steps]

    @property
    def consistent(self):
        """No step shows backflow while its intermediate map is CP."""
        return all(c.sound for c in self.verdict_consistency)

    def consistency_summary(self):
        """Counts over the per-step records.

        `backflow_implies_non_cp` must hold for any valid run; `coincide`
        additionally asks every non-CP step to show backflow for this probe.
        """
        records = self.verdict_consistency
        decided = [c for c in records if c.cp_flag is not None]
        return {
            "backflow_implies_non_cp": all(c.sound for c in decided),
            "coincide": all(c.agrees for c in decided),
            "backflow_on_cp_steps": sum(1 for c in decided if not c.sound),
            "non_cp_without_backflow": sum(1 for c in decided if not c.cp_flag and not c.backflow),
            "indeterminate_steps": len(records) - len(decided),
        }

    def csv_rows(self, include_converged=False):
        """One row per grid time; step columns describe the step ending there."""
        rows = []
        for k, p in enumerate(self.points):
            step = self.steps[k - 1] if 0 < k <= len(self.steps) else None
            row = {
                "time": p.time,
                "lambda": self.lam,
                "c_value": p.c_value,
                "c_projective": p.c_projective,
                "pg_ensemble": p.pg_ensemble,
                "pg_perp": p.pg_perp,
                "pg_par": p.pg_par,
                "min_choi_eig_step": step.min_choi_eig if step else None,
                "cp_flag": step.cp_flag if step else None,
                "backflow_flag": step.backflow if step else None,
                "gap": p.gap,
                "restarts_used": p.restarts_used,
            }
            if include_converged:
                row[CSV_CONVERGED_COLUMN] = p.converged
            rows.append(row)
        return rows

    def to_dict(self):
        return {
            "lam": self.lam,
            "threshold": self.threshold,
            "seed": self.seed,
            "p_bar": list(self.p_bar),
            "dynamics": self.dynamics,
            "points": [p.to_dict() for p in self.points],
            "steps": [s.to_dict() for s in self.steps],
            "verdict_consistency": [c.to_dict() for c in self.verdict_consistency],
            "consistency_summary": self.consistency_summary(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            lam=data["lam"],
            threshold=data["threshold"],
            seed=data["seed"],
            p_bar=list(data["p_bar"]),
            dynamics=data["dynamics"],
            points=[TimePoint.from_dict(p) for p in data.get("points", [])],
            steps=[StepRecord.from_dict(s) for s in data.get("steps", [])],
        )

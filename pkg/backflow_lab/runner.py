"""Experiment runner for backflow-lab
Orchestrates a batch run: trajectory, base ensemble, one scan per λ and the
output files, and maps failures onto exit codes.
"""
from backflow_lab.channels import cp_divisibility_scan
from backflow_lab.color_utils import format_number, print_diagnostic, print_error, print_info, print_success
from backflow_lab.config import Colors, ExitCode
from backflow_lab.errors import (
    BackflowLabError,
    ConfigError,
    CPTPViolationError,
    InfeasibleError,
    NoConvergenceError,
    SolverError,
)
from backflow_lab.probe import (
    ProbeSpec,
    computational_ensemble,
    hadamard_ensemble,
    sweep_lambdas,
    search_ensemble,
)
from backflow_lab.report_io import emit_csv, emit_json, emit_svg
from backflow_lab.utils import generate_run_id, get_timestamp


class ExperimentRunner:
    """Runs one validated ExperimentConfig end to end."""

    def __init__(self, config, workers=None):
        self.config = config
        self.workers = workers
        self.run_id = generate_run_id()
        self.started_at = get_timestamp()
        self.trajectory = None
        self.ensemble = None
        self.reports = []

    def run(self):
        """Execute the run and return a process exit code."""
        print_info(f"[Runner] run {self.run_id} started at {self.started_at}")
        try:
            self._build_trajectory()
            self._resolve_ensemble()
            self._scan()
        except (ConfigError, CPTPViolationError) as e:
            print_error(f"[Runner] configuration error: {e}")
            return ExitCode.CONFIG_ERROR
        except (SolverError, InfeasibleError, NoConvergenceError) as e:
            print_error(f"[Runner] solver failure: {e}")
            return ExitCode.SOLVER_ERROR

        try:
            self._write_outputs()
        except OSError as e:
            print_error(f"[Runner] could not write output: {e}")
            return ExitCode.IO_ERROR

        if not all(r.converged for r in self.reports):
            print_error("[Runner] some time points missed the duality-gap target; results written with a converged column")
            return ExitCode.SOLVER_ERROR
        print_success(f"[Runner] run {self.run_id} finished")
        return ExitCode.OK

    def _build_trajectory(self):
        cfg = self.config
        self.trajectory = cfg.trajectory(self.workers)
        print_diagnostic(f"[Runner] trajectory {cfg.dynamics.kind} with {len(cfg.times)} points")

    def _resolve_ensemble(self):
        cfg = self.config
        source = cfg.base_ensemble
        if source == "preset:computational":
            self.ensemble = computational_ensemble(cfg.d_s, cfg.n_bar, cfg.d_anc)
        elif source == "preset:hadamard":
            self.ensemble = hadamard_ensemble(cfg.d_s, cfg.n_bar, cfg.d_anc)
        elif source == "search":
            self.ensemble = self._search_ensemble()
        else:
            self.ensemble = cfg.inline_ensemble()

    def _search_ensemble(self):
        """Search on the first non-CP step, or on the first step if every step is CP."""
        verdicts = cp_divisibility_scan(self.trajectory)
        target = next((v for v in verdicts if v.cp_flag is False), verdicts[0])
        found = search_ensemble(
            self.trajectory, target.t_early, target.t_late, n_bar=self.config.n_bar,
            d_anc=self.config.d_anc, seed=self.config.seed, gap_tol=self.config.gap_tol,
        )
        print_info(
            f"[Runner] searched ensemble on ({target.t_early:.4g}, {target.t_late:.4g}): "
            f"ΔP_g = {format_number(found.delta_pg)}"
        )
        return found.ensemble

    def _scan(self):
        cfg = self.config
        spec = ProbeSpec(
            base_ensemble=self.ensemble,
            sigma=cfg.sigma_state(),
            lam=cfg.lambdas[0],
            d_s=cfg.d_s,
            d_anc=cfg.d_anc,
            perturbation=cfg.perturbation,
            perturbation_seed=cfg.seed,
        )
        self.reports = sweep_lambdas(
            spec,
            self.trajectory,
            cfg.lambdas,
            n_restarts=cfg.n_restarts,
            gap_tol=cfg.gap_tol,
            seed=cfg.seed,
            threshold=cfg.threshold,
            p_samples=cfg.p_samples,
            workers=self.workers,
        )
        for report in self.reports:
            steps = len(report.backflow_intervals)
            print_info(
                f"[Runner] λ={Colors.number(f'{report.lam:g}')}: {Colors.number(steps)} backflow steps, "
                f"consistent {report.consistent}"
            )

    def _write_outputs(self):
        cfg = self.config
        if cfg.csv_path:
            emit_csv(self.reports, cfg.csv_path)
            print_success(f"[Runner] CSV written to {cfg.csv_path}")
        if cfg.json_path:
            emit_json(self.reports, cfg.json_path)
            print_success(f"[Runner] JSON written to {cfg.json_path}")
        if cfg.svg_path:
            emit_svg(self.reports, cfg.svg_path)
            print_success(f"[Runner] SVG written to {cfg.svg_path}")


def run(config, workers=None):
    """Convenience wrapper returning (exit code, runner)."""
    runner = ExperimentRunner(config, workers)
    try:
        code = runner.run()
    except BackflowLabError as e:
        print_error(f"[Runner] {e}")
        code = ExitCode.CONFIG_ERROR if isinstance(e, ValueError) else ExitCode.SOLVER_ERROR
    return code, runner

from __future__ import annotations

import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from congestion_mfc.exception.custom_exception import (
    AuditFailedError,
    FieldFormatError,
    MeanFieldControlException,
)
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.orchestrator.run_config import RunConfig
from congestion_mfc.src.grid.spatial import sample_density
from congestion_mfc.src.grid.torus import SpaceTimeField, VectorField
from congestion_mfc.src.mckv.particles import density_l1_errors, estimate_cost, simulate
from congestion_mfc.src.model.audit import AuditReport, audit_assumptions
from congestion_mfc.src.solver.feedback import feedback_velocity
from congestion_mfc.src.solver.options import SolverReport
from congestion_mfc.src.solver.pdhg import PDHGSolver
from congestion_mfc.src.transport.fokker_planck import PrimalState
from congestion_mfc.src.variational.certificate import (
    Certificate,
    CertificateTolerances,
    check_weak_solution,
)
from congestion_mfc.src.variational.functionals import DualState, eval_B_raw
from congestion_mfc.utils.config_loader import load_config_text
from congestion_mfc.utils.field_io import (
    export_csv,
    read_field,
    read_spatial_slice,
    write_field,
    write_spatial_slice,
)
from congestion_mfc.utils.hashing import generate_run_id
from congestion_mfc.utils.report_io import read_report, write_report
from congestion_mfc.utils.settings import get_settings

PathLike = Union[str, Path]

CONFIG_COPY = "config.yaml"
REPORT_FILE = "report.txt"
CERTIFICATE_FILE = "certificate.txt"
GAP_HISTORY_FILE = "gap_history.csv"
PARTICLE_FILE = "particle_stats.txt"
PARTICLE_DENSITY_FILE = "m_particles.mfc"
FIELD_FILES = {
    "m": "m.mfc",
    "z": "z.mfc",
    "phi": "phi.mfc",
    "gamma": "gamma.mfc",
    "m0": "m0.mfc",
    "u_T": "u_T.mfc",
}


@dataclass
class RunArtifacts:
    run_dir: Path
    primal: PrimalState
    dual: DualState
    report: SolverReport
    audit: AuditReport

    @property
    def certified(self) -> bool:
        return self.report.certificate is not None and self.report.certificate.passed

    @property
    def success(self) -> bool:
        return self.report.converged and self.certified


class RunOrchestrator:
    """
    Batch front door for one run configuration:
      - model audit
      - saddle solve with certificate and artifact directory
      - re-certification of written field files
      - particle cross-check of a solved run
    """

    def __init__(
        self,
        config_path: Optional[str] = None,
        out: Optional[PathLike] = None,
        seed: Optional[int] = None,
        max_iters: Optional[int] = None,
        tol_gap: Optional[float] = None,
    ):
        self.settings = get_settings()
        self.config_path, text = load_config_text(config_path)
        self.config = RunConfig.from_yaml_text(text).with_overrides(
            seed=seed, max_iters=max_iters, tol_gap=tol_gap
        )
        # the echoed config is what identifies the run, overrides included
        self.config_text = self.config.to_yaml()
        self.out = out

        self._init_problem()
        log.info(
            "RunOrchestrator initialized | config=%s | d=%d | nx=%d | nt=%d",
            self.config_path, self.grid.d, self.grid.nx, self.grid.nt,
        )

    @classmethod
    def from_run_dir(cls, run_dir: PathLike, **kwargs) -> "RunOrchestrator":
        return cls(config_path=str(Path(run_dir) / CONFIG_COPY), **kwargs)

    def _init_problem(self):
        cfg = self.config
        self.model = cfg.model
        self.grid = cfg.grid
        try:
            self.m0 = sample_density(self.grid, cfg.data.m0)
            self.u_T = cfg.data.u_T.sample(self.grid)
        except (ValueError, FieldFormatError) as e:
            log.error("Could not sample run data | error=%s", e)
            raise MeanFieldControlException("Could not sample m0 / u_T from the data block", e) from e
        self.tolerances = CertificateTolerances(eps_deg=cfg.solver.eps_deg)

    # ---------------------------------------------------------------- run dir

    def _output_root(self) -> Path:
        root = self.out or self.config.output.root or self.settings.output_root
        return Path(root)

    def _new_run_dir(self) -> Path:
        root = self._output_root()
        root.mkdir(parents=True, exist_ok=True)
        base = generate_run_id(self.config_text)
        run_dir = root / base
        suffix = 1
        while run_dir.exists():
            run_dir = root / f"{base}_{suffix}"
            suffix += 1
        run_dir.mkdir()
        return run_dir

    @staticmethod
    def _new_simulation_dir(run_dir: Path, seed: int, n_particles: int) -> Path:
        """simulate_seed<seed>_np<Np> inside the run, suffixed so earlier checks are kept."""
        base = f"simulate_seed{seed}_np{n_particles}"
        sim_dir = run_dir / base
        suffix = 1
        while sim_dir.exists():
            sim_dir = run_dir / f"{base}_{suffix}"
            suffix += 1
        sim_dir.mkdir()
        return sim_dir

    # ------------------------------------------------------------- operations

    def run_audit(self) -> AuditReport:
        log.info("Audit started | alpha=%s | beta=%s | q=%s", self.model.alpha, self.model.beta, self.model.q)
        report = audit_assumptions(self.model, d=self.grid.d)
        log.info("Audit finished | passed=%s | violations=%d", report.passed, len(report.violations))
        return report

    def run_solve(self) -> RunArtifacts:
        audit = self.run_audit()
        if not audit.passed:
            names = ", ".join(v.assumption for v in audit.violations)
            log.error("Refusing to solve an unaudited model | violations=%s", names)
            raise AuditFailedError(f"model audit failed: {names}", report=audit)

        primal, dual, report = PDHGSolver(
            self.model, self.grid, self.m0, self.u_T, self.config.solver
        ).run()

        run_dir = self._new_run_dir()
        try:
            self._write_artifacts(run_dir, primal, dual, report, audit)
        except Exception as e:
            # a partial directory would pass for a finished run
            shutil.rmtree(run_dir, ignore_errors=True)
            log.error("Writing run artifacts failed | run_dir=%s | error=%s", run_dir, e)
            if isinstance(e, MeanFieldControlException):
                raise
            raise MeanFieldControlException("Could not write run artifacts", e) from e
        return RunArtifacts(run_dir, primal, dual, report, audit)

    def _write_artifacts(
        self,
        run_dir: Path,
        primal: PrimalState,
        dual: DualState,
        report: SolverReport,
        audit: AuditReport,
    ):
        (run_dir / CONFIG_COPY).write_text(self.config_text, encoding="utf-8")
        write_field(run_dir / FIELD_FILES["m"], primal.m)
        write_field(run_dir / FIELD_FILES["z"], primal.z)
        write_field(run_dir / FIELD_FILES["phi"], dual.phi)
        write_field(run_dir / FIELD_FILES["gamma"], dual.gamma)
        write_spatial_slice(run_dir / FIELD_FILES["m0"], self.grid, self.m0)
        write_spatial_slice(run_dir / FIELD_FILES["u_T"], self.grid, self.u_T)
        export_csv(run_dir / "m.csv", primal.m)
        export_csv(run_dir / "phi.csv", dual.phi)

        sections: Dict[str, Dict[str, Any]] = {"run": {"config": str(self.config_path)}}
        sections.update(audit.to_sections())
        sections.update(report.to_sections())
        write_report(run_dir / REPORT_FILE, sections)
        report.write_gap_history(run_dir / GAP_HISTORY_FILE)
        if report.certificate is not None:
            write_report(run_dir / CERTIFICATE_FILE, report.certificate.to_sections())
        log.info("Run artifacts written | run_dir=%s", run_dir)

    def run_check(self, run_dir: PathLike) -> Certificate:
        run_dir = Path(run_dir)
        fields = self._read_fields(run_dir)
        certificate = check_weak_solution(
            self.model,
            fields["phi"],
            fields["m"],
            fields["m0"],
            fields["u_T"],
            z=fields.get("z"),
            tolerances=self.tolerances,
        )
        log.info("Check finished | run_dir=%s | passed=%s", run_dir, certificate.passed)
        return certificate

    def _read_fields(self, run_dir: Path) -> Dict[str, Any]:
        fields: Dict[str, Any] = {}
        for name in ("m", "phi", "z"):
            path = run_dir / FIELD_FILES[name]
            if name == "z" and not path.exists():
                continue
            fields[name] = read_field(path)
        self.grid.require_same(fields["m"].grid)
        self.grid.require_same(fields["phi"].grid)
        if not isinstance(fields["m"], SpaceTimeField) or not isinstance(fields["phi"], SpaceTimeField):
            raise FieldFormatError(f"m and phi must be scalar fields | run_dir={run_dir}")
        if "z" in fields and not isinstance(fields["z"], VectorField):
            raise FieldFormatError(f"z must be a vector field | run_dir={run_dir}")
        fields["m0"] = read_spatial_slice(run_dir / FIELD_FILES["m0"])
        fields["u_T"] = read_spatial_slice(run_dir / FIELD_FILES["u_T"])
        return fields

    def run_simulate(self, run_dir: PathLike) -> Dict[str, Any]:
        run_dir = Path(run_dir)
        fields = self._read_fields(run_dir)
        mckv = self.config.mckv
        m, phi = fields["m"], fields["phi"]

        v = feedback_velocity(self.model, m, phi, eps_deg=self.config.solver.eps_deg)
        result = simulate(self.model, v, fields["m0"], mckv.n_particles, seed=mckv.seed)
        estimate = estimate_cost(
            self.model, result, v, fields["u_T"], density=m if mckv.plug_in_density else None
        )
        l1 = density_l1_errors(result.densities, m)

        z = fields.get("z")
        if z is None:
            primal_value = read_report(run_dir / REPORT_FILE).get("certificate", {}).get("primal_value")
        else:
            primal_value = eval_B_raw(self.model, PrimalState(m, z), fields["u_T"])

        stats = {
            "n_particles": result.n_particles,
            "seed": mckv.seed,
            "plug_in_density": mckv.plug_in_density,
            "cost_mean": estimate.mean,
            "cost_standard_error": estimate.standard_error,
            "n_used": estimate.n_used,
            "n_excluded": estimate.n_excluded,
            "primal_value": primal_value,
            "cost_minus_primal": (
                estimate.mean - primal_value if primal_value is not None else None
            ),
            "density_l1_max": float(np.max(l1)),
            "density_l1_mean": float(np.mean(l1)),
        }
        sim_dir = self._new_simulation_dir(run_dir, mckv.seed, result.n_particles)
        stats["output_dir"] = str(sim_dir)
        write_report(sim_dir / PARTICLE_FILE, {"particles": stats})
        write_field(sim_dir / PARTICLE_DENSITY_FILE, result.densities)
        log.info(
            "Particle check finished | output_dir=%s | cost=%.6e | se=%.2e | l1_max=%.3e",
            sim_dir, estimate.mean, estimate.standard_error, stats["density_l1_max"],
        )
        return stats

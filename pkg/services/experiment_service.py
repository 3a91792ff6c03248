import json
import math
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import ValidationError

from modals.experiment import ExperimentConfig, RunManifest, Subcommand, SolverMode, EstimateScan
from modals.field import Grid, GridField
from modals.variational import DualState
from repositories.artifact_repository import ArtifactRepository
from repositories.field_repository import FieldRepository
from runtime.environment import runtime_env
from services.coefficient_service import CoefficientService, coefficient_service
from services.dualvar_service import DualVariationalService, dualvar_service
from services.errors import ConfigError, DomainError, HelmholtzError, SolverFailure
from services.estimates_service import EstimatesService, estimates_service
from services.farfield_service import FarFieldService, farfield_service
from services.field_service import FieldService, field_service
from services.radial_service import RadialOracleService, radial_service
from services.resolvent_service import ResolventService, resolvent_service
from services.specfun_service import SpecialFunctionService, specfun_service

logger = structlog.get_logger(__name__)


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Nested dict merge; None in `overrides` means "not given"."""
    out = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class ExperimentService:
    """
    Turns an ExperimentConfig into artifacts: dispatches to the numerical services,
    writes CSV/JSON/HF2D files and the run manifest.
    """
    def __init__(self, specfun: SpecialFunctionService, fields: FieldService, resolvent: ResolventService,
                 estimates: EstimatesService, coefficients: CoefficientService,
                 dualvar: DualVariationalService, farfield: FarFieldService,
                 radial: RadialOracleService, field_repo: FieldRepository):
        self.specfun = specfun
        self.fields = fields
        self.resolvent = resolvent
        self.estimates = estimates
        self.coefficients = coefficients
        self.dualvar = dualvar
        self.farfield = farfield
        self.radial = radial
        self.field_repo = field_repo
        self._handlers: Dict[Subcommand, Callable[[ExperimentConfig, ArtifactRepository], None]] = {
            Subcommand.KERNEL: self._run_kernel,
            Subcommand.RESOLVE: self._run_resolve,
            Subcommand.ESTIMATES: self._run_estimates,
            Subcommand.SOLVE: self._run_solve,
            Subcommand.FARFIELD: self._run_farfield,
            Subcommand.ORACLE: self._run_oracle,
            Subcommand.DECOMP: self._run_decomp,
        }

    # --- configuration ---

    def parse_config(self, path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """
        Validated configuration from an optional JSON file and flag overrides
        (flags win). Errors name the offending field in dotted form.
        """
        data: Dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(str(exc), field="config")
            if not isinstance(data, dict):
                raise ConfigError("top level must be a JSON object", field="config")
        data = _merge(data, overrides or {})
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as exc:
            first = exc.errors()[0]
            location = ".".join(str(part) for part in first["loc"]) or None
            raise ConfigError(first["msg"], field=location)

    def output_dir(self, config: ExperimentConfig) -> Path:
        return Path(config.output_dir) if config.output_dir else runtime_env.output_dir / config.subcommand.value

    # --- run ---

    def run(self, config: ExperimentConfig) -> RunManifest:
        """Runs one experiment; failures are recorded in the manifest, never raised."""
        started = time.perf_counter()
        artifacts = ArtifactRepository(self.output_dir(config), self.field_repo)
        manifest = RunManifest(config=config.model_dump(mode="json"))
        logger.info("run started", subcommand=config.subcommand.value, output_dir=str(artifacts.output_dir))
        try:
            self._handlers[config.subcommand](config, artifacts)
        except HelmholtzError as exc:
            manifest = self._failed(manifest, artifacts, exc)
        except ValueError as exc:
            # e.g. a pydantic ValidationError raised deep inside a handler
            manifest = self._failed(manifest, artifacts, DomainError(str(exc), cause=type(exc).__name__))
        manifest = manifest.model_copy(update={"wall_clock_seconds": time.perf_counter() - started})
        artifacts.write_manifest(manifest)
        return manifest.model_copy(update={"artifacts": sorted(artifacts.records, key=lambda r: r.path)})

    def _failed(self, manifest: RunManifest, artifacts: ArtifactRepository, exc: HelmholtzError) -> RunManifest:
        failure: Dict[str, Any] = {"type": type(exc).__name__, "detail": exc.detail,
                                   "context": {k: str(v) for k, v in exc.context.items()}}
        report = getattr(exc, "report", None)
        if report is not None:
            artifacts.write_json("failure_report.json", report if not isinstance(report, list) else {"rows": report})
        logger.error("run failed", error=type(exc).__name__, detail=exc.detail)
        return manifest.model_copy(update={"status": "failed", "exit_code": exc.exit_code, "failure": failure})

    def _grid(self, config: ExperimentConfig) -> Grid:
        return Grid(n=config.grid.n, h=config.grid.h)

    # --- subcommands ---

    def _run_kernel(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        r = np.geomspace(config.r_range[0], config.r_range[1], config.kernel_points)
        phi = self.specfun.eval_phi(r)
        ratio = np.abs(phi) / self.specfun.bound_profile(r)
        artifacts.write_csv("kernel.csv", ["r", "re_phi", "im_phi", "bound_ratio"],
                            zip(r.tolist(), phi.real.tolist(), phi.imag.tolist(), ratio.tolist()))

    def _gaussian_source(self, grid: Grid) -> GridField:
        return GridField.from_function(grid, lambda x1, x2: np.exp(-0.5 * (x1 * x1 + x2 * x2)))

    def _default_annuli(self, grid: Grid) -> List[Tuple[float, float]]:
        q = 0.25 * grid.side
        return [(0.2 * q, 0.3 * q), (0.5 * q, 0.6 * q), (0.8 * q, q)]

    def _export_annuli(self, u: GridField, annuli: List[Tuple[float, float]], artifacts: ArtifactRepository,
                       stem: str):
        for i, (r_in, r_out) in enumerate(annuli):
            artifacts.write_csv(f"{stem}_annulus_{i}.csv", ["x1", "x2", "re", "im"],
                                self.fields.annulus_rows(u, r_in, r_out))

    def _run_resolve(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        f = self.field_repo.load(config.input_path) if config.input_path else self._gaussian_source(self._grid(config))
        u = self.resolvent.apply_resolvent_kernel(f, config.origin_rule)
        quarter = 0.25 * f.grid.side
        cross = self.resolvent.apply_resolvent_extrapolated(f)
        report = {
            "spectral_residual": self.resolvent.spectral_residual(u, f),
            "radiation_defect": self.resolvent.radiation_defect(u, max(quarter - 2.0 * math.pi, 0.0), quarter),
            "backend_difference": self.resolvent.relative_difference(cross, u),
            "support_violation": bool(u.metadata.get("support_violation", False)),
            "origin_rule": config.origin_rule,
            "n": f.grid.n,
            "h": f.grid.h,
        }
        artifacts.write_field("resolved.hf2d", u)
        artifacts.write_json("resolve_report.json", report)
        if config.annuli:
            self._export_annuli(u, config.annuli, artifacts, "resolved")

    def _run_estimates(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        summary: Dict[str, Any] = {}
        decomp = None
        if {EstimateScan.DYADIC, EstimateScan.TRUNCATED, EstimateScan.VANISHING} & set(config.scans):
            decomp = self.resolvent.build_decomposition(self._grid(config), config.origin_rule)
        for scan in config.scans:
            if scan is EstimateScan.DYADIC:
                result = self.estimates.dyadic_norm_scan(decomp, config.j_range, seed=config.seed)
                artifacts.write_csv("dyadic.csv", ["j", "sup_norm", "ratio"],
                                    [(r.j, r.sup_norm, r.ratio) for r in result.rows])
                summary["dyadic"] = {"sup_slope": result.sup_slope, "ratio_slope": result.ratio_slope,
                                     "excluded": result.excluded}
            elif scan is EstimateScan.TRUNCATED:
                result = self.estimates.truncated_phi1_scan(decomp, config.truncation_radii, config.p, seed=config.seed)
                artifacts.write_csv("truncated.csv", ["radius", "ratio"], [(r.radius, r.ratio) for r in result.rows])
                summary["truncated"] = {"p": result.p, "lambda_p": result.lambda_p, "exponent": result.exponent,
                                        "flagged": result.flagged}
            elif scan is EstimateScan.ENDPOINT:
                result = self.estimates.endpoint_counterexample(config.k_values)
                artifacts.write_csv("endpoint.csv", ["k", "sup_modulus", "sup_real", "l1_norm", "flagged"],
                                    [(r.k, r.sup_modulus, r.sup_real, r.l1_norm, r.flagged) for r in result.rows])
                summary["endpoint"] = {"slope": result.slope, "real_slope": result.real_slope,
                                       "target_slope": result.target_slope}
            elif scan is EstimateScan.BOUNDEDNESS:
                result = self.estimates.boundedness_probe(config.p_values, config.family_sizes, seed=config.seed)
                artifacts.write_csv("boundedness.csv", ["p", "family_size", "worst_ratio"],
                                    [(r.p, r.family_size, r.worst_ratio) for r in result.rows])
                summary["boundedness"] = {"growth": {str(p): g for p, g in result.growth.items()},
                                          "stable": result.stable}
            elif scan is EstimateScan.VANISHING:
                result = self.estimates.quadratic_form_vanishing(decomp, config.dilations, config.p)
                artifacts.write_csv("vanishing.csv", ["dilation", "concentration", "phi1_form", "phi2_form"],
                                    [(r.dilation, r.concentration, r.phi1_form, r.phi2_form) for r in result.rows])
        artifacts.write_json("estimates_summary.json", summary)

    def _run_solve(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        grid = self._grid(config)
        Q = self.coefficients.build(config.q_preset, grid, config.q_params)
        if config.mode is SolverMode.FIXED_POINT:
            u0 = GridField.from_function(grid, lambda x1, x2: np.exp(-(x1 * x1 + x2 * x2)))
            u, report = self.dualvar.fixed_point_solve(u0, Q, config.p, config.damping, config.tol,
                                                       config.max_iter, config.origin_rule)
        elif config.mode is SolverMode.DUAL:
            if config.p < 6.0:
                raise DomainError("the dual iteration needs p >= 6", p=config.p)
            v0 = DualState(v=self.dualvar.initial_bump(grid, width=max(0.25, 2.0 * grid.h)), p=config.p)
            _, u, report = self.dualvar.dual_power_iterate(v0, Q, config.tol, config.max_iter, config.damping,
                                                           config.origin_rule)
        else:
            _, u, report = self.dualvar.periodic_solve(Q, config.p, config.tol, config.max_iter, config.damping,
                                                       origin_rule=config.origin_rule)
        artifacts.write_json("solve_report.json", report)
        if not report.converged:
            raise SolverFailure(f"{report.method} solve ended with status {report.status.value}", report=report)
        artifacts.write_field("solution.hf2d", u)

    def _run_farfield(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        if config.input_path is None:
            raise ConfigError("a field dump is required", field="input_path")
        field = self.field_repo.load(config.input_path)
        grid = field.grid
        if config.nonlinear:
            Q = self.coefficients.build(config.q_preset, grid, config.q_params)
            u = field.with_samples(field.samples.real)
            w = u.samples.real
            trace = self.farfield.hat_on_circle(u.with_samples(Q.values * np.abs(w) ** (config.p - 2.0) * w),
                                                config.theta_count)
        else:
            trace = self.farfield.hat_on_circle(field, config.theta_count)
            u = self.resolvent.apply_R(field, config.origin_rule) if field.is_real(tol=1e-14) \
                else self.resolvent.apply_resolvent_kernel(field, config.origin_rule)

        artifacts.write_csv("trace.csv", ["theta", "re", "im"],
                            zip(trace.angles.tolist(), trace.values.real.tolist(), trace.values.imag.tolist()))
        annuli = config.annuli or self._default_annuli(grid)
        errors = [self.farfield.annulus_error(u, trace, r_in, r_out) for r_in, r_out in annuli]
        artifacts.write_csv("annulus_errors.csv", ["r_in", "r_out", "sup_error", "l2_error"],
                            [(e.r_in, e.r_out, e.sup_error, e.l2_error) for e in errors])
        radii = config.cesaro_radii or [
            r for r in (0.25 * grid.side / 8.0 * 2 ** k for k in range(4)) if r > self.farfield.INNER_CUTOFF
        ]
        cesaro = self.farfield.cesaro_error(u, trace, radii)
        artifacts.write_csv("cesaro.csv", ["radius", "error"], [(c.radius, c.error) for c in cesaro])

        report: Dict[str, Any] = {"conjugate_symmetry_defect": trace.conjugate_symmetry_defect()}
        r2 = min(0.25 * grid.side, 80.0)
        if r2 > 20.0:
            report["decay_fit"] = self.farfield.decay_fit(u, (20.0, r2)).model_dump(mode="json")
        artifacts.write_json("farfield_report.json", report)

    def _run_oracle(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        closure = self.coefficients.closure(config.q_preset, config.q_params)
        try:
            q_profile = self.coefficients.radial_profile(closure)
        except DomainError as exc:
            raise ConfigError(exc.detail, field="q_preset")
        result = self.radial.shoot_solve(q_profile, config.p, config.a_bracket, config.r_max)
        profile = self.radial.integrate_radial(result.amplitude_at_origin, q_profile, config.p, config.r_max)
        artifacts.write_csv("oracle_profile.csv", ["r", "u", "du"],
                            zip(profile.r.tolist(), profile.u.tolist(), profile.du.tolist()))
        artifacts.write_json("oracle_report.json", result)

    def _run_decomp(self, config: ExperimentConfig, artifacts: ArtifactRepository):
        decomp = self.resolvent.build_decomposition(self._grid(config), config.origin_rule)
        bounds = self.resolvent.fit_decomposition_bounds(decomp)
        artifacts.write_field("phi1.hf2d", decomp.phi1)
        artifacts.write_field("phi2.hf2d", decomp.phi2)
        artifacts.write_json("decomp_report.json", bounds)


# --- Create Singleton Instance ---
experiment_service = ExperimentService(
    specfun=specfun_service, fields=field_service, resolvent=resolvent_service, estimates=estimates_service,
    coefficients=coefficient_service, dualvar=dualvar_service, farfield=farfield_service,
    radial=radial_service, field_repo=FieldRepository(),
)

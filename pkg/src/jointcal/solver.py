"""Levenberg-Marquardt over the 15-parameter calibration block."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .camera import Z_MIN
from .errors import InsufficientCorrespondences, InvalidParameters
from .residuals import N_INTRINSICS, N_PARAMS, ParamBlock, as_correspondence_set

log = logging.getLogger(__name__)

MIN_CORRESPONDENCES_FREE = 8
MIN_CORRESPONDENCES_FROZEN = 3
MAX_DAMPING = 1e32
MIN_DIAGONAL = 1e-6


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-10
    parameter_tolerance: float = 1e-12
    objective_tolerance: float = 1e-12
    initial_damping: float = 1e-4
    #: Cauchy scale in pixels; ``None`` or 0 selects the plain squared loss
    cauchy_scale: float | None = 1.0
    #: principal-point prior width in pixels; ``None`` or ``inf`` disables it
    prior_sigma: float | None = 10.0
    freeze_intrinsics: bool = False
    damping_increase: float = 2.0
    damping_decrease: float = 1.0 / 3.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("gradient_tolerance", "parameter_tolerance", "objective_tolerance", "initial_damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.prior_sigma is not None and not self.prior_sigma > 0:
            raise ValueError("prior_sigma must be positive")

    @property
    def loss_scale(self) -> float:
        return float(self.cauchy_scale) if self.cauchy_scale else 0.0

    @property
    def prior_enabled(self) -> bool:
        return self.prior_sigma is not None and math.isfinite(self.prior_sigma)


@dataclass(frozen=True)
class IterationRecord:
    objective: float
    damping: float
    step_norm: float
    excluded_count: int
    accepted: bool


@dataclass
class SolveReport:
    initial_objective: float
    final_objective: float
    iterations_run: int
    termination: Termination
    per_iteration: list[IterationRecord] = field(default_factory=list)
    message: str = ""
    n_correspondences: int = 0
    excluded_count: int = 0

    def accepted_objectives(self) -> list[float]:
        return [self.initial_objective] + [r.objective for r in self.per_iteration if r.accepted]

    def to_dict(self) -> dict:
        return {
            "initial_objective": self.initial_objective,
            "final_objective": self.final_objective,
            "iterations_run": self.iterations_run,
            "termination": self.termination.value,
            "message": self.message,
            "n_correspondences": self.n_correspondences,
            "excluded_count": self.excluded_count,
            "per_iteration": [
                {
                    "objective": r.objective,
                    "damping": r.damping,
                    "step_norm": r.step_norm,
                    "excluded_count": r.excluded_count,
                    "accepted": r.accepted,
                }
                for r in self.per_iteration
            ],
        }


def _prior_terms(params: ParamBlock, c0, opts: SolveOptions):
    """Prior residual (2,) and its contribution to H and g."""
    H = np.zeros((N_PARAMS, N_PARAMS))
    g = np.zeros(N_PARAMS)
    if c0 is None or not opts.prior_enabled:
        return 0.0, H, g
    s = float(opts.prior_sigma)
    r = (params.intrinsics.principal_point - np.asarray(c0, dtype=float)) / s
    H[2, 2] = H[3, 3] = 1.0 / (s * s)
    g[2] = r[0] / s
    g[3] = r[1] / s
    return float(r @ r), H, g


def evaluate_objective(correspondences, params: ParamBlock, opts: SolveOptions | None = None, c0=None) -> float:
    """Sum of robustified squared residual norms plus the principal-point prior.

    The prior is included only when ``c0`` is given and enabled in ``opts``.
    """
    return _objective(as_correspondence_set(correspondences), params, opts or SolveOptions(), c0)[0]


def _objective(cs, params: ParamBlock, opts: SolveOptions, c0):
    intr, R, t = params.arrays()
    cost, n_excl = _backend.kernels.robust_cost(cs.points, cs.pixels, cs.weights, intr, R, t, opts.loss_scale, Z_MIN)
    prior, _, _ = _prior_terms(params, c0, opts)
    return cost + prior, n_excl


def _linearize(cs, params: ParamBlock, opts: SolveOptions, c0):
    intr, R, t = params.arrays()
    H, g, cost, n_used, n_excl = _backend.kernels.accumulate_normal_equations(
        cs.points, cs.pixels, cs.weights, intr, R, t, opts.loss_scale, Z_MIN
    )
    prior, Hp, gp = _prior_terms(params, c0, opts)
    return H + Hp, g + gp, cost + prior, n_used, n_excl


def _param_norm(params: ParamBlock) -> float:
    v = np.concatenate([params.intrinsics.as_vector(), params.extrinsics.rotation.as_array(), params.extrinsics.t])
    return float(np.linalg.norm(v))


def solve(correspondences, initial: ParamBlock, c0=None, opts: SolveOptions | None = None):
    """Minimize the robust reprojection objective starting from ``initial``.

    Returns ``(params, report)``. On numerical failure the input parameters
    are returned unchanged with ``report.termination == NumericalFailure``.
    """
    opts = opts or SolveOptions()
    cs = as_correspondence_set(correspondences)
    free = initial.free_mask(opts.freeze_intrinsics)
    intr_free = bool(free[:N_INTRINSICS].any())

    params = initial
    H, g, obj, n_used, n_excl = _linearize(cs, params, opts, c0)
    need = MIN_CORRESPONDENCES_FREE if intr_free else MIN_CORRESPONDENCES_FROZEN
    if n_used < need:
        raise InsufficientCorrespondences(f"{n_used} usable correspondences, need at least {need}")

    report = SolveReport(obj, obj, 0, Termination.MAX_ITERATIONS, n_correspondences=len(cs), excluded_count=n_excl)
    if not (np.isfinite(obj) and np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        report.termination = Termination.NUMERICAL_FAILURE
        report.message = "non-finite objective or derivatives at the initial point"
        return initial, report

    idx = np.nonzero(free)[0]
    lam = opts.initial_damping
    for it in range(1, opts.max_iterations + 1):
        report.iterations_run = it
        gf = g[idx]
        if np.max(np.abs(gf), initial=0.0) <= opts.gradient_tolerance:
            report.per_iteration.append(IterationRecord(obj, lam, 0.0, n_excl, False))
            report.termination = Termination.CONVERGED
            report.message = "gradient tolerance reached"
            break
        Hf = H[np.ix_(idx, idx)]
        diag = np.clip(np.diag(Hf), MIN_DIAGONAL, None)
        try:
            L = np.linalg.cholesky(Hf + lam * np.diag(diag))
            step_f = -np.linalg.solve(L.T, np.linalg.solve(L, gf))
        except np.linalg.LinAlgError:
            step_f = None
        if step_f is None or not np.all(np.isfinite(step_f)):
            report.per_iteration.append(IterationRecord(obj, lam, math.nan, n_excl, False))
            lam *= opts.damping_increase
            if lam > MAX_DAMPING:
                report.termination = Termination.NUMERICAL_FAILURE
                report.message = "normal equations singular beyond damping recovery"
                report.final_objective = report.initial_objective
                return initial, report
            continue
        step_norm = float(np.linalg.norm(step_f))
        if step_norm <= opts.parameter_tolerance * (_param_norm(params) + opts.parameter_tolerance):
            report.per_iteration.append(IterationRecord(obj, lam, step_norm, n_excl, False))
            report.termination = Termination.CONVERGED
            report.message = "parameter tolerance reached"
            break
        step = np.zeros(N_PARAMS)
        step[idx] = step_f
        try:
            cand = params.updated(step)
        except InvalidParameters:
            cand = None
        new_obj = math.inf
        if cand is not None:
            new_obj, cand_excl = _objective(cs, cand, opts, c0)
        if np.isfinite(new_obj) and new_obj < obj:
            rel = (obj - new_obj) / max(obj, np.finfo(float).tiny)
            params, obj = cand, new_obj
            report.per_iteration.append(IterationRecord(obj, lam, step_norm, cand_excl, True))
            lam = max(lam * opts.damping_decrease, 1e-16)
            if rel < opts.objective_tolerance:
                report.termination = Termination.CONVERGED
                report.message = "objective tolerance reached"
                break
            H, g, _, n_used, n_excl = _linearize(cs, params, opts, c0)
            if n_used < need:
                report.termination = Termination.NUMERICAL_FAILURE
                report.message = f"only {n_used} usable correspondences remain in front of the camera"
                report.final_objective = report.initial_objective
                return initial, report
        else:
            report.per_iteration.append(IterationRecord(obj, lam, step_norm, n_excl, False))
            lam *= opts.damping_increase
            if lam > MAX_DAMPING:
                report.termination = Termination.NUMERICAL_FAILURE
                report.message = "damping exceeded its upper bound without an acceptable step"
                report.final_objective = report.initial_objective
                return initial, report
    report.final_objective = obj
    report.excluded_count = n_excl
    log.debug("solve: %s after %d iterations, objective %.6g -> %.6g",
              report.termination.value, report.iterations_run, report.initial_objective, obj)
    return params, report

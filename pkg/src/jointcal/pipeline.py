"""Coupled refinement: re-acquire correspondences, re-solve, repeat.

Iterations ``1..n_intr`` optimize intrinsics and extrinsics jointly; the
remaining iterations up to ``n_total`` hold the intrinsics fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import JointCalError, RefinementFailed
from .providers import CorrespondenceProvider, ProviderRequest
from .residuals import CorrespondenceSet, ParamBlock
from .solver import SolveOptions, SolveReport, Termination, evaluate_objective, solve

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefinementConfig:
    n_intr: int = 5
    n_total: int = 11
    joint_options: SolveOptions = SolveOptions()
    extrinsic_options: SolveOptions = SolveOptions(freeze_intrinsics=True)
    #: keep earlier iterations' correspondences instead of replacing them
    accumulate: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_intr <= self.n_total:
            raise ValueError(f"need 1 <= n_intr <= n_total, got n_intr={self.n_intr}, n_total={self.n_total}")

    def options_for(self, iteration: int) -> SolveOptions:
        """Solver options for the 1-based ``iteration``."""
        if iteration <= self.n_intr:
            return self.joint_options
        return replace(self.extrinsic_options, freeze_intrinsics=True)

    def with_prior_sigma(self, sigma) -> "RefinementConfig":
        return replace(
            self,
            joint_options=replace(self.joint_options, prior_sigma=sigma),
            extrinsic_options=replace(self.extrinsic_options, prior_sigma=sigma),
        )


@dataclass
class TraceEntry:
    iteration: int
    params: ParamBlock
    objective_start: float
    objective: float
    n_correspondences: int
    provider_metadata: dict
    report: SolveReport
    intrinsics_frozen: bool


@dataclass
class RefinementTrace:
    entries: list[TraceEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def last_params(self) -> ParamBlock | None:
        return self.entries[-1].params if self.entries else None

    def summary(self) -> list[dict]:
        return [
            {
                "iteration": e.iteration,
                "objective_start": e.objective_start,
                "objective": e.objective,
                "n_correspondences": e.n_correspondences,
                "intrinsics_frozen": e.intrinsics_frozen,
                "termination": e.report.termination.value,
                "solver_iterations": e.report.iterations_run,
                "provider": e.provider_metadata,
            }
            for e in self.entries
        ]


def _concat(sets: list[CorrespondenceSet]) -> CorrespondenceSet:
    return CorrespondenceSet(
        np.vstack([s.points for s in sets]),
        np.vstack([s.pixels for s in sets]),
        np.concatenate([s.weights for s in sets]),
        np.concatenate([s.frame_ids for s in sets]),
    )


def run_refinement(initial: ParamBlock, c0, provider: CorrespondenceProvider,
                   config: RefinementConfig | None = None, frame_ids=()) -> tuple[ParamBlock, RefinementTrace]:
    """Run the coupled correspondence/optimization loop.

    Raises :class:`RefinementFailed` (carrying the 1-based iteration and the
    trace of completed iterations) if acquisition or a solve fails.
    """
    config = config or RefinementConfig()
    trace = RefinementTrace()
    params = initial
    history: list[CorrespondenceSet] = []
    for it in range(1, config.n_total + 1):
        opts = config.options_for(it)
        try:
            batch = provider(ProviderRequest(it - 1, params, tuple(frame_ids)))
            cs = batch.correspondences
            if config.accumulate:
                history.append(cs)
                cs = _concat(history)
            start = evaluate_objective(cs, params, opts, c0)
            new_params, report = solve(cs, params, c0, opts)
        except JointCalError as exc:
            raise RefinementFailed(it, exc, trace) from exc
        if report.termination is Termination.NUMERICAL_FAILURE:
            raise RefinementFailed(it, report.message, trace)
        params = new_params
        trace.entries.append(TraceEntry(
            it, params, start, report.final_objective, len(cs), dict(batch.metadata), report,
            opts.freeze_intrinsics,
        ))
        log.info("iteration %d/%d: %d correspondences, objective %.6g -> %.6g (%s)",
                 it, config.n_total, len(cs), start, report.final_objective, report.termination.value)
    return params, trace

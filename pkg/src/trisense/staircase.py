"""Adaptive 2IFC discrimination protocol: interval planning, Weber-law step
adaptation, trial scheduling and phase sequencing.

The protocol first sweeps a fixed grid of comparison stimuli above the lowest
deliverable concentration. Once a discrimination threshold is found, the ratio
of threshold increment to pedestal (the Weber constant) predicts where the
next threshold should sit, and a coarser grid is planned around that
prediction. Phases end when the prediction leaves the device's operating
range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Optional

import numpy as np

from .psychometric import (
    PFFamily,
    PsychometricFit,
    TrialRecord,
    PresentationOrder,
    eval_pf,
    fit_pf,
    threshold_at,
    PsychometricError,
)


class StaircaseError(Exception):
    pass


class StepTooLargeError(StaircaseError):
    pass


class NonPositiveInputError(StaircaseError):
    pass


class EmptyPlanError(StaircaseError):
    pass


@dataclass(frozen=True)
class DeviceRange:
    """Concentration interval the olfactory display can deliver accurately."""

    c_min: float = 1.2   # ppm
    c_max: float = 11.2  # ppm

    def __post_init__(self) -> None:
        if not self.c_min < self.c_max:
            raise ValueError("c_min must be below c_max")


DEFAULT_RANGE = DeviceRange()

# anchors of the three initial sub-intervals; with the default step of 0.4
# the third one tops out exactly at the device maximum
_INITIAL_ANCHORS = (None, 4.8, 8.0)  # None means the device minimum

DEFAULT_STEP = 0.4
DEFAULT_TRIALS_PER_PAIR = 10
DEFAULT_MAX_STIMULI = 10
DEFAULT_GRID = 0.1

# stimulus timing carried for hardware integrations; no effect on planning
ITI_SECONDS = 4.0
SED_SECONDS = 0.5


@dataclass(frozen=True)
class StaircasePlan:
    pedestal: float
    stimuli: tuple[float, ...]
    step: float
    trials_per_pair: int = DEFAULT_TRIALS_PER_PAIR
    phase_index: int = 0
    adapted: bool = False    # planned from a Weber prediction, not a fixed grid
    terminal: bool = False
    iti_s: float = ITI_SECONDS
    sed_s: float = SED_SECONDS

    @property
    def n_trials(self) -> int:
        return len(self.stimuli) * self.trials_per_pair


def initial_subintervals(device: DeviceRange = DEFAULT_RANGE,
                         s: float = DEFAULT_STEP) -> tuple[list[float], ...]:
    """Three mutually exclusive 8-stimulus grids covering the device range."""
    if s <= 0:
        raise NonPositiveInputError("step must be positive")
    out = []
    for anchor in _INITIAL_ANCHORS:
        base = device.c_min if anchor is None else anchor
        grid = [base + i * s for i in range(1, 9)]
        if grid[-1] > device.c_max + 1e-9:
            raise StepTooLargeError(
                f"stimulus {grid[-1]:.3f} exceeds device maximum {device.c_max}")
        out.append(grid)
    return tuple(out)


def weber_constant(pedestal: float, jnd: float) -> float:
    """Ratio of the discrimination increment to its pedestal."""
    if pedestal <= 0 or jnd <= 0:
        raise NonPositiveInputError("pedestal and jnd must be positive")
    return jnd / pedestal


def weber_predict(pedestal: float, k: float) -> float:
    """Stimulus predicted to be just discriminable from the pedestal."""
    if pedestal <= 0 or k < 0:
        raise NonPositiveInputError("pedestal must be positive, k non-negative")
    return pedestal * (1.0 + k)


def adapted_phase_plan(pedestal: float, k: float,
                       device: DeviceRange = DEFAULT_RANGE,
                       max_stimuli: int = DEFAULT_MAX_STIMULI,
                       grid: float = DEFAULT_GRID,
                       trials_per_pair: int = DEFAULT_TRIALS_PER_PAIR,
                       phase_index: int = 1) -> StaircasePlan:
    """Plan the next phase around the Weber prediction.

    The step is the smallest grid multiple that still covers the prediction
    within max_stimuli - 1 increments; stimuli above the device maximum are
    clamped to it (and deduplicated). A prediction beyond the device maximum
    yields a terminal (empty) plan: the stimulus cannot be delivered.
    """
    prediction = weber_predict(pedestal, k)
    if prediction > device.c_max + 1e-9:
        return StaircasePlan(pedestal, (), 0.0, trials_per_pair, phase_index,
                             adapted=True, terminal=True)
    reach = prediction - pedestal
    step = grid * max(1, math.ceil(reach / (grid * (max_stimuli - 1)) - 1e-12))
    stimuli: list[float] = []
    for i in range(1, max_stimuli + 1):
        value = min(pedestal + i * step, device.c_max)
        if stimuli and value <= stimuli[-1] + 1e-12:
            continue
        stimuli.append(value)
    return StaircasePlan(pedestal, tuple(stimuli), step, trials_per_pair,
                         phase_index, adapted=True)


def initial_phase_plan(device: DeviceRange = DEFAULT_RANGE,
                       s: float = DEFAULT_STEP, subinterval: int = 0,
                       trials_per_pair: int = DEFAULT_TRIALS_PER_PAIR) -> StaircasePlan:
    """Plan one of the three pre-planned fixed-step phases (pedestal = c_min)."""
    grids = initial_subintervals(device, s)
    return StaircasePlan(device.c_min, tuple(grids[subinterval]), s,
                         trials_per_pair, phase_index=subinterval)


@dataclass
class SessionState:
    """One observer's progress through the adaptive protocol."""

    plan: StaircasePlan
    device: DeviceRange = DEFAULT_RANGE
    initial_step: float = DEFAULT_STEP
    schedule: list[tuple[float, PresentationOrder]] = field(default_factory=list)
    responses: list[TrialRecord] = field(default_factory=list)
    found_thresholds: list[float] = field(default_factory=list)
    found_jnds: list[float] = field(default_factory=list)
    weber_k: Optional[float] = None
    subinterval_index: int = 0   # which of the three initial grids is active
    in_adapted_phase: bool = False
    terminal: bool = False

    @property
    def complete(self) -> bool:
        return len(self.responses) >= len(self.schedule)


def schedule_trials(plan: StaircasePlan, seed: int,
                    device: DeviceRange = DEFAULT_RANGE,
                    initial_step: float = DEFAULT_STEP) -> SessionState:
    """Random presentation schedule: trials_per_pair repeats per stimulus in
    shuffled order, with the pedestal/varying order drawn uniformly per trial."""
    if plan.terminal or not plan.stimuli:
        raise EmptyPlanError("cannot schedule a terminal or empty plan")
    rng = np.random.default_rng(seed)
    entries = [(stim, PresentationOrder.PEDESTAL_FIRST if rng.random() < 0.5
                else PresentationOrder.VARYING_FIRST)
               for stim in plan.stimuli for _ in range(plan.trials_per_pair)]
    perm = rng.permutation(len(entries))
    schedule = [entries[i] for i in perm]
    return SessionState(plan=plan, device=device, initial_step=initial_step,
                        schedule=schedule,
                        subinterval_index=0 if plan.adapted else plan.phase_index,
                        in_adapted_phase=plan.adapted)


def record_response(session: SessionState, correct: bool) -> TrialRecord:
    """Append the observer's answer for the next scheduled trial."""
    i = len(session.responses)
    if i >= len(session.schedule):
        raise StaircaseError("all scheduled trials already answered")
    stimulus, order = session.schedule[i]
    rec = TrialRecord(stimulus, session.plan.pedestal, correct, order)
    session.responses.append(rec)
    return rec


class AdvanceAction(str, Enum):
    ADAPTED_PHASE = "adapted_phase"
    NEXT_SUBINTERVAL = "next_subinterval"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class AdvanceResult:
    action: AdvanceAction
    plan: Optional[StaircasePlan]
    threshold: Optional[float] = None
    jnd: Optional[float] = None
    weber_k: Optional[float] = None


def advance(session: SessionState, fit: Optional[PsychometricFit]) -> AdvanceResult:
    """Decide the next phase once all scheduled trials are answered.

    A threshold counts as found when the fit is identifiable and the 75%
    point lies above the pedestal but does not exceed the largest stimulus
    of the phase. Finding one spawns an adapted phase from the new pedestal;
    otherwise the next pre-planned grid is used, and when those are exhausted
    (or the Weber prediction leaves the device range) the session is terminal.
    """
    if not session.complete:
        raise StaircaseError("scheduled trials not yet answered")
    threshold = None
    if fit is not None:
        t = threshold_at(fit, 0.75)
        if session.plan.pedestal < t <= max(session.plan.stimuli) + 1e-9:
            threshold = t
    if threshold is not None:
        pedestal = session.plan.pedestal
        jnd = threshold - pedestal
        k = weber_constant(pedestal, jnd)
        session.found_thresholds.append(threshold)
        session.found_jnds.append(jnd)
        session.weber_k = k
        plan = adapted_phase_plan(threshold, k, session.device,
                                  trials_per_pair=session.plan.trials_per_pair,
                                  phase_index=session.plan.phase_index + 1)
        session.in_adapted_phase = True
        if plan.terminal:
            session.terminal = True
            return AdvanceResult(AdvanceAction.TERMINAL, plan, threshold, jnd, k)
        return AdvanceResult(AdvanceAction.ADAPTED_PHASE, plan, threshold, jnd, k)
    if not session.in_adapted_phase and session.subinterval_index < 2:
        nxt = session.subinterval_index + 1
        plan = initial_phase_plan(session.device, session.initial_step, nxt,
                                  session.plan.trials_per_pair)
        return AdvanceResult(AdvanceAction.NEXT_SUBINTERVAL, plan)
    session.terminal = True
    return AdvanceResult(AdvanceAction.TERMINAL, None)


# --- synthetic end-to-end sessions ------------------------------------------

@dataclass(frozen=True)
class SimulatedSession:
    thresholds: tuple[float, ...]
    jnds: tuple[float, ...]
    pedestals: tuple[float, ...]     # pedestal of the phase that found each threshold
    found_steps: tuple[float, ...]   # grid step of the phase that found each threshold
    weber_k: Optional[float]
    phase_steps: tuple[float, ...]   # grid step of every attempted phase
    n_phases: int
    n_trials: int


def true_thresholds(k: float, device: DeviceRange = DEFAULT_RANGE) -> list[float]:
    """Ground-truth threshold ladder for an ideal observer with constant k."""
    out = []
    pedestal = device.c_min
    while True:
        nxt = weber_predict(pedestal, k)
        if nxt > device.c_max + 1e-9:
            return out
        out.append(nxt)
        pedestal = nxt


def simulate_session(observer_k: float, seed: int, beta: float = 1.12,
                     device: DeviceRange = DEFAULT_RANGE,
                     s: float = DEFAULT_STEP,
                     trials_per_pair: int = DEFAULT_TRIALS_PER_PAIR,
                     family: PFFamily = PFFamily.LOGISTIC) -> SimulatedSession:
    """Run the full protocol against a synthetic constant-k logistic observer.

    The observer answers each comparison correctly with probability psi(x)
    for a logistic function located at the Weber prediction from the current
    pedestal, so its ground-truth thresholds follow true_thresholds(k).
    """
    rng = np.random.default_rng(seed)
    plan = initial_phase_plan(device, s, 0, trials_per_pair)
    session = schedule_trials(plan, int(rng.integers(2**31)), device, s)
    steps: list[float] = []
    found_t: list[float] = []
    found_j: list[float] = []
    found_step: list[float] = []
    found_ped: list[float] = []
    k_latest: Optional[float] = None
    n_trials = 0
    while True:
        observer = PsychometricFit(
            family, weber_predict(session.plan.pedestal, observer_k), beta,
            0.5, 0.0, 0.0, 0)
        for stimulus, _ in session.schedule[len(session.responses):]:
            p = eval_pf(observer, stimulus)
            record_response(session, bool(rng.random() < p))
            n_trials += 1
        steps.append(session.plan.step)
        try:
            fit = fit_pf(session.responses, family)
        except PsychometricError:
            fit = None
        result = advance(session, fit)
        if result.threshold is not None:
            found_t.append(result.threshold)
            found_j.append(result.jnd)
            found_step.append(session.plan.step)
            found_ped.append(session.plan.pedestal)
            k_latest = result.weber_k
        if result.action is AdvanceAction.TERMINAL:
            return SimulatedSession(tuple(found_t), tuple(found_j),
                                    tuple(found_ped), tuple(found_step),
                                    k_latest, tuple(steps), len(steps), n_trials)
        session = schedule_trials(result.plan, int(rng.integers(2**31)),
                                  device, s)


# --- serialization -----------------------------------------------------------

def plan_to_json(plan: StaircasePlan) -> str:
    return json.dumps(asdict(plan), indent=2)


def format_schedule(session: SessionState) -> str:
    lines = [f"pedestal_ppm={session.plan.pedestal:g} step_ppm={session.plan.step:g}"]
    for i, (stim, order) in enumerate(session.schedule, 1):
        lines.append(f"{i:3d}  stimulus_ppm={stim:<6g} order={order.value}")
    return "\n".join(lines)

"""Budget-allocation trial state machine, session flow and append-only log.

A trial starts with both quality sliders at the null stimulus and smell off.
Slider moves are independent until the first attempt to exceed the budget;
from then on the controls are dependent and raising one slider lowers the
other to keep the total inside the budget. Enabling smell reserves its
scenario cost up front (audio yields before visual when something must
shrink). Every transition is appended to an event log that can be persisted
with a trailing checksum and replayed deterministically.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .allocation import AllocationRecord, budget_regressor
from .costs import Budget, CostConfig, Modality, QualityLadder, canonical_scenario

EPS = 1e-9

# olfactory delivery timing recorded with toggle events for hardware
# integrations; no effect on the state machine
SMELL_BURST_S = 1.0
ONSET_COMPENSATION_S = 0.24
PURGE_BURSTS = 5
PURGE_INTERVAL_S = 0.4

DEFAULT_SESSION_SCENARIOS = ("Bathroom", "Car", "Kitchen")


class SessionError(Exception):
    pass


class IndexOutOfRangeError(SessionError):
    pass


class SmellUnaffordableError(SessionError):
    pass


class SessionCompleteError(SessionError):
    pass


class NoActiveTrialError(SessionError):
    pass


class CorruptLogError(SessionError):
    pass


class ReplayMismatchError(SessionError):
    pass


# --- trial state --------------------------------------------------------------

@dataclass(frozen=True)
class TrialState:
    budget: Budget
    scenario: str
    visual_idx: int        # 0 = null stimulus, i >= 1 = ladder level i-1
    audio_idx: int
    smell_on: bool
    dependent_mode: bool
    spent: float
    remaining: float


def level_cost(ladder: QualityLadder, idx: int) -> float:
    """Cost of a slider position; position 0 is the free null stimulus."""
    if not 0 <= idx <= len(ladder):
        raise IndexOutOfRangeError(f"index {idx} outside 0..{len(ladder)}")
    return 0.0 if idx == 0 else ladder.levels[idx - 1].cost


def max_affordable_idx(ladder: QualityLadder, headroom: float) -> int:
    """Highest slider position whose cost fits in the headroom (0 if none)."""
    best = 0
    for i, lv in enumerate(ladder.levels, start=1):
        if lv.cost <= headroom + EPS:
            best = i
        else:
            break
    return best


def _with_costs(cfg: CostConfig, budget: Budget, scenario: str, visual_idx: int,
                audio_idx: int, smell_on: bool, dependent_mode: bool) -> TrialState:
    spent = (level_cost(cfg.visual_ladder, visual_idx)
             + level_cost(cfg.audio_ladder, audio_idx)
             + (cfg.smell_cost(scenario) if smell_on else 0.0))
    return TrialState(budget, scenario, visual_idx, audio_idx, smell_on,
                      dependent_mode, spent, budget.value - spent)


def new_trial(cfg: CostConfig, budget: Budget | str, scenario: str) -> TrialState:
    """Fresh trial: null stimuli and smell off.

    Budgets above the reference value of 1 cannot be exhausted from null
    starts, so both sliders begin at the level whose cost is (closest below)
    half the surplus over the reference budget.
    """
    if isinstance(budget, str):
        budget = cfg.budget(budget)
    scenario = canonical_scenario(scenario)
    cfg.smell_cost(scenario)   # raises UnknownScenarioError early
    visual_idx = audio_idx = 0
    surplus = budget.value - 1.0
    if surplus > EPS:
        half = surplus / 2.0
        visual_idx = max_affordable_idx(cfg.visual_ladder, half)
        audio_idx = max_affordable_idx(cfg.audio_ladder, half)
    return _with_costs(cfg, budget, scenario, visual_idx, audio_idx,
                       smell_on=False, dependent_mode=False)


def set_level(cfg: CostConfig, state: TrialState, modality: Modality | str,
              new_idx: int) -> TrialState:
    """Move one quality slider.

    Within budget: applied as-is. Over budget in independent mode: the move
    is rejected and the controls become dependent. Over budget in dependent
    mode: the other slider drops to the highest position that still fits
    (the move is rejected outright if no position fits).
    """
    modality = Modality(modality)
    ladder = cfg.ladder(modality)
    if not 0 <= new_idx <= len(ladder):
        raise IndexOutOfRangeError(f"index {new_idx} outside 0..{len(ladder)}")
    visual_idx, audio_idx = state.visual_idx, state.audio_idx
    if modality is Modality.VISUAL:
        visual_idx = new_idx
    else:
        audio_idx = new_idx
    candidate = _with_costs(cfg, state.budget, state.scenario, visual_idx,
                            audio_idx, state.smell_on, state.dependent_mode)
    if candidate.spent <= state.budget.value + EPS:
        return candidate
    if not state.dependent_mode:
        return replace(state, dependent_mode=True)
    smell = cfg.smell_cost(state.scenario) if state.smell_on else 0.0
    headroom = state.budget.value - smell - level_cost(ladder, new_idx)
    if headroom < -EPS:
        return state
    other = (Modality.AUDIO if modality is Modality.VISUAL else Modality.VISUAL)
    other_idx = max_affordable_idx(cfg.ladder(other), headroom)
    if modality is Modality.VISUAL:
        return _with_costs(cfg, state.budget, state.scenario, new_idx,
                           other_idx, state.smell_on, True)
    return _with_costs(cfg, state.budget, state.scenario, other_idx, new_idx,
                       state.smell_on, True)


def toggle_smell(cfg: CostConfig, state: TrialState) -> TrialState:
    """Flip the smell impulse.

    Turning it on reserves the scenario's smell cost immediately; if the
    sliders no longer fit, audio shrinks first, then visual. Turning it off
    releases the reservation and leaves the sliders where they are.
    """
    if state.smell_on:
        return _with_costs(cfg, state.budget, state.scenario, state.visual_idx,
                           state.audio_idx, False, state.dependent_mode)
    smell = cfg.smell_cost(state.scenario)
    if smell > state.budget.value + EPS:
        raise SmellUnaffordableError(
            f"smell cost {smell} exceeds budget {state.budget.value}")
    visual_idx, audio_idx = state.visual_idx, state.audio_idx
    v_cost = level_cost(cfg.visual_ladder, visual_idx)
    a_cost = level_cost(cfg.audio_ladder, audio_idx)
    if v_cost + a_cost + smell > state.budget.value + EPS:
        audio_idx = max_affordable_idx(cfg.audio_ladder,
                                       state.budget.value - smell - v_cost)
        if v_cost + smell > state.budget.value + EPS:
            audio_idx = 0
            visual_idx = max_affordable_idx(cfg.visual_ladder,
                                            state.budget.value - smell)
    return _with_costs(cfg, state.budget, state.scenario, visual_idx,
                       audio_idx, True, state.dependent_mode)


def state_to_record(cfg: CostConfig, state: TrialState) -> AllocationRecord:
    """Final trial state expressed as budget-share percentages."""
    scale = 100.0 / state.budget.value
    return AllocationRecord(
        budget_label=state.budget.label,
        budget_regressor=budget_regressor(state.budget),
        scenario=state.scenario,
        smell_on=state.smell_on,
        visual_pct=level_cost(cfg.visual_ladder, state.visual_idx) * scale,
        audio_pct=level_cost(cfg.audio_ladder, state.audio_idx) * scale,
    )


def state_to_dict(state: TrialState) -> dict:
    return {
        "budget_label": state.budget.label,
        "budget_value": state.budget.value,
        "scenario": state.scenario,
        "visual_idx": state.visual_idx,
        "audio_idx": state.audio_idx,
        "smell_on": state.smell_on,
        "dependent_mode": state.dependent_mode,
        "spent": state.spent,
        "remaining": state.remaining,
    }


# --- session flow and event log -------------------------------------------------

@dataclass
class SessionLog:
    session_id: str
    participant_id: str
    seed: int
    combos: list[tuple[str, str]]          # randomized (budget, scenario) order
    events: list[dict] = field(default_factory=list)
    records: list[AllocationRecord] = field(default_factory=list)


class Session:
    """One participant's pass through every (budget x scenario) combination.

    All mutations go through this class, which owns the trial state and the
    append-only event log; callers hold one writer per session.
    """

    def __init__(self, cfg: CostConfig, participant_id: str, seed: int,
                 budgets: Optional[Sequence[str]] = None,
                 scenarios: Optional[Sequence[str]] = None,
                 session_id: Optional[str] = None,
                 _combos: Optional[Sequence[tuple[str, str]]] = None):
        self.cfg = cfg
        if _combos is not None:
            combos = [tuple(c) for c in _combos]
        else:
            budgets = list(budgets if budgets is not None
                           else [b.label for b in cfg.budgets])
            scenarios = [canonical_scenario(s) for s in
                         (scenarios if scenarios is not None
                          else DEFAULT_SESSION_SCENARIOS)]
            combos = [(b, s) for b in budgets for s in scenarios]
            rng = np.random.default_rng(seed)
            combos = [combos[i] for i in rng.permutation(len(combos))]
        self.log = SessionLog(
            session_id=session_id or uuid.uuid4().hex,
            participant_id=participant_id, seed=seed, combos=list(combos))
        self._index = 0
        self._state: Optional[TrialState] = None
        self._start_trial()

    # -- internal -----------------------------------------------------------

    def _append(self, kind: str, payload: dict) -> None:
        self.log.events.append({
            "seq": len(self.log.events),
            "ts": time.time(),
            "kind": kind,
            "payload": payload,
            "state": state_to_dict(self._state) if self._state else None,
        })

    def _start_trial(self) -> None:
        if self._index >= len(self.log.combos):
            self._state = None
            return
        label, scenario = self.log.combos[self._index]
        self._state = new_trial(self.cfg, label, scenario)
        self._append("trial_started", {"trial_index": self._index,
                                       "budget_label": label,
                                       "scenario": scenario})

    def _require_active(self) -> TrialState:
        if self._state is None:
            raise SessionCompleteError("all combinations already committed")
        return self._state

    # -- public API ----------------------------------------------------------

    @property
    def state(self) -> Optional[TrialState]:
        return self._state

    @property
    def trial_index(self) -> int:
        return self._index

    @property
    def total_trials(self) -> int:
        return len(self.log.combos)

    @property
    def completed(self) -> bool:
        return self._state is None

    def set_level(self, modality: Modality | str, new_idx: int) -> TrialState:
        state = self._require_active()
        self._state = set_level(self.cfg, state, modality, new_idx)
        self._append("set_level", {"modality": Modality(modality).value,
                                   "index": new_idx})
        return self._state

    def toggle_smell(self) -> TrialState:
        state = self._require_active()
        self._state = toggle_smell(self.cfg, state)
        self._append("toggle_smell", {
            "burst_s": SMELL_BURST_S,
            "onset_compensation_s": ONSET_COMPENSATION_S,
            "purge_bursts": PURGE_BURSTS,
            "purge_interval_s": PURGE_INTERVAL_S,
        })
        return self._state

    def commit(self) -> AllocationRecord:
        state = self._require_active()
        record = state_to_record(self.cfg, state)
        self.log.records.append(record)
        self._append("commit", {"record": _record_to_dict(record)})
        self._index += 1
        self._start_trial()
        return record


# --- persistence -----------------------------------------------------------------

def _record_to_dict(r: AllocationRecord) -> dict:
    return {
        "budget_label": r.budget_label,
        "budget_regressor": r.budget_regressor,
        "scenario": r.scenario,
        "smell_on": r.smell_on,
        "visual_pct": r.visual_pct,
        "audio_pct": r.audio_pct,
        "weight": r.weight,
    }


def _record_from_dict(d: dict) -> AllocationRecord:
    return AllocationRecord(
        d["budget_label"], d["budget_regressor"], d["scenario"], d["smell_on"],
        d["visual_pct"], d["audio_pct"], d.get("weight", 1.0))


def persist(log: SessionLog, path: str, append: bool = True) -> None:
    """Write the log as line-delimited JSON with a trailing checksum line.

    Appending more sessions to one store is allowed; each session block is
    checksummed independently so truncation is always detectable.
    """
    lines = [json.dumps({
        "kind": "session",
        "session_id": log.session_id,
        "participant_id": log.participant_id,
        "seed": log.seed,
        "combos": [list(c) for c in log.combos],
    }, sort_keys=True)]
    for ev in log.events:
        lines.append(json.dumps({"kind": "event", "event": ev}, sort_keys=True))
    block = "".join(line + "\n" for line in lines)
    digest = hashlib.sha256(block.encode("utf-8")).hexdigest()
    block += json.dumps({"kind": "checksum", "sha256": digest}) + "\n"
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="") as fh:
        fh.write(block)


def load(path: str) -> list[SessionLog]:
    """Read every session block from a store, verifying checksums."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        content = fh.read()
    logs: list[SessionLog] = []
    block_lines: list[str] = []
    current: Optional[SessionLog] = None
    for raw_line in content.splitlines(keepends=False):
        if not raw_line.strip():
            continue
        try:
            obj = json.loads(raw_line)
        except json.JSONDecodeError as exc:
            raise CorruptLogError(f"unparseable line: {exc}") from None
        kind = obj.get("kind")
        if kind == "session":
            if current is not None:
                raise CorruptLogError("session block missing its checksum")
            current = SessionLog(obj["session_id"], obj["participant_id"],
                                 obj["seed"],
                                 [tuple(c) for c in obj["combos"]])
            block_lines = [raw_line]
        elif kind == "event":
            if current is None:
                raise CorruptLogError("event outside a session block")
            ev = obj["event"]
            current.events.append(ev)
            if ev["kind"] == "commit":
                current.records.append(
                    _record_from_dict(ev["payload"]["record"]))
            block_lines.append(raw_line)
        elif kind == "checksum":
            if current is None:
                raise CorruptLogError("checksum outside a session block")
            block = "".join(line + "\n" for line in block_lines)
            digest = hashlib.sha256(block.encode("utf-8")).hexdigest()
            if digest != obj.get("sha256"):
                raise CorruptLogError("checksum mismatch")
            logs.append(current)
            current = None
            block_lines = []
        else:
            raise CorruptLogError(f"unknown line kind {kind!r}")
    if current is not None:
        raise CorruptLogError("store truncated: last block has no checksum")
    return logs


def replay(cfg: CostConfig, log: SessionLog) -> Session:
    """Re-run every logged action through the state machine, checking that
    each recorded intermediate state is reproduced exactly."""
    session = Session(cfg, log.participant_id, log.seed,
                      session_id=log.session_id, _combos=log.combos)
    for ev in log.events:
        kind = ev["kind"]
        if kind == "trial_started":
            pass  # emitted automatically by the state machine
        elif kind == "set_level":
            session.set_level(ev["payload"]["modality"], ev["payload"]["index"])
        elif kind == "toggle_smell":
            session.toggle_smell()
        elif kind == "commit":
            session.commit()
        else:
            raise ReplayMismatchError(f"unknown event kind {kind!r}")
        expected = ev.get("state")
        seq = ev["seq"]
        actual = session.log.events[seq]["state"]
        if expected != actual:
            raise ReplayMismatchError(
                f"state diverged at event {seq}: {actual} != {expected}")
    return session


def export_records(logs: Iterable[SessionLog]) -> list[AllocationRecord]:
    out: list[AllocationRecord] = []
    for log in logs:
        out.extend(log.records)
    return out

"""HTTP+JSON API serving allocation sessions to untrusted UIs.

Every state transition is validated server-side; the browser only renders
what the server confirms. Each session has a single logical writer: requests
for one session are serialized behind a per-session lock.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import allocation, session as sess
from .allocation import ModelKind, budget_regressor, default_coefficients
from .costs import CostConfig, Modality, UnknownBudgetError, UnknownScenarioError


@dataclass
class _SessionHandle:
    session: sess.Session
    lock: threading.Lock = field(default_factory=threading.Lock)


class CreateSessionRequest(BaseModel):
    participant_id: str = Field(min_length=1)
    seed: int = 0
    budgets: Optional[list[str]] = None
    scenarios: Optional[list[str]] = None


class SetLevelRequest(BaseModel):
    modality: str
    index: int


def _state_payload(handle: _SessionHandle, accepted: Optional[bool] = None) -> dict:
    s = handle.session
    payload = {
        "session_id": s.log.session_id,
        "trial_index": s.trial_index,
        "total_trials": s.total_trials,
        "completed": s.completed,
        "state": sess.state_to_dict(s.state) if s.state else None,
    }
    if accepted is not None:
        payload["accepted"] = accepted
    return payload


def summary_to_jsonable(groups: list[allocation.GroupSummary]) -> list[dict]:
    return [asdict(g) for g in groups]


def create_app(cfg: Optional[CostConfig] = None,
               store_path: Optional[str] = None) -> FastAPI:
    cfg = cfg or CostConfig()
    app = FastAPI(title="trisense session service")
    sessions: dict[str, _SessionHandle] = {}
    registry_lock = threading.Lock()

    def get_handle(session_id: str) -> _SessionHandle:
        with registry_lock:
            handle = sessions.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return handle

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            s = sess.Session(cfg, req.participant_id, req.seed,
                             budgets=req.budgets, scenarios=req.scenarios)
        except (UnknownBudgetError, UnknownScenarioError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        handle = _SessionHandle(s)
        with registry_lock:
            sessions[s.log.session_id] = handle
        return _state_payload(handle)

    @app.get("/sessions/{session_id}/trial")
    def get_trial(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            return _state_payload(handle)

    @app.post("/sessions/{session_id}/level")
    def set_level(session_id: str, req: SetLevelRequest):
        handle = get_handle(session_id)
        with handle.lock:
            try:
                modality = Modality(req.modality)
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail=f"unknown modality {req.modality!r}")
            try:
                state = handle.session.set_level(modality, req.index)
            except sess.IndexOutOfRangeError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            except sess.SessionCompleteError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            requested = (state.visual_idx if modality is Modality.VISUAL
                         else state.audio_idx)
            return _state_payload(handle, accepted=requested == req.index)

    @app.post("/sessions/{session_id}/smell")
    def toggle_smell(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            try:
                handle.session.toggle_smell()
            except sess.SmellUnaffordableError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except sess.SessionCompleteError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return _state_payload(handle)

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            try:
                record = handle.session.commit()
            except sess.SessionCompleteError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            payload = _state_payload(handle)
            payload["record"] = sess._record_to_dict(record)
            if handle.session.completed and store_path:
                sess.persist(handle.session.log, store_path)
            return payload

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            log = handle.session.log
            return {
                "session_id": log.session_id,
                "participant_id": log.participant_id,
                "seed": log.seed,
                "combos": [list(c) for c in log.combos],
                "events": log.events,
                "records": [sess._record_to_dict(r) for r in log.records],
            }

    @app.get("/summary")
    def summary():
        records = []
        with registry_lock:
            handles = list(sessions.values())
        for handle in handles:
            with handle.lock:
                records.extend(handle.session.log.records)
        if not records:
            return {"groups": []}
        return {"groups": summary_to_jsonable(allocation.summarize(records))}

    @app.get("/predict")
    def predict(model: str = "m1", budget: str = "B4",
                scenario: Optional[str] = None):
        try:
            kind = ModelKind(model.upper())
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown model {model!r}")
        coeffs = default_coefficients(kind)
        try:
            b = budget_regressor(cfg.budget(budget))
        except UnknownBudgetError:
            try:
                b = float(budget)
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail=f"unknown budget {budget!r}")
        try:
            pred = allocation.predict(coeffs, b, scenario)
        except (allocation.ScenarioRequiredError,
                allocation.UnknownScenarioError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"model": kind.value, "budget_regressor": b,
                "scenario": scenario, **asdict(pred)}

    @app.get("/catalogue")
    def catalogue():
        def ladder_payload(ladder):
            return [{"index": lv.index, "descriptor": lv.descriptor,
                     "cost": lv.cost} for lv in ladder.levels]

        return {
            "visual_ladder": ladder_payload(cfg.visual_ladder),
            "audio_ladder": ladder_payload(cfg.audio_ladder),
            "budgets": [{"label": b.label, "value": b.value,
                         "level_count": b.level_count} for b in cfg.budgets],
            "smell_costs": dict(cfg.smell_costs),
        }

    return app


def serve(cfg: Optional[CostConfig] = None, host: str = "127.0.0.1",
          port: int = 8666, store_path: Optional[str] = None) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg, store_path=store_path), host=host, port=port,
                log_level="warning")

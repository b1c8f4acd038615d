"""HTTP face of the survey service.

JSON API (paths are stable contract):
  GET  /api/question?participant=KEY  -> next question or {"done": true}
  POST /api/response                  -> 201 {"id": ...}; 422 with the
                                         offending field on validation errors
  GET  /api/stats/choices | /api/stats/properties | /api/stats/eta
  /static/...                         -> corpus images
  /                                   -> UI bundle, when configured

Participants are keyed by a hash of client address + self-reported
participant token; raw addresses are never stored.
"""

from __future__ import annotations

import time
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import DataError
from .survey import (FeatureClick, SurveyResponse, SurveyService,
                     hash_participant)


class ClickIn(BaseModel):
    x: float
    y: float
    property: str


class ResponseIn(BaseModel):
    participant: str = ""
    question_id: str
    chosen_image: str
    clicks: list[ClickIn] = Field(default_factory=list)
    dwell_ms: float = 0.0
    token: str = ""


def participant_key(request: Request, participant: str) -> str:
    host = request.client.host if request.client else "unknown"
    return hash_participant(f"{host}|{participant}")


def create_app(service: SurveyService, static_dir: Optional[str] = None,
               ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="space-match survey")
    app.state.service = service

    @app.get("/api/question")
    def get_question(request: Request, participant: str = ""):
        key = participant_key(request, participant)
        q = service.next_question(key)
        if q is None:
            return {"done": True}
        w, h = service.image_size
        return {
            "done": False,
            "question_id": q.question_id,
            "panorama_url": f"/static/{q.pano_id}.png",
            "control_url": f"/static/{q.control_image}",
            "choice_urls": [f"/static/{path}" for path in q.choices],
            "rotation_ms": q.rotation_ms,
            "image_width": w,
            "image_height": h,
        }

    @app.post("/api/response", status_code=201)
    def post_response(request: Request, body: ResponseIn):
        key = participant_key(request, body.participant)
        q = service.by_id.get(body.question_id)
        if q is None:
            raise HTTPException(422, detail={"field": "question_id",
                                             "error": "unknown question"})
        chosen = body.chosen_image.removeprefix("/static/")
        if chosen not in q.choices:
            raise HTTPException(422, detail={"field": "chosen_image",
                                             "error": "not among this question's choices"})
        response = SurveyResponse(
            participant=key,
            question_id=body.question_id,
            chosen_image=chosen,
            chosen_segment=q.choice_segments[chosen],
            clicks=tuple(FeatureClick(x=c.x, y=c.y, property=c.property)
                         for c in body.clicks),
            dwell_ms=body.dwell_ms,
            timestamp=time.time(),
            token=body.token,
        )
        try:
            stored_id = service.submit(response)
        except DataError as exc:
            field_name = str(exc).split(":", 1)[0]
            raise HTTPException(422, detail={"field": field_name, "error": str(exc)})
        return {"id": stored_id}

    @app.get("/api/stats/choices")
    def stats_choices():
        return service.stats_choices()

    @app.get("/api/stats/properties")
    def stats_properties():
        return service.stats_properties()

    @app.get("/api/stats/eta")
    def stats_eta():
        return service.stats_overlap()

    @app.exception_handler(DataError)
    def on_data_error(request: Request, exc: DataError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    if static_dir:
        app.mount("/static", StaticFiles(directory=static_dir), name="static")
    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app

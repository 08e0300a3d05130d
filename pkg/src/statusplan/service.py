"""HTTP planning service backing the modeling UI.

The model repository is a directory of native object files (``*.objects.json``)
loaded once at startup and shared immutably across requests; every request
runs its own isolated search.  Long requests are clamped to a server-side
budget and come back with a ``resource_limit`` verdict instead of hanging.

Status codes: 400 malformed request bodies, 404 unknown object, 422 semantic
errors (unknown variable or value), 200 otherwise with the verdict in the
body.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from statusplan.model import ModelError, PlanningTask, tree_nondet_fraction, tree_action_count
from statusplan.process import compile_process, graph_to_dict
from statusplan.search import SearchConfig, SearchResult, solve, validate_plan
from statusplan.task_io import (
    BusinessObject,
    Override,
    SchemaError,
    compile_bo,
    load_objects,
    load_objects_file,
    plan_from_json,
    plan_to_json,
)

DEFAULT_MAX_TIMEOUT = 60.0


class AtomIn(BaseModel):
    var: str
    val: str


class OverrideIn(BaseModel):
    var: str
    val: Optional[str] = None
    unset: bool = False


class PlanRequest(BaseModel):
    object: Optional[str] = None
    objects: Optional[dict] = None  # inline native objects document
    goal: list[AtomIn] = Field(min_length=1)
    init: list[OverrideIn] = Field(default_factory=list)
    mode: Literal["strong", "weak", "auto"] = "auto"
    heuristic: Literal["ff", "blind"] = "ff"
    weight: float = 5.0
    helpful_pruning: bool = True
    max_evaluations: Optional[int] = None
    timeout: Optional[float] = None
    scope: Literal["full", "bo_relevant"] = "full"


class ValidateRequest(PlanRequest):
    plan: dict
    validate_mode: Literal["strong", "weak"] = "weak"


def load_repository(path) -> dict:
    """All objects from every ``*.objects.json`` file in the directory."""
    repo: dict = {}
    for file in sorted(Path(path).glob("*.objects.json")):
        for obj in load_objects_file(file):
            if obj.id in repo:
                raise ModelError(f"duplicate object id {obj.id!r} in repository")
            repo[obj.id] = obj
    return repo


def _statistics(result: SearchResult, task: PlanningTask) -> dict:
    stats = {
        "evaluations": result.stats.evaluations,
        "expansions": result.stats.expansions,
        "max_depth": result.stats.max_depth,
        "wall_time": result.stats.wall_time,
        "failed_leaves": result.stats.failed_leaves,
        "plan_size": 0,
        "nondet_fraction": 0.0,
    }
    if result.plan is not None:
        stats["plan_size"] = tree_action_count(result.plan)
        stats["nondet_fraction"] = tree_nondet_fraction(task, result.plan)
    return stats


def create_app(
    repository: dict | str | Path,
    max_timeout: float = DEFAULT_MAX_TIMEOUT,
    strong_phase_budget: float = 0.5,
) -> FastAPI:
    if not isinstance(repository, dict):
        repository = load_repository(repository)
    repo: dict = repository

    app = FastAPI(title="statusplan service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def resolve_objects(req: PlanRequest) -> tuple:
        if req.objects is not None:
            try:
                return load_objects(req.objects)
            except SchemaError as err:
                raise HTTPException(422, detail=str(err))
        if req.object is None:
            raise HTTPException(422, detail="request needs 'object' or 'objects'")
        obj = repo.get(req.object)
        if obj is None:
            raise HTTPException(404, detail=f"unknown object {req.object!r}")
        return (obj,)

    def qualify(name: str, objects) -> str:
        if "." in name:
            return name
        if len(objects) == 1:
            return f"{objects[0].id}.{name}"
        raise HTTPException(
            422, detail=f"variable {name!r} must be qualified as object.variable"
        )

    def build_task(req: PlanRequest) -> PlanningTask:
        objects = resolve_objects(req)
        goal = [(qualify(a.var, objects), a.val) for a in req.goal]
        overrides = [
            Override(qualify(o.var, objects), None if o.unset else o.val)
            for o in req.init
        ]
        try:
            return compile_bo(objects, goal, overrides, req.scope)
        except ModelError as err:
            raise HTTPException(422, detail=str(err))

    def build_config(req: PlanRequest) -> SearchConfig:
        timeout = req.timeout if req.timeout is not None else max_timeout
        return SearchConfig(
            mode=req.mode,
            heuristic=req.heuristic,
            weight=req.weight,
            helpful_pruning=req.helpful_pruning,
            max_evaluations=req.max_evaluations,
            timeout=min(timeout, max_timeout),
            strong_phase_budget=strong_phase_budget,
        )

    @app.get("/objects")
    def list_objects():
        return [
            {
                "id": obj.id,
                "name": obj.name,
                "variables": [
                    {"name": v.name, "domain": list(v.domain), "initial": v.initial}
                    for v in obj.variables
                ],
            }
            for obj in repo.values()
        ]

    @app.get("/objects/{object_id}")
    def get_object(object_id: str):
        obj = repo.get(object_id)
        if obj is None:
            raise HTTPException(404, detail=f"unknown object {object_id!r}")
        return {
            "id": obj.id,
            "name": obj.name,
            "variables": [
                {"name": v.name, "domain": list(v.domain), "initial": v.initial}
                for v in obj.variables
            ],
            "actions": [a.name for a in obj.actions],
        }

    @app.post("/plan")
    def plan(req: PlanRequest):
        task = build_task(req)
        result = solve(task, build_config(req))
        payload = {
            "verdict": result.verdict,
            "mode_used": result.mode_used,
            "goal": [{"var": a.var, "val": a.val} for a in req.goal],
            "plan": None,
            "process": None,
            "statistics": _statistics(result, task),
            "strong_phase": None,
        }
        if result.plan is not None:
            payload["plan"] = plan_to_json(task, result.plan)
            payload["process"] = graph_to_dict(compile_process(task, result.plan))
        if result.strong_phase is not None:
            payload["strong_phase"] = {
                "verdict": result.strong_phase.verdict,
                "evaluations": result.strong_phase.stats.evaluations,
            }
        return payload

    @app.post("/validate")
    def validate(req: ValidateRequest):
        task = build_task(req)
        try:
            tree = plan_from_json(task, req.plan)
        except SchemaError as err:
            raise HTTPException(422, detail=str(err))
        report = validate_plan(task, tree, req.validate_mode)
        return {
            "valid": report.valid,
            "message": report.message,
            "path": list(report.path),
        }

    return app


def main():  # pragma: no cover - convenience launcher
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Run the planning service.")
    parser.add_argument("repository", help="directory of *.objects.json files")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8420)
    parser.add_argument("--max-timeout", type=float, default=DEFAULT_MAX_TIMEOUT)
    args = parser.parse_args()
    uvicorn.run(
        create_app(args.repository, max_timeout=args.max_timeout),
        host=args.host,
        port=args.port,
    )


if __name__ == "__main__":  # pragma: no cover
    main()

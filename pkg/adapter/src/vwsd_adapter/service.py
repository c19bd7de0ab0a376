"""HTTP embedding service: POST /embed over a model registry.

Wire format, shared with the engine's service client:

    request:  {"space": s, "kind": "text"|"image",
               "items": [{"key": k, "payload": p}, ...]}   (max 256 items)
    response: {"space": s, "dim": d, "vectors": [{"key": k, "vec": [...]}]}

Unknown spaces are 400s, model failures 500s. An encoder may decline single
items; those keys are omitted from the response (the client treats that as a
partial failure), which keeps one bad item from poisoning a whole batch.
"""
from __future__ import annotations

import logging

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .registry import ModelRegistry

log = logging.getLogger(__name__)

MAX_ITEMS = 256


class EmbedItemModel(BaseModel):
    key: str
    payload: str


class EmbedRequestModel(BaseModel):
    space: str
    kind: str
    items: list[EmbedItemModel] = Field(default_factory=list)


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="vwsd embedding service")

    @app.post("/embed")
    def embed(request: EmbedRequestModel):
        if request.kind not in ("text", "image"):
            return JSONResponse(status_code=400,
                                content={"error": f"unknown kind {request.kind!r}"})
        if len(request.items) > MAX_ITEMS:
            return JSONResponse(
                status_code=400,
                content={"error": f"{len(request.items)} items exceeds the "
                                  f"{MAX_ITEMS}-item cap"},
            )
        keys = [item.key for item in request.items]
        if len(set(keys)) != len(keys):
            return JSONResponse(status_code=400,
                                content={"error": "duplicate keys in request"})
        if request.space not in registry:
            return JSONResponse(status_code=400,
                                content={"error": f"unknown space {request.space!r}"})
        spec = registry.get(request.space)
        try:
            encoder = spec.encoder_for(request.kind)
        except LookupError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        vectors = []
        for item in request.items:
            try:
                vec = encoder(item.payload)
            except Exception as exc:  # model failure
                log.exception("encoder failed for key %r", item.key)
                return JSONResponse(
                    status_code=500,
                    content={"error": f"model failure on key {item.key!r}: {exc}"},
                )
            if vec is None:
                log.warning("space %r: declined key %r", request.space, item.key)
                continue
            if vec.shape != (spec.dim,):
                return JSONResponse(
                    status_code=500,
                    content={"error": f"encoder returned shape {vec.shape} for "
                                      f"key {item.key!r}, expected ({spec.dim},)"},
                )
            vectors.append({"key": item.key, "vec": [float(x) for x in vec]})
        return {"space": request.space, "dim": spec.dim, "vectors": vectors}

    return app


def serve_embed(registry: ModelRegistry, port: int, host: str = "127.0.0.1") -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(registry), host=host, port=port, log_level="info")

"""Client for a remote embedding service speaking POST {endpoint}/embed.

The engine never bundles a model runtime; it fills store gaps by asking an
external service for exactly the missing (space, key) pairs, in batches, with
retries on transient failures. Payloads are the keys themselves: text keys are
the text to embed, image keys are references the service understands.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import requests

from .dataset import AuxQueryFile, Dataset
from .errors import (
    PartialFailureError,
    ProtocolError,
    RequestError,
    TransportError,
    ValidationError,
)
from .scoring import SystemSpec, coverage_check
from .store import RENORM_TOL, EmbeddingSpace, EmbeddingStore

MAX_ITEMS_PER_REQUEST = 256


@dataclass(frozen=True)
class RetryPolicy:
    retries: int = 3
    backoff_base: float = 0.5   # seconds; doubles per attempt
    timeout: float = 30.0


@dataclass(frozen=True)
class EmbedItem:
    key: str
    payload: str


@dataclass(frozen=True)
class EmbedRequest:
    space: str
    kind: str
    items: tuple[EmbedItem, ...]

    def __post_init__(self) -> None:
        if len(self.items) > MAX_ITEMS_PER_REQUEST:
            raise ValidationError(
                f"embed request has {len(self.items)} items, cap is {MAX_ITEMS_PER_REQUEST}"
            )
        keys = [item.key for item in self.items]
        if len(set(keys)) != len(keys):
            raise ValidationError("embed request has duplicate keys")

    def body(self) -> dict:
        return {
            "space": self.space,
            "kind": self.kind,
            "items": [{"key": i.key, "payload": i.payload} for i in self.items],
        }


@dataclass(frozen=True)
class EmbedResponse:
    space: str
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)


def _parse_response(payload: dict, request: EmbedRequest) -> EmbedResponse:
    try:
        space = payload["space"]
        dim = payload["dim"]
        rows = payload["vectors"]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"embed response missing field: {exc}") from exc
    if space != request.space:
        raise ProtocolError(f"asked for space {request.space!r}, got {space!r}")
    if not isinstance(dim, int) or dim < 1:
        raise ProtocolError(f"bad dim in embed response: {dim!r}")
    requested = {item.key for item in request.items}
    vectors: dict[str, np.ndarray] = {}
    for row in rows:
        try:
            key, vec = row["key"], row["vec"]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"bad vector row in embed response: {exc}") from exc
        if key not in requested:
            raise ProtocolError(f"response contains unrequested key {key!r}")
        if key in vectors:
            raise ProtocolError(f"response repeats key {key!r}")
        if not isinstance(vec, list) or len(vec) != dim:
            raise ProtocolError(
                f"key {key!r}: vector length {len(vec) if isinstance(vec, list) else '?'} "
                f"!= dim {dim}"
            )
        vectors[key] = np.asarray(vec, dtype=np.float32)
    return EmbedResponse(space=space, dim=dim, vectors=vectors)


def fetch_embeddings(
    endpoint: str,
    request: EmbedRequest,
    policy: RetryPolicy = RetryPolicy(),
    token: str | None = None,
    session: requests.Session | None = None,
) -> EmbedResponse:
    """POST one batch, retrying transient failures with exponential backoff.

    Raises PartialFailureError when the service answers without covering every
    requested key; safe to retry, the request is idempotent.
    """
    url = endpoint.rstrip("/") + "/embed"
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    post = (session or requests).post
    last_error: Exception | None = None
    for attempt in range(policy.retries + 1):
        if attempt > 0:
            time.sleep(policy.backoff_base * (2 ** (attempt - 1)))
        try:
            resp = post(url, json=request.body(), headers=headers, timeout=policy.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = exc
            continue
        if 500 <= resp.status_code < 600:
            last_error = TransportError(f"HTTP {resp.status_code} from {url}")
            continue
        if resp.status_code != 200:
            detail = resp.text.strip()[:500]
            raise RequestError(resp.status_code, detail or "request rejected")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"embed response is not JSON: {exc}") from exc
        parsed = _parse_response(payload, request)
        missing = [i.key for i in request.items if i.key not in parsed.vectors]
        if missing:
            raise PartialFailureError(request.space, missing)
        return parsed
    raise TransportError(
        f"embed request to {url} failed after {policy.retries + 1} attempts: {last_error}"
    )


def _batched(seq: list, size: int):
    for start in range(0, len(seq), size):
        yield seq[start:start + size]


def populate_store(
    endpoint: str,
    dataset: Dataset,
    systems: list[SystemSpec],
    aux: list[AuxQueryFile],
    store: EmbeddingStore,
    policy: RetryPolicy = RetryPolicy(),
    token: str | None = None,
    max_in_flight: int = 4,
    batch_size: int = MAX_ITEMS_PER_REQUEST,
) -> EmbeddingStore:
    """Fetch exactly the store entries the systems are missing; return a merged
    copy. The input store is never mutated and entries already present are
    never re-fetched, so a second run issues zero requests.
    """
    report = coverage_check(store, dataset, systems, aux)
    if report.missing_aux_rows:
        system, tag, instance_id = report.missing_aux_rows[0]
        raise ValidationError(
            f"cannot populate: system {system!r} lacks aux {tag!r} row for "
            f"instance {instance_id} (+{len(report.missing_aux_rows) - 1} more)"
        )
    merged = store.copy()
    if not report.missing_entries:
        return merged

    by_group: dict[tuple[str, str], list[str]] = {}
    for gap in report.missing_entries:
        keys = by_group.setdefault((gap.space, gap.kind), [])
        if gap.key not in keys:
            keys.append(gap.key)
    requests_to_send: list[EmbedRequest] = []
    for (space, kind), keys in by_group.items():
        for chunk in _batched(keys, min(batch_size, MAX_ITEMS_PER_REQUEST)):
            requests_to_send.append(
                EmbedRequest(
                    space=space,
                    kind=kind,
                    items=tuple(EmbedItem(key=k, payload=k) for k in chunk),
                )
            )

    total = len(requests_to_send)
    responses: list[tuple[EmbedRequest, EmbedResponse]] = []
    first_error: Exception | None = None
    session = requests.Session()
    try:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = [
                pool.submit(fetch_embeddings, endpoint, req, policy, token, session)
                for req in requests_to_send
            ]
            for req, future in zip(requests_to_send, futures):
                try:
                    responses.append((req, future.result()))
                except Exception as exc:  # noqa: BLE001 - progress attached below
                    if first_error is None:
                        first_error = exc
    finally:
        session.close()
    if first_error is not None:
        if isinstance(first_error, TransportError):
            raise TransportError(
                f"{first_error} ({len(responses)}/{total} batches succeeded)",
                batches_done=len(responses),
                batches_total=total,
            ) from first_error
        raise first_error

    # Merge per space so the normalized flag of a previously unseen space can
    # be inferred from the full set of fetched vectors (all unit norm within
    # RENORM_TOL means a cosine space; the wire format carries no flag).
    fetched: dict[str, list[tuple[str, str, np.ndarray]]] = {}
    dims: dict[str, int] = {}
    for req, resp in responses:
        if dims.setdefault(resp.space, resp.dim) != resp.dim:
            raise ProtocolError(
                f"space {resp.space!r}: dim {resp.dim} contradicts earlier "
                f"{dims[resp.space]}"
            )
        for key, vec in resp.vectors.items():
            fetched.setdefault(resp.space, []).append((req.kind, key, vec))
    for space_name, entries in fetched.items():
        if merged.has_space(space_name):
            space = merged.space(space_name)
            if space.dim != dims[space_name]:
                raise ProtocolError(
                    f"space {space_name!r}: service dim {dims[space_name]} != "
                    f"store dim {space.dim}"
                )
        else:
            norms = [float(np.linalg.norm(v.astype(np.float64))) for _, _, v in entries]
            normalized = all(abs(n - 1.0) <= RENORM_TOL for n in norms)
            merged.add_space(EmbeddingSpace(space_name, dims[space_name], normalized))
        for kind, key, vec in entries:
            merged.add(space_name, kind, key, vec, renormalize=True)
    return merged

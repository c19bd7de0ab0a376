"""Shared synthetic fixtures: datasets, stores, score tables, stub services."""
from __future__ import annotations

import json
import math
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from vwsd.dataset import Dataset, Instance, serialize_dataset, serialize_gold
from vwsd.scoring import (
    TABLE_COSINE,
    ScoreRow,
    ScoreTable,
    rank_order,
)
from vwsd.store import KIND_IMAGE, KIND_TEXT, EmbeddingSpace, EmbeddingStore

SPACE = "clip-en"


def make_dataset(n: int, split: str = "synth", labeled: bool = True) -> Dataset:
    """n instances: word{i}, phrase 'word{i} sense', candidates img{i}_0..9,
    gold = candidate i % 10."""
    instances = []
    for i in range(1, n + 1):
        candidates = tuple(f"img{i}_{j}" for j in range(10))
        gold = candidates[(i - 1) % 10] if labeled else None
        instances.append(
            Instance(
                id=f"{i:06d}",
                target_word=f"word{i}",
                full_phrase=f"word{i} sense",
                candidates=candidates,
                gold=gold,
            )
        )
    return Dataset(split_name=split, instances=tuple(instances))


def oracle_store(dataset: Dataset, dim: int = 8, space: str = SPACE) -> EmbeddingStore:
    """Gold image vector equals the phrase vector; fillers are orthogonal."""
    rng = np.random.default_rng(7)
    store = EmbeddingStore()
    store.add_space(EmbeddingSpace(space, dim, True))
    for i, inst in enumerate(dataset.instances):
        axis = i % dim
        phrase_vec = np.zeros(dim, dtype=np.float32)
        phrase_vec[axis] = 1.0
        store.add(space, KIND_TEXT, inst.full_phrase, phrase_vec)
        for cand in inst.candidates:
            if cand == inst.gold:
                vec = phrase_vec
            else:
                v = rng.normal(size=dim)
                v[axis] = 0.0
                vec = (v / np.linalg.norm(v)).astype(np.float32)
            store.add(space, KIND_IMAGE, cand, vec)
    return store


def anti_oracle_store(dataset: Dataset, dim: int = 8, space: str = SPACE) -> EmbeddingStore:
    """Gold is orthogonal to the phrase while every filler has a strictly
    positive, distinct cosine, so gold always ranks last (rank 10)."""
    rng = np.random.default_rng(11)
    store = EmbeddingStore()
    store.add_space(EmbeddingSpace(space, dim, True))
    for i, inst in enumerate(dataset.instances):
        axis = i % dim
        phrase_vec = np.zeros(dim, dtype=np.float32)
        phrase_vec[axis] = 1.0
        store.add(space, KIND_TEXT, inst.full_phrase, phrase_vec)
        filler_rank = 0
        for cand in inst.candidates:
            u = rng.normal(size=dim)
            u[axis] = 0.0
            u = u / np.linalg.norm(u)
            if cand == inst.gold:
                vec = u.astype(np.float32)
            else:
                c = 0.2 + 0.07 * filler_rank
                filler_rank += 1
                vec = (c * phrase_vec.astype(np.float64)
                       + math.sqrt(1.0 - c * c) * u).astype(np.float32)
            store.add(space, KIND_IMAGE, cand, vec)
    return store


def constant_store(dataset: Dataset, dim: int = 4, space: str = SPACE) -> EmbeddingStore:
    """Every text and image vector is the same unit vector: all cosines 1."""
    store = EmbeddingStore()
    store.add_space(EmbeddingSpace(space, dim, True))
    vec = np.zeros(dim, dtype=np.float32)
    vec[0] = 1.0
    for inst in dataset.instances:
        store.add(space, KIND_TEXT, inst.full_phrase, vec)
        for cand in inst.candidates:
            store.add(space, KIND_IMAGE, cand, vec)
    return store


def make_cosine_table(dataset: Dataset, raw_rows, system: str = "sys",
                      logit_scale: float = 100.0) -> ScoreTable:
    """Build a cosine-kind table from per-instance raw score lists."""
    rows = []
    for inst, raw in zip(dataset.instances, raw_rows):
        raw = np.asarray(raw, dtype=np.float64)
        z = np.exp(logit_scale * raw - (logit_scale * raw).max())
        probs = z / z.sum()
        rows.append(ScoreRow.from_scores(inst.id, inst.candidates, raw, probs))
    return ScoreTable(system=system, kind=TABLE_COSINE, rows=tuple(rows))


def make_prediction_table(dataset: Dataset, correct_flags, system: str = "sys") -> ScoreTable:
    """Rows predicting gold iff the matching flag is true (gold dead last otherwise)."""
    probs = (0.19, 0.13, 0.12, 0.11, 0.10, 0.09, 0.08, 0.07, 0.06, 0.05)
    rows = []
    for inst, correct in zip(dataset.instances, correct_flags):
        others = [c for c in inst.candidates if c != inst.gold]
        ranking = (inst.gold, *others) if correct else (*others, inst.gold)
        by_rank = {c: probs[r] for r, c in enumerate(ranking)}
        ordered = tuple(by_rank[c] for c in inst.candidates)
        rows.append(
            ScoreRow(
                instance_id=inst.id,
                candidates=inst.candidates,
                raw_scores=ordered,
                probs=ordered,
                predicted=ranking[0],
                ranking=ranking,
            )
        )
    return ScoreTable(system=system, kind=TABLE_COSINE, rows=tuple(rows))


def random_table(dataset: Dataset, rng: np.random.Generator,
                 system: str = "rand") -> ScoreTable:
    return make_cosine_table(
        dataset,
        [rng.uniform(-1.0, 1.0, size=10) for _ in dataset.instances],
        system=system,
        logit_scale=10.0,
    )


def random_store(rng: np.random.Generator, n_spaces: int = 3,
                 entries_per_space: int = 40, max_dim: int = 32) -> EmbeddingStore:
    """Randomized store mixing normalized and raw spaces, text and image keys."""
    store = EmbeddingStore()
    for s in range(n_spaces):
        dim = int(rng.integers(2, max_dim + 1))
        normalized = bool(rng.integers(0, 2))
        name = f"space{s}-d{dim}"
        store.add_space(EmbeddingSpace(name, dim, normalized))
        for e in range(entries_per_space):
            kind = KIND_TEXT if rng.integers(0, 2) == 0 else KIND_IMAGE
            vec = rng.normal(size=dim)
            if normalized:
                vec = vec / np.linalg.norm(vec)
            else:
                vec = vec * rng.uniform(0.1, 50.0)
            store.add(name, kind, f"key-{e}-é{e % 7}", vec.astype(np.float32))
    return store


def dataset_files(dataset: Dataset) -> tuple[str, str]:
    """(dataset TSV, gold file) text for a labeled dataset."""
    return serialize_dataset(dataset), serialize_gold(dataset)


def independent_softmax(logits) -> list[float]:
    """Scalar-math softmax used as the oracle for probability values."""
    m = max(logits)
    exps = [math.exp(x - m) for x in logits]
    total = sum(exps)
    return [e / total for e in exps]


def brute_force_max_cosine(cand_vecs, sample_vecs) -> list[float]:
    out = []
    for c in cand_vecs:
        best = -np.inf
        for s in sample_vecs:
            c64 = np.asarray(c, dtype=np.float64)
            s64 = np.asarray(s, dtype=np.float64)
            sim = float(c64 @ s64 / (np.linalg.norm(c64) * np.linalg.norm(s64)))
            best = max(best, sim)
        out.append(best)
    return out


def brute_force_min_l2(cand_vecs, sample_vecs) -> list[float]:
    out = []
    for c in cand_vecs:
        best = np.inf
        for s in sample_vecs:
            dist = float(
                np.linalg.norm(np.asarray(c, dtype=np.float64) - np.asarray(s, dtype=np.float64))
            )
            best = min(best, dist)
        out.append(-best)
    return out


def stub_vector(space: str, key: str, dim: int = 4) -> list[float]:
    """Deterministic unit vector derived from the (space, key) pair."""
    seed = int.from_bytes(f"{space}\x00{key}".encode("utf-8")[-8:], "little") % (2**32)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim)
    v = v / np.linalg.norm(v)
    return [float(x) for x in v.astype(np.float32)]


class StubEmbedServer:
    """Scriptable /embed endpoint for exercising the service client."""

    def __init__(self, dim: int = 4, fail_first: int = 0, drop_keys=(),
                 mangle_dim: bool = False, reject_all: bool = False):
        self.dim = dim
        self.fail_first = fail_first
        self.drop_keys = set(drop_keys)
        self.mangle_dim = mangle_dim
        self.reject_all = reject_all
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                if self.path != "/embed":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                with outer._lock:
                    outer.requests.append(body)
                    if outer.fail_first > 0:
                        outer.fail_first -= 1
                        self.send_error(503, "warming up")
                        return
                if outer.reject_all:
                    self._reply(400, {"error": "space not served"})
                    return
                vectors = []
                for item in body["items"]:
                    if item["key"] in outer.drop_keys:
                        continue
                    vec = stub_vector(body["space"], item["key"], outer.dim)
                    if outer.mangle_dim:
                        vec = vec + [0.0]
                    vectors.append({"key": item["key"], "vec": vec})
                self._reply(200, {"space": body["space"], "dim": outer.dim,
                                  "vectors": vectors})

            def _reply(self, status, payload):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.endpoint = f"http://127.0.0.1:{self._server.server_port}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()


def closed_endpoint() -> str:
    """A URL nothing is listening on."""
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return f"http://127.0.0.1:{port}"


__all__ = [name for name in dir() if not name.startswith("_")]

import numpy as np
import pytest
from fastapi.testclient import TestClient

from helpers import LiveServer
from vwsd_adapter.registry import SKIP_MARKER, EncoderSpec, ModelRegistry, stub_registry
from vwsd_adapter.service import create_app

SPACES = {"clip-en": (8, True), "feat": (6, False)}


def client() -> TestClient:
    return TestClient(create_app(stub_registry(SPACES)))


def body(keys, space="clip-en", kind="text"):
    return {"space": space, "kind": kind,
            "items": [{"key": k, "payload": k} for k in keys]}


class TestEmbedEndpoint:
    def test_zero_items(self):
        resp = client().post("/embed", json=body([]))
        assert resp.status_code == 200
        doc = resp.json()
        assert doc == {"space": "clip-en", "dim": 8, "vectors": []}

    def test_full_batch_of_256(self):
        keys = [f"k{i}" for i in range(256)]
        resp = client().post("/embed", json=body(keys))
        assert resp.status_code == 200
        doc = resp.json()
        assert len(doc["vectors"]) == 256
        assert {v["key"] for v in doc["vectors"]} == set(keys)
        assert all(len(v["vec"]) == 8 for v in doc["vectors"])

    def test_item_cap_enforced(self):
        resp = client().post("/embed", json=body([f"k{i}" for i in range(257)]))
        assert resp.status_code == 400
        assert "cap" in resp.json()["error"]

    def test_unknown_space_is_400(self):
        resp = client().post("/embed", json=body(["a"], space="nope"))
        assert resp.status_code == 400
        assert "nope" in resp.json()["error"]

    def test_unknown_kind_is_400(self):
        resp = client().post("/embed", json=body(["a"], kind="audio"))
        assert resp.status_code == 400

    def test_duplicate_keys_rejected(self):
        resp = client().post("/embed", json=body(["a", "a"]))
        assert resp.status_code == 400

    def test_declined_items_are_omitted(self):
        resp = client().post("/embed", json=body(["good", f"bad{SKIP_MARKER}"]))
        assert resp.status_code == 200
        assert [v["key"] for v in resp.json()["vectors"]] == ["good"]

    def test_model_failure_is_500_with_message(self):
        registry = ModelRegistry()

        def broken(payload):
            raise RuntimeError("weights went missing")

        registry.add(EncoderSpec("bad", 4, True, broken, broken))
        resp = TestClient(create_app(registry)).post(
            "/embed", json={"space": "bad", "kind": "text",
                            "items": [{"key": "a", "payload": "a"}]})
        assert resp.status_code == 500
        assert "weights went missing" in resp.json()["error"]

    def test_normalized_space_emits_unit_vectors(self):
        doc = client().post("/embed", json=body(["x", "y"])).json()
        for row in doc["vectors"]:
            assert abs(np.linalg.norm(row["vec"]) - 1.0) <= 1e-5

    def test_raw_space_is_not_unit(self):
        doc = client().post("/embed", json=body(["x"], space="feat", kind="image")).json()
        assert doc["dim"] == 6
        assert np.linalg.norm(doc["vectors"][0]["vec"]) > 1.1

    def test_deterministic_vectors(self):
        a = client().post("/embed", json=body(["same"])).json()
        b = client().post("/embed", json=body(["same"])).json()
        assert a == b

    def test_text_and_image_encoders_differ(self):
        text = client().post("/embed", json=body(["k"], kind="text")).json()
        image = client().post("/embed", json=body(["k"], kind="image")).json()
        assert text["vectors"][0]["vec"] != image["vectors"][0]["vec"]


class TestServiceAgainstEngineClient:
    """Conformance against the engine's own service client, over real HTTP."""

    def test_fetch_zero_items(self):
        from vwsd.client import EmbedRequest, fetch_embeddings

        with LiveServer(create_app(stub_registry(SPACES))) as endpoint:
            resp = fetch_embeddings(endpoint, EmbedRequest("clip-en", "text", ()))
        assert resp.vectors == {}

    def test_fetch_full_batch(self):
        from vwsd.client import EmbedItem, EmbedRequest, fetch_embeddings

        request = EmbedRequest(
            "clip-en", "image",
            tuple(EmbedItem(f"k{i}", f"k{i}") for i in range(256)),
        )
        with LiveServer(create_app(stub_registry(SPACES))) as endpoint:
            resp = fetch_embeddings(endpoint, request)
        assert len(resp.vectors) == 256
        assert resp.dim == 8

    def test_partial_failure_surfaces_missing_keys(self):
        from vwsd.client import EmbedItem, EmbedRequest, fetch_embeddings
        from vwsd.errors import PartialFailureError

        request = EmbedRequest(
            "clip-en", "text",
            (EmbedItem("fine", "fine"), EmbedItem("skipme", f"x{SKIP_MARKER}")),
        )
        with LiveServer(create_app(stub_registry(SPACES))) as endpoint:
            with pytest.raises(PartialFailureError, match="skipme"):
                fetch_embeddings(endpoint, request)

    def test_unknown_space_is_request_error(self):
        from vwsd.client import EmbedItem, EmbedRequest, fetch_embeddings
        from vwsd.errors import RequestError

        request = EmbedRequest("ghost", "text", (EmbedItem("a", "a"),))
        with LiveServer(create_app(stub_registry(SPACES))) as endpoint:
            with pytest.raises(RequestError, match="400"):
                fetch_embeddings(endpoint, request)

    def test_populate_store_end_to_end(self):
        from vwsd.client import populate_store
        from vwsd.dataset import parse_dataset
        from vwsd.scoring import QuerySource, SystemSpec, coverage_check
        from vwsd.store import EmbeddingStore

        from helpers import tiny_dataset_tsv

        dataset = parse_dataset(tiny_dataset_tsv(4), "t")
        base = SystemSpec("base", "clip-en", QuerySource.parse("phrase"))
        with LiveServer(create_app(stub_registry(SPACES))) as endpoint:
            merged = populate_store(endpoint, dataset, [base], [], EmbeddingStore())
        report = coverage_check(merged, dataset, [base])
        assert report.ok
        assert merged.space("clip-en").normalized is True

"""Acceptance suite: one test per acceptance criterion, one PASS line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines. Headline numbers from real pretrained models are out of reach here;
these criteria pin the engine's arithmetic, invariants and formats instead.
"""
import json
import time

import numpy as np
import pytest

from helpers import (
    anti_oracle_store,
    brute_force_max_cosine,
    brute_force_min_l2,
    make_dataset,
    make_prediction_table,
    oracle_store,
    random_store,
    random_table,
)
from vwsd.cli import main
from vwsd.dataset import Dataset
from vwsd.ensemble import EnsembleSpec, ensemble_tables
from vwsd.errors import ParseError
from vwsd.metrics import confusion, evaluate, hit_rate, round2, roundtrip_stats
from vwsd.scoring import (
    QuerySource,
    ScoreRow,
    ScoreTable,
    SystemSpec,
    rank_order,
    score_sample_query,
    score_system,
    softmax,
)
from vwsd.store import (
    EmbeddingSpace,
    EmbeddingStore,
    load_store_binary,
    load_store_jsonl,
    save_store_binary,
    save_store_jsonl,
)

BASE = SystemSpec(name="base", space="clip-en", query=QuerySource.parse("phrase"))


def ok(line: str) -> None:
    print(f"PASS: {line}")


def test_oracle_store_is_perfect_and_fast():
    dataset = make_dataset(120)
    store = oracle_store(dataset, dim=8)
    start = time.perf_counter()
    table = score_system(dataset, BASE, store)
    report = evaluate(table, dataset)
    elapsed = time.perf_counter() - start
    assert report.n == 120
    assert report.hit_rate == 100.0
    assert report.mrr == 100.0
    assert report.hit_rate_2dp == 100.00
    assert report.mrr_2dp == 100.00
    assert elapsed < 1.0
    ok(f"oracle store: hit rate 100.00, mrr 100.00 in {elapsed * 1000:.0f} ms")


def test_anti_oracle_store_ranks_gold_last():
    dataset = make_dataset(110)
    store = anti_oracle_store(dataset, dim=8)
    table = score_system(dataset, BASE, store)
    report = evaluate(table, dataset)
    assert report.hit_rate == 0.0
    assert abs(report.mrr - 10.0) <= 0.005
    ok(f"anti-oracle store: hit rate 0.00, mrr {report.mrr:.4f} (10.00 +/- 0.005)")


def test_hit_rate_confusion_arithmetic_consistency():
    # 268 correct of 463 prints as 57.88
    dataset = make_dataset(463)
    table_268 = make_prediction_table(dataset, [i < 268 for i in range(463)])
    assert round2(hit_rate(table_268, dataset)) == 57.88

    # row sums of any confusion matrix reproduce each system's hit rate
    rng = np.random.default_rng(42)
    for _ in range(5):
        table_a = random_table(dataset, rng, system="A")
        table_b = random_table(dataset, rng, system="B")
        report = confusion(table_a, table_b, dataset)
        assert round2(100 * report.hits_a() / report.n) == round2(hit_rate(table_a, dataset))
        assert round2(100 * report.hits_b() / report.n) == round2(hit_rate(table_b, dataset))
    ok("metric arithmetic: 268/463 -> 57.88 and confusion row sums = hit rates")


def test_softmax_and_ranking_properties():
    rng = np.random.default_rng(1234)
    cases = 1000
    for _ in range(cases):
        n = int(rng.integers(2, 11))
        raw = rng.uniform(-1.0, 1.0, size=n)
        scale = float(rng.uniform(0.1, 200.0))
        shift = float(rng.uniform(-100.0, 100.0))
        probs = softmax(scale * raw)
        assert abs(probs.sum() - 1.0) <= 1e-9
        assert np.all(probs > 0.0)
        shifted = softmax(scale * raw + shift)
        assert np.allclose(shifted, probs, rtol=0.0, atol=1e-12)
        assert int(np.argmax(probs)) == int(np.argmax(raw))
        rescale = float(rng.uniform(0.001, 1000.0))
        assert rank_order(raw) == rank_order(rescale * raw)
    ok(f"softmax/ranking properties hold on {cases} random cases")


def test_sd_aggregation_matches_brute_force():
    rng = np.random.default_rng(77)
    cases = 200
    for case in range(cases):
        dim = int(rng.integers(2, 17))
        n_samples = int(rng.integers(3, 51))
        dataset = make_dataset(1)
        inst = dataset.instances[0]
        store = EmbeddingStore()
        store.add_space(EmbeddingSpace("feat", dim, False))
        cand_vecs = []
        for cand in inst.candidates:
            v = rng.normal(size=dim) * rng.uniform(0.5, 3.0)
            store.add("feat", "image", cand, v.astype(np.float32))
            cand_vecs.append(store.get("feat", "image", cand))
        keys = []
        for i in range(n_samples):
            v = rng.normal(size=dim) * rng.uniform(0.5, 3.0)
            key = f"sample:{inst.id}:{i}"
            store.add("feat", "image", key, v.astype(np.float32))
            keys.append(key)
        sample_vecs = [store.get("feat", "image", k) for k in keys]
        spec = SystemSpec("sd", "feat", QuerySource("sd", "sd", "max_cosine"))
        row_cos = score_sample_query(keys, inst, store, spec, "max_cosine")
        row_l2 = score_sample_query(keys, inst, store, spec, "min_l2")
        assert row_cos.raw_scores == pytest.approx(
            brute_force_max_cosine(cand_vecs, sample_vecs), abs=1e-12)
        assert row_l2.raw_scores == pytest.approx(
            brute_force_min_l2(cand_vecs, sample_vecs), abs=1e-12)
        dup = keys + [keys[case % n_samples]]
        assert score_sample_query(dup, inst, store, spec, "max_cosine").raw_scores \
            == row_cos.raw_scores
        assert score_sample_query(dup, inst, store, spec, "min_l2").raw_scores \
            == row_l2.raw_scores
    ok(f"sd aggregation matches brute force to 1e-12 on {cases} cases "
       f"(duplicate samples inert)")


def _prob_table(system: str, prob_rows, candidates) -> ScoreTable:
    rows = []
    for i, probs in enumerate(prob_rows):
        order = sorted(range(len(probs)), key=lambda k: (-probs[k], k))
        ranking = tuple(candidates[k] for k in order)
        rows.append(ScoreRow(
            instance_id=f"{i + 1:06d}",
            candidates=tuple(candidates),
            raw_scores=tuple(probs),
            probs=tuple(probs),
            predicted=ranking[0],
            ranking=ranking,
        ))
    return ScoreTable(system=system, kind="cosine", rows=tuple(rows))


def test_ensemble_properties():
    dataset = make_dataset(20)
    rng = np.random.default_rng(5)

    solo = random_table(dataset, rng, system="solo")
    out = ensemble_tables([solo], EnsembleSpec.make("e", ["solo"]))
    assert all(a.probs == b.probs and a.ranking == b.ranking
               for a, b in zip(out.rows, solo.rows))

    members = [random_table(dataset, rng, system=s) for s in ("a", "b", "c")]
    fwd = ensemble_tables(members, EnsembleSpec.make("e", ["a", "b", "c"]))
    rev = ensemble_tables(members[::-1], EnsembleSpec.make("e", ["c", "b", "a"]))
    assert all(f.probs == r.probs for f, r in zip(fwd.rows, rev.rows))

    cands = ("c0", "c1")
    pair = ensemble_tables(
        [_prob_table("a", [(0.6, 0.4)], cands), _prob_table("b", [(0.2, 0.8)], cands)],
        EnsembleSpec.make("e", ["a", "b"]),
    )
    assert pair.rows[0].probs == pytest.approx((0.4, 0.6), abs=1e-12)
    assert pair.rows[0].predicted == "c1"

    cases = 1000
    cands10 = tuple(f"c{i}" for i in range(10))
    for _ in range(cases):
        top = int(rng.integers(0, 10))
        n_members = int(rng.integers(2, 6))
        tables = []
        for m in range(n_members):
            p = rng.uniform(0.01, 0.5, size=10)
            p[top] = 1.0  # strictly dominant before normalization
            p = p / p.sum()
            tables.append(_prob_table(f"m{m}", [tuple(p)], cands10))
        spec = EnsembleSpec.make("e", [f"m{m}" for m in range(n_members)])
        out = ensemble_tables(tables, spec)
        assert out.rows[0].predicted == cands10[top]
    ok(f"ensemble properties: identity, permutation invariance, hand average, "
       f"unanimous top on {cases} cases")


def test_binary_codec_round_trip_and_speed():
    rng = np.random.default_rng(99)
    for _ in range(5):
        store = random_store(rng, n_spaces=int(rng.integers(1, 5)),
                             entries_per_space=int(rng.integers(1, 120)),
                             max_dim=64)
        blob = save_store_binary(store)
        again = load_store_binary(blob)
        assert again == store
        assert save_store_binary(again) == blob

    wide = EmbeddingStore()
    wide.add_space(EmbeddingSpace("wide", 1024, True))
    for i in range(200):
        v = rng.normal(size=1024)
        wide.add("wide", "image", f"img{i}", (v / np.linalg.norm(v)).astype(np.float32))
    assert load_store_binary(save_store_binary(wide)) == wide

    blob = save_store_binary(wide)
    with pytest.raises(ParseError):
        load_store_binary(blob[:-3])
    with pytest.raises(ParseError):
        load_store_binary(b"NOPE" + blob[4:])

    jsonl_store = random_store(np.random.default_rng(7))
    first = save_store_jsonl(jsonl_store)
    second = save_store_jsonl(load_store_binary(save_store_binary(load_store_jsonl(first))))
    assert second == first

    big = EmbeddingStore()
    big.add_space(EmbeddingSpace("big", 8, False))
    vec_block = rng.normal(size=(100_000, 8)).astype(np.float32)
    for i in range(100_000):
        big.add("big", "image", f"k{i}", vec_block[i])
    start = time.perf_counter()
    blob = save_store_binary(big)
    loaded = load_store_binary(blob)
    elapsed = time.perf_counter() - start
    assert loaded == big
    assert elapsed < 5.0
    ok(f"binary codec: bit-exact round trips, rejects corruption, "
       f"1e5 entries in {elapsed:.2f} s")


def test_round_trip_partition_semantics():
    dataset = make_dataset(4)
    raw = []
    for i, inst in enumerate(dataset.instances):
        gold_idx = inst.candidates.index(inst.gold)
        row = [0.01 * (j + 1) for j in range(10)]
        row[gold_idx] = (0.9, 0.7, 0.2, 0.1)[i]
        raw.append(row)
    from helpers import make_cosine_table

    table = make_cosine_table(dataset, raw, system="zh")
    pairs = {
        "000001": ("angora city", "Angora City"),     # identical up to case
        "000002": ("word2 sense", "WORD2 SENSE"),     # identical up to case
        "000003": ("breaking wheel", "broken wheel"),  # different
        "000004": ("word4 sense", "word4 senses"),     # different
    }
    report = roundtrip_stats(pairs, table, dataset)
    assert report.identical_count == 2
    assert report.different_count == 2
    assert report.identical_mean_sim == (0.9 + 0.7) / 2
    assert report.different_mean_sim == pytest.approx((0.2 + 0.1) / 2, abs=1e-15)
    assert report.identical_mean_sim > report.different_mean_sim
    ok("round-trip partition: case-insensitive grouping, exact group means")


def test_cmd_score_is_deterministic_at_any_job_count(tmp_path):
    from helpers import dataset_files
    from vwsd.store import save_store_jsonl

    dataset = make_dataset(40)
    store = oracle_store(dataset)
    data_text, gold_text = dataset_files(dataset)
    (tmp_path / "dataset.tsv").write_text(data_text)
    (tmp_path / "gold.tsv").write_text(gold_text)
    (tmp_path / "store.jsonl").write_text(save_store_jsonl(store))
    (tmp_path / "config.toml").write_text(
        'dataset = "dataset.tsv"\n'
        'gold = "gold.tsv"\n'
        'stores = ["store.jsonl"]\n'
        'out = "reports"\n\n'
        "[[system]]\n"
        'name = "base"\n'
        'space = "clip-en"\n'
        'query = "phrase"\n'
    )
    outputs = []
    for jobs in ("1", "1", "4", "4"):
        assert main(["score", "--config", str(tmp_path / "config.toml"),
                     "base", "--jobs", jobs]) == 0
        outputs.append((tmp_path / "reports" / "base.scores.json").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2] == outputs[3]
    table = json.loads(outputs[0].decode("utf-8"))
    assert len(table["rows"]) == 40
    ok("cmd_score: bit-identical outputs across repeated runs and job counts")

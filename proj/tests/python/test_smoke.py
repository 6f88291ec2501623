import json
import math

import pytest

import citekg


@pytest.fixture(scope="module")
def planted():
    store, block, topic = citekg.planted_graph(works=200, topics_per_block=5, seed=3)
    return store, block, topic


def test_toy_tsv_quality(tmp_path):
    path = tmp_path / "toy.tsv"
    path.write_text("A\tcites\tB\t2015-01-01\nB\tcites\tA\t2015-01-01\nC\tcites\tA\t2015-01-01\n")
    store = citekg.ingest_tsv(str(path))
    assert store.num_entities == 3
    assert store.count_class("Work") == 3
    assert store.quality_report()["mutual_citation_pct"] == pytest.approx(66.67, abs=0.01)
    assert store.name(store.find("B")) == "B"
    assert store.find("missing") is None


def test_store_round_trip(planted, tmp_path):
    store, block, _ = planted
    assert len(block) == store.num_entities
    path = str(tmp_path / "g.kgf")
    store.save(path)
    again = citekg.load_store(path)
    assert again.num_entities == store.num_entities
    assert again.quads() == store.quads()


def test_split_counts(planted):
    store, _, _ = planted
    split = citekg.temporal_split(store, "2020-01-01", "2021-01-01", mode="inductive")
    counts = split.counts()
    assert counts["eval_targets"] == len(split.eval_targets) > 0
    assert split.mode == "inductive" and split.phase == "validation"
    test = citekg.temporal_split(store, "2020-01-01", "2021-01-01", phase="test")
    assert test.counts()["train"] > counts["train"]


def test_train_evaluate_and_reload(planted, tmp_path):
    store, block, _ = planted
    split = citekg.temporal_split(store, "2020-01-01", "2021-01-01")
    res = citekg.train(store, split, model="complex", dim=16, negatives=32, batch_size=64,
                       max_steps=50, time_budget=1000, seed=1)
    ckpt = res["checkpoint"]
    assert res["steps"] == 50 and ckpt.model == "complex" and ckpt.dim == 16

    rep = citekg.evaluate(ckpt, store, split, strategy="random", n_neg=50, seed=2)
    assert 0 < rep["mrr"] <= 1
    assert rep["queries"] == len(split.eval_targets) == len(rep["ranks"])
    assert rep["mrr"] == pytest.approx(sum(1 / r for r in rep["ranks"]) / len(rep["ranks"]))

    path = str(tmp_path / "c.kge")
    ckpt.save(path)
    again = citekg.evaluate(citekg.load_checkpoint(path), store, split, strategy="random", n_neg=50, seed=2)
    assert again["ranks"] == rep["ranks"]

    full = citekg.evaluate(ckpt, store, split, strategy="full", n_neg=None)
    comm = citekg.evaluate(ckpt, store, split, strategy="community", n_neg=50, communities=block)
    assert full["strategy"] == "full" and comm["strategy"] == "community"


def test_communities_budget_and_cap(planted):
    store, _, _ = planted
    res = citekg.communities(store, n_labels=3, cap=100, seed=4)
    labels = [l for l in res["labels"] if l >= 0]
    assert res["used_labels"] <= 3
    assert all(labels.count(l) <= 100 for l in set(labels))
    assert all(b >= a - 1e-12 for a, b in zip(res["trace"], res["trace"][1:]))
    with pytest.raises(ValueError):
        citekg.communities(store, n_labels=1, cap=10)


def test_errors_map_to_python_exceptions(planted):
    store, _, _ = planted
    with pytest.raises(ValueError):
        citekg.temporal_split(store, "2020-13-01", "2021-01-01")
    with pytest.raises(ValueError):
        citekg.train(store, model="transe")
    with pytest.raises(ValueError):
        store.name(store.num_entities)
    with pytest.raises(ValueError):
        citekg.load_store("/nonexistent/store.kgf")


def test_cli(tmp_path):
    out = str(tmp_path / "g.kgf")
    code, stdout, _ = citekg.run_cli(["generate", "--works", "100", "--seed", "1", "--output", out])
    assert code == 0
    code, stdout, _ = citekg.run_cli(["qc", "--store", out])
    assert code == 0 and math.isfinite(json.loads(stdout)["mutual_citation_pct"])
    code, _, stderr = citekg.run_cli(["qc", "--store", str(tmp_path / "missing.kgf")])
    assert code == 2 and stderr

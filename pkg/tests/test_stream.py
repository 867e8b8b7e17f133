import json
import threading
import time

import numpy as np
import pytest

from ofsulr.bundle import ModelBundle
from ofsulr.classifiers import fit_classifier
from ofsulr.errors import DataError, UsageError
from ofsulr.ingest import Column, ColumnKind, Table, save_csv
from ofsulr.metrics import Confusion, confusion
from ofsulr.preprocess import fit_encoder, scaler_fit
from ofsulr.stream import StreamBatch, iter_batches, jsonl_writer, stream_evaluate, stream_source

from conftest import two_blobs


def labeled_table(n=60, seed=0):
    X, y = two_blobs(n, 2, gap=1.5, seed=seed)
    cols = [Column("a", ColumnKind.REAL, tuple(X[:, 0])), Column("b", ColumnKind.REAL, tuple(X[:, 1])),
            Column("label", ColumnKind.INTEGER, tuple(int(v) for v in y))]
    return Table.from_columns("t", cols)


def make_bundle(table, kind="logreg"):
    enc = fit_encoder(table, columns=["a", "b"])
    X = enc.transform(table).values
    sc = scaler_fit(X)
    y = np.array(table.column("label").cells)
    return ModelBundle(enc, sc, None, None, fit_classifier(kind, sc.apply(X), y))


def test_batching_sizes_and_order():
    t = labeled_table(10)
    sizes = [b.rows.row_count for b in iter_batches(t, 4)]
    assert sizes == [4, 4, 2]
    assert [b.rows.row_count for b in iter_batches(t, 50)] == [10]
    batches = list(iter_batches(t, 3))
    assert [b.batch_id for b in batches] == list(range(4))
    joined = sum((list(b.rows.iter_rows()) for b in batches), [])
    assert joined == list(t.iter_rows())
    with pytest.raises(UsageError):
        list(iter_batches(t, 0))


def test_stream_source_from_csv(tmp_path):
    t = labeled_table(10)
    save_csv(t, tmp_path / "s.csv")
    got = list(stream_source(tmp_path / "s.csv", 4))
    assert [b.rows.row_count for b in got] == [4, 4, 2]


@pytest.mark.parametrize("kind", ["logreg", "svm", "tree", "forest", "gbt"])
def test_cumulative_equals_batch_for_every_size(kind):
    t = labeled_table(80, seed=3)
    bundle = make_bundle(t, kind)
    y = bundle.labels(t)
    batch = confusion(y, bundle.predict(t))
    for size in (1, 7, 1000, t.row_count):
        running = stream_evaluate(bundle, iter_batches(t, size))
        assert running.cumulative == batch
        assert sum(running.batch_sizes) == t.row_count


def test_prefix_property_and_sum():
    t = labeled_table(50, seed=1)
    bundle = make_bundle(t)
    running = stream_evaluate(bundle, iter_batches(t, 7))
    total = Confusion()
    for b, rep in enumerate(running.batches):
        total = total + rep.confusion
        upto = sum(running.batch_sizes[: b + 1])
        head = t.slice(0, upto)
        assert running.prefix[b] == confusion(bundle.labels(head), bundle.predict(head))
    assert total == running.cumulative


def test_single_batch_report_equals_batch_mode():
    t = labeled_table(40)
    bundle = make_bundle(t)
    running = stream_evaluate(bundle, iter_batches(t, t.row_count))
    rep = running.final()
    assert rep.confusion == confusion(bundle.labels(t), bundle.predict(t))


def test_interleaved_sessions_match_sequential_runs():
    t1, t2 = labeled_table(60, seed=4), labeled_table(60, seed=5)
    bundle = make_bundle(t1)
    before = json.dumps(bundle.to_dict(), sort_keys=True)
    solo = [stream_evaluate(bundle, iter_batches(t, 5)).cumulative for t in (t1, t2)]
    out = {}

    def run(name, t):
        out[name] = stream_evaluate(bundle, iter_batches(t, 5, interval=0.001)).cumulative

    threads = [threading.Thread(target=run, args=(i, t)) for i, t in enumerate((t1, t2))]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert [out[0], out[1]] == solo
    assert json.dumps(bundle.to_dict(), sort_keys=True) == before


def test_results_independent_of_queue_size_and_threading():
    t = labeled_table(70, seed=6)
    bundle = make_bundle(t)
    ref = stream_evaluate(bundle, iter_batches(t, 3), threaded=False).cumulative
    for q in (1, 2, 16):
        assert stream_evaluate(bundle, iter_batches(t, 3), queue_size=q).cumulative == ref


def test_backpressure_bounds_the_queue():
    t = labeled_table(40)
    bundle = make_bundle(t)
    produced = []

    def source():
        for b in iter_batches(t, 1):
            produced.append(b.batch_id)
            yield b

    consumed = []

    def slow(bid, _rep):
        consumed.append(bid)
        # producer may be at most queue_size (+1 in hand) ahead of the consumer
        assert len(produced) - len(consumed) <= 2 + 1
        time.sleep(0.001)

    stream_evaluate(bundle, source(), queue_size=2, on_batch=slow)
    assert consumed == list(range(40))


def test_schema_mismatch_and_out_of_order():
    t = labeled_table(20)
    bundle = make_bundle(t)
    bad = Table.from_columns("t", [t.column("a"), t.column("label")])
    with pytest.raises(DataError, match="schema"):
        stream_evaluate(bundle, iter_batches(bad, 5))
    shuffled = [StreamBatch(1, t.slice(0, 5), 0.0)]
    with pytest.raises(DataError, match="order"):
        stream_evaluate(bundle, shuffled)


def test_producer_error_reaches_consumer():
    t = labeled_table(20)
    bundle = make_bundle(t)

    def broken():
        yield next(iter(iter_batches(t, 5)))
        raise DataError("source failed")

    with pytest.raises(DataError, match="source failed"):
        stream_evaluate(bundle, broken())


def test_jsonl_writer(tmp_path):
    t = labeled_table(20)
    bundle = make_bundle(t)
    path = tmp_path / "b.jsonl"
    running = stream_evaluate(bundle, iter_batches(t, 6), on_batch=jsonl_writer(path))
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert [x["batch_id"] for x in lines] == [0, 1, 2, 3]
    assert running.to_dict()["n_rows"] == 20
    assert set(running.batch_average()) == {"accuracy", "f1", "precision", "recall"}

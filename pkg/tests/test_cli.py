import csv
import json

import numpy as np
import pytest

from ssxgb import cli
from ssxgb.federation import ConfigError, vertical_partition


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture()
def toy_csv(tmp_path):
    rng = np.random.default_rng(9)
    x = rng.normal(size=(16, 4)).round(3)
    y = (x[:, 1] > 0).astype(int)
    path = tmp_path / "toy.csv"
    write_csv(path, ["a", "b", "c", "d", "label"],
              [list(row) + [lab] for row, lab in zip(x, y)])
    return path, x, y


def test_iris_preset_shape_and_balance():
    x, y, names = cli.iris_dataset(seed=1)
    assert x.shape == (200, 4)
    assert y.sum() == 100           # 50 true setosa + 50 synthetic
    assert len(names) == 4
    parts = vertical_partition(x, y, names, 4, 0)
    assert all(len(p.columns) == 1 for p in parts)   # one feature each


def test_iris_preset_deterministic():
    x1, y1, _ = cli.iris_dataset(seed=5)
    x2, y2, _ = cli.iris_dataset(seed=5)
    np.testing.assert_array_equal(x1, x2)
    x3, _, _ = cli.iris_dataset(seed=6)
    assert not np.array_equal(x1, x3)


def test_wide_frame_partition_matches_pixel_split():
    # 784 features over 16 participants: 49 each
    x = np.zeros((4, 784))
    y = np.array([0.0, 1.0, 0.0, 1.0])
    parts = vertical_partition(x, y, [f"px{i}" for i in range(784)], 16, 0)
    assert [len(p.columns) for p in parts] == [49] * 16


def test_digits_preset_balanced():
    x, y, names = cli.digits_dataset(seed=2, rows=400)
    assert x.shape == (400, 64)
    assert y.sum() == 200


def test_mnist_preset_requires_dataset():
    with pytest.raises(ConfigError):
        cli.mnist_dataset(None)


def test_too_many_participants_rejected(toy_csv, tmp_path):
    path, _, _ = toy_csv
    write_csv(tmp_path / "narrow.csv", ["a", "b", "label"],
              [[1.0, 2.0, 0], [3.0, 4.0, 1]])
    cfg = cli.RunConfig(dataset=str(tmp_path / "narrow.csv"), participants=3,
                        out_dir=str(tmp_path / "o"))
    with pytest.raises(ConfigError):
        cli.ingest(cfg)


def test_load_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    write_csv(bad, ["a", "label"], [[1.0, 0], ["oops", 1]])
    with pytest.raises(ConfigError):
        cli.load_csv(bad, "label")
    with pytest.raises(ConfigError):
        cli.load_csv(bad, "missing")


def test_oracle_mode_iris_reaches_accuracy(tmp_path):
    cfg = cli.RunConfig(preset="iris", participants=4, lbp=0, rounds=20,
                        eta=0.08, max_depth=4, subsample=0.8, colsample=0.8,
                        seed=3, mode="plaintext-oracle",
                        out_dir=str(tmp_path / "iris"))
    summary = cli.run_train(cfg)
    assert summary["oracle_final"]["accuracy"] >= 0.95
    rows = list(csv.DictReader(open(tmp_path / "iris" / "metrics.csv")))
    assert len(rows) == 20
    assert set(rows[0]) == {"round", "train_accuracy", "train_logloss",
                            "bytes_participant_to_c", "bytes_c_s"}


def test_oracle_mode_metrics_byte_identical(tmp_path):
    texts = []
    for name in ("a", "b"):
        cfg = cli.RunConfig(preset="iris", participants=4, rounds=5, seed=12,
                            mode="plaintext-oracle", out_dir=str(tmp_path / name))
        cli.run_train(cfg)
        texts.append((tmp_path / name / "metrics.csv").read_bytes())
    assert texts[0] == texts[1]


def test_secure_train_and_predict_smoke(toy_csv, tmp_path):
    path, x, y = toy_csv
    out = tmp_path / "run"
    rc = cli.main(["train", "--dataset", str(path), "--participants", "2",
                   "--key-bits", "256", "--scale-bits", "10",
                   "--quotient-bits", "10", "--value-bits", "12",
                   "--mask-bits", "16", "--rounds", "2", "--eta", "0.3",
                   "--max-depth", "2", "--subsample", "1.0",
                   "--colsample", "1.0", "--candidates", "3", "--seed", "8",
                   "--mode", "both", "--out-dir", str(out)])
    assert rc == 0
    assert (out / "model.json").exists()
    assert (out / "transcript.jsonl").exists()
    assert (out / "meter.csv").exists()
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert len(rows) == 2
    assert "oracle_accuracy" in rows[0]

    records = tmp_path / "records.csv"
    write_csv(records, ["a", "b", "c", "d"], [list(r) for r in x[:3]])
    preds_path = tmp_path / "preds.csv"
    rc = cli.main(["predict", "--model-dir", str(out), "--records", str(records),
                   "--out", str(preds_path)])
    assert rc == 0
    preds = list(csv.DictReader(open(preds_path)))
    assert len(preds) == 3
    for row in preds:
        assert row["prediction"] in ("0", "1")


def test_config_file_with_flag_override(toy_csv, tmp_path):
    path, _, _ = toy_csv
    config = {"dataset": str(path), "participants": 2, "rounds": 7,
              "mode": "plaintext-oracle", "seed": 4,
              "out_dir": str(tmp_path / "cfgrun")}
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    rc = cli.main(["train", "--config", str(cfg_path), "--rounds", "3"])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "cfgrun" / "metrics.csv")))
    assert len(rows) == 3   # the flag overrode the config file


def test_exit_codes(tmp_path):
    assert cli.main(["train", "--seed", "1",
                     "--out-dir", str(tmp_path / "x")]) == 2   # no dataset
    assert cli.main(["train", "--nonsense"]) == 2


def test_bench_smoke(tmp_path):
    results = cli.bench_primitives(key_sizes=(256,), reps=5, seed=1)
    assert len(results) == 1
    row = results[0]
    assert set(cli.BENCH_OPS) <= set(row)
    assert all(row[op] >= 0 for op in cli.BENCH_OPS)
    out = tmp_path / "bench.csv"
    cli.write_bench_csv(out, results)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + len(cli.BENCH_OPS)
    with pytest.raises(ConfigError):
        cli.bench_primitives(key_sizes=(256,), reps=2)


def test_bench_orderings_at_one_size():
    row = cli.bench_primitives(key_sizes=(1024,), reps=8, seed=2)[0]
    assert row["mDec"] > row["Dec"] > row["Enc"]
    subprotocols = ("KeyProd", "Add", "Mult", "TransDec", "Exp", "Sub", "LGT", "Div")
    assert max(subprotocols, key=lambda op: row[op]) == "Mult"
    assert min(subprotocols, key=lambda op: row[op]) == "KeyProd"
    assert row["Mult"] > row["TransDec"] and row["Div"] > row["LGT"]
    # Add and Sub are both microsecond-scale local ops (Sub adds only a
    # component inverse): same magnitude, far below any interactive protocol
    assert row["Sub"] < 10 * row["Add"]
    assert row["Sub"] < row["Mult"] / 100

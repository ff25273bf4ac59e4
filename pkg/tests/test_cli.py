import json

import numpy as np
import pytest

from sinbad.cli import main

TS_TEMPLATE = """\
@problemName {name}
@univariate false
@dimensions 2
@equalLength true
@seriesLength {length}
@classLabel true A B
@data
{body}"""


def write_ts(path, rng, n_per_class, length=24, shift=4.0):
    lines = []
    for label, mu in (("A", 0.0), ("B", shift)):
        for _ in range(n_per_class):
            chans = []
            for _ in range(2):
                vals = rng.normal(mu, 1.0, size=length)
                chans.append(",".join(f"{v:.5f}" for v in vals))
            lines.append(":".join(chans) + f":{label}")
    path.write_text(TS_TEMPLATE.format(name=path.stem, length=length,
                                       body="\n".join(lines) + "\n"))
    return path


@pytest.fixture()
def ts_files(tmp_path):
    rng = np.random.RandomState(0)
    train = write_ts(tmp_path / "toy_TRAIN.ts", rng, 8)
    test = write_ts(tmp_path / "toy_TEST.ts", rng, 8)
    return train, test


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def test_parse_uea(ts_files, capsys, tmp_path):
    train, _ = ts_files
    code, out = run(capsys, ["parse-uea", str(train),
                             "--out", str(tmp_path / "summary.json")])
    assert code == 0
    payload = json.loads(out)
    assert payload["n_series"] == 16
    assert payload["n_channels"] == 2
    assert payload["classes"] == {"A": 8, "B": 8}
    assert json.loads((tmp_path / "summary.json").read_text()) == payload


def test_extract_fit_score_round_trip(ts_files, capsys, tmp_path):
    train, test = ts_files
    common = ["--tau", "4", "--levels", "2", "--projections", "20", "--bins", "6"]

    code, out = run(capsys, ["extract-ts", str(train), "--out",
                             str(tmp_path / "train_sets"), "--split", "train",
                             "--normal-class", "A"] + common)
    assert code == 0
    assert json.loads(out)["n_samples"] == 8     # class B dropped from train

    code, _ = run(capsys, ["extract-ts", str(test), "--out",
                           str(tmp_path / "test_sets"), "--split", "test",
                           "--normal-class", "A"] + common)
    assert code == 0

    code, _ = run(capsys, ["fit", str(tmp_path / "train_sets"), "--out",
                           str(tmp_path / "det")] + common)
    assert code == 0
    top = json.loads((tmp_path / "det" / "detector.json").read_text())
    assert top["levels"]["ts"]["n_bins"] == 6
    assert top["n_train"] == 8

    code, out = run(capsys, ["score", str(tmp_path / "det"),
                             str(tmp_path / "test_sets"),
                             "--out", str(tmp_path / "scores.csv")])
    assert code == 0
    rows = json.loads(out)
    assert len(rows) == 16
    by_label = {}
    for row in rows:
        by_label.setdefault(row["label"], []).append(row["score"])
    # anomalous class scores clearly higher on this separable toy
    assert np.mean(by_label["anomalous"]) > 3 * np.mean(by_label["normal"])
    assert (tmp_path / "scores.csv").read_text().startswith("sample_id,label,score")


def test_eval_uea_protocol(ts_files, capsys, tmp_path):
    train, test = ts_files
    code, out = run(capsys, [
        "eval", "--protocol", "uea", "--train-file", str(train),
        "--test-file", str(test), "--out", str(tmp_path / "report"),
        "--tau", "4", "--levels", "2", "--projections", "20", "--bins", "6"])
    assert code == 0
    payload = json.loads(out)
    assert payload["schema_version"] == 1
    assert payload["dataset"] == "toy"
    assert payload["mean_auc"] >= 0.95
    assert set(payload["per_class"]) == {"A", "B"}
    on_disk = json.loads((tmp_path / "report" / "report.json").read_text())
    assert on_disk == payload


def test_eval_repeats_and_fingerprint(ts_files, capsys, tmp_path):
    train, test = ts_files
    argv = ["eval", "--train-file", str(train), "--test-file", str(test),
            "--tau", "4", "--levels", "2", "--projections", "15", "--bins", "5",
            "--repeats", "2"]
    code, out = run(capsys, argv + ["--out", str(tmp_path / "r1")])
    assert code == 0
    first = json.loads(out)
    assert len(first["per_repeat"]) == 2
    assert first["std_auc"] >= 0.0

    code, out = run(capsys, argv + ["--out", str(tmp_path / "r2")])
    second = json.loads(out)
    assert second["fingerprint"] == first["fingerprint"]
    assert second["per_repeat"] == first["per_repeat"]

    code, out = run(capsys, argv + ["--seed", "9", "--out", str(tmp_path / "r3")])
    assert json.loads(out)["fingerprint"] != first["fingerprint"]


def test_config_file_and_flag_precedence(ts_files, capsys, tmp_path):
    train, _ = ts_files
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"tau": 4, "levels": 2, "projections": 20,
                                  "bins": 4}))
    out_dir = tmp_path / "sets"
    code, _ = run(capsys, ["extract-ts", str(train), "--out", str(out_dir),
                           "--split", "train", "--normal-class", "A",
                           "--config", str(config)])
    assert code == 0

    # flag overrides the file value
    code, _ = run(capsys, ["fit", str(out_dir), "--out", str(tmp_path / "det"),
                           "--config", str(config), "--bins", "9"])
    assert code == 0
    top = json.loads((tmp_path / "det" / "detector.json").read_text())
    assert top["levels"]["ts"]["n_bins"] == 9
    assert top["levels"]["ts"]["n_projections"] == 20


def test_level_overrides_from_config(ts_files, capsys, tmp_path):
    train, _ = ts_files
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "tau": 4, "levels": 2, "projections": 20, "bins": 6,
        "level_overrides": {"ts": {"weight": 0.25, "scorer": "knn", "k": 2}},
    }))
    out_dir = tmp_path / "sets"
    run(capsys, ["extract-ts", str(train), "--out", str(out_dir),
                 "--split", "train", "--normal-class", "A",
                 "--config", str(config)])
    code, _ = run(capsys, ["fit", str(out_dir), "--out", str(tmp_path / "det"),
                           "--config", str(config)])
    assert code == 0
    level = json.loads((tmp_path / "det" / "detector.json").read_text())["levels"]["ts"]
    assert level["weight"] == 0.25
    assert level["scorer"] == "knn" and level["k"] == 2


def test_exit_code_config_error(ts_files, capsys, tmp_path):
    train, _ = ts_files
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    code, _ = run(capsys, ["parse-uea", str(train)])
    assert code == 0
    code, _ = run(capsys, ["fit", str(tmp_path), "--out", str(tmp_path / "d"),
                           "--config", str(bad)])
    assert code == 2
    # argparse rejects unknown choices with the same code
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--protocol", "bogus", "--out", "x"])
    assert exc.value.code == 2


def test_exit_code_data_error(capsys, tmp_path):
    code, _ = run(capsys, ["parse-uea", str(tmp_path / "missing.ts")])
    assert code == 3
    code, _ = run(capsys, ["fit", str(tmp_path), "--out", str(tmp_path / "d")])
    assert code == 3


def test_fit_rejects_non_train_manifest(ts_files, capsys, tmp_path):
    _, test = ts_files
    run(capsys, ["extract-ts", str(test), "--out", str(tmp_path / "sets"),
                 "--split", "test", "--normal-class", "A",
                 "--tau", "4", "--levels", "2"])
    code, _ = run(capsys, ["fit", str(tmp_path / "sets"),
                           "--out", str(tmp_path / "d")])
    assert code == 3


def test_exit_code_degenerate_model(capsys, tmp_path):
    path = tmp_path / "const_TRAIN.ts"
    rows = "\n".join(",".join(["1.0"] * 12) + ":A" for _ in range(5))
    path.write_text("@problemName const\n@univariate true\n@classLabel true A\n"
                    "@data\n" + rows + "\n")
    run(capsys, ["extract-ts", str(path), "--out", str(tmp_path / "sets"),
                 "--split", "train", "--normal-class", "A",
                 "--tau", "4", "--levels", "2"])
    code, _ = run(capsys, ["fit", str(tmp_path / "sets"),
                           "--out", str(tmp_path / "d"),
                           "--tau", "4", "--levels", "2"])
    assert code == 4


def test_extract_ts_train_needs_normal_class(ts_files, capsys, tmp_path):
    train, _ = ts_files
    code, _ = run(capsys, ["extract-ts", str(train), "--out",
                           str(tmp_path / "sets"), "--split", "train"])
    assert code == 2


def test_length_filter_flags(ts_files, capsys, tmp_path):
    train, _ = ts_files
    code, out = run(capsys, ["extract-ts", str(train), "--out",
                             str(tmp_path / "sets"), "--split", "test",
                             "--min-steps", "30", "--tau", "4", "--levels", "2"])
    assert code == 3   # every series is shorter than 30 steps

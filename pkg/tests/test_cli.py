import json
import subprocess
import sys

import numpy as np
import pytest

from ddf import harness as hx
from ddf.classifiers import load_model
from ddf.cli import main
from ddf.fusion import FusionWeights
from ddf.signal_core import Recording, read_recording, realized_snr_db, write_recording

FAST = {
    "synth": {"segments_per_class": 20, "seed": 5},
    "ssl": {"xi": 0.5, "steps": 3, "repetitions": 2, "seed": 1},
    "time_classifier": {"kind": "softmax_regression", "epochs": 20},
    "tf_classifier": {"kind": "softmax_regression", "epochs": 20},
}


@pytest.fixture
def exp_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(FAST))
    return path


def test_synth_and_preprocess(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"segments_per_class": 12, "seed": 2}))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 0
    ds = hx.load_dataset(tmp_path / "d")
    assert ds.segments.shape == (48, 1, 256)

    assert main(["preprocess", "--in", str(tmp_path / "d"), "--out", str(tmp_path / "n"),
                 "--snr", "-5", "--seed", "3"]) == 0
    noisy = hx.load_dataset(tmp_path / "n")
    for c, v in zip(ds.segments, noisy.segments):
        # CSV stores repr-exact floats, so the realized SNR survives the round-trip
        assert realized_snr_db(c, v) == pytest.approx(-5.0, abs=1e-9)

    assert main(["preprocess", "--in", str(tmp_path / "d"), "--out", str(tmp_path / "r"),
                 "--target-rate", "1280"]) == 0
    assert hx.load_dataset(tmp_path / "r").segments.shape == (48, 1, 128)


def test_tfr_bin_and_csv(tmp_path):
    x = np.cos(2 * np.pi * 300 * np.arange(256) / 2560)
    seg = tmp_path / "seg.bin"
    write_recording(seg, Recording(x, 2560.0))
    params = tmp_path / "ckd.json"
    params.write_text(json.dumps({"c": 1, "d_cutoff": 0.1, "e_cutoff": 0.1, "downsample_factor": 0.25}))

    out = tmp_path / "tfr.bin"
    assert main(["tfr", "--in", str(seg), "--params", str(params), "--out", str(out),
                 "--svg", str(tmp_path / "tfr.svg")]) == 0
    meta = json.loads((tmp_path / "tfr.json").read_text())
    assert meta["shape"] == [1, 64, 64]
    vals = np.fromfile(out, "<f4").reshape(meta["shape"])
    # 300 Hz on a 64-bin axis spanning 0..fs/2
    assert np.all(np.abs(np.argmax(vals[0, 8:-8], axis=1) - 15) <= 1)
    assert (tmp_path / "tfr.svg").read_text().startswith("<?xml")

    assert main(["tfr", "--in", str(seg), "--out", str(tmp_path / "t.csv")]) == 0
    ch = np.loadtxt(tmp_path / "t_ch0.csv", delimiter=",")
    assert ch.shape == (256, 256)


def test_run_outputs(tmp_path, exp_file):
    out = tmp_path / "res"
    for method in ("ddf", "self-training"):
        assert main(["run", "--config", str(exp_file), "--method", method, "--out", str(out)]) == 0
    steps = (out / "steps_ddf_clean.csv").read_text().splitlines()
    assert steps[0] == "repetition,step,pool_labeled,pool_pseudo,accepted,acc_time,acc_tf,acc_fused"
    assert len(steps) == 1 + 2 * 3
    st = hx.steps_from_csv((out / "steps_self-training_clean.csv").read_text())
    assert all(r.acc_tf is None for r in st)
    model = load_model(out / "time_model_ddf_clean_rep0.bin")
    assert model.n_features == 256
    w = FusionWeights.load(out / "weights_ddf_clean_rep1.json")
    assert w.beta_time.shape == (4,)
    assert not (out / "weights_self-training_clean_rep0.json").exists()
    gate = json.loads((out / "deployment_ddf_clean.json").read_text())
    assert gate["min_gain"] == 0.01
    assert {d["decision"] for d in gate["repetitions"]} <= {"replace", "keep"}


def test_run_byte_identical(tmp_path, exp_file):
    for d in ("a", "b"):
        assert main(["run", "--config", str(exp_file), "--out", str(tmp_path / d)]) == 0
    for name in ("steps_ddf_clean.csv", "results_ddf_clean.csv", "time_model_ddf_clean_rep0.bin",
                 "weights_ddf_clean_rep0.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_and_report(tmp_path, exp_file):
    out = tmp_path / "res"
    assert main(["sweep", "--config", str(exp_file), "--grid", "0.3,0.6", "--out", str(out)]) == 0
    rows = hx.results_from_csv((out / "sweep.csv").read_text())
    assert [r.xi for r in rows] == [0.3, 0.6]
    assert sum(r.selected for r in rows) == 1
    assert main(["run", "--config", str(exp_file), "--out", str(out)]) == 0
    assert main(["report", "--in", str(out), "--plots"]) == 0
    summary = hx.results_from_csv((out / "summary.csv").read_text())
    assert len(summary) == len(rows) + len(hx.results_from_csv((out / "results_ddf_clean.csv").read_text()))
    assert (out / "accuracy_clean.svg").exists() and (out / "sweep.svg").exists()
    first = (out / "sweep.svg").read_bytes()
    assert main(["report", "--in", str(out), "--plots"]) == 0
    assert (out / "sweep.svg").read_bytes() == first


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1

    def test_bad_config(self, tmp_path):
        p = tmp_path / "e.json"
        p.write_text(json.dumps({"synth": {}, "ssl": {"xi": 3}}))
        assert main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1

    def test_bad_grid(self, tmp_path, exp_file):
        assert main(["sweep", "--config", str(exp_file), "--grid", "x", "--out", str(tmp_path)]) == 1

    def test_report_empty_dir(self, tmp_path):
        assert main(["report", "--in", str(tmp_path)]) == 2

    def test_missing_data_dir(self, tmp_path):
        p = tmp_path / "e.json"
        p.write_text(json.dumps({"data_dir": "absent"}))
        assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_short_recording(self, tmp_path):
        write_recording(tmp_path / "s.csv", Recording(np.ones(1), 10.0))
        assert main(["tfr", "--in", str(tmp_path / "s.csv"), "--out", str(tmp_path / "t.bin")]) == 2

    def test_tfr_bad_params(self, tmp_path):
        write_recording(tmp_path / "s.csv", Recording(np.ones(64), 10.0))
        p = tmp_path / "p.json"
        p.write_text(json.dumps({"c": -1}))
        assert main(["tfr", "--in", str(tmp_path / "s.csv"), "--params", str(p),
                     "--out", str(tmp_path / "t.bin")]) == 1

    def test_console_script(self):
        res = subprocess.run([sys.executable, "-m", "ddf.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "sweep" in res.stdout


def test_read_back_recording(tmp_path):
    rec = Recording(np.arange(6.0).reshape(2, 3), 4.0)
    write_recording(tmp_path / "r.csv", rec)
    assert np.array_equal(read_recording(tmp_path / "r.csv").samples, rec.samples)

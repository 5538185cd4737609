"""``ddf`` command line interface.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import classifiers as clf
from . import harness as hx
from .errors import ConfigError, DataError, DDFError, IoFailure, NumericalError
from .signal_core import (
    NoiseSpec,
    Recording,
    add_noise,
    apply_filter,
    decimate,
    design_lowpass,
    read_recording,
    segment,
)
from .tfr import TfrConfig, compute_ckd_tfr

log = logging.getLogger("ddf")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


# -- subcommands ------------------------------------------------------------------

def cmd_synth(args):
    spec = hx.SynthSpec.from_dict(_read_json(args.spec))
    ds = hx.synth_dataset(spec)
    hx.write_dataset(args.out, ds, args.format)
    log.info("wrote %d segments in %d classes to %s", len(ds.labels), ds.n_classes, args.out)


def cmd_preprocess(args):
    src = Path(args.inp)
    manifest = _read_json(src / hx.MANIFEST)
    L = float(manifest["segment_len_s"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    seqs = np.random.SeedSequence(args.seed).spawn(len(manifest["classes"]))
    fs = None
    for n, entry in enumerate(manifest["classes"]):
        rec = read_recording(src / entry["file"])
        if args.target_rate is not None:
            rec = decimate(rec, args.target_rate)
        if args.filter_cutoff is not None:
            rec = apply_filter(rec, design_lowpass(args.filter_cutoff, args.filter_taps,
                                                   rec.sample_rate_hz))
        segs = segment(rec, L).segments
        if args.snr is not None:
            seg_seqs = seqs[n].spawn(len(segs))
            segs = np.stack([
                add_noise(Recording(s, rec.sample_rate_hz),
                          NoiseSpec(args.snr, int(seg_seqs[i].generate_state(1, np.uint64)[0]))).samples
                for i, s in enumerate(segs)
            ])
        P, Q, m = segs.shape
        joined = Recording(segs.transpose(1, 0, 2).reshape(Q, P * m), rec.sample_rate_hz)
        fname = Path(entry["file"]).name
        hx.write_recording(out / fname, joined)
        entries.append({"name": entry.get("name", f"class_{n}"), "file": fname})
        fs = rec.sample_rate_hz
    (out / hx.MANIFEST).write_text(json.dumps(
        {"segment_len_s": L, "sample_rate_hz": fs, "classes": entries}, indent=2))


def cmd_tfr(args):
    params = _read_json(args.params) if args.params else {}
    try:
        cfg = TfrConfig.from_dict(params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    rec = read_recording(args.inp)
    tfr = compute_ckd_tfr(rec.samples, cfg, rec.sample_rate_hz)
    out = Path(args.out)
    meta = {"shape": list(tfr.values.shape), "time_step_s": tfr.time_step_s,
            "freq_step_hz": tfr.freq_step_hz, "params": cfg.to_dict()}
    try:
        if out.suffix == ".csv":
            files = []
            for q, ch in enumerate(tfr.values):
                f = out.with_name(f"{out.stem}_ch{q}.csv")
                np.savetxt(f, ch, delimiter=",", fmt="%.17g")
                files.append(f.name)
            meta["files"] = files
        else:
            tfr.values.astype("<f4").tofile(out)
            meta["dtype"] = "float32-le"
        out.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        if args.svg:
            from .plotting import tfr_heatmap

            tfr_heatmap(tfr.values, tfr.time_step_s, tfr.freq_step_hz, args.svg)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _write_run(out: Path, method: str, exp: hx.Experiment, runs):
    tag = f"{method}_{exp.noise_label}"
    reports = [r for rep, _ in runs for r in rep]
    hx.write_atomic(out / f"steps_{tag}.csv", hx.steps_to_csv(reports))
    hx.write_atomic(out / f"steps_validation_{tag}.csv", hx.steps_to_csv(reports, validation=True))
    rows = hx.aggregate_steps(reports, method, exp.noise_label, exp.ssl.xi)
    hx.write_atomic(out / f"results_{tag}.csv", hx.results_to_csv(rows))
    decisions = []
    for rep, (steps, state) in enumerate(runs):
        clf.save_model(out / f"time_model_{tag}_rep{rep}.bin", state.time_model)
        if state.weights is not None:
            hx.write_atomic(out / f"weights_{tag}_rep{rep}.json",
                            json.dumps(state.weights.to_dict()))
        original, updated = steps[0].acc_time, steps[-1].acc_time
        decisions.append({"repetition": rep, "original_acc": original, "updated_acc": updated,
                          "decision": hx.deployment_gate(original, updated, exp.min_gain)})
    hx.write_atomic(out / f"deployment_{tag}.json",
                    json.dumps({"min_gain": exp.min_gain, "repetitions": decisions}, indent=2))
    return rows


def cmd_run(args):
    exp = hx.load_experiment(args.config)
    data, splits = hx.prepare(exp)
    runs = hx.run_ssl(exp.ssl, data, splits, args.method, keep_state=True)
    rows = _write_run(Path(args.out), args.method, exp, runs)
    for r in rows:
        if r.metric in ("acc_fused", "acc_time"):
            log.info("%s step %d %s: %.4f ± %.4f", args.method, r.step, r.metric, r.mean, r.std)


def cmd_sweep(args):
    exp = hx.load_experiment(args.config)
    grid = hx.parse_grid(args.grid)
    data, splits = hx.prepare(exp)
    rows = hx.sweep_threshold(grid, exp.ssl, data, splits, exp.noise_label)
    hx.write_atomic(Path(args.out) / "sweep.csv", hx.results_to_csv(rows))
    log.info("selected xi = %g", hx.select_xi(rows))


def cmd_report(args):
    src = Path(args.inp)
    out = Path(args.out) if args.out else src
    results = []
    for f in sorted(src.glob("results_*.csv")):
        results += hx.results_from_csv(f.read_text())
    sweep = []
    if (src / "sweep.csv").exists():
        sweep = hx.results_from_csv((src / "sweep.csv").read_text())
    if not results and not sweep:
        raise DataError(f"no results_*.csv or sweep.csv in {src}")
    hx.write_atomic(out / "summary.csv", hx.results_to_csv(results + sweep))
    if args.plots:
        from . import plotting

        for noise in sorted({r.noise for r in results}):
            plotting.accuracy_curves(results, out / f"accuracy_{noise}.svg", noise)
        if sweep:
            plotting.sweep_bars(sweep, out / "sweep.svg")


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddf", description="Dual-domain fusion semi-supervised learning")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset directory")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "bin"), default="csv")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="decimate / filter / add noise to a dataset directory")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--snr", type=float, default=None, help="per-segment SNR in dB")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--target-rate", type=float, default=None)
    s.add_argument("--filter-cutoff", type=float, default=None)
    s.add_argument("--filter-taps", type=int, default=101)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("tfr", help="CKD time-frequency representation of one segment file")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--params", default=None, help="JSON with c, d_cutoff, e_cutoff, downsample_factor")
    s.add_argument("--out", required=True, help=".csv (one file per channel) or raw float32")
    s.add_argument("--svg", default=None, help="optional heatmap path")
    s.set_defaults(func=cmd_tfr)

    s = sub.add_parser("run", help="run DDF or the self-training baseline")
    s.add_argument("--config", required=True)
    s.add_argument("--method", choices=hx.METHOD_CHOICES, default="ddf")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="confidence-threshold sweep on the validation split")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", default="0.0:0.9:0.1")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", help="summary table and figures from result CSVs")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DDFError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except (KeyError, TypeError) as exc:
        log.error("config error: %s", exc)
        return ConfigError.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return NumericalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``mecg {prepare,train,denoise,evaluate,sweep-c,bench,synth}``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .autodiff import NumericError, no_grad
from .autodiff.ops import flop_count, reset_flops
from .config import ConfigError, RunConfig, load_config
from .estimator import MECGDenoiser, __version__
from .metrics import BENCH_COLUMNS, METRICS, MetricReport, bench_inference, binned_curves
from .spectral import assemble_features, compress, dump_features, stft

log = logging.getLogger("mecg")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_C = 0.3


# ---------------------------------------------------------------- helpers

def _hash_files(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _write_run_manifest(out_dir, command, cfg: RunConfig, inputs) -> None:
    doc = {"command": command, "config": cfg.to_dict(), "seed": cfg.seed,
           "inputs_sha256": _hash_files(inputs), "version": __version__}
    Path(out_dir, "run_manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    Path(out_dir, "run_config.txt").write_text(cfg.to_text())


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row[h] if not isinstance(row[h], float) else repr(row[h]) for h in header])
    Path(path).write_text(buf.getvalue(), newline="")


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_dataset(manifest_path):
    """Arrays and manifest rows written by :func:`cmd_prepare`."""
    manifest_path = Path(manifest_path)
    rows = D.read_manifest(manifest_path)
    blob = np.load(manifest_path.parent / "dataset.npz")
    ids = [str(s) for s in blob["ids"]]
    if ids != [r["segment_id"] for r in rows]:
        raise D.DataError("manifest and dataset.npz disagree on segment ids")
    return blob["clean"], blob["noisy"], rows, float(blob["fs"])


def _split_indices(rows, name):
    return np.array([i for i, r in enumerate(rows) if r["split"] == name], dtype=int)


# ---------------------------------------------------------------- commands

def cmd_synth(out_dir, n_records=2, length=1024, fs=360.0, seed=0, noise=False) -> list[Path]:
    """Write synthetic CSV records (sinusoid ECG, or wander noise with ``noise=True``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for k in range(n_records):
        if noise:
            x = D.baseline_wander(length, fs, rng)
            name = f"bw{k:02d}"
        else:
            x = D.synthetic_ecg(length, fs, rng)
            name = f"rec{k:02d}"
        p = out / f"{name}.csv"
        D.write_csv_record(p, x, fs)
        paths.append(p)
    return paths


def cmd_prepare(data_dir, noise_dir, out_dir, cfg: RunConfig) -> Path:
    cfg.validate()
    out = Path(out_dir)
    rec_paths = D.find_records(data_dir)
    if not rec_paths:
        raise D.DataError(f"no records found in {data_dir}")
    noise_paths = D.find_records(noise_dir)
    if not noise_paths:
        raise D.DataError(f"no noise records found in {noise_dir}")
    out.mkdir(parents=True, exist_ok=True)
    rejects, segments, fs_seen = [], [], set()
    for p in rec_paths:
        try:
            rec = D.read_record(p)
            segments += D.segment_record(rec, cfg.segment_len, cfg.stride, cfg.channel)
            fs_seen.add(rec.fs)
        except (D.DataError, ValueError, OSError) as exc:
            rejects.append(f"{p.name}\t{exc}")
    noise = []
    for p in noise_paths:
        try:
            noise += D.read_record(p).channels
        except (D.DataError, ValueError, OSError) as exc:
            rejects.append(f"{p.name}\t{exc}")
    Path(out, "rejects.txt").write_text("".join(r + "\n" for r in rejects))
    if not segments:
        raise D.DataError("no usable segments (records missing, unreadable or too short)")
    if not noise:
        raise D.DataError("no usable noise records")
    if len(fs_seen) > 1:
        raise D.DataError(f"records have mixed sampling rates {sorted(fs_seen)}; resample first")
    fs = fs_seen.pop()
    pairs, rows = D.make_pairs(segments, noise, seed=cfg.seed)
    rows = [dict(r, split=D.split_of(r["record"], cfg.split)) for r in rows]
    for sub in ("clean", "noisy"):
        (out / sub).mkdir(exist_ok=True)
    for pair, row in zip(pairs, rows):
        D.write_csv_record(out / "clean" / f"{row['segment_id']}.csv", pair.clean.samples, fs)
        D.write_csv_record(out / "noisy" / f"{row['segment_id']}.csv", pair.noisy.samples, fs)
    manifest = out / "manifest.jsonl"
    D.write_manifest(manifest, rows)
    np.savez(out / "dataset.npz", clean=np.stack([p.clean.samples for p in pairs]),
             noisy=np.stack([p.noisy.samples for p in pairs]),
             factors=np.array([p.factor for p in pairs]),
             ids=np.array([r["segment_id"] for r in rows]), fs=fs)
    _write_run_manifest(out, "prepare", cfg, rec_paths + noise_paths)
    return manifest


def _train_val(rows):
    tr, va = _split_indices(rows, "train"), _split_indices(rows, "val")
    if len(tr) == 0:
        tr = np.arange(len(rows))
    return tr, va


def cmd_train(manifest, cfg: RunConfig, out_dir, resume=None) -> MECGDenoiser:
    cfg.validate()
    clean, noisy, rows, _ = load_dataset(manifest)
    tr, va = _train_val(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if resume:
        est = MECGDenoiser.load(resume)
        est.set_params(warm_start=True, epochs=cfg.epochs)
    else:
        est = MECGDenoiser(**cfg.estimator_params())
    log_rows = list(est.history_) if resume else []

    def on_epoch(row, e):
        log_rows.append(row)
        e.save(out / "last.bin")
        if len(va) == 0 or e.best_state_ is not None and row["val_loss"] == e.best_val_loss_:
            e.save(out / "checkpoint.bin")
        _write_csv(out / "train_log.csv", ["epoch", "lr", "train_loss", "val_loss", "val_ssd"],
                   log_rows)

    est.fit(noisy[tr], clean[tr], noisy[va] if len(va) else None,
            clean[va] if len(va) else None, callback=on_epoch)
    _write_run_manifest(out, "train", cfg, [manifest, Path(manifest).parent / "dataset.npz"])
    return est


def _tile(x, L):
    """Non-overlapping tiles; a short tail is served by the window ending at the record end."""
    n = len(x)
    if n < L:
        padded = np.concatenate([np.full(L - n, x[0]), x])
        return [padded], [(0, n, L - n)]
    tiles, spans = [], []
    for off in range(0, n - L + 1, L):
        tiles.append(x[off:off + L])
        spans.append((off, L, 0))
    rem = n % L
    if rem:
        tiles.append(x[n - L:])
        spans.append((n - rem, rem, L - rem))
    return tiles, spans


def denoise_signal(est: MECGDenoiser, x, unit_mask=False):
    L = getattr(est, "segment_len_", None)
    if not L:
        raise ConfigError("checkpoint does not record a segment length")
    tiles, spans = _tile(np.asarray(x, dtype=np.float64), L)
    den = est.predict(np.stack(tiles), unit_mask=unit_mask)
    out = np.empty(len(x))
    for row, (off, keep, skip) in zip(den, spans):
        out[off:off + keep] = row[skip:skip + keep]
    return out


def _expand_inputs(inputs):
    paths = []
    for item in inputs:
        p = Path(item)
        paths += D.find_records(p) if p.is_dir() else [p]
    return paths


def cmd_denoise(checkpoint, inputs, out_dir, unit_mask=False, dump_spec=False) -> list[Path]:
    est = MECGDenoiser.load(checkpoint)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = _expand_inputs(inputs)
    if not paths:
        raise D.DataError("no input records")
    written = []
    for p in paths:
        rec = D.read_record(p)
        y = denoise_signal(est, rec.channels[0], unit_mask=unit_mask)
        target = out / f"{rec.name}.csv"
        D.write_csv_record(target, y, rec.fs)
        written.append(target)
        if dump_spec:
            cfg = est.net_.config
            spec = compress(stft(y[:est.segment_len_], cfg.stft), cfg.c)
            dump_features(out / f"{rec.name}.spec", assemble_features(spec, cfg.mode))
    return written


def _collect(directory):
    p = Path(directory)
    files = D.find_records(p) if p.is_dir() else [p]
    return {f.stem: f for f in files}


def cmd_evaluate(clean, processed, report_path, manifest=None, bins=4, segment_len=None):
    clean_files, proc_files = _collect(clean), _collect(processed)
    if not clean_files:
        raise D.DataError(f"no clean records in {clean}")
    missing = sorted(set(clean_files) - set(proc_files))
    if missing:
        raise D.DataError(f"missing processed records: {', '.join(missing)}")
    ids, xs, ys = [], [], []
    for name in sorted(clean_files):
        x = D.read_record(clean_files[name]).channels[0]
        y = D.read_record(proc_files[name]).channels[0]
        if len(x) != len(y):
            raise D.DataError(f"{name}: clean has {len(x)} samples, processed {len(y)}")
        if segment_len:
            for off in range(0, len(x) - segment_len + 1, segment_len):
                ids.append(f"{name}_{off}")
                xs.append(x[off:off + segment_len])
                ys.append(y[off:off + segment_len])
        else:
            ids.append(name)
            xs.append(x)
            ys.append(y)
    if len({len(x) for x in xs}) > 1:
        raise D.DataError("segments differ in length; pass --segment-len")
    report = MetricReport.from_arrays(np.stack(xs), np.stack(ys), ids)
    base = Path(report_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    Path(str(base) + ".csv").write_text(report.to_csv(), newline="")
    agg = report.aggregate()
    curves = None
    if manifest is not None:
        factors = {r["segment_id"]: r["factor"] for r in D.read_manifest(manifest)}
        unknown = [i for i in ids if i not in factors]
        if unknown:
            raise D.DataError(f"segments missing from manifest: {', '.join(unknown[:5])}")
        edges = np.linspace(D.FACTOR_RANGE[0], D.FACTOR_RANGE[1], bins + 1)
        curves = binned_curves(report, [factors[i] for i in ids], edges)
        _write_csv(str(base) + "_curves.csv", ["metric", "bin_lo", "bin_hi", "mean", "n"], curves)
        agg["curves"] = curves
    Path(str(base) + ".json").write_text(json.dumps(agg, indent=1, sort_keys=True) + "\n")
    return report, agg


SWEEP_COLUMNS = ("c", "ssd", "mad", "prd", "cossim", "is_default")


def cmd_sweep_compression(manifest, cfg: RunConfig, c_list, out_path) -> list[dict]:
    c_list = [float(c) for c in c_list]
    bad = [c for c in c_list if not 0 < c <= 1]
    if bad:
        raise ConfigError(f"compression exponents outside (0, 1]: {bad}")
    cfg.validate()
    clean, noisy, rows, _ = load_dataset(manifest)
    tr, va = _train_val(rows)
    te = _split_indices(rows, "test")
    if len(te) == 0:
        te = np.arange(len(rows))
    out_rows = []
    for c in c_list:
        params = dict(cfg.estimator_params(), c=c)
        est = MECGDenoiser(**params)
        if cfg.epochs > 0:
            est.fit(noisy[tr], clean[tr])
        else:
            est.initialize()
        agg = MetricReport.from_arrays(clean[te], est.predict(noisy[te])).aggregate()
        out_rows.append({"c": c, **{m: agg[m]["mean"] for m in METRICS},
                         "is_default": int(np.isclose(c, DEFAULT_C))})
    _write_csv(out_path, SWEEP_COLUMNS, out_rows)
    return out_rows


def cmd_bench(checkpoints, manifest, out_path, reps=5, max_segments=16) -> list[dict]:
    if not checkpoints:
        raise ConfigError("bench needs at least one checkpoint")
    clean, noisy, rows, _ = load_dataset(manifest)
    te = _split_indices(rows, "test")
    if len(te) == 0:
        te = np.arange(len(rows))
    te = te[:max_segments]
    out_rows = []
    for ck in checkpoints:
        est = MECGDenoiser.load(ck)
        cfg = est.net_.config
        timing = bench_inference(est.predict, noisy[te], reps=reps)
        ssd = MetricReport.from_arrays(clean[te], est.predict(noisy[te])).aggregate()["ssd"]["mean"]
        reset_flops()
        with no_grad():
            est.net_(noisy[te[:1]])
        out_rows.append({"config_id": Path(ck).stem, "window": cfg.stft.window_len,
                         "hop": cfg.stft.hop, "mean_s": timing["mean_s"], "std_s": timing["std_s"],
                         "ssd_mean": ssd, "flops": flop_count()})
    _write_csv(out_path, BENCH_COLUMNS, out_rows)
    return out_rows


# ---------------------------------------------------------------- argument parsing

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=["complex", "mag_phase"])
    common.add_argument("--c", type=float, help="compression exponent")
    common.add_argument("--out", default="out", help="output directory or path")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. train.epochs=5")

    ap = argparse.ArgumentParser(prog="mecg", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("prepare", parents=[common], help="segment records and mix in noise")
    p.add_argument("data_dir")
    p.add_argument("noise_dir")

    p = sub.add_parser("train", parents=[common], help="train a denoiser on a prepared dataset")
    p.add_argument("manifest")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("denoise", parents=[common], help="denoise record files")
    p.add_argument("checkpoint")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--unit-mask", action="store_true", help="debug: mask=1, noisy phase")
    p.add_argument("--dump-spec", action="store_true")

    p = sub.add_parser("evaluate", parents=[common], help="metrics of processed vs clean records")
    p.add_argument("clean")
    p.add_argument("processed")
    p.add_argument("--manifest")
    p.add_argument("--bins", type=int, default=4)
    p.add_argument("--segment-len", type=int)

    p = sub.add_parser("sweep-c", parents=[common], help="compression exponent sweep")
    p.add_argument("manifest")
    p.add_argument("--c-list", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")

    p = sub.add_parser("bench", parents=[common], help="inference time vs SSD")
    p.add_argument("manifest")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--reps", type=int, default=5)

    p = sub.add_parser("synth", parents=[common], help="write synthetic CSV records")
    p.add_argument("--records", type=int, default=2)
    p.add_argument("--length", type=int, default=1024)
    p.add_argument("--fs", type=float, default=360.0)
    p.add_argument("--noise", action="store_true")
    return ap


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(*(s.strip() for s in item.split("=", 1)))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode is not None:
        cfg.mode = args.mode
    if args.c is not None:
        cfg.c = args.c
    return cfg.validate()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        out = Path(args.out)
        if args.cmd == "prepare":
            m = cmd_prepare(args.data_dir, args.noise_dir, out, cfg)
            print(m)
        elif args.cmd == "train":
            est = cmd_train(args.manifest, cfg, out, resume=args.resume)
            print(f"trained to epoch {est.epoch_}; checkpoint in {out}")
        elif args.cmd == "denoise":
            for p in cmd_denoise(args.checkpoint, args.inputs, out, args.unit_mask, args.dump_spec):
                print(p)
        elif args.cmd == "evaluate":
            _, agg = cmd_evaluate(args.clean, args.processed, out, args.manifest, args.bins,
                                  args.segment_len)
            print(json.dumps({m: agg[m] for m in METRICS}, indent=1))
        elif args.cmd == "sweep-c":
            out.parent.mkdir(parents=True, exist_ok=True)
            cmd_sweep_compression(args.manifest, cfg, args.c_list.split(","), out)
            print(out)
        elif args.cmd == "bench":
            out.parent.mkdir(parents=True, exist_ok=True)
            cmd_bench(args.checkpoints, args.manifest, out, reps=args.reps)
            print(out)
        elif args.cmd == "synth":
            for p in cmd_synth(out, args.records, args.length, args.fs, cfg.seed, args.noise):
                print(p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (D.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

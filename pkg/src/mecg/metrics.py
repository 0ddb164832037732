"""Distortion metrics (SSD, MAD, PRD, CosSim), aggregation and inference timing."""
from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

METRICS = ("ssd", "mad", "prd", "cossim")


def compute_metrics(x, y) -> dict:
    """Metrics of processed ``y`` against clean reference ``x``.

    PRD uses the squared deviation of ``y`` from mean(x) in the denominator.
    Undefined values (zero PRD denominator, zero-norm vector) come back as NaN
    and are listed under ``"undefined"``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 1:
        raise ValueError(f"need equal, non-empty lengths; got {x.shape} and {y.shape}")
    diff = y - x
    sq = float(np.sum(diff * diff))
    out = {"ssd": sq, "mad": float(np.max(np.abs(diff))), "undefined": []}
    den = float(np.sum((y - x.mean()) ** 2))
    if den == 0.0:
        out["prd"] = float("nan")
        out["undefined"].append("prd")
    else:
        out["prd"] = 100.0 * np.sqrt(sq / den)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        out["cossim"] = float("nan")
        out["undefined"].append("cossim")
    else:
        out["cossim"] = float(np.dot(x, y) / (nx * ny))
    return out


def metric_arrays(clean, processed) -> dict[str, np.ndarray]:
    """Vectorised metrics over rows of (n, L) arrays."""
    x = np.atleast_2d(np.asarray(clean, dtype=np.float64))
    y = np.atleast_2d(np.asarray(processed, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    diff = y - x
    ssd = np.sum(diff * diff, axis=1)
    den = np.sum((y - x.mean(axis=1, keepdims=True)) ** 2, axis=1)
    nx, ny = np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prd = np.where(den > 0, 100.0 * np.sqrt(ssd / den), np.nan)
        cos = np.where((nx > 0) & (ny > 0), np.sum(x * y, axis=1) / (nx * ny), np.nan)
    return {"ssd": ssd, "mad": np.max(np.abs(diff), axis=1), "prd": prd, "cossim": cos}


@dataclass
class MetricReport:
    ids: list
    values: dict = field(default_factory=dict)  # metric -> (n,) array

    @classmethod
    def from_arrays(cls, clean, processed, ids=None) -> "MetricReport":
        vals = metric_arrays(clean, processed)
        n = len(vals["ssd"])
        return cls(list(ids) if ids is not None else [str(i) for i in range(n)], vals)

    @property
    def undefined(self) -> dict:
        return {m: int(np.sum(np.isnan(self.values[m]))) for m in METRICS}

    def aggregate(self) -> dict:
        """Mean and unbiased std per metric, skipping undefined entries."""
        out = {"count": len(self.ids)}
        for m in METRICS:
            v = self.values[m][~np.isnan(self.values[m])]
            if len(self.values[m]) != len(v):
                warnings.warn(f"{len(self.values[m]) - len(v)} undefined {m} values excluded",
                              stacklevel=2)
            out[m] = {"mean": float(v.mean()) if len(v) else float("nan"),
                      "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                      "n": int(len(v))}
        out["undefined"] = self.undefined
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["segment_id", *METRICS])
        for k, sid in enumerate(self.ids):
            w.writerow([sid, *(repr(float(self.values[m][k])) for m in METRICS)])
        return buf.getvalue()


def binned_curves(report: MetricReport, factors, edges) -> list[dict]:
    """Per-bin metric means, one row per (metric, bin)."""
    factors = np.asarray(factors, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    which = np.clip(np.digitize(factors, edges[1:-1]), 0, len(edges) - 2)
    rows = []
    for m in METRICS:
        for b in range(len(edges) - 1):
            sel = (which == b) & ~np.isnan(report.values[m])
            if not sel.any():
                continue
            rows.append({"metric": m, "bin_lo": float(edges[b]), "bin_hi": float(edges[b + 1]),
                         "mean": float(report.values[m][sel].mean()), "n": int(sel.sum())})
    return rows


def bench_inference(predict, segments, reps: int = 5) -> dict:
    """Wall-clock seconds per segment for ``predict(segments)``; one warm-up excluded."""
    if reps < 3:
        raise ValueError("reps must be >= 3")
    segments = np.atleast_2d(segments)
    predict(segments[:1])
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        predict(segments)
        times.append((time.perf_counter() - t0) / len(segments))
    times = np.array(times)
    return {"mean_s": float(times.mean()), "std_s": float(times.std(ddof=1)), "reps": reps,
            "n_segments": int(len(segments))}


BENCH_COLUMNS = ("config_id", "window", "hop", "mean_s", "std_s", "ssd_mean", "flops")

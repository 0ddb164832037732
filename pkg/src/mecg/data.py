"""ECG record ingest, the noise-mixing protocol and fixed-length segmentation."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FACTOR_RANGE = (0.2, 2.0)
SUPPORTED_FORMATS = (16, 212)


class DataError(ValueError):
    """Malformed, truncated or unsupported record data."""


@dataclass
class EcgRecord:
    name: str
    fs: float
    channels: list = field(default_factory=list)

    def __post_init__(self):
        if not self.fs > 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")
        self.channels = [np.asarray(c, dtype=np.float64) for c in self.channels]
        if len({c.shape for c in self.channels}) > 1:
            raise DataError("all channels must have the same length")
        for c in self.channels:
            if c.ndim != 1 or not np.all(np.isfinite(c)):
                raise DataError(f"record {self.name!r} has non-finite or non 1-D samples")

    @property
    def length(self) -> int:
        return len(self.channels[0]) if self.channels else 0


@dataclass
class EcgSegment:
    samples: np.ndarray
    fs: float
    source: tuple = ("", 0, 0)  # (record id, channel, offset)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or not np.all(np.isfinite(self.samples)):
            raise DataError("segment samples must be a finite 1-D vector")

    def __len__(self):
        return len(self.samples)


@dataclass
class NoisyPair:
    clean: EcgSegment
    noisy: EcgSegment
    factor: float

    def __post_init__(self):
        if len(self.clean) != len(self.noisy):
            raise DataError("clean and noisy segments differ in length")
        _check_factor(self.factor)


# ---------------------------------------------------------------- WFDB subset

def _parse_header(text: str) -> dict:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise DataError("empty WFDB header")
    head = lines[0].split()
    if len(head) < 2:
        raise DataError(f"malformed record line: {lines[0]!r}")
    name = head[0].split("/")[0]
    nsig = int(head[1])
    fs = float(re.split(r"[/(]", head[2])[0]) if len(head) > 2 else 250.0
    nsamp = int(head[3]) if len(head) > 3 else None
    sigs = []
    for ln in lines[1:1 + nsig]:
        parts = ln.split()
        if len(parts) < 2:
            raise DataError(f"malformed signal line: {ln!r}")
        fmt = int(re.match(r"\d+", parts[1]).group())
        gain, baseline = 200.0, None
        if len(parts) > 2:
            m = re.match(r"([-+0-9.eE]+)(?:\(([-+0-9]+)\))?", parts[2])
            if m:
                gain = float(m.group(1)) or 200.0
                baseline = int(m.group(2)) if m.group(2) is not None else None
        adc_zero = int(parts[4]) if len(parts) > 4 else 0
        sigs.append({"file": parts[0], "fmt": fmt, "gain": gain,
                     "baseline": adc_zero if baseline is None else baseline})
    if nsig < 1:
        raise DataError("header declares no signals")
    if len(sigs) != nsig:
        raise DataError(f"header declares {nsig} signals but describes {len(sigs)}")
    return {"name": name, "nsig": nsig, "fs": fs, "nsamp": nsamp, "signals": sigs}


def _decode_212(data: bytes, count: int) -> np.ndarray:
    n_bytes = 3 * ((count + 1) // 2)
    if len(data) < n_bytes - (1 if count % 2 else 0):
        raise DataError("truncated format-212 data section")
    raw = np.frombuffer(data[:n_bytes].ljust(n_bytes, b"\0"), dtype=np.uint8).reshape(-1, 3)
    raw = raw.astype(np.int32)
    first = raw[:, 0] | ((raw[:, 1] & 0x0F) << 8)
    second = raw[:, 2] | ((raw[:, 1] & 0xF0) << 4)
    out = np.empty(2 * len(raw), dtype=np.int32)
    out[0::2], out[1::2] = first, second
    out = out[:count]
    return np.where(out > 2047, out - 4096, out)


def parse_wfdb_record(header_bytes: bytes, data_bytes: bytes) -> EcgRecord:
    """Decode a single-file WFDB record (formats 16 and 212) into physical units."""
    hdr = _parse_header(header_bytes.decode("ascii", errors="replace"))
    fmts = {s["fmt"] for s in hdr["signals"]}
    for fmt in fmts:
        if fmt not in SUPPORTED_FORMATS:
            raise DataError(f"unsupported WFDB format {fmt}")
    if len(fmts) > 1 or len({s["file"] for s in hdr["signals"]}) > 1:
        raise DataError("mixed formats or multiple signal files are not supported")
    fmt = fmts.pop()
    nsig = hdr["nsig"]
    if fmt == 16:
        if len(data_bytes) % (2 * nsig):
            raise DataError("format-16 data is not a whole number of frames")
        flat = np.frombuffer(data_bytes, dtype="<i2").astype(np.int32)
    else:
        avail = (len(data_bytes) * 2) // 3
        count = hdr["nsamp"] * nsig if hdr["nsamp"] is not None else avail - avail % nsig
        flat = _decode_212(data_bytes, count)
    nsamp = hdr["nsamp"] if hdr["nsamp"] is not None else len(flat) // nsig
    if len(flat) < nsamp * nsig:
        raise DataError(f"truncated data: expected {nsamp * nsig} samples, found {len(flat)}")
    frames = flat[:nsamp * nsig].reshape(nsamp, nsig)
    channels = [(frames[:, k] - s["baseline"]) / s["gain"] for k, s in enumerate(hdr["signals"])]
    return EcgRecord(hdr["name"], hdr["fs"], channels)


def read_wfdb(base) -> EcgRecord:
    """Read ``<base>.hea`` and the signal file it names."""
    base = Path(base)
    hea = base.with_suffix(".hea")
    header = hea.read_bytes()
    info = _parse_header(header.decode("ascii", errors="replace"))
    data = (hea.parent / info["signals"][0]["file"]).read_bytes()
    return parse_wfdb_record(header, data)


def read_csv_record(path) -> EcgRecord:
    """One sample per line after a ``fs=<Hz>`` header row."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].strip().lower().startswith("fs="):
        raise DataError(f"{path.name}: missing 'fs=<Hz>' header row")
    fs = float(lines[0].split("=", 1)[1])
    try:
        samples = np.array([float(v) for v in lines[1:] if v.strip()])
    except ValueError as exc:
        raise DataError(f"{path.name}: {exc}") from None
    return EcgRecord(path.stem, fs, [samples])


def write_csv_record(path, samples, fs: float) -> None:
    rows = [f"fs={fs:g}"] + [repr(float(v)) for v in np.asarray(samples)]
    Path(path).write_text("\n".join(rows) + "\n")


def read_record(path) -> EcgRecord:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_record(path)
    if path.suffix.lower() in (".hea", ".dat", ""):
        return read_wfdb(path.with_suffix(""))
    raise DataError(f"unrecognised record file {path.name}")


def find_records(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(list(directory.glob("*.hea")) + list(directory.glob("*.csv")))


# ---------------------------------------------------------------- noise protocol

def _check_factor(factor):
    lo, hi = FACTOR_RANGE
    if not lo <= factor <= hi:
        raise DataError(f"noise factor {factor} outside [{lo}, {hi}]")


def _samples(x):
    return x.samples if isinstance(x, EcgSegment) else np.asarray(x, dtype=np.float64)


def normalize_noise(noise, reference) -> np.ndarray:
    """Affinely map ``noise`` onto ``[min(reference), max(reference)]``."""
    noise = np.asarray(noise, dtype=np.float64)
    ref = _samples(reference)
    n_lo, n_hi = noise.min(), noise.max()
    r_lo, r_hi = ref.min(), ref.max()
    if n_hi == n_lo or r_hi == r_lo:
        raise DataError("cannot normalise: noise or reference has zero range")
    return r_lo + (noise - n_lo) * ((r_hi - r_lo) / (n_hi - n_lo))


def mix_noise(clean: EcgSegment, noise, factor: float) -> NoisyPair:
    _check_factor(factor)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != clean.samples.shape:
        raise DataError(f"noise length {noise.shape} != clean length {clean.samples.shape}")
    noisy = EcgSegment(clean.samples + factor * noise, clean.fs, clean.source)
    return NoisyPair(clean, noisy, float(factor))


def segment_record(record: EcgRecord, L: int = 512, stride: int | None = None,
                   channel: int = 0) -> list[EcgSegment]:
    stride = L if stride is None else stride
    if L < 1 or not 1 <= stride <= L:
        raise ValueError(f"need L >= 1 and 1 <= stride <= L, got L={L}, stride={stride}")
    if not 0 <= channel < len(record.channels):
        raise ValueError(f"channel {channel} out of range for {len(record.channels)} channels")
    x = record.channels[channel]
    return [EcgSegment(x[off:off + L], record.fs, (record.name, channel, off))
            for off in range(0, len(x) - L + 1, stride)]


def split_of(record_id: str, ratios=(0.7, 0.1, 0.2)) -> str:
    """Deterministic train/val/test assignment from a hash of the record id."""
    if len(ratios) != 3 or min(ratios) < 0 or not np.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    digest = hashlib.sha256(record_id.encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2 ** 64
    if u < ratios[0]:
        return "train"
    return "val" if u < ratios[0] + ratios[1] else "test"


def make_pairs(segments, noise_sources, seed: int = 0):
    """Contaminate each segment with a normalised noise excerpt and a random factor.

    ``noise_sources`` is a list of 1-D arrays; segment k uses source
    ``k % len(noise_sources)`` at a random offset.  Returns ``(pairs, manifest_rows)``.
    """
    rng = np.random.default_rng(seed)
    pairs, rows = [], []
    for k, seg in enumerate(segments):
        src = np.asarray(noise_sources[k % len(noise_sources)], dtype=np.float64)
        L = len(seg)
        if len(src) < L:
            src = np.resize(src, L)
        start = int(rng.integers(0, len(src) - L + 1))
        factor = float(rng.uniform(*FACTOR_RANGE))
        excerpt = src[start:start + L]
        pair = mix_noise(seg, normalize_noise(excerpt, seg), factor)
        pairs.append(pair)
        name, channel, offset = seg.source
        rows.append({"segment_id": f"{name}_c{channel}_{offset}", "record": name,
                     "channel": channel, "offset": offset, "factor": factor, "seed": seed,
                     "noise_source": k % len(noise_sources), "noise_offset": start,
                     "split": split_of(name)})
    return pairs, rows


def write_manifest(path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]


# ---------------------------------------------------------------- synthetic corpus

def synthetic_ecg(n: int, fs: float, rng, n_tones: int = 3, band=(6.0, 30.0)) -> np.ndarray:
    """Sum of random sinusoids standing in for an ECG trace."""
    t = np.arange(n) / fs
    freqs = rng.uniform(*band, size=n_tones)
    amps = rng.uniform(0.3, 1.0, size=n_tones)
    phases = rng.uniform(0, 2 * np.pi, size=n_tones)
    return (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(0)


def baseline_wander(n: int, fs: float, rng, n_tones: int = 3, band=(0.05, 0.5)) -> np.ndarray:
    t = np.arange(n) / fs
    freqs = rng.uniform(*band, size=n_tones)
    amps = rng.uniform(0.5, 1.0, size=n_tones)
    phases = rng.uniform(0, 2 * np.pi, size=n_tones)
    return (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(0)


def synthetic_corpus(n_pairs: int, L: int = 128, fs: float = 360.0, seed: int = 0):
    """Clean/noisy arrays (n, L) and factors following the mixing protocol."""
    rng = np.random.default_rng(seed)
    clean = np.empty((n_pairs, L))
    noisy = np.empty((n_pairs, L))
    factors = np.empty(n_pairs)
    for k in range(n_pairs):
        seg = EcgSegment(synthetic_ecg(L, fs, rng), fs, (f"syn{k:04d}", 0, 0))
        # long excerpt so a segment sees a slow drift, not a whole wander cycle
        wander = baseline_wander(20 * L, fs, rng)
        start = int(rng.integers(0, 19 * L))
        pair = mix_noise(seg, normalize_noise(wander[start:start + L], seg),
                         float(rng.uniform(*FACTOR_RANGE)))
        clean[k], noisy[k], factors[k] = pair.clean.samples, pair.noisy.samples, pair.factor
    return clean, noisy, factors

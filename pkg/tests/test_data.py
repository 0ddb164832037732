import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecg.data import (DataError, EcgRecord, EcgSegment, NoisyPair, make_pairs, mix_noise,
                       normalize_noise, parse_wfdb_record, read_csv_record, read_wfdb,
                       segment_record, split_of, synthetic_corpus, write_csv_record)


def pack_212(values):
    """Reference packer: two 12-bit two's-complement samples into three bytes."""
    out = bytearray()
    vals = list(values) + ([0] if len(values) % 2 else [])
    for a, b in zip(vals[0::2], vals[1::2]):
        a12, b12 = a & 0xFFF, b & 0xFFF
        out += bytes([a12 & 0xFF, ((b12 >> 8) << 4) | (a12 >> 8), b12 & 0xFF])
    return bytes(out)


def test_format16_gain_division():
    hdr = b"rec 1 250 4\nrec.dat 16 200(0)/mV 12 0 0 0 0 I\n"
    data = np.array([200, 400, -200, 0], dtype="<i2").tobytes()
    rec = parse_wfdb_record(hdr, data)
    assert rec.name == "rec" and rec.fs == 250 and rec.length == 4
    np.testing.assert_array_equal(rec.channels[0], [1.0, 2.0, -1.0, 0.0])


def test_format212_two_channels():
    hdr = b"r212 2 360 2\nr212.dat 212 200/mV 11 1024 0 0 0 MLII\nr212.dat 212 200/mV 11 1024 0 0 0 V5\n"
    # header gives no explicit baseline, so adc zero (1024) is the baseline
    frames = [(100 + 1024, -100 + 1024), (5 + 1024, -7 + 1024)]
    raw = [v - 4096 if v > 2047 else v for f in frames for v in f]
    rec = parse_wfdb_record(hdr, pack_212(raw))
    assert rec.channels[0][0] == pytest.approx(100 / 200)
    assert rec.channels[1][0] == pytest.approx(-100 / 200)
    assert rec.channels[1][1] == pytest.approx(-7 / 200)


def test_format212_negative_samples_without_offset():
    hdr = b"n 2 360 2\nn.dat 212 100(0)/mV\nn.dat 212 100(0)/mV\n"
    rec = parse_wfdb_record(hdr, pack_212([100, -100, -2048, 2047]))
    np.testing.assert_allclose(rec.channels[0], [1.0, -20.48])
    np.testing.assert_allclose(rec.channels[1], [-1.0, 20.47])


def test_unsupported_format():
    with pytest.raises(DataError, match="unsupported"):
        parse_wfdb_record(b"x 1 250 2\nx.dat 999 200\n", b"\0" * 8)


def test_truncated_and_mismatched():
    with pytest.raises(DataError):
        parse_wfdb_record(b"x 1 250 10\nx.dat 16 200\n", b"\0" * 8)
    with pytest.raises(DataError):
        parse_wfdb_record(b"x 2 250 2\nx.dat 16 200\n", b"\0" * 8)


def test_read_wfdb_and_csv_files(tmp_path):
    (tmp_path / "a.hea").write_bytes(b"a 1 500 3\na.dat 16 100(10)/mV\n")
    (tmp_path / "a.dat").write_bytes(np.array([110, 10, -90], dtype="<i2").tobytes())
    rec = read_wfdb(tmp_path / "a")
    np.testing.assert_allclose(rec.channels[0], [1.0, 0.0, -1.0])
    write_csv_record(tmp_path / "b.csv", [0.5, -0.25], 250)
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "fs=250"
    rec = read_csv_record(tmp_path / "b.csv")
    assert rec.fs == 250 and list(rec.channels[0]) == [0.5, -0.25]
    (tmp_path / "c.csv").write_text("1\n2\n")
    with pytest.raises(DataError):
        read_csv_record(tmp_path / "c.csv")


def test_record_invariants():
    with pytest.raises(DataError):
        EcgRecord("r", 0.0, [np.zeros(3)])
    with pytest.raises(DataError):
        EcgRecord("r", 250, [np.zeros(3), np.zeros(4)])
    with pytest.raises(DataError):
        EcgRecord("r", 250, [np.array([1.0, np.nan])])


# ------------------------------------------------------------ noise protocol

def seg(x):
    return EcgSegment(np.asarray(x, dtype=float), 360.0, ("r", 0, 0))


def test_normalize_examples():
    np.testing.assert_allclose(normalize_noise([0, 1], seg([-2, 0, 2])), [-2, 2])
    np.testing.assert_allclose(normalize_noise([0, 0.5, 1], seg([0, 4])), [0, 2, 4])
    with pytest.raises(DataError):
        normalize_noise([5, 5, 5], seg([0, 1, 2]))
    with pytest.raises(DataError):
        normalize_noise([0, 1, 2], seg([3, 3, 3]))


def test_normalize_idempotent(rng):
    ref = seg(rng.standard_normal(50))
    once = normalize_noise(rng.standard_normal(50), ref)
    np.testing.assert_allclose(normalize_noise(once, ref), once, rtol=1e-12, atol=1e-12)


def test_mix_examples():
    pair = mix_noise(seg([1, 1]), [1, -1], 0.5)
    np.testing.assert_allclose(pair.noisy.samples, [1.5, 0.5])
    np.testing.assert_array_equal(pair.clean.samples, [1, 1])
    with pytest.raises(DataError):
        mix_noise(seg([1, 1]), [1, -1], 0.0)
    with pytest.raises(DataError):
        mix_noise(seg([1, 1]), [1, -1, 0], 1.0)
    with pytest.raises(DataError):
        NoisyPair(seg([1]), seg([1, 2]), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.floats(0.2, 2.0), st.integers(0, 2 ** 31))
def test_mix_residual_is_scaled_noise(n, factor, seed):
    r = np.random.default_rng(seed)
    clean = seg(r.standard_normal(n))
    noise = normalize_noise(r.standard_normal(n), clean)
    pair = mix_noise(clean, noise, factor)
    diff = pair.noisy.samples - pair.clean.samples
    scale = max(1.0, np.abs(factor * noise).max())
    assert np.max(np.abs(diff - factor * noise)) <= 1e-12 * scale


# ------------------------------------------------------------ segmentation / splits

def _rec(n):
    return EcgRecord("r", 360, [np.arange(n, dtype=float)])


def test_segment_examples():
    segs = segment_record(_rec(1024), 512, 512)
    assert [s.source[2] for s in segs] == [0, 512]
    assert len(segment_record(_rec(1000), 512, 512)) == 1
    assert segment_record(_rec(100), 512) == []
    with pytest.raises(ValueError):
        segment_record(_rec(100), 10, 11)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 40), st.integers(1, 40))
def test_segment_offsets_deterministic_and_in_bounds(n, L, stride):
    stride = min(stride, L)
    segs = segment_record(_rec(n), L, stride)
    assert [s.source[2] for s in segs] == list(range(0, n - L + 1, stride))
    for s in segs:
        assert len(s) == L and s.samples[0] == s.source[2]


def test_split_deterministic():
    names = [f"sel{i}" for i in range(200)]
    a = [split_of(n) for n in names]
    assert a == [split_of(n) for n in names]
    frac = a.count("train") / len(a)
    assert 0.55 < frac < 0.85


def test_make_pairs_manifest(rng):
    segs = segment_record(EcgRecord("r", 360, [rng.standard_normal(2048)]), 512)
    pairs, rows = make_pairs(segs, [rng.standard_normal(3000)], seed=3)
    assert len(pairs) == 4
    assert {"segment_id", "record", "offset", "factor", "seed"} <= set(rows[0])
    assert all(0.2 <= r["factor"] <= 2.0 for r in rows)
    _, again = make_pairs(segs, [np.random.default_rng(1234).standard_normal(3000)], seed=3)
    assert [r["factor"] for r in rows] == [r["factor"] for r in again]


def test_synthetic_corpus_protocol():
    clean, noisy, f = synthetic_corpus(20, 128, seed=0)
    assert clean.shape == noisy.shape == (20, 128)
    assert np.all((f >= 0.2) & (f <= 2.0))
    # residual range equals factor times clean range (min-max normalised noise)
    resid = noisy - clean
    np.testing.assert_allclose(np.ptp(resid, axis=1), f * np.ptp(clean, axis=1), rtol=1e-10)

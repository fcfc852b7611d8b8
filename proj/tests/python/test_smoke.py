import math
import os
from pathlib import Path

import numpy as np
import pytest

import pcgkit

rng = np.random.default_rng(5)


def test_gate_matches_numpy_reference():
    fs, tf, tau = 1000.0, 0.1, 2.5
    x = rng.standard_normal(5000)
    x[2000:2300] *= 4.0
    got = pcgkit.intervals_to_mask(pcgkit.flag_noisy_frames(x, fs, tf, tau), x.size)

    frame = pcgkit.frame_samples(fs, tf)
    n = x.size // frame
    energy = (x[: n * frame].reshape(n, frame) ** 2).sum(axis=1)
    ref = np.median(energy[1:-1])
    want = np.zeros(x.size, dtype=bool)
    for f in np.nonzero(energy > tau * ref)[0]:
        want[f * frame : (f + 1) * frame] = True
    assert np.array_equal(got, want)
    assert got[2000:2300].all()


def test_gate_scale_invariant():
    x = rng.standard_normal(8000) * np.linspace(1, 3, 8000)
    base = pcgkit.flag_noisy_frames(x, 4000, 0.25, 2.5)
    for c in (1e-3, 1e3):
        assert np.array_equal(pcgkit.flag_noisy_frames(c * x, 4000, 0.25, 2.5), base)


def test_detect_clean_intervals_covers_quiet_recording():
    fs = 1000
    chans = {f"HM:{i}": rng.standard_normal(20 * fs) for i in range(1, 5)}
    chans["NM:4"] = rng.standard_normal(20 * fs) * 0.01
    clean = pcgkit.detect_clean_intervals(chans, fs)
    mask = pcgkit.intervals_to_mask(clean, 20 * fs)
    # Only the one-second boundaries are guaranteed to be gone.
    assert not mask[:fs].any() and not mask[-fs:].any()
    with pytest.raises(pcgkit.DataError):
        pcgkit.detect_clean_intervals({"HM:1": np.zeros(10), "HM:2": np.zeros(11)}, fs)


def test_bandpass_matches_scipy():
    signal = pytest.importorskip("scipy.signal")
    fs = 4000.0
    x = rng.standard_normal(20000)
    sos = signal.butter(2, [25.0, 450.0], btype="bandpass", fs=fs, output="sos")
    want = signal.sosfiltfilt(sos, x)
    got = pcgkit.bandpass(x, fs)
    assert np.max(np.abs(got - want)) < 1e-9 * np.max(np.abs(want))
    ours = np.array(pcgkit.butterworth_sos(2, 25.0, 450.0, fs))
    assert np.allclose(np.abs(signal.sosfreqz(ours, [25.0, 450.0], fs=fs)[1]),
                       np.abs(signal.sosfreqz(sos, [25.0, 450.0], fs=fs)[1]), atol=1e-12)


def test_kpeak_normalize():
    x = np.sin(np.linspace(0, 40 * math.pi, 8000)) * 3.0
    y, scale = pcgkit.kpeak_normalize(x, 4000.0)
    assert scale == pytest.approx(3.0, rel=1e-3)
    assert np.allclose(y * scale, x)


def test_fragment_arithmetic():
    assert pcgkit.class_targets(155, 142, 61) == (61, 67)
    for _ in range(50):
        lengths = rng.integers(1, 10**6, size=rng.integers(1, 8)).tolist()
        f = int(rng.integers(0, 200))
        assert sum(pcgkit.allocate_fragments(lengths, f)) == f


def test_mfcc_shape_and_independent_reference():
    cfg = pcgkit.MfccConfig()
    x = rng.standard_normal(16000)
    got = pcgkit.mfcc(x, 4000.0, cfg)
    assert got.shape == (97, 128)

    # numpy reference: periodic Hann, unpadded frames.
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(512) / 512)
    frames = np.stack([x[t * 160 : t * 160 + 512] * win for t in range(97)])
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    assert np.allclose(pcgkit.stft_power(x, cfg), power, rtol=1e-9, atol=1e-9)


def test_losses():
    z = rng.standard_normal((16, 8))
    y = np.array([0, 1] * 8)
    loss = pcgkit.supervised_contrastive_loss(z, y, 0.805)
    assert loss > 0
    same = np.tile(rng.standard_normal(8), (10, 1))
    assert pcgkit.supervised_contrastive_loss(same, np.zeros(10, dtype=int), 0.5) == pytest.approx(math.log(10), abs=1e-12)

    logits = rng.standard_normal((16, 2))
    lse = np.log(np.exp(logits).sum(axis=1))
    assert pcgkit.cross_entropy(logits, y) == pytest.approx(np.mean(lse - logits[np.arange(16), y]), abs=1e-12)

    centers = rng.standard_normal((2, 8))
    h = pcgkit.hybrid_loss(z, y, logits, centers)
    w = pcgkit.LossWeights()
    assert h["total"] == pytest.approx(w.alpha * h["cross_entropy"] + w.beta * h["contrastive"]
                                       + w.lambda_c * h["center"], abs=1e-12)
    g = pcgkit.hybrid_loss_gradient(z, y, logits, centers)
    assert g["embeddings"].shape == z.shape and g["logits"].shape == logits.shape

    with pytest.raises(pcgkit.ContractError):
        pcgkit.supervised_contrastive_loss(z[:2], np.array([0, 1]), 0.5)


def test_metrics_and_vote():
    tp, tn, fp, fn = 40, 30, 10, 20
    m = pcgkit.metrics(tp, tn, fp, fn)
    mcc = (tp * tn - fp * fn) / math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    assert m["mcc"] == pytest.approx(mcc, abs=1e-12)
    assert m["uar"] == pytest.approx(0.5 * (tp / (tp + fn) + tn / (tn + fp)), abs=1e-12)
    assert pcgkit.majority_vote({"a": [1, 0], "b": [0, 0, 1], "c": [1, 1, 0]}) == {"a": 1, "b": 0, "c": 1}


def test_config_hash():
    assert pcgkit.fnv1a_hex("") == "cbf29ce484222325"
    cfg = pcgkit.PipelineConfig.parse("seed = 9\ngate.threshold = 3\n")
    assert cfg.seed == 9 and cfg.gate.threshold == 3.0
    assert cfg.hash() == pcgkit.fnv1a_hex(cfg.canonical())
    with pytest.raises(pcgkit.ConfigError):
        pcgkit.PipelineConfig.parse("nope = 1\n")


def test_pipeline_and_feature_file(tmp_path: Path):
    cfg = pcgkit.PipelineConfig()
    cfg.seed = 4
    cfg.f_base = 3
    for key, value in (("synth.n_subjects", "6"), ("synth.duration", "20")):
        cfg.set(key, value)
    manifest = pcgkit.synth(cfg, tmp_path / "data", 2)
    status = pcgkit.condition(manifest, cfg, tmp_path / "cond", 2)
    assert set(status.values()) <= {"ok", "skip"}
    counts = pcgkit.featurize(tmp_path / "cond", cfg, tmp_path / "feat", 2)
    assert set(counts) == {"train", "val", "test"}

    records = pcgkit.read_feature_file(tmp_path / "feat" / "train.feat")
    assert len(records) == sum(counts["train"].values())
    header_hash = None
    with open(tmp_path / "feat" / "train.idx") as f:
        header_hash = f.readline().split("config=")[1].split()[0]
    for r in records:
        assert r["values"].shape == (97, 512)
        assert r["config_hash"] == header_hash
        assert r["label"] in (pcgkit.NOR, pcgkit.CAD)

    # Raw layout: text header line then little-endian float32 frames x dims.
    raw = (tmp_path / "feat" / "train.feat").read_bytes()
    nl = raw.index(b"\n")
    assert raw[:nl].startswith(b"PCGF1 ")
    first = np.frombuffer(raw[nl + 1 : nl + 1 + 97 * 512 * 4], dtype="<f4").reshape(97, 512)
    assert np.array_equal(first.astype(np.float64), records[0]["values"])

    truth = tmp_path / "feat" / "test.truth"
    frag, subj = pcgkit.evaluate(truth, truth, tmp_path / "report")
    assert frag["mcc"] == pytest.approx(1.0) or frag["tp"] + frag["fn"] == 0 or frag["tn"] + frag["fp"] == 0
    assert subj["acc"] == 1.0

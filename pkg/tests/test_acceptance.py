"""Acceptance criteria 1-9.

Every test carries ``@acceptance(n, title)``; the conftest prints one
PASS/FAIL line per criterion at the end of the session, with measured values.
"""

import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nidl.calibration import CalibContext, CalibParams, compute_xi
from nidl.dataset import SubjectDataset, interpolate_temperature, load_dataset, save_dataset
from nidl.evaluation import BIN_EDGES, NIDL, NIPST, bin_counts, percent_delta, summarize
from nidl.evm import EvmConfig, build_pyramid, collapse_pyramid, magnify
from nidl.experiment import crossval_summary, synthetic_crossval
from nidl.media import TemperatureSeries, VideoClip, decode_raw_planar, encode_raw_planar
from nidl.regressor import NetworkSpec, Normalization, Regressor, TrainConfig, audit_checkpoints, train
from nidl.regressor.checkpoint import (
    EPOCH_END, ERROR_BELOW_EPSILON, EVERY_N_LOOPS, ModelCheckpoint, decode_checkpoint, encode_checkpoint,
    load_checkpoint,
)
from nidl.regressor.gradcheck import layer_input_gradient, network_param_gradients, relative_error
from nidl.regressor.layers import Conv2D, Dense, GlobalAvgPool, MaxPool2D, ReLU
from nidl.regressor.network import POOL, RELU, conv
from nidl.report import emit_report, load_result

from test_evm import sinusoid_amplitude, sinusoid_clip
from test_report import make_result

acceptance = pytest.mark.acceptance

C1 = (1, "EVM amplitude law: in-band gain 1+beta within 5%, out-of-band within 10% of 1, < 30 s")
C2 = (2, "EVM identity: beta=0 within 1e-5, pyramid collapse within 1e-6")
C3 = (3, "gradients match central finite differences to 1e-4 (float64, every layer kind)")
C4 = (4, "checkpoint set replays exactly from the training log; bit-identical reload")
C5 = (5, "calibration truth table on a grid crossing both thresholds, to 1e-12")
C6 = (6, "statistics golden values: -16.28% delta; bins partition [0, 4.2), fractions sum to 1")
C7 = (7, "synthetic 6 x 3000 cross-validation: NIDL >= 30% better than constant, r > 0.5, NIPST < 1 C")
C8 = (8, "temperature interpolation exact on affine trajectories; 90,000 labels for 50 min at 30 fps")
C9 = (9, "round trips: raw-planar clip, checkpoint, dataset manifest, report JSON")


# 1 ------------------------------------------------------------------------------------------


@acceptance(*C1)
@pytest.mark.parametrize("beta", [1.0, 5.0, 10.0])
def test_in_band_amplitude(beta, record_property):
    clip, t = sinusoid_clip(1.0, amp=0.01)
    start = time.perf_counter()
    out = magnify(clip, EvmConfig(beta=beta, low_hz=0.5, high_hz=2.0))
    elapsed = time.perf_counter() - start
    gains = [sinusoid_amplitude(out.frames[:, i, j, c], t, 1.0) / 0.01
             for i, j in [(10, 10), (32, 32), (50, 20)] for c in range(3)]
    worst = max(abs(g / (1 + beta) - 1) for g in gains)
    record_property(f"beta{beta:g}_gain_dev", f"{worst:.4f}")
    record_property(f"beta{beta:g}_seconds", f"{elapsed:.2f}")
    assert worst <= 0.05
    assert elapsed < 30.0


@acceptance(*C1)
@pytest.mark.parametrize("freq", [0.1, 6.0, 10.0])
def test_out_of_band_amplitude(freq, record_property):
    clip, t = sinusoid_clip(freq, amp=0.01)
    out = magnify(clip, EvmConfig(beta=10.0, low_hz=0.5, high_hz=2.0))
    gain = sinusoid_amplitude(out.frames[:, 32, 32, 1], t, freq) / 0.01
    record_property(f"gain_{freq:g}Hz", f"{gain:.4f}")
    assert abs(gain - 1) <= 0.10


# 2 ------------------------------------------------------------------------------------------


@acceptance(*C2)
def test_beta_zero_identity(record_property):
    rng = np.random.default_rng(11)
    clip = VideoClip(rng.random((60, 32, 32, 3)), 30.0)
    out = magnify(clip, EvmConfig(beta=0.0, low_hz=0.5, high_hz=2.0))
    err = np.abs(out.frames - clip.frames).max(axis=(0, 1, 2))
    record_property("max_channel_err", f"{err.max():.1e}")
    assert np.all(err <= 1e-5)


@acceptance(*C2)
@given(st.integers(4, 64), st.integers(4, 64), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_pyramid_collapse_identity(h, w, levels, seed):
    x = np.random.default_rng(seed).random((h, w, 3))
    assert np.abs(collapse_pyramid(build_pyramid(x, levels)) - x).max() <= 1e-6


# 3 ------------------------------------------------------------------------------------------

LAYER_KINDS = {
    "conv": lambda r: Conv2D(2, 3, 3, stride=2, rng=r, dtype=np.float64),
    "conv_valid": lambda r: Conv2D(2, 3, 3, stride=1, padding=0, rng=r, dtype=np.float64),
    "conv_valid_s2": lambda r: Conv2D(2, 4, 2, stride=2, padding=0, rng=r, dtype=np.float64),
    "relu": lambda r: ReLU(),
    "maxpool": lambda r: MaxPool2D(2),
    "avgpool": lambda r: GlobalAvgPool(),
    "dense": lambda r: Dense(5, 3, rng=r, dtype=np.float64),
}
LAYER_INPUTS = {"conv": (2, 7, 6, 2), "conv_valid": (2, 6, 5, 2), "conv_valid_s2": (2, 7, 6, 2), "relu": (2, 4, 4, 3), "maxpool": (2, 5, 6, 3), "avgpool": (2, 3, 4, 3),
                "dense": (3, 5)}


@acceptance(*C3)
@pytest.mark.parametrize("kind", sorted(LAYER_KINDS))
def test_layer_gradients(kind, record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        a, n = layer_input_gradient(LAYER_KINDS[kind](rng), rng.standard_normal(LAYER_INPUTS[kind]), rng)
        worst = max(worst, relative_error(a, n))
    record_property(f"{kind}_rel_err", f"{worst:.1e}")
    assert worst <= 1e-4


@acceptance(*C3)
@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]), st.sampled_from([1, 3]))
def test_micro_network_gradients(seed, stride, kernel):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(8, (conv(3, 3, 1), RELU, POOL, conv(4, kernel, stride), RELU), (5, 3), dtype="float64")
    x = rng.random((3, 8, 8, 3))
    t = 30 + 5 * rng.random(3)
    model = Regressor(spec, rng=rng, normalization=Normalization.fit(x, t))
    for layer in model.layers:
        if "b" in layer.params:
            layer.params["b"][...] = 0.1 * rng.standard_normal(layer.params["b"].shape)
    kinds = {layer.kind for layer in model.layers}
    assert kinds == {"conv", "relu", "maxpool", "avgpool", "dense"}
    for name, (a, n) in network_param_gradients(model, x, t, rng).items():
        assert a.size > 0
        assert relative_error(a, n) <= 1e-4, name


# 4 ------------------------------------------------------------------------------------------


def label_encoded_images(rng, temps, noise):
    """8x8 images whose first channel carries the (noisy) label."""
    n = temps.size
    images = np.clip(0.5 + 0.05 * rng.standard_normal((n, 8, 8, 3)), 0, 1)
    images[..., 0] = ((temps + noise * rng.standard_normal(n) if noise else temps) - 31)[:, None, None] / 5
    return images


@acceptance(*C4)
def test_checkpoint_protocol_replay(tmp_path, record_property):
    # batch 1 over 10,050 samples: one epoch crosses loop 10,000 and ends at 10,050;
    # label noise on the test subject puts the verification MAE around epsilon
    rng = np.random.default_rng(0)
    temps = 33 + 0.6 * rng.standard_normal(10_050)
    train_set = SubjectDataset("A", label_encoded_images(rng, temps, 0.0), temps, np.arange(temps.size), 1.0)
    temps = 33 + 0.6 * rng.standard_normal(60)
    test_set = SubjectDataset("B", label_encoded_images(rng, temps, 0.3), temps, np.arange(60), 1.0)
    cfg = TrainConfig(batch_size=1, epochs=1, learning_rate=1e-3)
    assert (cfg.save_epsilon_c, cfg.save_every_loops, cfg.verify_every_loops) == (0.3, 10_000, 100)
    spec = NetworkSpec(8, (conv(4), RELU, POOL), (8,))
    result = train([train_set], test_set, spec, cfg, out_dir=tmp_path)

    from nidl.regressor.training import read_train_log
    log = read_train_log(tmp_path / "trainlog.jsonl")
    saved = [load_checkpoint(p) for p in sorted(tmp_path.glob("ckpt_*.nidl"))]
    problems = audit_checkpoints(log, saved, cfg, result.loops_per_epoch)
    fired = {t for c in saved for t in c.triggers}
    verifies = [e["verify_mae"] for e in log if "verify_mae" in e]
    record_property("checkpoints", len(saved))
    record_property("verifications_below_eps", f"{sum(v < 0.3 for v in verifies)}/{len(verifies)}")
    assert problems == []
    assert fired == {ERROR_BELOW_EPSILON, EVERY_N_LOOPS, EPOCH_END}
    assert any(v >= 0.3 for v in verifies)

    by_cursor = {(c.epoch, c.loop): c for c in result.checkpoints}
    x = test_set.images[:7]
    for c in saved:
        mem = by_cursor[(c.epoch, c.loop)]
        assert all(c.params[k].tobytes() == v.tobytes() for k, v in mem.params.items())
        assert c.to_model().forward(x).tobytes() == mem.to_model().forward(x).tobytes()


# 5 ------------------------------------------------------------------------------------------


def xi_oracle(train_mean, prior_mean):
    if prior_mean > 1.0:
        return train_mean / 0.446
    if train_mean >= 0.3:
        return train_mean / 12.88
    return 0.0


@acceptance(*C5)
def test_calibration_truth_table(record_property):
    train_grid = [0.0, 0.1, 0.29, 0.3, 0.31, 0.5, 1.0, 2.0]
    prior_grid = [0.0, 0.5, 0.99, 1.0, 1.01, 1.5, 3.0]
    branches = set()
    for tm in train_grid:
        for pm in prior_grid:
            got = compute_xi(CalibContext(tm, (pm, pm, pm)), CalibParams())
            want = xi_oracle(tm, pm)
            assert abs(got - want) <= 1e-12, (tm, pm)
            branches.add("tau1" if pm > 1 else "tau2" if tm >= 0.3 else "zero")
    record_property("cells", len(train_grid) * len(prior_grid))
    assert branches == {"tau1", "tau2", "zero"}
    assert abs(compute_xi(CalibContext(0.5, (1.2,) * 3)) - 1.1210762331838564) <= 1e-12
    assert abs(compute_xi(CalibContext(0.5, (0.2,) * 3)) - 0.5 / 12.88) <= 1e-12


# 6 ------------------------------------------------------------------------------------------


@acceptance(*C6)
def test_summary_delta_golden(tmp_path, record_property):
    result = make_result([0.4834 - 0.2, 0.4834, 0.4834 + 0.2], [0.5774 - 0.3, 0.5774, 0.5774 + 0.3])
    report = emit_report(result, tmp_path)
    assert result.pooled(NIDL).mean == pytest.approx(0.4834, abs=1e-12)
    assert result.pooled(NIPST).mean == pytest.approx(0.5774, abs=1e-12)
    delta = next(r["delta_pct"] for r in report["table2"] if r["stat"] == "Mean")
    record_property("delta_pct", f"{delta:.2f}")
    assert round(delta, 2) == -16.28
    assert "↓ 16.28%" in (tmp_path / "table2.txt").read_text(encoding="utf-8")
    assert round(percent_delta(0.5774, 0.4834), 2) == -16.28


@acceptance(*C6)
def test_bins_partition():
    rng = np.random.default_rng(8)
    probes = np.concatenate([rng.uniform(0, 4.2, 20_000), BIN_EDGES[:-1], np.nextafter(BIN_EDGES[1:], 0)])
    counts, overflow = bin_counts(probes)
    assert overflow == 0 and sum(counts) == probes.size  # every point of [0, 4.2) lands in exactly one bin
    assert bin_counts(np.array([4.2]))[1] == 1


@acceptance(*C6)
@given(st.lists(st.floats(0, 8), min_size=1, max_size=300))
def test_bin_fractions_sum_to_one(errs):
    rep = summarize(errs)
    assert abs(sum(rep.bins) + rep.overflow - 1.0) <= 1e-12


# 7 ------------------------------------------------------------------------------------------


@acceptance(*C7)
def test_synthetic_crossval(record_property):
    start = time.perf_counter()
    result = synthetic_crossval(n_subjects=6, seed=0)
    elapsed = time.perf_counter() - start
    s = crossval_summary(result)
    for k, v in s.items():
        record_property(k, f"{v:.3f}")
    record_property("seconds", f"{elapsed:.0f}")
    assert len(result.rounds) == 6 and all(r.nidl.n == 3000 for r in result.rounds)
    assert s["nidl_pooled_mae"] <= 0.7 * s["constant_pooled_mae"]  # (a)
    assert all(r.pearson_r > 0.5 for r in result.rounds)  # (b)
    assert all(r.nipst.mean < 1.0 for r in result.rounds)  # (c)
    assert elapsed < 20 * 60


# 8 ------------------------------------------------------------------------------------------


@acceptance(*C8)
@given(st.floats(-2, 2), st.floats(25, 40), st.sampled_from([1.0, 15.0, 30.0]), st.integers(2, 2000))
def test_affine_interpolation_exact(slope_per_min, offset, fps, frames):
    times = np.arange(0.0, frames / fps + 60.0, 60.0)
    series = TemperatureSeries(times, offset + slope_per_min * times / 60.0)
    t = np.arange(frames) / fps
    err = np.abs(interpolate_temperature(series, frames, fps) - (offset + slope_per_min * t / 60.0)).max()
    assert err <= 1e-9


@acceptance(*C8)
def test_ninety_thousand_labels(record_property):
    times = np.arange(0.0, 50 * 60 + 1e-9, 60.0)
    series = TemperatureSeries(times, 36.5 - times / 3000.0)
    labels = interpolate_temperature(series, 30 * 50 * 60, 30.0)
    record_property("labels", labels.size)
    assert labels.size == 90_000
    assert np.abs(labels - (36.5 - np.arange(90_000) / 30.0 / 3000.0)).max() <= 1e-12


# 9 ------------------------------------------------------------------------------------------


@acceptance(*C9)
@given(st.integers(1, 5), st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_raw_planar_round_trip(n, h, w, seed):
    frames = np.random.default_rng(seed).integers(0, 256, (n, h, w, 3)) / 255.0
    clip = VideoClip(frames, 30.0, "x")
    assert decode_raw_planar(encode_raw_planar(clip), "x") == clip


@acceptance(*C9)
@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["float32", "float64"]))
def test_checkpoint_round_trip(seed, dtype):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(6, (conv(int(rng.integers(1, 5))), RELU), (int(rng.integers(1, 6)),), dtype=dtype)
    model = Regressor(spec, rng=rng, normalization=Normalization(rng.random(3), rng.random(3) + 0.5,
                                                                 float(rng.normal(33)), float(rng.random() + 0.1)))
    ckpt = ModelCheckpoint.from_model(model, epoch=int(rng.integers(1, 8)), loop=int(rng.integers(1, 10**5)),
                                      step=int(rng.integers(1, 10**6)), triggers=(EPOCH_END,),
                                      metrics={"verify_mae": float(rng.random())})
    blob = encode_checkpoint(ckpt)
    back = decode_checkpoint(blob)
    assert encode_checkpoint(back) == blob


@acceptance(*C9)
@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_dataset_round_trip(n, side, seed):
    rng = np.random.default_rng(seed)
    ds = SubjectDataset("S3", rng.integers(0, 256, (n, side, side, 3)) / 255.0, 30 + 10 * rng.random(n),
                        np.cumsum(rng.integers(1, 4, n)), 30.0, {"schema": "nidl-dataset/1", "seed": seed})
    with tempfile.TemporaryDirectory() as d:
        save_dataset(ds, d)
        manifest = (Path(d) / "dataset.json").read_text()
        back = load_dataset(d)
        save_dataset(back, Path(d) / "again")
        assert (Path(d) / "again" / "dataset.json").read_text() == manifest
    assert np.array_equal(back.images, ds.images) and np.array_equal(back.temps, ds.temps)
    assert np.array_equal(back.frame_index, ds.frame_index)


@acceptance(*C9)
@settings(max_examples=20)
@given(st.lists(st.floats(0, 6), min_size=1, max_size=30), st.integers(0, 2**32 - 1))
def test_report_json_round_trip(errs, seed):
    other = list(np.random.default_rng(seed).permutation(errs))
    result = make_result(errs, other)
    with tempfile.TemporaryDirectory() as d:
        emit_report(result, d)
        assert load_result(d).to_dict() == result.to_dict()

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nidl.dataset import (
    RoiSpec, SubjectDataset, extract_roi, interpolate_temperature, load_dataset, load_datasets,
    make_dataset, plan_splits, save_dataset,
)
from nidl.errors import DataValidationError, FormatError
from nidl.media import TemperatureSeries, VideoClip


def test_roi_parse_and_bounds():
    roi = RoiSpec.parse("3,4,10")
    assert roi == RoiSpec(3, 4, 10)
    roi.check_bounds(14, 13)
    with pytest.raises(DataValidationError):
        roi.check_bounds(13, 13)
    with pytest.raises(DataValidationError):
        RoiSpec.parse("3,4")
    assert RoiSpec.centered(48, 48, 32) == RoiSpec(8, 8, 32)


def test_extract_roi_crops_the_right_window(rng):
    clip = VideoClip(rng.random((2, 10, 12, 3)), 30.0)
    crop = extract_roi(clip, RoiSpec(2, 3, 4))
    np.testing.assert_array_equal(crop, clip.frames[:, 3:7, 2:6])


@given(st.floats(-1, 1), st.floats(25, 40), st.sampled_from([1.0, 7.5, 30.0]), st.integers(2, 400))
def test_interpolation_is_exact_on_affine_trajectories(slope_per_min, offset, fps, frames):
    times = np.arange(0.0, frames / fps + 120.0, 60.0)
    series = TemperatureSeries(times, offset + slope_per_min * times / 60.0)
    t = np.arange(frames) / fps
    np.testing.assert_allclose(interpolate_temperature(series, frames, fps),
                               offset + slope_per_min * t / 60.0, atol=1e-9)


def test_interpolation_clamps_outside_sensor_span():
    series = TemperatureSeries(np.array([10.0, 70.0]), np.array([33.0, 34.0]))
    out = interpolate_temperature(series, 100, 1.0)
    assert out[0] == 33.0 and out[-1] == 34.0


def test_fifty_minutes_at_30fps_gives_90000_labels():
    times = np.arange(0.0, 3000.0 + 1e-9, 60.0)
    series = TemperatureSeries(times, 33.0 + times / 3000.0)
    labels = interpolate_temperature(series, 30 * 50 * 60, 30.0)
    assert labels.shape == (90_000,)
    np.testing.assert_allclose(labels, 33.0 + np.arange(90_000) / 30.0 / 3000.0, atol=1e-12)


def test_make_dataset_pairs_frames_and_labels(rng):
    clip = VideoClip(rng.random((5, 8, 8, 3)), 1.0, "A")
    series = TemperatureSeries(np.array([0.0, 4.0]), np.array([33.0, 35.0]))
    ds = make_dataset(clip, series, RoiSpec(1, 1, 4))
    assert len(ds) == 5 and ds.side == 4 and ds.subject_id == "A"
    np.testing.assert_allclose(ds.temps, [33.0, 33.5, 34.0, 34.5, 35.0])
    s = list(ds.samples)[2]
    assert s.frame_index == 2 and s.temp_c == 34.0


def test_dataset_rejects_implausible_labels(rng):
    with pytest.raises(DataValidationError):
        SubjectDataset("A", rng.random((2, 4, 4, 3)), [33.0, 50.0], [0, 1], 1.0)
    with pytest.raises(DataValidationError):
        SubjectDataset("A", rng.random((2, 4, 4, 3)), [33.0, 33.0], [1, 0], 1.0)


def test_plan_splits_leaves_each_subject_out():
    plans = plan_splits(["a", "b", "c"])
    assert [p.test_subject for p in plans] == ["a", "b", "c"]
    assert plans[1].train_subjects == ("a", "c")
    with pytest.raises(DataValidationError):
        plan_splits(["a"])
    with pytest.raises(DataValidationError):
        plan_splits(["a", "a"])


@given(st.integers(1, 5), st.integers(2, 6), st.booleans(), st.integers(0, 2**32 - 1))
def test_dataset_save_load_round_trip(n, side, with_raw, seed):
    import tempfile
    rng = np.random.default_rng(seed)
    q = lambda shape: rng.integers(0, 256, size=shape) / 255.0
    ds = SubjectDataset("S7", q((n, side, side, 3)), 30 + 5 * rng.random(n), np.arange(n) * 2, 2.0,
                        {"schema": "nidl-dataset/1", "note": "x"}, q((n, side, side, 3)) if with_raw else None)
    with tempfile.TemporaryDirectory() as d:
        save_dataset(ds, d)
        back = load_dataset(d)
    assert back.subject_id == ds.subject_id and back.fps == ds.fps
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.temps, ds.temps)
    np.testing.assert_array_equal(back.frame_index, ds.frame_index)
    assert (back.raw_images is None) == (not with_raw)
    if with_raw:
        np.testing.assert_array_equal(back.raw_images, ds.raw_images)
    assert back.provenance["note"] == "x"


def test_load_datasets_and_schema_check(tmp_path, rng):
    for sid in ("B", "A"):
        save_dataset(SubjectDataset(sid, np.zeros((2, 3, 3, 3)), [33, 34], [0, 1], 1.0), tmp_path / sid)
    assert [d.subject_id for d in load_datasets(tmp_path)] == ["A", "B"]
    manifest = json.loads((tmp_path / "A" / "dataset.json").read_text())
    manifest["schema"] = "other/9"
    (tmp_path / "A" / "dataset.json").write_text(json.dumps(manifest))
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "A")
    with pytest.raises(DataValidationError):
        load_datasets(tmp_path / "empty")

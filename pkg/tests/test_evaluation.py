import random
import statistics

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nidl.errors import DataValidationError
from nidl.evaluation import (
    BIN_EDGES, NIDL, NIPST, CrossValResult, ErrorReport, TrainedPredictor, absolute_errors, bin_counts,
    percent_delta, run_crossval, summarize,
)
from nidl.regressor import TrainConfig, desk_spec

# counts per bin behind the published error distribution
NIPST_COUNTS = (334, 123, 166, 54, 37, 17, 16)  # of 747
NIDL_COUNTS = (354, 151, 188, 54, 20, 7, 6)  # of 780


def errors_from_counts(counts):
    mids = [(lo + hi) / 2 for lo, hi in zip(BIN_EDGES[:-1], BIN_EDGES[1:])]
    return [m for m, c in zip(mids, counts) for _ in range(c)]


def test_absolute_errors():
    np.testing.assert_array_equal(absolute_errors([33.0, 34.0], [33.0, 34.0]), [0.0, 0.0])
    np.testing.assert_allclose(absolute_errors([33.0], [33.5]), [0.5])
    with pytest.raises(DataValidationError):
        absolute_errors([1.0], [1.0, 2.0])


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), max_size=30))
def test_absolute_errors_match_elementwise_oracle(pairs):
    p = [a for a, _ in pairs]
    t = [b for _, b in pairs]
    assert absolute_errors(p, t).tolist() == [abs(a - b) for a, b in pairs]


def test_summarize_small_example():
    rep = summarize([0.1, 0.3, 0.5])
    assert rep.mean == pytest.approx(0.3) and rep.median == 0.3
    assert rep.bin_counts == [1, 1, 1, 0, 0, 0, 0]
    assert rep.top_k == [0.5, 0.3, 0.1] and rep.minimum == 0.1 and rep.maximum == 0.5


def test_summarize_conventions():
    assert summarize([0.7]).stddev == 0.0
    errs = [0.2, 0.4, 1.0, 3.0]
    rep = summarize(errs)
    assert rep.stddev == pytest.approx(statistics.stdev(errs))
    assert rep.median == pytest.approx(0.7)
    with pytest.raises(DataValidationError):
        summarize([])
    with pytest.raises(DataValidationError):
        summarize([-0.1])


def test_bins_against_counting_oracle():
    rng = np.random.default_rng(5)
    errs = np.concatenate([rng.uniform(0, 5, 10_000), BIN_EDGES])  # include every edge exactly
    counts, overflow = bin_counts(errs)
    for i, (lo, hi) in enumerate(zip(BIN_EDGES[:-1], BIN_EDGES[1:])):
        assert counts[i] == sum(1 for e in errs if lo <= e < hi)
    assert overflow == sum(1 for e in errs if e >= 4.2)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=200))
def test_bin_fractions_and_overflow_sum_to_one(errs):
    rep = summarize(errs)
    assert abs(sum(rep.bins) + rep.overflow - 1.0) <= 1e-12
    assert sum(rep.bin_counts) + rep.overflow_count == len(errs)
    assert rep.top_k == sorted(rep.top_k, reverse=True)


def test_bin_edges_partition_the_range():
    assert BIN_EDGES[0] == 0.0 and BIN_EDGES[-1] == 4.2
    assert all(lo < hi for lo, hi in zip(BIN_EDGES[:-1], BIN_EDGES[1:]))
    # each edge opens its own bin
    for i, e in enumerate(BIN_EDGES[:-1]):
        counts, _ = bin_counts(np.array([e]))
        assert counts[i] == 1


def test_published_distribution_reproduces():
    nipst = summarize(errors_from_counts(NIPST_COUNTS), NIPST)
    nidl = summarize(errors_from_counts(NIDL_COUNTS), NIDL)
    assert round(100 * nipst.bins[0], 4) == 44.7122
    assert round(100 * nidl.bins[0], 4) == 45.3846
    published_nipst = [44.7122, 16.4659, 22.2222, 7.2289, 4.9531, 2.2758, 2.1419]
    published_nidl = [45.3846, 19.3590, 24.1026, 6.9231, 2.5641, 0.8974, 0.7692]
    assert [round(100 * b, 4) for b in nipst.bins] == published_nipst
    assert [round(100 * b, 4) for b in nidl.bins] == published_nidl
    variation = [round(percent_delta(b, o), 2) for b, o in zip(nipst.bins, nidl.bins)]
    assert variation == [1.5, 17.57, 8.46, -4.23, -48.23, -60.57, -64.09]


def test_published_summary_deltas():
    assert round(percent_delta(0.5774, 0.4834), 2) == -16.28
    assert round(percent_delta(0.3619, 0.3464), 2) == -4.28
    assert round(percent_delta(0.6118, 0.4959), 2) == -18.94


@given(st.lists(st.floats(0, 5), min_size=1, max_size=30))
def test_report_dict_round_trip(errs):
    rep = summarize(errs, NIPST, "S01")
    assert ErrorReport.from_dict(rep.to_dict()) == rep


# cross-validation -------------------------------------------------------------------------


def oracle_trainer(train_sets, test, spec, cfg):
    return TrainedPredictor(lambda images: test.temps.copy(), 0.0)


def offset_trainer(offset, train_error):
    def trainer(train_sets, test, spec, cfg):
        return TrainedPredictor(lambda images: test.temps + offset, train_error)
    return trainer


def test_two_subjects_give_two_rounds_and_four_reports(tiny_datasets):
    res = run_crossval(tiny_datasets[:2], desk_spec(16), trainer=oracle_trainer)
    assert len(res.rounds) == 2 and len(res.reports()) == 4
    assert {r.method for r in res.reports()} == {NIDL, NIPST}


def test_perfect_model_has_zero_error(tiny_datasets):
    res = run_crossval(tiny_datasets, desk_spec(16), trainer=oracle_trainer)
    assert all(r.nidl.mean == 0.0 for r in res.rounds)
    assert res.pooled(NIDL).n == sum(len(d) for d in tiny_datasets)


def test_calibration_is_applied_per_round(tiny_datasets):
    # errors of 2 C on the first samples trigger the test-prior branch: xi = 0.5 / 0.446
    res = run_crossval(tiny_datasets[:2], desk_spec(16), trainer=offset_trainer(2.0, 0.5))
    for r in res.rounds:
        assert r.xi == pytest.approx(0.5 / 0.446)
        np.testing.assert_allclose(r.nidl.errors, abs(2.0 - 0.5 / 0.446), atol=1e-9)
        np.testing.assert_allclose(np.array(r.curves["nidl_raw"]) - r.curves["nidl"], r.xi)


def test_pooled_errors_are_the_concatenation(tiny_datasets):
    res = run_crossval(tiny_datasets, desk_spec(16), trainer=offset_trainer(0.25, 0.0))
    assert res.pooled(NIPST).errors == [e for r in res.rounds for e in r.nipst.errors]


def test_order_insensitive(tiny_datasets):
    a = run_crossval(tiny_datasets, desk_spec(16), trainer=offset_trainer(0.1, 0.0))
    shuffled = list(tiny_datasets)
    random.Random(3).shuffle(shuffled)
    b = run_crossval(shuffled[::-1], desk_spec(16), trainer=offset_trainer(0.1, 0.0))
    assert [r.to_dict() for r in a.rounds] == [r.to_dict() for r in b.rounds]


def test_rounds_can_be_restricted(tiny_datasets):
    res = run_crossval(tiny_datasets, desk_spec(16), trainer=oracle_trainer, rounds=["S01"])
    assert [r.test_subject for r in res.rounds] == ["S01"]
    assert res.rounds[0].manifest["train_subjects"] == ["S00", "S02"]
    with pytest.raises(DataValidationError):
        run_crossval(tiny_datasets, desk_spec(16), trainer=oracle_trainer, rounds=["S99"])


def test_real_training_round_runs(tiny_datasets):
    cfg = TrainConfig(epochs=1, batch_size=50, verify_every_loops=2, learning_rate=1e-3)
    res = run_crossval(tiny_datasets[:2], desk_spec(16), cfg, rounds=["S00"])
    r = res.rounds[0]
    assert r.manifest["model"]["checkpoint"]["triggers"]
    assert np.isfinite(r.nidl.mean) and r.error_train_mean >= 0


def test_result_dict_round_trip(tiny_datasets):
    res = run_crossval(tiny_datasets[:2], desk_spec(16), trainer=offset_trainer(0.3, 0.4))
    back = CrossValResult.from_dict(res.to_dict())
    assert back.to_dict() == res.to_dict()

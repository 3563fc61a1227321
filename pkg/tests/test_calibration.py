import numpy as np
import pytest
from hypothesis import given, strategies as st

from nidl.calibration import CalibContext, CalibParams, calibrate, compute_xi
from nidl.errors import DataValidationError

errs = st.floats(0, 10, allow_nan=False)


def test_examples():
    assert compute_xi(CalibContext(0.5, (1.2, 1.2, 1.2))) == pytest.approx(0.5 / 0.446)
    assert compute_xi(CalibContext(0.5, (0.2, 0.2, 0.2))) == pytest.approx(0.03882, abs=1e-5)
    assert compute_xi(CalibContext(0.1, (0.2, 0.2, 0.2))) == 0.0
    np.testing.assert_allclose(calibrate([34.0, 35.0], 1.1211), [32.8789, 33.8789])
    assert calibrate([], 1.0).size == 0
    np.testing.assert_array_equal(calibrate([33.0], 0.0), [33.0])


def test_test_prior_branch_wins_when_both_hold():
    assert compute_xi(CalibContext(0.5, (2.0, 2.0, 2.0))) == 0.5 / 0.446


def test_only_first_n_errors_count():
    assert compute_xi(CalibContext(0.1, (0.0, 0.0, 0.0, 100.0))) == 0.0
    assert compute_xi(CalibContext(0.1, (3.0,))) == 0.1 / 0.446


def test_no_prior_errors_uses_training_branch():
    assert compute_xi(CalibContext(0.5, ())) == 0.5 / 12.88


def test_params_validation():
    with pytest.raises(DataValidationError):
        CalibParams(tau1=0.0)
    with pytest.raises(DataValidationError):
        CalibContext(-0.1, ())


@given(errs, st.lists(errs, min_size=1, max_size=5))
def test_doubling_train_error_doubles_xi(train, prior):
    # move the train error to a non-zero branch in both cases
    a = compute_xi(CalibContext(train + 0.3, tuple(prior)))
    b = compute_xi(CalibContext(2 * (train + 0.3), tuple(prior)))
    assert b == pytest.approx(2 * a)


@given(st.lists(st.floats(20, 45), max_size=10), st.floats(-5, 5))
def test_calibration_is_a_rigid_shift(preds, xi):
    out = calibrate(preds, xi)
    np.testing.assert_allclose(np.diff(out), np.diff(preds), atol=1e-9)
    order = np.argsort(preds, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)

"""Piecewise post-hoc correction of network predictions.

The correction is a rigid shift ``T' = T - xi``. ``xi`` depends on how the
model behaved on its training data and on the first few test samples, whose
ground truth is assumed known in advance:

* mean of the first ``n_prior`` test errors above ``eta_c``  ->  ``xi = train_mean / tau1``
* otherwise, training mean error at least ``epsilon_c``      ->  ``xi = train_mean / tau2``
* otherwise                                                     ``xi = 0``

Both conditions may hold at once; the test-prior branch is checked first.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError


@dataclass(frozen=True)
class CalibParams:
    tau1: float = 0.446
    tau2: float = 12.88
    n_prior: int = 3
    eta_c: float = 1.0
    epsilon_c: float = 0.3

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0 and self.eta_c > 0 and self.epsilon_c > 0):
            raise DataValidationError("tau1, tau2, eta_c and epsilon_c must be positive")
        if self.n_prior < 1:
            raise DataValidationError("n_prior must be >= 1")


@dataclass(frozen=True)
class CalibContext:
    error_train_mean: float
    first_n_test_errors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        errs = tuple(float(e) for e in self.first_n_test_errors)
        values = (self.error_train_mean,) + errs
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise DataValidationError("calibration errors must be finite and non-negative")
        object.__setattr__(self, "first_n_test_errors", errs)


def compute_xi(ctx, params=CalibParams()):
    # fewer than n_prior known test errors: average what exists
    prior = ctx.first_n_test_errors[: params.n_prior]
    if prior and float(np.mean(prior)) > params.eta_c:
        return ctx.error_train_mean / params.tau1
    if ctx.error_train_mean >= params.epsilon_c:
        return ctx.error_train_mean / params.tau2
    return 0.0


def calibrate(predictions, xi):
    return np.asarray(predictions, dtype=np.float64) - xi

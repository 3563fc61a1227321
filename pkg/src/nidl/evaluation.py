"""Error statistics and leave-one-subject-out cross-validation."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .calibration import CalibContext, CalibParams, calibrate, compute_xi
from .dataset import plan_splits
from .errors import DataValidationError
from .nipst import NipstConfig, evaluate_subject
from .regressor.training import TrainConfig, mean_abs_error, select_checkpoint, stack_datasets, train

BIN_EDGES = (0.0, 0.3, 0.5, 1.0, 1.5, 2.0, 2.5, 4.2)
TOP_K = 5
NIDL = "NIDL"
NIPST = "NIPST"


def bin_labels():
    return [f"[{lo}, {hi})" for lo, hi in zip(BIN_EDGES[:-1], BIN_EDGES[1:])]


def absolute_errors(predicted, truth):
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DataValidationError(f"length mismatch: {p.shape} predictions vs {t.shape} truths")
    return np.abs(p - t)


def bin_counts(errors):
    """Counts per half-open bin plus the overflow count (errors >= 4.2)."""
    idx = np.searchsorted(BIN_EDGES, errors, side="right") - 1
    counts = np.bincount(idx, minlength=len(BIN_EDGES))
    return counts[:-1].tolist(), int(counts[-1])


@dataclass
class ErrorReport:
    method: str
    errors: list
    mean: float
    median: float
    stddev: float
    minimum: float
    top_k: list
    bins: list
    bin_counts: list
    overflow: float
    overflow_count: int
    subject_id: str = None

    @property
    def n(self):
        return len(self.errors)

    @property
    def maximum(self):
        return self.top_k[0] if self.top_k else float("nan")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def summarize(errors, method=NIDL, subject_id=None):
    """Table-style statistics for a list of absolute errors.

    Standard deviation uses the sample (n - 1) convention and is 0 for a
    single error.
    """
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise DataValidationError("cannot summarise an empty error list")
    if not np.all(np.isfinite(e)) or e.min() < 0:
        raise DataValidationError("errors must be finite and non-negative")
    counts, overflow = bin_counts(e)
    n = e.size
    return ErrorReport(
        method=method,
        errors=e.tolist(),
        mean=float(e.mean()),
        median=float(np.median(e)),
        stddev=float(e.std(ddof=1)) if n > 1 else 0.0,
        minimum=float(e.min()),
        top_k=np.sort(e)[::-1][:TOP_K].tolist(),
        bins=[c / n for c in counts],
        bin_counts=counts,
        overflow=overflow / n,
        overflow_count=overflow,
        subject_id=subject_id,
    )


def percent_delta(baseline, ours):
    """Signed relative change of ``ours`` against ``baseline``, in percent."""
    return (ours - baseline) / baseline * 100.0


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


# cross-validation ------------------------------------------------------------------------


@dataclass
class TrainedPredictor:
    """What a round needs from a trained model."""

    predict: object  # images -> per-sample C
    error_train_mean: float
    info: dict = field(default_factory=dict)


def train_network(train_sets, test_set, spec, cfg):
    result = train(train_sets, test_set, spec, cfg)
    best = select_checkpoint(result.checkpoints)
    model = best.to_model()
    images, temps = stack_datasets(train_sets)
    info = {
        "checkpoint": {"epoch": best.epoch, "loop": best.loop, "step": best.step,
                       "triggers": list(best.triggers), "verify_mae": best.metrics["verify_mae"]},
        "n_checkpoints": len(result.checkpoints),
        "loops_per_epoch": result.loops_per_epoch,
    }
    return TrainedPredictor(model.predict, mean_abs_error(model, images, temps), info)


@dataclass
class RoundResult:
    test_subject: str
    nidl: ErrorReport
    nipst: ErrorReport
    constant_mae: float
    xi: float
    error_train_mean: float
    pearson_r: float
    curves: dict
    manifest: dict

    def to_dict(self):
        d = asdict(self)
        d["nidl"] = self.nidl.to_dict()
        d["nipst"] = self.nipst.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["nidl"] = ErrorReport.from_dict(d["nidl"])
        d["nipst"] = ErrorReport.from_dict(d["nipst"])
        return cls(**d)


@dataclass
class CrossValResult:
    rounds: list
    manifest: dict = field(default_factory=dict)

    def pooled(self, method=NIDL):
        """Per-sample pooling: every subject's errors concatenated."""
        errors = [e for r in self.rounds for e in (r.nidl if method == NIDL else r.nipst).errors]
        return summarize(errors, method)

    def pooled_constant_mae(self):
        n = [r.nidl.n for r in self.rounds]
        return float(np.dot([r.constant_mae for r in self.rounds], n) / np.sum(n))

    def reports(self):
        return [rep for r in self.rounds for rep in (r.nidl, r.nipst)]

    def to_dict(self):
        return {"rounds": [r.to_dict() for r in self.rounds], "manifest": self.manifest}

    @classmethod
    def from_dict(cls, d):
        return cls([RoundResult.from_dict(r) for r in d["rounds"]], d.get("manifest", {}))


def run_round(plan, by_id, spec, train_cfg, calib, nipst_cfg, trainer):
    test = by_id[plan.test_subject]
    train_sets = [by_id[s] for s in plan.train_subjects]
    trained = trainer(train_sets, test, spec, train_cfg)
    raw_pred = np.asarray(trained.predict(test.images), dtype=np.float64)
    prior = absolute_errors(raw_pred[:calib.n_prior], test.temps[:calib.n_prior])
    xi = compute_xi(CalibContext(trained.error_train_mean, tuple(prior)), calib)
    nidl_pred = calibrate(raw_pred, xi)
    _, nipst_pred = evaluate_subject(test, nipst_cfg)
    constant = float(np.mean(np.concatenate([d.temps for d in train_sets])))
    sid = test.subject_id
    curves = {
        "frame_index": test.frame_index.tolist(),
        "t_seconds": test.times.tolist(),
        "truth": test.temps.tolist(),
        "nidl_raw": raw_pred.tolist(),
        "nidl": nidl_pred.tolist(),
        "nipst": nipst_pred.tolist(),
    }
    manifest = {
        "test_subject": sid,
        "train_subjects": list(plan.train_subjects),
        "network": spec.to_dict() if hasattr(spec, "to_dict") else spec,
        "train": asdict(train_cfg),
        "calibration": asdict(calib),
        "nipst": asdict(nipst_cfg),
        "dataset": test.provenance,
        "model": trained.info,
    }
    return RoundResult(
        test_subject=sid,
        nidl=summarize(absolute_errors(nidl_pred, test.temps), NIDL, sid),
        nipst=summarize(absolute_errors(nipst_pred, test.temps), NIPST, sid),
        constant_mae=float(np.mean(np.abs(test.temps - constant))),
        xi=float(xi),
        error_train_mean=float(trained.error_train_mean),
        pearson_r=pearson(raw_pred, test.temps),
        curves=curves,
        manifest=manifest,
    )


def run_crossval(datasets, spec, train_cfg=TrainConfig(), calib=CalibParams(),
                 nipst_cfg=NipstConfig(), trainer=train_network, rounds=None, progress=None):
    """Leave-one-subject-out: train on all other subjects, evaluate NIDL and NIPST on the held-out one.

    Subjects are processed in sorted-id order whatever the input order, so the
    result does not depend on how ``datasets`` was listed. ``rounds`` restricts
    which subjects are held out.
    """
    by_id = {d.subject_id: d for d in datasets}
    if len(by_id) != len(datasets):
        raise DataValidationError("duplicate subject ids")
    plans = plan_splits(sorted(by_id))
    if rounds is not None:
        wanted = set(rounds)
        unknown = wanted - set(by_id)
        if unknown:
            raise DataValidationError(f"unknown subjects requested: {sorted(unknown)}")
        plans = [p for p in plans if p.test_subject in wanted]
    results = []
    for plan in plans:
        results.append(run_round(plan, by_id, spec, train_cfg, calib, nipst_cfg, trainer))
        if progress is not None:
            progress(results[-1])
    manifest = {
        "subjects": sorted(by_id),
        "calibration": asdict(calib),
        "train": asdict(train_cfg),
        "nipst": asdict(nipst_cfg),
    }
    return CrossValResult(results, manifest)

"""Mini-batch training with verification-driven checkpointing.

Within each epoch the loop counter ``m`` runs from 1 to ``ceil(N / batch)``.
Every ``verify_every_loops`` loops the model is scored on a fixed batch (the
first ``verify_batch`` test samples). A checkpoint is taken at loop ``m``
when any of these holds:

* the verification just run scored a mean absolute error below ``save_epsilon_c``
* ``m`` is a multiple of ``save_every_loops``
* ``m`` is the last loop of the epoch
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataValidationError, NumericInvariantError
from .checkpoint import (
    EPOCH_END, ERROR_BELOW_EPSILON, EVERY_N_LOOPS, ModelCheckpoint, save_checkpoint,
)
from .network import Normalization, Regressor
from .optim import make_optimizer


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    epochs: int = 7
    save_epsilon_c: float = 0.3
    verify_every_loops: int = 100
    save_every_loops: int = 10000
    verify_batch: int = 50
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    momentum: float = 0.9
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise DataValidationError("batch_size and epochs must be >= 1")
        if not self.save_epsilon_c > 0:
            raise DataValidationError("save_epsilon_c must be positive")
        if self.verify_every_loops < 1 or self.save_every_loops < 1 or self.verify_batch < 1:
            raise DataValidationError("loop intervals and verification batch must be >= 1")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise DataValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    checkpoints: list
    log: list
    model: Regressor
    config: TrainConfig
    loops_per_epoch: int

    def best(self):
        return select_checkpoint(self.checkpoints)

    def write_log(self, path):
        write_train_log(self.log, path)


def loops_per_epoch(n_samples, batch_size):
    return math.ceil(n_samples / batch_size)


def stack_datasets(datasets):
    if not datasets or sum(len(d) for d in datasets) == 0:
        raise DataValidationError("training set is empty")
    sides = {d.images.shape[1:] for d in datasets}
    if len(sides) != 1:
        raise DataValidationError(f"incompatible image sizes across subjects: {sorted(sides)}")
    images = np.concatenate([d.images for d in datasets])
    temps = np.concatenate([d.temps for d in datasets])
    return images, temps


def mean_abs_error(model, images, temps):
    return float(np.mean(np.abs(model.predict(images) - temps)))


def train(train_sets, test_set, spec, cfg=TrainConfig(), out_dir=None, progress=None):
    """Train a fresh network; returns every checkpoint taken plus the per-loop log."""
    images, temps = stack_datasets(train_sets)
    if images.shape[1:] != (spec.input_side, spec.input_side, spec.input_channels):
        raise DataValidationError(
            f"training images {images.shape[1:]} do not match network input side {spec.input_side}"
        )
    if len(test_set) < cfg.verify_batch:
        raise DataValidationError(
            f"test subject has {len(test_set)} samples, verification needs {cfg.verify_batch}"
        )
    if test_set.images.shape[1:] != images.shape[1:]:
        raise DataValidationError("test images differ in size from training images")
    verify_x = test_set.images[:cfg.verify_batch]
    verify_t = test_set.temps[:cfg.verify_batch]

    rng = np.random.default_rng(cfg.rng_seed)
    model = Regressor(spec, rng=rng, normalization=Normalization.fit(images, temps))
    params = model.named_params()
    opt = make_optimizer(cfg.optimizer, params, cfg.learning_rate, cfg.momentum)
    n = images.shape[0]
    loops = loops_per_epoch(n, cfg.batch_size)
    celsius2 = model.norm.target_scale ** 2
    out_dir = Path(out_dir) if out_dir is not None else None

    log, checkpoints = [], []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for m in range(1, loops + 1):
            idx = np.sort(order[(m - 1) * cfg.batch_size:m * cfg.batch_size])
            loss, grads = model.backward(images[idx], temps[idx])
            if not np.isfinite(loss):
                raise NumericInvariantError(f"training loss became non-finite at epoch {epoch} loop {m}")
            opt.step(grads)
            step += 1
            entry = {"step": step, "epoch": epoch, "loop": m, "train_loss": loss * celsius2}
            triggers = []
            if m % cfg.verify_every_loops == 0:
                entry["verify_mae"] = mean_abs_error(model, verify_x, verify_t)
                if entry["verify_mae"] < cfg.save_epsilon_c:
                    triggers.append(ERROR_BELOW_EPSILON)
            if m % cfg.save_every_loops == 0:
                triggers.append(EVERY_N_LOOPS)
            if m == loops:
                triggers.append(EPOCH_END)
            if triggers:
                mae = entry.get("verify_mae")
                if mae is None:
                    mae = mean_abs_error(model, verify_x, verify_t)
                entry["checkpoint_trigger"] = triggers
                entry["checkpoint_verify_mae"] = mae
                ckpt = ModelCheckpoint.from_model(
                    model, epoch=epoch, loop=m, step=step, triggers=tuple(triggers),
                    metrics={"verify_mae": mae, "train_loss": entry["train_loss"]},
                )
                checkpoints.append(ckpt)
                if out_dir is not None:
                    save_checkpoint(ckpt, out_dir / f"ckpt_e{epoch:02d}_l{m:06d}.nidl")
            log.append(entry)
            if progress is not None:
                progress(entry)
    if out_dir is not None:
        write_train_log(log, out_dir / "trainlog.jsonl")
    return TrainResult(checkpoints, log, model, cfg, loops)


def select_checkpoint(checkpoints):
    """Lowest verification MAE; the earliest wins ties."""
    if not checkpoints:
        raise DataValidationError("no checkpoints to choose from")
    return min(checkpoints, key=lambda c: (c.metrics["verify_mae"], c.step))


def predict(checkpoint, dataset, batch_size=256):
    model = checkpoint.to_model() if isinstance(checkpoint, ModelCheckpoint) else checkpoint
    if len(dataset) and dataset.images.shape[1] != model.spec.input_side:
        raise DataValidationError(
            f"dataset images are {dataset.images.shape[1]} px, model expects {model.spec.input_side}"
        )
    return model.predict(dataset.images, batch_size=batch_size)


# log replay ---------------------------------------------------------------------------


def write_train_log(log, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_train_log(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def expected_checkpoints(log, cfg, loops):
    """Re-derive ``{(epoch, loop): triggers}`` from logged metrics alone."""
    expected = {}
    for e in log:
        m = e["loop"]
        triggers = []
        if m % cfg.verify_every_loops == 0 and e["verify_mae"] < cfg.save_epsilon_c:
            triggers.append(ERROR_BELOW_EPSILON)
        if m % cfg.save_every_loops == 0:
            triggers.append(EVERY_N_LOOPS)
        if m == loops:
            triggers.append(EPOCH_END)
        if triggers:
            expected[(e["epoch"], m)] = tuple(triggers)
    return expected


def audit_checkpoints(log, checkpoints, cfg, loops):
    """Return a list of discrepancies between saved checkpoints and the trigger rules."""
    expected = expected_checkpoints(log, cfg, loops)
    saved = {(c.epoch, c.loop): tuple(c.triggers) for c in checkpoints}
    problems = []
    for key in sorted(set(expected) | set(saved)):
        if expected.get(key) != saved.get(key):
            problems.append(f"epoch {key[0]} loop {key[1]}: expected {expected.get(key)}, saved {saved.get(key)}")
    if len(saved) != len(checkpoints):
        problems.append("duplicate checkpoints at the same cursor")
    return problems


def config_dict(cfg):
    return asdict(cfg)

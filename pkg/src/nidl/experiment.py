"""Desk-scale synthetic experiment shared by the acceptance suite and scripts."""

from dataclasses import replace

import numpy as np

from .dataset import RoiSpec, make_dataset
from .evaluation import NIDL, NIPST, run_crossval
from .evm import EvmConfig, magnify
from .regressor import TrainConfig, desk_spec
from .synth import SynthProfile, generate_synthetic_subject

DESK_PROFILE = SynthProfile()
DESK_EVM = EvmConfig()
DESK_ROI_SIDE = 32
# shorter, faster schedule than the full protocol: 6 x 3000 frames instead of 16 x 90000
DESK_TRAIN = TrainConfig(epochs=4, learning_rate=1e-3)


def synthetic_datasets(n_subjects, seed=0, profile=DESK_PROFILE, evm_config=DESK_EVM,
                       roi_side=DESK_ROI_SIDE):
    """Magnified ROI datasets (with raw ROIs attached) for seeds ``seed .. seed + n - 1``."""
    roi = RoiSpec.centered(profile.height, profile.width, roi_side)
    out = []
    for s in range(seed, seed + n_subjects):
        sub = generate_synthetic_subject(s, profile)
        mag = magnify(sub.clip, evm_config)
        out.append(make_dataset(mag, sub.log, roi, evm_config=evm_config, raw_clip=sub.clip))
    return out


def synthetic_crossval(n_subjects=6, seed=0, epochs=None, learning_rate=None, progress=None,
                       train_cfg=DESK_TRAIN, **kwargs):
    cfg = train_cfg
    if epochs is not None:
        cfg = replace(cfg, epochs=epochs)
    if learning_rate is not None:
        cfg = replace(cfg, learning_rate=learning_rate)
    datasets = synthetic_datasets(n_subjects, seed)
    return run_crossval(datasets, desk_spec(DESK_ROI_SIDE), cfg, progress=progress, **kwargs)


def crossval_summary(result):
    nidl, nipst = result.pooled(NIDL), result.pooled(NIPST)
    const = result.pooled_constant_mae()
    return {
        "nidl_pooled_mae": nidl.mean,
        "nipst_pooled_mae": nipst.mean,
        "constant_pooled_mae": const,
        "nidl_improvement_vs_constant": 1.0 - nidl.mean / const,
        "min_subject_pearson": float(np.min([r.pearson_r for r in result.rounds])),
        "max_subject_nipst_mae": float(np.max([r.nipst.mean for r in result.rounds])),
    }

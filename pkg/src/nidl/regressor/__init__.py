from .checkpoint import (
    EPOCH_END, ERROR_BELOW_EPSILON, EVERY_N_LOOPS, ModelCheckpoint, load_checkpoint, save_checkpoint,
)
from .network import PRESETS, NetworkSpec, Normalization, Regressor, desk_spec, full_spec
from .training import TrainConfig, TrainResult, audit_checkpoints, predict, select_checkpoint, train

from .checkpoint import CheckpointError, load_checkpoint, read_loss_csv, save_checkpoint, write_loss_csv
from .model import ToyRestorer
from .objective import (
    EqTarget,
    LossReport,
    Reduction,
    Sample,
    Tape,
    TrainConfig,
    backward,
    loss_eq,
    loss_rec,
    make_model,
    make_samples,
    restore,
    total_objective,
)
from .train import Adam, EpochLoss, TrainingDiverged, evaluate_objective, train

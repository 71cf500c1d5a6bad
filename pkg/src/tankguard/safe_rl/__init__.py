"""Safety-critic SAC learner, offline pretraining and training loops."""
from ..config import RunConfig
from .agent import RECOVERY, TASK, SafeSac, TrainConfig, TrainingDiverged
from .offline import collect_offline, pretrain_safety, safety_auc
from .replay import MASK_FIELDS, ReplayBuffer, Transition, load_dataset, read_dataset, write_dataset
from .training import EVAL_COLUMNS, TRAIN_COLUMNS, evaluate, load_bundle, save_bundle, train

__all__ = [
    "RunConfig", "RECOVERY", "TASK", "SafeSac", "TrainConfig", "TrainingDiverged", "collect_offline",
    "pretrain_safety", "safety_auc", "MASK_FIELDS", "ReplayBuffer", "Transition", "load_dataset", "read_dataset",
    "write_dataset", "EVAL_COLUMNS", "TRAIN_COLUMNS", "evaluate", "load_bundle", "save_bundle", "train",
]

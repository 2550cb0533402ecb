from .config import TrainConfig, apply_ablation, dump_config, load_config, parse_config
from .trainer import (
    Checkpoint, NonFiniteLossError, VocabularyMismatchError, build_model, evaluate,
    evaluate_model, export_prediction, predict, sweep_lambda, train,
)

__all__ = [
    "TrainConfig", "apply_ablation", "dump_config", "load_config", "parse_config", "Checkpoint",
    "NonFiniteLossError", "VocabularyMismatchError", "build_model", "evaluate", "evaluate_model",
    "export_prediction", "predict", "sweep_lambda", "train",
]

from .checkpoint import load_weights, save_checkpoint, save_weights
from .config import DataConfig, TrainConfig, lr_at
from .data import Dataset, linear_baseline_accuracy, synthetic_dataset
from .loop import (
    RunReport,
    TrainResult,
    detect_dead_network,
    evaluate_topk,
    init_weights,
    predict_logits,
    topk_errors,
    train,
    with_residual_scale,
)
from .optim import OptimizerState, apply_updates, ema_update, momentum_step, rmsprop_step

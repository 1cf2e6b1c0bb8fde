"""Training loop, loss, query sampling and learning-rate schedule."""
from .objective import LOSS_EPS, QuerySample, lr_at_epoch, nmse_loss, sample_queries
from .loop import TUNED_LR, ExampleSource, TrainConfig, TrainState, evaluate_nmse, train, write_history

__all__ = [
    "ExampleSource", "LOSS_EPS", "QuerySample", "TUNED_LR", "TrainConfig", "TrainState", "evaluate_nmse",
    "lr_at_epoch", "nmse_loss", "sample_queries", "train", "write_history",
]

from .ad_model import AdModel
from .aggregator import Aggregator
from .base import Model
from .checkpoint import (
    CheckpointError,
    layers_from_hdf5,
    layers_to_hdf5,
    load_checkpoint,
    load_layers,
    save_checkpoint,
)
from .loss import bce_loss, mean_bce_loss
from .optim import SGD, Adam, Optimizer, apply_sgd, make_optimizer
from .options import (
    AggregatorKind,
    ModelConfig,
    ModelConfigError,
    OptimizerKind,
    PredictorKind,
    is_legal_combination,
)
from .predictor import CtrPredictor
from .text_encoder import TextEncoder
from .user_model import UserModel, behavior_tokens

"""Delighting network, detail enhancer, losses and training loops."""
from .enhancer import DegradationSpec, EnhancerConfig, EnhancerNet, degrade, enhance, train_enhancer
from .losses import DelightLoss, gradient_pyramid_loss, masked_l1
from .model import DelightNet, ModelConfig, count_params
from .train import REGIMES, TrainConfig, build_model, default_toy_config, predict, train

"""Neural components: encoder, planner, training and fixed-point inference."""
from .checkpoint import load_model, save_model
from .fixed import FixedEncoder, FixedPlanner, quantize_model
from .layers import Adam, BatchNorm, Linear, adam_step, bn_relu_infer, dropout_relu, fc_forward
from .models import EncoderModel, PlannerModel, encode, plan_step
from .mt19937 import Mt19937
from .train import TrainingSet, loss_and_grads, train

__all__ = [
    "Adam", "BatchNorm", "EncoderModel", "FixedEncoder", "FixedPlanner", "Linear", "Mt19937",
    "PlannerModel", "TrainingSet", "adam_step", "bn_relu_infer", "dropout_relu", "encode",
    "fc_forward", "load_model", "loss_and_grads", "plan_step", "quantize_model", "save_model",
    "train",
]

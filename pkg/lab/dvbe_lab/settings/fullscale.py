from .base import *

# Source-scale values (ResNet-101 features, 448x448 crops)
AMSE = {
    **AMSE,
    "reduced_dim": 256,
}

TRAIN = {
    **TRAIN,
    "lr": 0.001,
    "momentum": 0.9,
    "batch_size": 24,
    "epochs_stage2": 180,
}

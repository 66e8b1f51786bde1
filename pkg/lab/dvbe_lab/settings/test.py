from .base import *

SYNTH = {
    **SYNTH,
    "samples_per_class": 10,
}

TRAIN = {
    **TRAIN,
    "lr": 0.05,
    "epochs_stage1": 2,
    "epochs_stage2": 2,
    "batch_size": 8,
}

LOGGING = {
    **LOGGING,
    "root": {"handlers": ["console"], "level": "WARNING"},
}

from pathlib import Path

from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Default seed for every command; overridable per invocation with --seed
SEED = config("DVBE_SEED", default=1, cast=int)
LOG_LEVEL = config("DVBE_LOG_LEVEL", default="INFO")

# Synthetic benchmark (desk-scale stand-in for CUB/AWA2-style data)
SYNTH = {
    "n_seen": 8,
    "n_unseen": 4,
    "attr_dim": 16,
    "feat_dims": (4, 4, 32),
    "samples_per_class": 50,
    "noise_scale": 1.0,
    # seen samples per class: train / val / test_seen
    "val_fraction": 0.2,
    "test_fraction": 0.2,
    "mean_scale": 3.0,
}

DATASET_FILES = {
    "features": "features.txt",
    "attributes": "attributes.txt",
    "splits": "splits.txt",
}

# Semantic-free branch
AMSE = {
    "reduced_dim": 8,
    "variant": "cross_attentive",
    "use_normalization": True,
    # slope at zero is 1/(2·sqrt(eps)); 1e-2 caps it at 5
    "signed_sqrt_eps": 1e-2,
}

# λ width comes from TRAIN["sigma"]
MARGIN = {
    "mode": "adaptive",
    "fixed_lambda": 0.8,
}

# Semantic-aligned branch
AUTOS2V = {
    "embed_dim": 16,
    "n_nodes": 3,
    "adjacency_top_k": 3,
    "cet_temperature": 0.1,
}

TRAIN = {
    "lr": 0.001,
    "momentum": 0.9,
    "epochs_stage1": 10,
    "epochs_stage2": 20,
    "batch_size": 16,
    "gamma": 1.0,
    "sigma": 0.5,
}

GATE = {
    "tau": 1.0,
    "calibration_percentile": 95.0,
}

GRADCHECK = {
    "step": 1e-5,
    "tolerance": 1e-4,
    "seeds": (0, 1, 2, 3, 4),
}

ENTROPY_HISTOGRAM_BINS = 20

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name} {message}",
            "style": "{",
        },
        "simple": {
            "format": "{levelname} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
            "stream": "ext://sys.stderr",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": LOG_LEVEL,
    },
}

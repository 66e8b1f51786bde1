"""
Run configuration for one CLI invocation.

Values resolve flag > config file > settings default. Config files hold
`key = value` lines read through decouple's RepositoryEnv; keys are the long
flag names with dashes turned into underscores (`epochs_stage1 = 5`).
"""
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import attrs
from decouple import Config, Csv, RepositoryEnv, UndefinedValueError

from amse.models import MarginMode
from dataio.models import SynthConfig
from dvbe_lab.conf import settings
from dvbe_lab.exceptions import ValidationError
from gate.models import GateConfig
from trainer.models import TrainConfig

logger = logging.getLogger(__name__)

_MISSING = object()


def _flag(value: str) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes", "on")


class Resolver:
    def __init__(self, flags: Dict[str, Any], config_path: Optional[str] = None):
        self.flags = {key: value for key, value in flags.items() if value is not None}
        self.file = None
        if config_path:
            path = Path(config_path)
            if not path.is_file():
                raise ValidationError(f"Config file not found: {path}")
            self.file = Config(RepositoryEnv(str(path)))
            logger.debug(f"Reading run configuration from {path}")

    def __call__(self, key: str, default: Any = _MISSING, cast: Callable = str) -> Any:
        if key in self.flags:
            value = self.flags[key]
            return cast(value) if isinstance(value, str) and cast is not str else value
        if self.file is not None:
            try:
                return self.file(key, cast=cast)
            except UndefinedValueError:
                pass
            except ValueError as exc:
                raise ValidationError(f"Config value {key!r}: {exc}")
        return None if default is _MISSING else default


@attrs.frozen
class RunConfig:
    command: str
    seed: int
    synth: SynthConfig
    train: TrainConfig
    gate: GateConfig
    tau: Optional[float]
    model: Dict[str, Any] = attrs.Factory(dict)


def _synth(resolve: Resolver, seed: int) -> SynthConfig:
    defaults = settings.SYNTH
    return SynthConfig(
        n_seen=resolve("n_seen", defaults["n_seen"], int),
        n_unseen=resolve("n_unseen", defaults["n_unseen"], int),
        attr_dim=resolve("attr_dim", defaults["attr_dim"], int),
        feat_dims=tuple(resolve("feat_dims", defaults["feat_dims"], Csv(int))),
        samples_per_class=resolve("samples_per_class", defaults["samples_per_class"], int),
        noise_scale=resolve("noise_scale", defaults["noise_scale"], float),
        seed=seed,
        val_fraction=resolve("val_fraction", defaults["val_fraction"], float),
        test_fraction=resolve("test_fraction", defaults["test_fraction"], float),
        mean_scale=resolve("mean_scale", defaults["mean_scale"], float),
    )


def _train(resolve: Resolver, seed: int) -> TrainConfig:
    defaults, margin = settings.TRAIN, settings.MARGIN
    return TrainConfig(
        lr=resolve("lr", defaults["lr"], float),
        momentum=resolve("momentum", defaults["momentum"], float),
        epochs_stage1=resolve("epochs_stage1", defaults["epochs_stage1"], int),
        epochs_stage2=resolve("epochs_stage2", defaults["epochs_stage2"], int),
        batch_size=resolve("batch_size", defaults["batch_size"], int),
        gamma=resolve("gamma", defaults["gamma"], float),
        sigma=resolve("sigma", defaults["sigma"], float),
        seed=seed,
        margin_mode=MarginMode(resolve("margin_mode", margin["mode"])),
        fixed_lambda=resolve("fixed_lambda", margin["fixed_lambda"], float),
        cet_temperature=resolve("cet_temperature", settings.AUTOS2V["cet_temperature"], float),
    )


def build_run_config(command: str, flags: Dict[str, Any], config_path: Optional[str] = None) -> RunConfig:
    """Merge flags, the optional config file and settings; attrs validation errors become ValidationError."""
    resolve = Resolver(flags, config_path)
    try:
        seed = resolve("seed", settings.SEED, int)
        tau = resolve("tau", None, float)
        gate = GateConfig(
            tau=settings.GATE["tau"] if tau is None else tau,
            calibration_percentile=resolve("percentile", settings.GATE["calibration_percentile"], float),
        )
        model = {
            key: resolve(key, None, cast)
            for key, cast in (
                ("variant", str), ("head", str), ("reduced_dim", int), ("embed_dim", int),
                ("n_nodes", int), ("top_k", int), ("use_normalization", _flag),
            )
        }
        config = RunConfig(
            command=command,
            seed=seed,
            synth=_synth(resolve, seed),
            train=_train(resolve, seed),
            gate=gate,
            tau=tau,
            model={key: value for key, value in model.items() if value is not None},
        )
    except ValueError as exc:
        raise ValidationError(f"Invalid configuration: {exc}")
    logger.debug(f"{command}: seed={seed} train={config.train} gate={config.gate}")
    return config

"""Run configuration and its flat ``key = value`` text format."""

import dataclasses
import typing
from dataclasses import dataclass, fields
from typing import Optional

from .bpdn import SolverConfig
from .errors import ConfigError
from .loss import LossWeights
from .synthetic import SyntheticSpec
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # data
    dataset: str = "synthetic"
    synthetic_kind: str = "fourier-sparse"
    nx: int = 32
    ny: int = 32
    nt: int = 300
    n_modes: int = 3
    amplitude_law: str = "uniform"
    noise: float = 0.0
    offset: float = 0.0
    max_freq: Optional[int] = None
    freq_step: int = 1
    normalization: str = "minmax"
    valid_filter: bool = False
    eps_valid: float = 1e-10
    # corruption and sensing
    n_cols_sub: int = 0
    n_snap_sub: int = 1
    n_sensors: int = 3
    lags: int = 10
    # model
    model: str = "cs-shred"
    hidden_size: int = 32
    hidden_layers: int = 2
    l1_param: int = 64
    l2_param: int = 128
    final_activation: str = "linear"
    split_input_weights: bool = False
    dropout: float = 0.0
    # training
    batch_size: int = 32
    lr: float = 1e-3
    lambda_l2: float = 1.0
    lambda_l1: float = 0.0
    lambda_snr: float = 0.0
    weight_decay: float = 0.0
    snr_epsilon: float = 1e-8
    snr_cap: float = 100.0
    snr_numerator: str = "truth"
    mae_target: str = "output"
    epochs: int = 200
    epoch_step: int = 50
    patience: int = 20
    scheduler: str = "plateau"
    seed: int = 0
    # recovery
    solver_lambda: Optional[float] = None
    solver_lambda_scale: float = 0.01
    solver_tol: float = 1e-8
    solver_max_iters: int = 2000
    solver_step_rule: str = "barzilai-borwein"
    solver_acceleration: bool = False
    availability: str = "mask"
    recovery_mode: str = "cached"

    # -- derived module configs

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(self.synthetic_kind, (self.nx, self.ny, self.nt), self.n_modes,
                             self.amplitude_law, self.noise, self.offset, self.max_freq, self.seed,
                             self.freq_step)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            lam=self.solver_lambda,
            lam_scale=self.solver_lambda_scale,
            max_iters=self.solver_max_iters,
            tol=self.solver_tol,
            step_rule=self.solver_step_rule,
            acceleration=self.solver_acceleration,
            availability="sentinel" if self.availability == "mask" else self.availability,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_snr, self.lambda_l2, self.lambda_l1, self.weight_decay,
                           self.snr_epsilon, self.snr_cap, self.snr_numerator, self.mae_target)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.patience, self.epoch_step,
                           self.scheduler, self.seed)

    @property
    def recovery(self) -> bool:
        return self.model == "cs-shred"

    def validate(self) -> "RunConfig":
        checks = [
            (self.model in ("cs-shred", "shred"), "model must be 'cs-shred' or 'shred'"),
            (self.normalization in ("minmax", "zscore"), "normalization must be 'minmax' or 'zscore'"),
            (self.availability in ("mask", "sentinel", "strict"), "availability must be mask, sentinel or strict"),
            (self.recovery_mode in ("cached", "every-forward"), "recovery_mode must be cached or every-forward"),
            (self.final_activation in ("linear", "relu"), "final_activation must be linear or relu"),
            (0.0 <= self.dropout < 1.0, "dropout must lie in [0, 1)"),
            (self.hidden_size >= 1 and self.hidden_layers >= 1, "hidden_size and hidden_layers must be >= 1"),
            (self.l1_param >= 1 and self.l2_param >= 1, "decoder sizes must be >= 1"),
            (self.n_sensors >= 1, "n_sensors must be >= 1"),
            (self.lags >= 2 or not self.recovery, "cs-shred needs lags >= 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.dataset == "synthetic":
            if not 0 <= self.n_cols_sub <= self.ny:
                raise ConfigError(f"n_cols_sub must lie in [0, {self.ny}]")
            if not 1 <= self.n_snap_sub <= self.nt:
                raise ConfigError(f"n_snap_sub must lie in [1, {self.nt}]")
            if self.lags >= self.nt:
                raise ConfigError("lags must be smaller than nt")
            if self.n_sensors > self.nx * self.ny:
                raise ConfigError("more sensors than grid points")
        try:
            if self.dataset == "synthetic":
                self.synthetic_spec()
            self.solver_config()
            self.loss_weights()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- text round trip

    def to_text(self) -> str:
        lines = ["# csshred run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"malformed config line: {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        values.update(overrides)
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _parse(val, hints[key]) if isinstance(val, str) else val
        return cls(**kwargs)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, hint):
    if typing.get_origin(hint) is typing.Union:
        inner = [a for a in typing.get_args(hint) if a is not type(None)][0]
        if text.lower() in ("none", ""):
            return None
        return _parse(text, inner)
    try:
        if hint is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r} as {hint.__name__}") from exc
    return text


def load_config(path, **overrides) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_text(fh.read(), **overrides)


# keys that two runs must share for a fair comparison on identical corrupted data
SHARED_KEYS = (
    "dataset", "synthetic_kind", "nx", "ny", "nt", "n_modes", "amplitude_law", "noise", "offset",
    "max_freq", "freq_step", "normalization", "valid_filter", "eps_valid", "n_cols_sub", "n_snap_sub",
    "n_sensors", "seed",
)

"""
Method specifications and their config-string syntax.

A method is written ``kind[:key=value[;key=value]]``, for example ``erm``,
``bagging:K=5``, ``mc_dropout:T=20;p=0.2`` or
``twin:lambda=300;overlap=disjoint``. ``twin:lambda=auto`` defers the choice
of lambda to the sweep-and-select rule of the comparison protocol.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from config import ENSEMBLE_K, MC_DROPOUT_P, MC_PASSES
from exceptions import ConfigError
from nn_core.optim import OptimizerKind, TrainConfig


class MethodKind(str, Enum):
    ERM = "erm"
    SWA = "swa"
    MC_DROPOUT = "mc_dropout"
    DEEP_ENSEMBLE = "deep_ensemble"
    BAGGING = "bagging"
    TWIN = "twin"


class OverlapMode(str, Enum):
    """How the twin's two loaders are drawn from the pool."""

    DISJOINT = "disjoint"
    BOOTSTRAP = "bootstrap"
    SHARED = "shared"


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class MethodSpec:
    """
    One training procedure with its knobs.

    Attributes:
        kind: Method kind
        k: Member count (deep ensemble, bagging); 2 for twin, 1 otherwise
        passes: MC-dropout inference passes
        lam: Twin consistency weight; None means "select by the sweep rule"
        overlap: Twin loader construction
        resample_each_epoch: Redraw the twin bootstraps every epoch (False keeps them fixed)
        dropout_p: Dropout override (MC dropout defaults to 0.2)
        optimizer: Optimizer override (MC dropout defaults to SGD)
    """

    kind: MethodKind
    k: int = 1
    passes: int = MC_PASSES
    lam: Optional[float] = None
    overlap: OverlapMode = OverlapMode.BOOTSTRAP
    resample_each_epoch: bool = True
    dropout_p: Optional[float] = None
    optimizer: Optional[OptimizerKind] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MethodKind(self.kind))
        object.__setattr__(self, "overlap", OverlapMode(self.overlap))
        if self.optimizer is not None:
            object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        if self.kind is MethodKind.TWIN:
            object.__setattr__(self, "k", 2)
        elif self.kind not in (MethodKind.DEEP_ENSEMBLE, MethodKind.BAGGING):
            object.__setattr__(self, "k", 1)
        if self.k < 1:
            raise ConfigError(f"K must be at least 1, got {self.k}")
        if self.kind is MethodKind.DEEP_ENSEMBLE and self.k < 2:
            raise ConfigError("deep_ensemble needs K >= 2")
        if self.passes < 1:
            raise ConfigError(f"T must be at least 1, got {self.passes}")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.dropout_p is not None and not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"p must lie in [0, 1), got {self.dropout_p}")

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """
        Parse ``kind[:key=value[;key=value]]``.

        Args:
            text: Method string

        Returns:
            MethodSpec

        Raises:
            ConfigError: On an unknown kind, unknown key or bad value
        """
        head, _, tail = text.strip().partition(":")
        try:
            kind = MethodKind(head.strip().lower())
        except ValueError:
            raise ConfigError(f"Unknown method '{head.strip()}'")
        kwargs = {"kind": kind}
        if kind in (MethodKind.DEEP_ENSEMBLE, MethodKind.BAGGING):
            kwargs["k"] = ENSEMBLE_K
        for item in filter(None, (part.strip() for part in tail.split(";"))):
            key, sep, value = item.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not value:
                raise ConfigError(f"Method option '{item}' must be key=value")
            try:
                if key == "K":
                    kwargs["k"] = int(value)
                elif key == "T":
                    kwargs["passes"] = int(value)
                elif key in ("lambda", "lam"):
                    kwargs["lam"] = None if value.lower() == "auto" else float(value)
                elif key == "overlap":
                    kwargs["overlap"] = OverlapMode(value.lower())
                elif key == "resample_each_epoch":
                    if value.lower() not in _TRUE | _FALSE:
                        raise ValueError(value)
                    kwargs["resample_each_epoch"] = value.lower() in _TRUE
                elif key == "p":
                    kwargs["dropout_p"] = float(value)
                elif key == "optimizer":
                    kwargs["optimizer"] = OptimizerKind(value.lower())
                else:
                    raise ConfigError(f"Unknown option '{key}' for method '{kind.value}'")
            except ValueError as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(f"Bad value '{value}' for method option '{key}'")
        return cls(**kwargs)

    @property
    def label(self) -> str:
        """Canonical string form, parseable by MethodSpec.parse."""
        opts = []
        if self.kind in (MethodKind.DEEP_ENSEMBLE, MethodKind.BAGGING):
            opts.append(f"K={self.k}")
        if self.kind is MethodKind.MC_DROPOUT:
            opts.append(f"T={self.passes}")
        if self.kind is MethodKind.TWIN:
            opts.append(f"lambda={'auto' if self.lam is None else format(self.lam, 'g')}")
            if self.overlap is not OverlapMode.BOOTSTRAP:
                opts.append(f"overlap={self.overlap.value}")
            if not self.resample_each_epoch:
                opts.append("resample_each_epoch=false")
        if self.dropout_p is not None:
            opts.append(f"p={self.dropout_p:g}")
        if self.optimizer is not None:
            opts.append(f"optimizer={self.optimizer.value}")
        return self.kind.value + (":" + ";".join(opts) if opts else "")

    def with_lambda(self, lam: float) -> "MethodSpec":
        return replace(self, lam=float(lam))

    def train_config(self, base: TrainConfig) -> TrainConfig:
        """
        Apply the method's training overrides to a base config.

        MC dropout trains with dropout p=0.2 and SGD unless overridden; other
        methods train without dropout.
        """
        if self.kind is MethodKind.MC_DROPOUT:
            p = MC_DROPOUT_P if self.dropout_p is None else self.dropout_p
            opt = OptimizerKind.SGD if self.optimizer is None else self.optimizer
            return replace(base, dropout_p=p, optimizer=opt)
        return replace(base, dropout_p=0.0,
                       optimizer=self.optimizer if self.optimizer is not None else base.optimizer)

    def __str__(self) -> str:
        return self.label

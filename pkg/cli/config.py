"""
Run configuration: a flat ``key=value`` file with ``--set`` overrides,
validated against a declared schema.
"""

import os
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from config import (BATCH_SIZE, BO_BOUNDS, BO_DELTA, BO_FOLD_SEED, BO_FOLDS, BO_GRID_POINTS, BO_INIT_TRIALS,
                    BO_PENALTY, BO_TRIALS, CANONICAL_SEEDS, CI_RESAMPLES, CLIP_NORM, EPOCHS, HIDDEN_DIMS,
                    LAMBDA_GRID, LAMBDA_TOLERANCE, LEARNING_RATE, N_SEEDS, OUTPUT_DIR, REGRESSION_LAMBDA_GRID,
                    REGRESSION_MAE_TOLERANCE, TEST_FRAC, TOPK, TRAJECTORY_BUDGET, TRAJECTORY_INIT_SIZE,
                    TRIAGE_REVIEW_FRAC, TRIAGE_SUBSET_SIZES, TRIAGE_SUBSETS, WEIGHT_DECAY)
from dataio.loader import load_dataset, load_split_file
from dataio.models import Dataset, TaskKind
from dataio.synthetic import SyntheticSpec, generate_synthetic
from exceptions import ChurnLabError, ConfigError
from methods.spec import MethodSpec, OverlapMode
from nn_core.optim import OptimizerKind, TrainConfig
from utils.logger import get_logger

logger = get_logger(__name__)


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{text}'")


def _items(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(t) for t in _items(text))


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in _items(text))


def _str_list(text: str) -> Tuple[str, ...]:
    return tuple(_items(text))


def _task(text: str) -> str:
    return TaskKind.parse(text).value


def _optimizer(text: str) -> str:
    return OptimizerKind(text.strip().lower()).value


def _methods(text: str) -> Tuple[str, ...]:
    # method strings carry ";"-separated options, never commas
    items = _items(text)
    for item in items:
        MethodSpec.parse(item)
    return tuple(items)


def _joined(values) -> str:
    return ",".join(str(v) for v in values)


@dataclass(frozen=True)
class Option:
    """One schema entry: parser and default (as config-file text)."""

    parse: Callable[[str], Any]
    default: str
    help: str = ""


SCHEMA: Dict[str, Option] = {
    # data
    'dataset': Option(str, "", "feature-matrix CSV path"),
    'task': Option(_task, "binary_classification", "binary_classification or regression"),
    'name': Option(str, "", "dataset name (defaults to the file stem)"),
    'split_file': Option(str, "", "optional id,role file overriding the canonical split"),
    'synthetic_n': Option(int, "0", "rows of a synthetic dataset (0 = none)"),
    'synthetic_d': Option(int, "20", "features of a synthetic dataset"),
    'class_sep': Option(float, "2.0", "synthetic class separation"),
    'noise_sd': Option(float, "0.5", "synthetic regression noise"),
    'predictions': Option(str, "", "prediction-set CSV for the churn command"),
    # methods and seeds
    'methods': Option(_methods, "erm,deep_ensemble:K=5,bagging:K=5,twin:lambda=auto", "comma-separated MethodSpecs"),
    'seed': Option(int, "0", "base seed for resampling, synthetic data and BO"),
    'seeds': Option(_int_list, _joined(range(N_SEEDS)), "train seeds"),
    'canonical_seeds': Option(_int_list, _joined(CANONICAL_SEEDS), "split replicates"),
    'test_frac': Option(float, str(TEST_FRAC), "id-test fraction of the canonical split"),
    # training
    'hidden_dims': Option(_int_list, _joined(HIDDEN_DIMS), "hidden layer widths"),
    'learning_rate': Option(float, str(LEARNING_RATE)),
    'weight_decay': Option(float, str(WEIGHT_DECAY)),
    'clip_norm': Option(float, str(CLIP_NORM)),
    'batch_size': Option(int, str(BATCH_SIZE)),
    'epochs': Option(int, str(EPOCHS)),
    'optimizer': Option(_optimizer, "adamw"),
    'checkpoint_dir': Option(str, "", "save trained weights under this directory"),
    # metrics and selection
    'resamples': Option(int, str(CI_RESAMPLES), "bootstrap resamples per CI"),
    'topk': Option(int, str(TOPK)),
    'lambda_grid': Option(_float_list, _joined(LAMBDA_GRID)),
    'regression_lambda_grid': Option(_float_list, _joined(REGRESSION_LAMBDA_GRID)),
    'tolerance': Option(float, str(LAMBDA_TOLERANCE), "id-accuracy tolerance of the lambda rule"),
    'regression_tolerance': Option(float, str(REGRESSION_MAE_TOLERANCE)),
    'exempt_filter': Option(_parse_bool, "false", "run datasets failing the majority filter"),
    # lambda BO
    'bo_trials': Option(int, str(BO_TRIALS)),
    'bo_init_trials': Option(int, str(BO_INIT_TRIALS)),
    'bo_folds': Option(int, str(BO_FOLDS)),
    'bo_fold_seed': Option(int, str(BO_FOLD_SEED)),
    'bo_delta': Option(float, str(BO_DELTA)),
    'bo_penalty': Option(float, str(BO_PENALTY)),
    'bo_bounds': Option(_float_list, _joined(BO_BOUNDS)),
    'bo_grid_points': Option(int, str(BO_GRID_POINTS)),
    'bo_seeds': Option(_int_list, "0,1,2", "train seeds searched by bo-lambda"),
    # trajectories
    'trajectories': Option(int, "10"),
    'trajectory_budget': Option(int, str(TRAJECTORY_BUDGET)),
    'trajectory_init_size': Option(int, str(TRAJECTORY_INIT_SIZE)),
    'trajectory_methods': Option(_methods, "erm,bagging:K=5,twin:lambda=3"),
    # further studies
    'm_grid': Option(_int_list, "50,100,200,400", "nested pool sizes for nscale"),
    'triage_subsets': Option(_int_list, _joined(TRIAGE_SUBSET_SIZES)),
    'triage_draws': Option(int, str(TRIAGE_SUBSETS)),
    'review_frac': Option(float, str(TRIAGE_REVIEW_FRAC)),
    'overlap_lambda': Option(float, "10.0"),
    'overlap_modes': Option(_str_list, "disjoint,bootstrap,shared"),
    # run surface
    'out': Option(str, OUTPUT_DIR, "output directory"),
    'jobs': Option(int, "1", "parallel training workers"),
}

# keys that never change results and stay out of the config hash
UNHASHED = ('out', 'jobs', 'checkpoint_dir')


class RunConfig:
    """
    Validated run configuration.

    Values are reachable as attributes (``cfg.epochs``) or with ``cfg['epochs']``.
    """

    def __init__(self, values: Dict[str, Any], sources: Optional[Dict[str, str]] = None):
        self._values = dict(values)
        self.sources = dict(sources or {})

    def __getattr__(self, key: str) -> Any:
        values = self.__dict__.get('_values', {})
        if key in values:
            return values[key]
        raise AttributeError(key)

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self._values.items()}

    def hashable(self) -> Dict[str, Any]:
        return {k: v for k, v in self.to_dict().items() if k not in UNHASHED}

    @property
    def task_kind(self) -> TaskKind:
        return TaskKind.parse(self.task)

    @property
    def method_specs(self) -> List[MethodSpec]:
        return [MethodSpec.parse(m) for m in self.methods]

    @property
    def trajectory_specs(self) -> List[MethodSpec]:
        return [MethodSpec.parse(m) for m in self.trajectory_methods]

    @property
    def has_data(self) -> bool:
        return bool(self.dataset) or self.synthetic_n > 0

    def train_config(self) -> TrainConfig:
        return TrainConfig(hidden_dims=self.hidden_dims, learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay, clip_norm=self.clip_norm,
                           batch_size=self.batch_size, epochs=self.epochs,
                           optimizer=OptimizerKind(self.optimizer), task=self.task_kind)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(n=self.synthetic_n, d=self.synthetic_d, task=self.task_kind,
                             class_sep=self.class_sep, noise_sd=self.noise_sd,
                             name=self.name or None)

    def load_data(self) -> Dataset:
        """
        Load the configured dataset, or generate the synthetic one.

        Raises:
            ConfigError: If neither a dataset path nor a synthetic spec is set
        """
        if self.dataset:
            return load_dataset(self.dataset, self.task_kind, name=self.name or None)
        if self.synthetic_n > 0:
            return generate_synthetic(self.synthetic_spec(), self.seed)
        raise ConfigError("dataset: no dataset path or synthetic spec (synthetic_n) configured")

    def load_split(self, dataset: Dataset):
        return load_split_file(self.split_file, dataset) if self.split_file else None


def _parse_value(key: str, text: str) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"{key}: unknown config key")
    try:
        return SCHEMA[key].parse(text)
    except ChurnLabError as e:
        raise ConfigError(f"{key}: {e}")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: cannot parse '{text}' ({e})")


def _split_assignment(line: str, origin: str) -> Tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"{origin}: expected key=value, got '{line}'")
    key, text = line.split("=", 1)
    return key.strip(), text.strip()


def read_config_file(path: str) -> List[Tuple[str, str, str]]:
    """
    Read ``key=value`` assignments from a config file.

    Blank lines and ``#`` comments are skipped.

    Returns:
        (key, text, origin) triples in file order

    Raises:
        ConfigError: If the file is missing or a line has no '='
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config: file not found: {path}")
    assignments = []
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, text = _split_assignment(line, f"{path}:{number}")
            assignments.append((key, text, f"{path}:{number}"))
    return assignments


def _validate(values: Dict[str, Any]) -> None:
    for key in ('seeds', 'canonical_seeds', 'bo_seeds'):
        if not values[key]:
            raise ConfigError(f"{key}: seed list must not be empty")
    if len(set(values['seeds'])) != len(values['seeds']):
        raise ConfigError("seeds: train seeds must be distinct")
    for key in ('dataset', 'split_file', 'predictions'):
        if values[key] and not os.path.isfile(values[key]):
            raise ConfigError(f"{key}: file not found: {values[key]}")
    if values['split_file'] and not values['dataset']:
        raise ConfigError("split_file: needs a dataset path")
    if not 0.0 < values['test_frac'] < 1.0:
        raise ConfigError(f"test_frac: must lie in (0, 1), got {values['test_frac']}")
    if not 0.0 < values['review_frac'] <= 1.0:
        raise ConfigError(f"review_frac: must lie in (0, 1], got {values['review_frac']}")
    if len(values['bo_bounds']) != 2:
        raise ConfigError("bo_bounds: expected two values lo,hi")
    for key in ('resamples', 'topk', 'jobs', 'trajectories'):
        if values[key] < 1:
            raise ConfigError(f"{key}: must be at least 1")
    for key in ('tolerance', 'regression_tolerance'):
        if values[key] < 0:
            raise ConfigError(f"{key}: must be non-negative")
    for mode in values['overlap_modes']:
        try:
            OverlapMode(mode)
        except ValueError:
            raise ConfigError(f"overlap_modes: unknown overlap mode '{mode}'")
    if not values['methods']:
        raise ConfigError("methods: method list must not be empty")


def parse_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Build a validated RunConfig from defaults, an optional file and overrides.

    Args:
        path: Optional ``key=value`` config file
        overrides: ``key=value`` strings applied after the file

    Returns:
        RunConfig with every schema key filled

    Raises:
        ConfigError: Naming the key on unknown keys, type mismatches,
            missing files or invalid values
    """
    values = {key: option.parse(option.default) for key, option in SCHEMA.items()}
    sources = {key: "default" for key in SCHEMA}
    assignments: List[Tuple[str, str, str]] = read_config_file(path) if path else []
    assignments += [(*_split_assignment(o, "--set"), "--set") for o in overrides]
    for key, text, origin in assignments:
        values[key] = _parse_value(key, text)
        sources[key] = origin
    _validate(values)
    logger.debug("Config parsed: %d keys overridden", sum(1 for s in sources.values() if s != "default"))
    return RunConfig(values, sources)


def describe_schema() -> Sequence[Tuple[str, str, str]]:
    """(key, default, help) triples for the command-line help text."""
    return [(key, option.default, option.help) for key, option in SCHEMA.items()]

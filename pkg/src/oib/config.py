"""Experiment configuration: one JSON document, strict keys, full defaults.

Every tunable in the pipeline lives here with a working default, so an
empty config runs the reference experiment end to end.  Loading rejects
unknown keys recursively (typos fail loudly instead of silently running
the defaults) and validates value ranges at construction.

Seeds are stage-scoped: each consumer of randomness owns a named seed so
results stay reproducible when stages are re-run in isolation.  A global
seed offset shifts every stage seed deterministically, giving independent
replications of the whole experiment from one integer.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

SEED_STRIDE = 100003


@dataclass
class DatasetConfig:
    """Where images come from: IDX files when paths are set, else the
    built-in procedural digit corpus."""

    train_images: str = None
    train_labels: str = None
    test_images: str = None
    test_labels: str = None
    n_train: int = 10000
    n_test: int = 2000
    image_size: int = 28
    image_noise: float = 0.052

    def __post_init__(self):
        paths = [self.train_images, self.train_labels, self.test_images,
                 self.test_labels]
        if any(p is not None for p in paths) and None in paths:
            raise ConfigError("IDX datasets need all four file paths")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be positive")

    @property
    def from_files(self):
        return self.train_images is not None


@dataclass
class TrainSection:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 32

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate < 0 or self.batch_size < 1:
            raise ConfigError("invalid base training settings")


@dataclass
class RetrainSection:
    """Schedules for the shared average head and the per-size fine-tunes."""

    average_epochs: int = 90
    average_learning_rate: float = 1e-3
    average_decay_at: int = 60
    average_decay_factor: float = 0.1
    finetune_epochs: int = 20
    finetune_learning_rate: float = 1e-4
    finetune_val_fraction: float = 0.1
    finetune_min_delta: float = 0.0

    def __post_init__(self):
        if self.average_epochs < 0 or self.finetune_epochs < 0:
            raise ConfigError("retrain epochs must be non-negative")
        if not 0.0 <= self.finetune_val_fraction < 1.0:
            raise ConfigError("finetune_val_fraction must lie in [0, 1)")


@dataclass
class SeedsConfig:
    data_train: int = 1
    data_test: int = 2
    model_init: int = 0
    train_shuffle: int = 0
    targets_transform: int = 123
    targets_raw: int = 124
    entropy_base: int = 7000
    head_average: int = 99
    head_per_rho_base: int = 350
    hz_projections: int = 5000

    def shifted(self, offset):
        values = {f.name: getattr(self, f.name) + offset * SEED_STRIDE
                  for f in dataclasses.fields(self)}
        return SeedsConfig(**values)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model_layer_sizes: list = field(
        default_factory=lambda: [784, 256, 128, 64, 16, 10])
    train: TrainSection = field(default_factory=TrainSection)
    retrain: RetrainSection = field(default_factory=RetrainSection)
    compressor_kinds: list = field(
        default_factory=lambda: ["oib", "cca", "pca"])
    n_z_grid: list = field(default_factory=lambda: list(range(10, 101, 10)))
    noise_lambda: float = None
    shrinkage: float = 1e-4
    ridge: float = None
    encoding: str = "deterministic"
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    output_dir: str = "results"
    workers: int = 4

    def __post_init__(self):
        if not self.n_z_grid or sorted(self.n_z_grid) != list(self.n_z_grid):
            raise ConfigError("n_z_grid must be a non-empty ascending list")
        n_x = self.dataset.image_size ** 2
        if self.n_z_grid[-1] > n_x:
            raise ConfigError("n_z_grid exceeds the input dimension %d"
                              % n_x)
        if self.model_layer_sizes[0] != n_x:
            raise ConfigError("model input width %d does not match the "
                              "%dx%d images"
                              % (self.model_layer_sizes[0],
                                 self.dataset.image_size,
                                 self.dataset.image_size))
        if len(self.model_layer_sizes) < 3:
            raise ConfigError("the model needs at least one hidden layer")
        unknown = set(self.compressor_kinds) - {"oib", "cca", "pca"}
        if unknown:
            raise ConfigError("unknown compressor kinds: %s"
                              % sorted(unknown))
        if self.encoding not in ("deterministic", "stochastic"):
            raise ConfigError("encoding must be deterministic or "
                              "stochastic")
        if not 0.0 <= self.shrinkage < 1.0:
            raise ConfigError("shrinkage must lie in [0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be positive")


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError("%s must be an object" % (path or "config"))
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError("unknown config key%s under %s: %s"
                          % ("s" if len(unknown) > 1 else "",
                             path or "the top level",
                             ", ".join(sorted(unknown))))
    kwargs = {}
    for name, value in data.items():
        ftype = known[name].type
        nested = {
            "dataset": DatasetConfig,
            "train": TrainSection,
            "retrain": RetrainSection,
            "seeds": SeedsConfig,
        }.get(name)
        if nested is not None:
            kwargs[name] = _build(nested, value,
                                  (path + "." if path else "") + name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("invalid config under %s: %s"
                          % (path or "the top level", exc))


def config_from_dict(data):
    """Build a validated ExperimentConfig, rejecting unknown keys."""
    return _build(ExperimentConfig, data, "")


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config file not found: %s" % path)
    except json.JSONDecodeError as exc:
        raise ConfigError("config file %s is not valid JSON: %s"
                          % (path, exc))
    return config_from_dict(data)


def config_to_dict(config):
    return dataclasses.asdict(config)


def apply_overrides(config, seed=None, out=None, encoding=None,
                    subset_n=None):
    """Apply CLI flag overrides, returning a new config."""
    data = config_to_dict(config)
    if seed is not None:
        data["seeds"] = dataclasses.asdict(config.seeds.shifted(seed))
    if out is not None:
        data["output_dir"] = out
    if encoding is not None:
        data["encoding"] = encoding
    if subset_n is not None:
        data["dataset"]["n_train"] = int(subset_n)
        data["dataset"]["n_test"] = max(int(subset_n) // 5, 1)
    return config_from_dict(data)

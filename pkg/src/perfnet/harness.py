"""Experiment machinery: configs, the training loop, seeds, grids, worker pool."""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from . import baselines
from .arch import (
    ArchSpec,
    CnnSpec,
    MlpSpec,
    ResidualSpec,
    build_stack,
    spec_from_dict,
)
from .data import CleanDataset, SplitSpec, split_dataset
from .errors import ConfigError, TrainingAborted
from .metrics import Metrics, compute_metrics, mean_metrics
from .network import Network
from .nn import LOSSES, loss_value_and_grad
from .optim import OPTIMIZERS, make_optimizer

log = logging.getLogger(__name__)

EPOCH_SCHEDULE = (100, 150, 200, 250, 300)
BATCH_SIZE = 10
N_SEEDS = 5


def derive_seeds(master_seed: int, count: int = N_SEEDS) -> tuple:
    return tuple(int(s) for s in np.random.SeedSequence(master_seed).generate_state(count))


@dataclass(frozen=True)
class ExperimentConfig:
    arch: ArchSpec
    optimizer: str = "adam"
    loss: str = "mae"
    epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = BATCH_SIZE
    seeds: tuple = tuple(range(N_SEEDS))
    standardize: bool = False
    reshuffle_splits: bool = True
    split_seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def activation(self) -> str:
        return self.arch.activation

    def columns(self) -> dict:
        """Values for the configuration columns of a results table."""
        a = self.arch
        kernel = stride = filters = fc = ""
        if isinstance(a, MlpSpec):
            fc = {
                "trapezium": f"{a.n}..{a.n - a.m}",
                "reverse_trapezium": f"{a.n - a.m}..{a.n}",
                "rectangular": f"{a.n}x{a.m}",
            }[a.family]
        elif isinstance(a, CnnSpec):
            kernel, stride = str(a.kernel_size), str(a.stride)
            filters = "(" + ",".join(str(e) for e in a.filter_exponents) + ")"
            fc = f"{a.fc_exponents[0]}..{a.fc_exponents[-1]}"
        elif isinstance(a, ResidualSpec):
            kernel = "1/3/1"
            stride = "/".join(str(s) for s in a.strides)
            filters = "r=(" + ",".join(str(r) for r, _ in a.stages) + ") " + ",".join(
                "(" + ",".join(str(e) for e in t) + ")" for t in a.width_triples()
            )
        return {
            "architecture": a.arch_id,
            "loss": self.loss,
            "kernel": kernel,
            "stride": stride,
            "filter_exponents": filters,
            "fc_exponents": fc,
            "optimizer": self.optimizer,
            "epochs": str(self.epochs),
        }

    def identity(self) -> str:
        c = self.columns()
        extra = f"act={self.activation}|lr={self.learning_rate!r}"
        return "|".join(c.values()) + "|" + extra


# --------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    train: Metrics
    validation: Metrics


@dataclass
class TrainResult:
    network: Network
    trace: list
    predictions: list = field(default_factory=list)  # (train_pred, val_pred) per epoch


def standardizer(train_features):
    mean = train_features.mean(axis=0)
    std = train_features.std(axis=0)
    std[std == 0] = 1.0
    return lambda X: (X - mean) / std


def train_model(config: ExperimentConfig, train: CleanDataset, validation: CleanDataset, seed: int,
                keep_predictions=False) -> TrainResult:
    """Train one network from a fresh Glorot initialisation.

    Every epoch shuffles the training rows, steps the optimizer once per
    mini-batch (the last batch may be short) and records train and
    validation metrics.  Validation never feeds back into training.
    """
    stack = build_stack(config.arch, train.n_features)
    net = Network(stack, np.random.default_rng([seed, 1]))
    opt = make_optimizer(config.optimizer, config.learning_rate)
    shuffle_rng = np.random.default_rng([seed, 2])
    X, y = train.features, train.target
    n = len(y)
    result = TrainResult(net, [])
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            pred = net.forward(X[idx])
            loss, grad = loss_value_and_grad(config.loss, pred, y[idx])
            if not np.isfinite(loss):
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}, batch {b}: {config.identity()}",
                    config=config.identity(),
                    epoch=epoch,
                    batch=b,
                )
            net.backward(grad)
            opt.step(net.params(), net.grads())
        train_pred = net.predict(X)
        val_pred = net.predict(validation.features) if validation.n_rows else np.zeros(0)
        val_metrics = (
            compute_metrics(val_pred, validation.target)
            if validation.n_rows
            else Metrics(float("nan"), float("nan"), float("nan"))
        )
        result.trace.append(EpochRecord(epoch, compute_metrics(train_pred, y), val_metrics))
        if keep_predictions:
            result.predictions.append((train_pred, val_pred))
    return result


# --------------------------------------------------------------------------
# experiments


@dataclass
class SeedOutcome:
    seed: int
    metrics: Optional[Metrics] = None
    test_pred: Optional[np.ndarray] = None
    test_truth: Optional[np.ndarray] = None
    trace: list = field(default_factory=list)
    seconds: float = 0.0
    error: Optional[str] = None


@dataclass
class ResultRecord:
    """Seed-averaged outcome of one configuration (or one baseline model)."""

    columns: dict
    per_seed: list
    seconds: float = 0.0
    n_seeds_expected: int = N_SEEDS
    errors: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    residuals: list = field(default_factory=list)  # (pred, truth) per seed
    identity: str = ""

    @property
    def architecture(self) -> str:
        return self.columns["architecture"]

    @property
    def partial(self) -> bool:
        return len(self.per_seed) < self.n_seeds_expected

    @property
    def mean(self) -> Metrics:
        return mean_metrics(self.per_seed)

    def residual_vector(self) -> np.ndarray:
        if not self.residuals:
            return np.zeros(0)
        return np.concatenate([truth - pred for pred, truth in self.residuals])

    def mean_trace(self) -> list:
        """Per-epoch metrics averaged over seeds (only epochs every seed reached)."""
        if not self.traces:
            return []
        n = min(len(t) for t in self.traces)
        out = []
        for e in range(n):
            recs = [t[e] for t in self.traces]
            out.append(
                EpochRecord(
                    recs[0].epoch,
                    mean_metrics(r.train for r in recs),
                    mean_metrics(r.validation for r in recs),
                )
            )
        return out


def _seed_split(config: ExperimentConfig, dataset: CleanDataset, seed: int):
    split_seed = seed if config.reshuffle_splits else config.split_seed
    train, val, test = split_dataset(dataset, SplitSpec(seed=split_seed))
    if config.standardize:
        scale = standardizer(train.features)
        train, val, test = (
            CleanDataset(scale(d.features), d.target, d.columns, d.target_name) for d in (train, val, test)
        )
    return train, val, test


def run_seed(config: ExperimentConfig, dataset: CleanDataset, seed: int) -> SeedOutcome:
    start = time.perf_counter()
    out = SeedOutcome(seed)
    try:
        train, val, test = _seed_split(config, dataset, seed)
        result = train_model(config, train, val, seed)
        pred = result.network.predict(test.features)
        out.metrics = compute_metrics(pred, test.target)
        out.test_pred, out.test_truth = pred, test.target
        out.trace = result.trace
    except TrainingAborted as exc:
        out.error = str(exc)
        log.warning("seed %d aborted: %s", seed, exc)
    out.seconds = time.perf_counter() - start
    return out


def assemble_record(config: ExperimentConfig, outcomes) -> ResultRecord:
    rec = ResultRecord(config.columns(), [], n_seeds_expected=len(config.seeds), identity=config.identity())
    for o in outcomes:
        rec.seconds += o.seconds
        if o.error is not None:
            rec.errors.append(o.error)
            continue
        rec.per_seed.append(o.metrics)
        rec.traces.append(o.trace)
        rec.residuals.append((o.test_pred, o.test_truth))
    return rec


def run_experiment(config: ExperimentConfig, dataset: CleanDataset, workers: int = 1) -> ResultRecord:
    """Train and test once per seed, each seed with its own split and initialisation."""
    return run_many([config], dataset, workers)[0]


_WORKER_DATASET = None


def _init_worker(dataset):
    global _WORKER_DATASET
    _WORKER_DATASET = dataset
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


def _worker_task(args):
    config, seed = args
    return run_seed(config, _WORKER_DATASET, seed)


def run_many(configs, dataset: CleanDataset, workers: int = 1, progress=None) -> list:
    """Run every (config, seed) pair; records come back in ``configs`` order.

    ``progress(index, record)`` is called as each configuration completes.
    """
    tasks = [(i, c, s) for i, c in enumerate(configs) for s in c.seeds]
    pending = {i: len(c.seeds) for i, c in enumerate(configs)}
    outcomes = {i: [] for i in range(len(configs))}
    records = [None] * len(configs)

    def collect(i, outcome):
        outcomes[i].append(outcome)
        pending[i] -= 1
        if pending[i] == 0:
            records[i] = assemble_record(configs[i], outcomes[i])
            if progress is not None:
                progress(i, records[i])

    if workers <= 1:
        for i, c, s in tasks:
            collect(i, run_seed(c, dataset, s))
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dataset,)) as pool:
            results = pool.map(_worker_task, [(c, s) for _, c, s in tasks])
            for (i, _, _), outcome in zip(tasks, results):
                collect(i, outcome)
    return records


# --------------------------------------------------------------------------
# baselines


def run_baseline(kind: str, dataset: CleanDataset, seeds, standardize=False) -> ResultRecord:
    """Fit one baseline per seed on the same splits the deep networks use."""
    fit = baselines.BASELINES[kind]
    rec = ResultRecord(
        {
            "architecture": kind,
            "loss": "",
            "kernel": "",
            "stride": "",
            "filter_exponents": "",
            "fc_exponents": "",
            "optimizer": "",
            "epochs": "",
        },
        [],
        n_seeds_expected=len(seeds),
        identity=kind,
    )
    for seed in seeds:
        start = time.perf_counter()
        train, val, test = split_dataset(dataset, SplitSpec(seed=seed))
        if standardize:
            scale = standardizer(train.features)
            train, test = (
                CleanDataset(scale(d.features), d.target, d.columns, d.target_name) for d in (train, test)
            )
        model = fit(train.features, train.target, seed)
        pred = model.predict(test.features)
        rec.per_seed.append(compute_metrics(pred, test.target))
        rec.residuals.append((pred, test.target))
        rec.seconds += time.perf_counter() - start
    return rec


# --------------------------------------------------------------------------
# grid documents

_INT_LIST = {"type": "array", "items": {"type": "integer"}, "minItems": 1}


def _dim(item_schema):
    return {"anyOf": [item_schema, {"type": "array", "items": item_schema, "minItems": 1}]}


def _int_in(lo, hi):
    return {"type": "integer", "minimum": lo, "maximum": hi}


_COMMON = {
    "architecture": {"type": "string"},
    "loss": _dim({"enum": list(LOSSES)}),
    "optimizer": _dim({"enum": list(OPTIMIZERS)}),
    "activation": _dim({"enum": ["sigmoid", "tanh", "relu"]}),
    "learning_rate": _dim({"type": "number", "exclusiveMinimum": 0}),
    "epochs": _dim({"type": "integer", "minimum": 0}),
}

GRID_SCHEMA = {
    "type": "object",
    "required": ["experiments"],
    "additionalProperties": False,
    "properties": {
        "seeds": {"anyOf": [{"type": "integer", "minimum": 1}, _INT_LIST]},
        "strict_epochs": {"type": "boolean"},
        "standardize": {"type": "boolean"},
        "reshuffle_splits": {"type": "boolean"},
        "batch_size": {"type": "integer", "minimum": 1},
        "experiments": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["architecture"],
                "oneOf": [
                    {
                        "properties": {
                            **_COMMON,
                            "architecture": {"enum": ["trimlp", "revtrimlp", "rectmlp"]},
                            "n": _dim(_int_in(4, 11)),
                            "m": _dim(_int_in(1, 10)),
                        },
                        "required": ["n", "m"],
                        "additionalProperties": False,
                    },
                    {
                        "properties": {
                            **_COMMON,
                            "architecture": {"const": "tricnn"},
                            "filter_exponents": {"type": "array", "minItems": 1},
                            "kernel": _dim(_int_in(2, 5)),
                            "stride": _dim(_int_in(1, 4)),
                            "fc_exponents": {"type": "array", "minItems": 1},
                        },
                        "required": ["filter_exponents", "kernel", "fc_exponents"],
                        "additionalProperties": False,
                    },
                    {
                        "properties": {
                            **_COMMON,
                            "architecture": {"const": "residual"},
                            "stages": {"type": "array", "minItems": 1, "maxItems": 4},
                            "stride": _dim(_int_in(1, 4)),
                        },
                        "required": ["stages"],
                        "additionalProperties": False,
                    },
                ],
            },
        },
    },
}

_ARCH_KEYS = {
    "trimlp": ("n", "m"),
    "revtrimlp": ("n", "m"),
    "rectmlp": ("n", "m"),
    "tricnn": ("filter_exponents", "kernel", "stride", "fc_exponents"),
    "residual": ("stages", "stride"),
}
_DEFAULTS = {
    "loss": ["mae"],
    "optimizer": ["adam"],
    "activation": ["relu"],
    "learning_rate": [0.001],
    "epochs": [100],
    "stride": [1],
}


def _depth(value) -> int:
    d = 0
    while isinstance(value, (list, tuple)):
        if not value:
            return d + 1
        value = value[0]
        d += 1
    return d


def _values(value, item_depth: int, path: str) -> list:
    """Normalise a grid dimension to a list of values of nesting ``item_depth``."""
    d = _depth(value)
    if d == item_depth:
        return [value]
    if d == item_depth + 1:
        if not value:
            raise ConfigError(f"grid: {path} is empty")
        return list(value)
    raise ConfigError(f"grid: {path} has unexpected nesting")


def _validate(doc):
    if not isinstance(doc, dict):
        raise ConfigError("grid: document must be a mapping")
    validator = jsonschema.Draft7Validator(GRID_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"grid: {path}: {err.message}")


@dataclass
class Exclusion:
    description: str
    reason: str


def enumerate_grid(doc: dict, master_seed: int = 0, n_features: int = 24):
    """Expand a grid document into ``(configs, exclusions)`` in a fixed order.

    Points whose architecture violates a structural constraint or cannot be
    built on ``n_features`` inputs are excluded (and reported) rather than
    failing mid-training.
    """
    _validate(doc)
    seeds = doc.get("seeds", N_SEEDS)
    seeds = derive_seeds(master_seed, seeds) if isinstance(seeds, int) else tuple(seeds)
    strict = doc.get("strict_epochs", True)
    configs, exclusions = [], []
    for k, exp in enumerate(doc["experiments"]):
        arch = exp["architecture"]
        keys = _ARCH_KEYS[arch]
        dims = {}
        for key in keys + ("activation", "loss", "optimizer", "learning_rate", "epochs"):
            depth = {"filter_exponents": 1, "fc_exponents": 1, "stages": 2}.get(key, 0)
            raw = exp.get(key, _DEFAULTS.get(key))
            if raw is None:
                raise ConfigError(f"grid: experiments/{k}/{key} is required")
            dims[key] = _values(raw, depth, f"experiments/{k}/{key}")
        if strict:
            bad = [e for e in dims["epochs"] if e not in EPOCH_SCHEDULE]
            if bad:
                raise ConfigError(
                    f"grid: experiments/{k}/epochs: {bad} not in {list(EPOCH_SCHEDULE)} "
                    "(set strict_epochs: false to allow)"
                )
        names = list(dims)
        for combo in itertools.product(*(dims[n] for n in names)):
            point = dict(zip(names, combo))
            arch_doc = {"architecture": arch, "activation": point["activation"]}
            for key in keys:
                if arch == "residual" and key == "stride":
                    arch_doc["strides"] = [point["stride"]] * len(point["stages"])
                else:
                    arch_doc[key] = point[key]
            desc = f"experiments/{k} {arch_doc}"
            try:
                spec = spec_from_dict(arch_doc)
                build_stack(spec, n_features)
                cfg = ExperimentConfig(
                    spec,
                    optimizer=point["optimizer"],
                    loss=point["loss"],
                    epochs=point["epochs"],
                    learning_rate=float(point["learning_rate"]),
                    batch_size=doc.get("batch_size", BATCH_SIZE),
                    seeds=seeds,
                    standardize=doc.get("standardize", False),
                    reshuffle_splits=doc.get("reshuffle_splits", True),
                    split_seed=seeds[0],
                )
            except ConfigError as exc:
                exclusions.append(Exclusion(desc, str(exc)))
                log.info("excluded %s: %s", desc, exc)
                continue
            configs.append(cfg)
    return configs, exclusions

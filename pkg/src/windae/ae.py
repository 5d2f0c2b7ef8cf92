"""Convolutional encoder / fully connected decoder trained on reconstruction.

Encoder: two blocks of same-padded Conv1D -> ReLU -> MaxPool (2, then 4).
Decoder: Flatten -> Dense(hidden) -> Dropout(0.5) -> ReLU -> Dense(2L).
The deepest encoder activations (4 filters x L/8 sites) are the feature maps.
"""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ndnet
from .checkpoint import CheckpointError, ModelCheckpoint, load_into, params_to_dict

log = logging.getLogger(__name__)

EVAL_CHUNK = 1000


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class AeArchitecture:
    L: int = 128
    c1: int = 4
    hidden: int = 128
    kernel: int = 8
    pool1: int = 2
    pool2: int = 4
    n_filters: int = 4
    dropout: float = 0.5

    @property
    def n_sites(self) -> int:
        return self.L // (self.pool1 * self.pool2)

    def __post_init__(self):
        if self.L % (self.pool1 * self.pool2):
            raise ValueError(f"L={self.L} must be divisible by {self.pool1 * self.pool2}")


@dataclass(frozen=True)
class AeConfig:
    lr: float = 1e-7
    batch: int = 10
    epochs: int = 6000
    eval_every: int = 1
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.0


@dataclass
class TrainLogRecord:
    epoch: int
    train_loss: float
    test_loss: float
    wall_time: float = 0.0

    def to_line(self, with_wall_time: bool = False) -> str:
        rec = {"epoch": self.epoch, "train_loss": self.train_loss, "test_loss": self.test_loss}
        if with_wall_time:
            rec["wall_time"] = self.wall_time
        return json.dumps(rec)


class Autoencoder:
    def __init__(self, arch: AeArchitecture = AeArchitecture()):
        self.arch = arch
        a = arch
        self.encoder = ndnet.Sequential([
            ndnet.Conv1D(2, a.c1, a.kernel, name="conv1"),
            ndnet.ReLU(),
            ndnet.MaxPool1D(a.pool1),
            ndnet.Conv1D(a.c1, a.n_filters, a.kernel, name="conv2"),
            ndnet.ReLU(),
            ndnet.MaxPool1D(a.pool2),
        ])
        self.decoder = ndnet.Sequential([
            ndnet.Flatten(),
            ndnet.Dense(a.n_filters * a.n_sites, a.hidden, name="dense1"),
            ndnet.Dropout(a.dropout),
            ndnet.ReLU(),
            ndnet.Dense(a.hidden, 2 * a.L, name="dense2"),
        ])

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def initialize(self, rng: np.random.Generator):
        ndnet.init_uniform(self.encoder, rng)
        ndnet.init_uniform(self.decoder, rng)

    def encode(self, x, train=False, rng=None):
        return self.encoder.forward(x, train=train, rng=rng)

    def forward(self, x, train=False, rng=None):
        return self.decoder.forward(self.encoder.forward(x, train, rng), train, rng)

    def backward(self, grad):
        return self.encoder.backward(self.decoder.backward(grad))

    def _check_input(self, x):
        if x.ndim != 3 or x.shape[1:] != (2, self.arch.L):
            raise ndnet.ShapeError("autoencoder input", ("N", 2, self.arch.L), x.shape)

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        return ModelCheckpoint(kind="autoencoder", architecture=asdict(self.arch),
                               params=params_to_dict(self.parameters()),
                               metadata=dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "Autoencoder":
        if ckpt.kind != "autoencoder":
            raise CheckpointError(f"expected an autoencoder checkpoint, got {ckpt.kind!r}")
        model = cls(AeArchitecture(**ckpt.architecture))
        load_into(model.parameters(), ckpt.params)
        return model


def _as_batch(samples_or_array) -> np.ndarray:
    if isinstance(samples_or_array, np.ndarray):
        return np.asarray(samples_or_array, dtype=np.float64)
    return np.stack([s.as_array() for s in samples_or_array]).astype(np.float64)


def _model(model_or_ckpt) -> Autoencoder:
    if isinstance(model_or_ckpt, ModelCheckpoint):
        return Autoencoder.from_checkpoint(model_or_ckpt)
    return model_or_ckpt


def reconstruct(model, x) -> np.ndarray:
    """Eval-mode reconstruction; ``(N, 2, L) -> (N, 2L)`` (or one sample)."""
    model = _model(model)
    x = _as_batch(x) if not hasattr(x, "re") else x.as_array()
    single = x.ndim == 2
    if single:
        x = x[None]
    model._check_input(x)
    out = np.concatenate([model.forward(x[i:i + EVAL_CHUNK]) for i in range(0, len(x), EVAL_CHUNK)]) \
        if len(x) else np.zeros((0, 2 * model.arch.L))
    return out[0] if single else out


def per_sample_loss(model, x) -> np.ndarray:
    x = _as_batch(x)
    out = reconstruct(model, x)
    diff = out - x.reshape(len(x), -1)
    return np.mean(diff * diff, axis=1)


def reconstruction_loss(model, x) -> float:
    """Mean reconstruction loss over a set, eval mode.  Used by the training log."""
    losses = per_sample_loss(model, x)
    return float(np.mean(losses)) if len(losses) else float("nan")


def extract_features(model, x) -> np.ndarray:
    """Deepest encoder activations, shape ``(N, n_filters, n_sites)``."""
    model = _model(model)
    x = _as_batch(x)
    model._check_input(x)
    if not len(x):
        return np.zeros((0, model.arch.n_filters, model.arch.n_sites))
    return np.concatenate([model.encode(x[i:i + EVAL_CHUNK]) for i in range(0, len(x), EVAL_CHUNK)])


def pattern_averaged_features(model, samples, patterns=None) -> dict[str, np.ndarray]:
    """Mean feature map per winding pattern, keyed by pattern symbol.

    ``patterns`` lists symbols that must be present; a missing group raises.
    """
    feats = extract_features(model, samples)
    return average_by_pattern(feats, [s.pattern.symbol() for s in samples], patterns)


def average_by_pattern(features: np.ndarray, symbols, patterns=None) -> dict[str, np.ndarray]:
    groups: dict[str, list[int]] = {}
    for i, sym in enumerate(symbols):
        groups.setdefault(sym, []).append(i)
    wanted = list(patterns) if patterns is not None else list(groups)
    out = {}
    for sym in wanted:
        idx = groups.get(sym)
        if not idx:
            raise ValueError(f"no samples for pattern {sym!r}")
        out[sym] = features[idx].mean(axis=0)
    return out


@dataclass
class TrainResult:
    final: ModelCheckpoint
    best: ModelCheckpoint
    best_epoch: int
    log: list[TrainLogRecord] = field(default_factory=list)


def train(train_x, test_x, config: AeConfig = AeConfig(), arch: AeArchitecture = AeArchitecture(),
          init: ModelCheckpoint | None = None) -> TrainResult:
    """Mini-batch training on reconstruction loss.

    Epoch = one pass over the shuffled training set.  When ``epochs > 0`` the
    log starts with an epoch-0 evaluation of the initial model, then one
    record every ``eval_every`` epochs plus the last epoch.
    """
    train_x = _as_batch(train_x)
    test_x = _as_batch(test_x)
    if not len(train_x):
        raise ValueError("training set is empty")
    init_ss, shuffle_ss, dropout_ss = np.random.SeedSequence(config.seed).spawn(3)
    if init is not None:
        model = Autoencoder.from_checkpoint(init)
        arch = model.arch
    else:
        model = Autoencoder(arch)
        model.initialize(np.random.default_rng(init_ss))
    model._check_input(train_x)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    opt = ndnet.make_optimizer(config.optimizer, model.parameters(), config.lr, config.momentum)

    meta = {"seed": config.seed, "lr": config.lr, "batch": config.batch,
            "optimizer": config.optimizer, "momentum": config.momentum}
    records: list[TrainLogRecord] = []
    best_params = params_to_dict(model.parameters())
    best_epoch, best_loss = 0, np.inf
    t0 = time.perf_counter()

    def evaluate(epoch):
        nonlocal best_params, best_epoch, best_loss
        tr = reconstruction_loss(model, train_x)
        te = reconstruction_loss(model, test_x) if len(test_x) else float("nan")
        if not np.isfinite(tr):
            raise TrainingDiverged(f"non-finite train loss at epoch {epoch}")
        records.append(TrainLogRecord(epoch, tr, te, time.perf_counter() - t0))
        score = te if len(test_x) else tr
        if score < best_loss:
            best_loss, best_epoch = score, epoch
            best_params = params_to_dict(model.parameters())
        log.info("epoch %d train %.6g test %.6g", epoch, tr, te)

    # divergence is detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(model, opt, train_x, config, shuffle_rng, dropout_rng, evaluate)

    final = model.to_checkpoint({**meta, "epochs_completed": config.epochs})
    best_model = copy.deepcopy(model)
    load_into(best_model.parameters(), best_params)
    best = best_model.to_checkpoint({**meta, "epochs_completed": best_epoch})
    return TrainResult(final=final, best=best, best_epoch=best_epoch, log=records)


def _run_epochs(model, opt, train_x, config, shuffle_rng, dropout_rng, evaluate):
    if config.epochs > 0:
        evaluate(0)
    n = len(train_x)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for step, start in enumerate(range(0, n, config.batch)):
            xb = train_x[order[start:start + config.batch]]
            out = model.forward(xb, train=True, rng=dropout_rng)
            loss, grad = ndnet.mse_loss(out, xb.reshape(len(xb), -1))
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, step {step}")
            model.backward(grad)
            opt.step()
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            evaluate(epoch)


def write_log(records, path, with_wall_time: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_line(with_wall_time) + "\n")


def read_log(path) -> list[TrainLogRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(TrainLogRecord(**json.loads(line)))
    return out

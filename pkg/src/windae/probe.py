"""Supervised probe: feature maps -> distribution over winding numbers.

Classes are the winding numbers -5..+5 in ascending order (index = n_W + 5).
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ndnet
from .checkpoint import CheckpointError, ModelCheckpoint, load_into, params_to_dict

MAX_WINDING = 5
N_CLASSES = 2 * MAX_WINDING + 1


@dataclass(frozen=True)
class ProbeArchitecture:
    filters_used: int = 4
    hidden: int = 64
    n_sites: int = 16

    def __post_init__(self):
        if not 1 <= self.filters_used <= 4:
            raise ValueError(f"filters_used must be in 1..4, got {self.filters_used}")

    @property
    def input_dim(self) -> int:
        return self.filters_used * self.n_sites


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 1e-2
    batch: int = 32
    epochs: int = 200
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.0


def labels_to_classes(n_w) -> np.ndarray:
    n_w = np.asarray(n_w, dtype=int)
    if n_w.size and (n_w.min() < -MAX_WINDING or n_w.max() > MAX_WINDING):
        raise ValueError(f"winding label outside [-{MAX_WINDING}, {MAX_WINDING}]")
    return n_w + MAX_WINDING


class Probe:
    def __init__(self, arch: ProbeArchitecture = ProbeArchitecture()):
        self.arch = arch
        self.net = ndnet.Sequential([
            ndnet.Dense(arch.input_dim, arch.hidden, name="hidden"),
            ndnet.ReLU(),
            ndnet.Dense(arch.hidden, N_CLASSES, name="out"),
        ])

    def parameters(self):
        return self.net.parameters()

    def inputs(self, features: np.ndarray) -> np.ndarray:
        """Keep the first ``filters_used`` filters of ``(N, 4, sites)`` maps and flatten."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 2 and features.shape[1] == self.arch.input_dim:
            return features
        if features.ndim != 3 or features.shape[1] < self.arch.filters_used \
                or features.shape[2] != self.arch.n_sites:
            raise ndnet.ShapeError("probe features", ("N", ">=%d" % self.arch.filters_used, self.arch.n_sites),
                                   features.shape)
        return features[:, :self.arch.filters_used, :].reshape(len(features), -1)

    def logits(self, features) -> np.ndarray:
        return self.net.forward(self.inputs(features))

    def predict_proba(self, features) -> np.ndarray:
        return ndnet.softmax(self.logits(features))

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        return ModelCheckpoint(kind="probe", architecture=asdict(self.arch),
                               params=params_to_dict(self.parameters()), metadata=dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "Probe":
        if ckpt.kind != "probe":
            raise CheckpointError(f"expected a probe checkpoint, got {ckpt.kind!r}")
        probe = cls(ProbeArchitecture(**ckpt.architecture))
        load_into(probe.parameters(), ckpt.params)
        return probe


def train_probe(features, n_w, config: ProbeConfig = ProbeConfig(),
                arch: ProbeArchitecture = ProbeArchitecture()) -> ModelCheckpoint:
    classes = labels_to_classes(n_w)
    init_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(2)
    probe = Probe(arch)
    ndnet.init_uniform(probe.net, np.random.default_rng(init_ss))
    x = probe.inputs(features)
    if len(x) != len(classes):
        raise ValueError(f"{len(x)} feature maps but {len(classes)} labels")
    rng = np.random.default_rng(shuffle_ss)
    opt = ndnet.make_optimizer(config.optimizer, probe.parameters(), config.lr, config.momentum)
    for _ in range(config.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), config.batch):
            idx = order[start:start + config.batch]
            logits = probe.net.forward(x[idx], train=True)
            _, _, grad = ndnet.softmax_xent(logits, classes[idx])
            probe.net.backward(grad)
            opt.step()
    meta = {"seed": config.seed, "lr": config.lr, "batch": config.batch, "epochs_completed": config.epochs,
            "optimizer": config.optimizer, "momentum": config.momentum}
    return probe.to_checkpoint(meta)


def rank_of_truth(probs, true_class: int) -> int:
    """1 + classes with strictly higher probability + equal-probability classes of lower index."""
    probs = np.asarray(probs)
    p = probs[true_class]
    return int(1 + np.sum(probs > p) + np.sum(probs[:true_class] == p))


def ranks(probs: np.ndarray, classes: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs)
    classes = np.asarray(classes)
    p_true = probs[np.arange(len(probs)), classes][:, None]
    lower = np.arange(probs.shape[1])[None, :] < classes[:, None]
    return 1 + np.sum(probs > p_true, axis=1) + np.sum((probs == p_true) & lower, axis=1)


@dataclass
class RankHistogram:
    counts: list[int] = field(default_factory=lambda: [0] * N_CLASSES)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def rates(self) -> list[float]:
        t = self.total
        return [c / t for c in self.counts]

    @classmethod
    def from_ranks(cls, rank_values) -> "RankHistogram":
        counts = np.bincount(np.asarray(rank_values, dtype=int) - 1, minlength=N_CLASSES)
        if len(counts) > N_CLASSES:
            raise ValueError("rank outside 1..11")
        return cls([int(c) for c in counts])


def evaluate(probe, features, n_w) -> RankHistogram:
    if isinstance(probe, ModelCheckpoint):
        probe = Probe.from_checkpoint(probe)
    classes = labels_to_classes(n_w)
    if len(classes) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return RankHistogram.from_ranks(ranks(probe.predict_proba(features), classes))


def filter_sweep(train_features, train_nw, test_features, test_nw, config: ProbeConfig = ProbeConfig(),
                 hidden: int = 64, filters=(1, 2, 3, 4)):
    """Train one probe per filter count; returns ``{k: (checkpoint, RankHistogram)}``."""
    n_sites = np.asarray(train_features).shape[2]
    out = {}
    for k in filters:
        arch = ProbeArchitecture(filters_used=k, hidden=hidden, n_sites=n_sites)
        ckpt = train_probe(train_features, train_nw, config, arch)
        out[k] = (ckpt, evaluate(ckpt, test_features, test_nw))
    return out


def write_rank_table(results, path) -> None:
    """CSV ``filters_used,rank,rate`` for every filter count and rank 1..11.

    ``results`` maps filter count to a :class:`RankHistogram` or a list of rates.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filters_used", "rank", "rate"])
        for k in sorted(results):
            rates = results[k].rates() if isinstance(results[k], RankHistogram) else results[k]
            for r, rate in enumerate(rates, 1):
                w.writerow([k, r, format(rate, ".17g")])


def read_rank_table(path) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["filters_used"]), []).append(float(row["rate"]))
    return out

"""Seeded generator of winding configurations on a discretized circle.

Each configuration splits sites ``1..L-1`` into segments with jittered
lengths.  Inside a segment the phase rises (or falls) linearly by a full
turn; Gaussian noise is added per site and site ``L`` copies site 1.

Randomness: every sample owns a Philox (counter-based, 64-bit) stream whose
seed is derived from ``(master seed, split, n_segments, direction bits,
stream index)`` through ``numpy.random.SeedSequence``.  A sample therefore
does not depend on generation order, and ``seed_used`` alone regenerates it.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass

import numpy as np

SPLITS = {"train": 0, "test": 1}
MAX_RETRIES = 100


@dataclass(frozen=True)
class GenParams:
    L: int = 128
    max_segments: int = 5
    noise_amplitude: float = 0.1
    length_jitter: float = 0.4
    seed: int = 0
    samples_per_pattern: int = 1000

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be >= 2")
        if self.max_segments < 0:
            raise ValueError("max_segments must be >= 0")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if not 0 <= self.length_jitter < 1:
            raise ValueError("length_jitter must lie in [0, 1)")
        if self.samples_per_pattern < 0:
            raise ValueError("samples_per_pattern must be >= 0")


@dataclass(frozen=True)
class WindingPattern:
    directions: tuple[int, ...] = ()

    def __post_init__(self):
        if any(p not in (1, -1) for p in self.directions):
            raise ValueError(f"directions must be +1/-1, got {self.directions}")

    @property
    def n_segments(self) -> int:
        return len(self.directions)

    @property
    def n_w(self) -> int:
        return sum(self.directions)

    @property
    def bits(self) -> int:
        # binary code with + -> 0, - -> 1, first segment most significant
        return sum((1 << (self.n_segments - 1 - i)) for i, p in enumerate(self.directions) if p < 0)

    def symbol(self) -> str:
        return "".join("+" if p > 0 else "-" for p in self.directions) or "0"

    @classmethod
    def from_symbol(cls, text: str) -> "WindingPattern":
        if text == "0":
            return cls(())
        return cls(tuple(1 if ch == "+" else -1 for ch in text))


@dataclass
class WindingSample:
    pattern: WindingPattern
    re: np.ndarray
    im: np.ndarray
    seed_used: int
    segment_lengths: tuple[int, ...] = ()
    split: str = "train"
    id: str = ""

    @property
    def label_nw(self) -> int:
        return self.pattern.n_w

    def as_array(self) -> np.ndarray:
        return np.stack([self.re, self.im])


def enumerate_patterns(max_segments: int) -> list[WindingPattern]:
    """All sign sequences for 0..max_segments segments.

    Order: by segment count, then binary order with ``+`` before ``-``.
    """
    if max_segments < 0:
        raise ValueError("max_segments must be >= 0")
    return [WindingPattern(tuple(p))
            for n in range(max_segments + 1)
            for p in itertools.product((1, -1), repeat=n)]


def derive_seed(master_seed: int, split: str, pattern: WindingPattern, stream_index: int) -> int:
    ss = np.random.SeedSequence(
        entropy=master_seed,
        spawn_key=(SPLITS[split], pattern.n_segments, pattern.bits, stream_index),
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def segment_lengths(n_segments: int, L: int, jitter: float, rng: np.random.Generator) -> list[int]:
    if n_segments == 0:
        return []
    base = (L - 1) / n_segments
    for _ in range(MAX_RETRIES):
        xi = np.zeros(n_segments + 1)
        xi[1:-1] = rng.uniform(-1.0, 1.0, size=n_segments - 1)
        raw = base * (1.0 + jitter * np.diff(xi))
        lengths = [int(round(v)) for v in raw[:-1]]
        lengths.append((L - 1) - sum(lengths))
        if min(lengths) >= 1:
            return lengths
    raise RuntimeError(f"could not draw {n_segments} segments of length >= 1 on {L - 1} sites "
                       f"after {MAX_RETRIES} attempts")


def generate_from_seed(pattern: WindingPattern, params: GenParams, seed_used: int) -> WindingSample:
    rng = np.random.Generator(np.random.Philox(seed_used))
    L = params.L
    lengths = segment_lengths(pattern.n_segments, L, params.length_jitter, rng)
    turns = np.zeros(L - 1)
    start = 0
    for p, ell in zip(pattern.directions, lengths):
        turns[start:start + ell] = p * np.arange(ell) / ell
        start += ell
    turns += params.noise_amplitude * rng.standard_normal(L - 1)
    theta = 2 * np.pi * turns
    theta = np.append(theta, theta[0])
    return WindingSample(pattern=pattern, re=np.cos(theta), im=np.sin(theta),
                         seed_used=seed_used, segment_lengths=tuple(lengths))


def generate(pattern: WindingPattern, params: GenParams, stream_index: int,
             split: str = "train") -> WindingSample:
    seed_used = derive_seed(params.seed, split, pattern, stream_index)
    sample = generate_from_seed(pattern, params, seed_used)
    sample.split = split
    sample.id = f"{split}-{pattern.symbol()}-{stream_index}"
    return sample


def generate_split(params: GenParams, split: str, samples_per_pattern: int | None = None) -> list[WindingSample]:
    n = params.samples_per_pattern if samples_per_pattern is None else samples_per_pattern
    return [generate(pat, params, s, split)
            for pat in enumerate_patterns(params.max_segments)
            for s in range(n)]


def generate_dataset(params: GenParams, test_samples_per_pattern: int | None = None):
    """Return ``(train, test)``; the test split may use its own per-pattern count."""
    return generate_split(params, "train"), generate_split(params, "test", test_samples_per_pattern)


def stack(samples) -> tuple[np.ndarray, np.ndarray]:
    """Samples -> ``(x[N, 2, L], n_w[N])``."""
    if not samples:
        return np.zeros((0, 2, 0)), np.zeros(0, dtype=int)
    x = np.stack([s.as_array() for s in samples])
    y = np.array([s.label_nw for s in samples], dtype=int)
    return x, y


# --------------------------------------------------------------------------
# NDJSON / CSV

def _num(x: float) -> str:
    return format(float(x), ".17g")


def sample_to_line(s: WindingSample) -> str:
    fields = [
        f'"id":{json.dumps(s.id)}',
        f'"split":{json.dumps(s.split)}',
        f'"n_s":{s.pattern.n_segments}',
        f'"pattern":[{",".join(str(p) for p in s.pattern.directions)}]',
        f'"n_w":{s.label_nw}',
        f'"seed_used":{s.seed_used}',
        f'"re":[{",".join(_num(v) for v in s.re)}]',
        f'"im":[{",".join(_num(v) for v in s.im)}]',
    ]
    return "{" + ",".join(fields) + "}"


class DatasetFormatError(ValueError):
    pass


def sample_from_record(rec: dict) -> WindingSample:
    pattern = WindingPattern(tuple(int(p) for p in rec["pattern"]))
    if rec["n_s"] != pattern.n_segments or rec["n_w"] != pattern.n_w:
        raise ValueError("n_s / n_w inconsistent with pattern")
    re = np.asarray(rec["re"], dtype=np.float64)
    im = np.asarray(rec["im"], dtype=np.float64)
    if re.shape != im.shape or re.ndim != 1:
        raise ValueError("re and im must be equal-length lists")
    return WindingSample(pattern=pattern, re=re, im=im, seed_used=int(rec["seed_used"]),
                         split=rec["split"], id=rec["id"])


def write_ndjson(samples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(sample_to_line(s))
            fh.write("\n")


def read_ndjson(path) -> list[WindingSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(sample_from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return out


def write_csv(samples, path) -> None:
    samples = list(samples)
    L = len(samples[0].re) if samples else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "split", "n_s", "pattern", "n_w", "seed_used"]
                   + [f"re_{i}" for i in range(1, L + 1)] + [f"im_{i}" for i in range(1, L + 1)])
        for s in samples:
            w.writerow([s.id, s.split, s.pattern.n_segments, s.pattern.symbol(), s.label_nw, s.seed_used]
                       + [_num(v) for v in s.re] + [_num(v) for v in s.im])


def length_bounds(n_segments: int, L: int, jitter: float) -> tuple[float, float]:
    """Allowed segment length range under remainder-to-last rounding.

    The first ``n-1`` lengths are within half a site of ``base*(1 +- 2*jitter)``.
    The last one depends on a single jitter draw but absorbs every rounding
    error, so it lies within ``(n-1)/2`` sites of ``base*(1 +- jitter)``.
    """
    base = (L - 1) / n_segments
    slack = (n_segments - 1) / 2
    lo = min((1 - 2 * jitter) * base - 0.5, (1 - jitter) * base - slack)
    hi = max((1 + 2 * jitter) * base + 0.5, (1 + jitter) * base + slack)
    return lo, hi


__all__ = [
    "GenParams", "WindingPattern", "WindingSample", "enumerate_patterns", "generate",
    "generate_from_seed", "generate_dataset", "generate_split", "derive_seed", "stack",
    "write_ndjson", "read_ndjson", "write_csv", "DatasetFormatError", "length_bounds",
]

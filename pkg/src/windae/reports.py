"""Feature-map files and plot-ready CSV tables (pattern averages, rank rates, loss curve)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .windgen import WindingPattern


def _num(x) -> str:
    return format(float(x), ".17g")


@dataclass
class FeatureRecord:
    id: str
    split: str
    pattern: WindingPattern
    values: np.ndarray  # (filters, sites)

    @property
    def n_w(self) -> int:
        return self.pattern.n_w


def write_features(samples, features: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s, fmap in zip(samples, features, strict=True):
            rows = ",".join("[" + ",".join(_num(v) for v in row) + "]" for row in fmap)
            fh.write("{" + ",".join([
                f'"id":{json.dumps(s.id)}',
                f'"split":{json.dumps(s.split)}',
                f'"pattern":[{",".join(str(p) for p in s.pattern.directions)}]',
                f'"n_w":{s.label_nw}',
                f'"values":[{rows}]',
            ]) + "}\n")


def read_features(path) -> list[FeatureRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pattern = WindingPattern(tuple(rec["pattern"]))
                if rec["n_w"] != pattern.n_w:
                    raise ValueError("n_w inconsistent with pattern")
                values = np.asarray(rec["values"], dtype=np.float64)
                if values.ndim != 2:
                    raise ValueError("values must be a filters x sites array")
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed feature record ({exc})") from exc
            out.append(FeatureRecord(rec["id"], rec["split"], pattern, values))
    return out


def stack_features(records) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        return np.zeros((0, 4, 16)), np.zeros(0, dtype=int)
    return np.stack([r.values for r in records]), np.array([r.n_w for r in records], dtype=int)


def write_pattern_averages(averages: dict[str, np.ndarray], path) -> None:
    """CSV ``pattern,filter,site,mean_value``; filters and sites are 1-based."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pattern", "filter", "site", "mean_value"])
        for sym, fmap in averages.items():
            for f, row in enumerate(fmap, 1):
                for site, v in enumerate(row, 1):
                    w.writerow([sym, f, site, _num(v)])


def read_pattern_averages(path) -> dict[str, np.ndarray]:
    cells: dict[str, dict[tuple[int, int], float]] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells.setdefault(row["pattern"], {})[(int(row["filter"]), int(row["site"]))] = float(row["mean_value"])
    out = {}
    for sym, c in cells.items():
        nf = max(k[0] for k in c)
        ns = max(k[1] for k in c)
        arr = np.zeros((nf, ns))
        for (f, s), v in c.items():
            arr[f - 1, s - 1] = v
        out[sym] = arr
    return out


def write_loss_curve(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_loss"])
        for r in records:
            w.writerow([r.epoch, _num(r.train_loss), _num(r.test_loss)])


def read_loss_curve(path) -> list[tuple[int, float, float]]:
    with open(path, encoding="utf-8") as fh:
        return [(int(r["epoch"]), float(r["train_loss"]), float(r["test_loss"])) for r in csv.DictReader(fh)]

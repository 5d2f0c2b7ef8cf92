"""Command-line entry point: ``windae <command> [--config PATH] [--section.key=value ...]``.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import ae, probe, reports, topo, windgen
from .checkpoint import CheckpointError, ModelCheckpoint
from .config import ConfigError, RunConfig, apply_override, load

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
_OVERRIDE = re.compile(r"^--([A-Za-z_]\w*\.[A-Za-z_]\w*)=(.*)$")

COMMANDS = ("gen", "check", "train-ae", "extract", "train-probe", "eval", "sweep", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="windae", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="YAML or JSON run configuration")
    parser.add_argument("--out", help="working directory for all artifacts (sets io.workdir)")
    parser.add_argument("--seed", type=int, help="set data, ae and probe seeds together")
    parser.add_argument("--dataset", help="check: dataset file (default: train and test)")
    parser.add_argument("--csv", action="store_true", help="gen: also write CSV exports")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args, extra) -> RunConfig:
    cfg = load(args.config)
    if args.out is not None:
        cfg.io.workdir = args.out
    if args.seed is not None:
        cfg.data.seed = cfg.ae.seed = cfg.probe.seed = args.seed
    for item in extra:
        m = _OVERRIDE.match(item)
        if not m:
            raise UsageError(f"unrecognized argument {item!r} (overrides look like --section.key=value)")
        apply_override(cfg, f"{m.group(1)}={m.group(2)}")
    return cfg


def _require(cfg: RunConfig, *keys) -> list[Path]:
    paths = [cfg.io.path(k) for k in keys]
    missing = [f"io.{k} = {p}" for k, p in zip(keys, paths) if not p.is_file()]
    if missing:
        raise ConfigError("missing input file(s): " + "; ".join(missing))
    return paths


def _outputs(cfg: RunConfig, *keys) -> list[Path]:
    paths = [cfg.io.path(k) for k in keys]
    for p in paths:
        p.parent.mkdir(parents=True, exist_ok=True)
    return paths


def _gen_params(cfg: RunConfig) -> windgen.GenParams:
    d = cfg.data
    try:
        return windgen.GenParams(L=d.L, max_segments=d.max_segments, noise_amplitude=d.noise_amplitude,
                                 length_jitter=d.length_jitter, seed=d.seed,
                                 samples_per_pattern=d.samples_per_pattern)
    except ValueError as exc:
        raise ConfigError(f"data: {exc}") from exc


def _probe_config(cfg: RunConfig) -> probe.ProbeConfig:
    p = cfg.probe
    return probe.ProbeConfig(lr=p.lr, batch=p.batch, epochs=p.epochs, seed=p.seed,
                             optimizer=p.optimizer, momentum=p.momentum)


def cmd_gen(cfg: RunConfig, args) -> int:
    params = _gen_params(cfg)
    train_path, test_path = _outputs(cfg, "train", "test")
    n_patterns = len(windgen.enumerate_patterns(params.max_segments))
    test_n = cfg.data.test_samples_per_pattern
    if test_n is not None and test_n < 0:
        raise ConfigError("data.test_samples_per_pattern must be >= 0")
    train, test = windgen.generate_dataset(params, test_n)
    windgen.write_ndjson(train, train_path)
    windgen.write_ndjson(test, test_path)
    if args.csv:
        windgen.write_csv(train, train_path.with_suffix(".csv"))
        windgen.write_csv(test, test_path.with_suffix(".csv"))
    print(f"patterns: {n_patterns}")
    print(f"train samples: {len(train)} -> {train_path}")
    print(f"test samples: {len(test)} -> {test_path}")
    return EXIT_OK


def check_dataset(samples) -> dict:
    if not samples:
        raise ValueError("dataset is empty")
    measured = np.array([topo.winding_value(s.re, s.im) for s in samples])
    rounded = np.rint(measured).astype(int)
    labels = np.array([s.label_nw for s in samples])
    residual = np.abs(measured - rounded)
    return {
        "samples": len(samples),
        "agreement": float(np.mean(rounded == labels)),
        "disagreements": int(np.sum(rounded != labels)),
        "residual_max": float(residual.max()),
        "residual_mean": float(residual.mean()),
        "residual_below_0.1": float(np.mean(residual < 0.1)),
    }


def cmd_check(cfg: RunConfig, args) -> int:
    if args.dataset:
        targets = [Path(args.dataset)]
        if not targets[0].is_file():
            raise ConfigError(f"missing dataset {targets[0]}")
    else:
        targets = _require(cfg, "train", "test")
    for path in targets:
        rep = check_dataset(windgen.read_ndjson(path))
        print(json.dumps({"dataset": str(path), **rep}))
    return EXIT_OK


def cmd_train_ae(cfg: RunConfig, args) -> int:
    train_path, test_path = _require(cfg, "train", "test")
    a = cfg.ae
    try:
        arch = ae.AeArchitecture(L=cfg.data.L, c1=a.c1, hidden=a.hidden)
    except ValueError as exc:
        raise ConfigError(f"ae: {exc}") from exc
    conf = ae.AeConfig(lr=a.lr, batch=a.batch, epochs=a.epochs, eval_every=a.eval_every, seed=a.seed,
                       optimizer=a.optimizer, momentum=a.momentum)
    train_x, _ = windgen.stack(windgen.read_ndjson(train_path))
    test_x, _ = windgen.stack(windgen.read_ndjson(test_path))
    if train_x.shape[-1] != arch.L:
        raise ConfigError(f"dataset length {train_x.shape[-1]} does not match data.L = {arch.L}")
    result = ae.train(train_x, test_x, conf, arch)
    final_path, best_path, log_path = _outputs(cfg, "ae_checkpoint", "ae_best_checkpoint", "ae_log")
    result.final.save(final_path)
    result.best.save(best_path)
    ae.write_log(result.log, log_path, with_wall_time=a.log_wall_time)
    if result.log:
        last = result.log[-1]
        print(f"final epoch {last.epoch}: train {last.train_loss:.6g} test {last.test_loss:.6g}")
    print(f"best epoch {result.best_epoch} -> {best_path}")
    return EXIT_OK


def cmd_extract(cfg: RunConfig, args) -> int:
    ckpt_path, train_path, test_path = _require(cfg, "ae_best_checkpoint", "train", "test")
    model = ae.Autoencoder.from_checkpoint(ModelCheckpoint.load(ckpt_path))
    out_train, out_test = _outputs(cfg, "features_train", "features_test")
    for src, dst in ((train_path, out_train), (test_path, out_test)):
        samples = windgen.read_ndjson(src)
        feats = ae.extract_features(model, windgen.stack(samples)[0]) if samples else np.zeros((0, 4, 16))
        reports.write_features(samples, feats, dst)
        print(f"{len(samples)} feature maps -> {dst}")
    return EXIT_OK


def cmd_train_probe(cfg: RunConfig, args) -> int:
    (feat_path,) = _require(cfg, "features_train")
    x, y = reports.stack_features(reports.read_features(feat_path))
    try:
        arch = probe.ProbeArchitecture(filters_used=cfg.probe.filters_used, hidden=cfg.probe.hidden,
                                       n_sites=x.shape[2])
    except ValueError as exc:
        raise ConfigError(f"probe: {exc}") from exc
    ckpt = probe.train_probe(x, y, _probe_config(cfg), arch)
    (out,) = _outputs(cfg, "probe_checkpoint")
    ckpt.save(out)
    print(f"probe (filters_used={arch.filters_used}) -> {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    ckpt_path, feat_path = _require(cfg, "probe_checkpoint", "features_test")
    ckpt = ModelCheckpoint.load(ckpt_path)
    x, y = reports.stack_features(reports.read_features(feat_path))
    hist = probe.evaluate(ckpt, x, y)
    k = ckpt.architecture["filters_used"]
    (out,) = _outputs(cfg, "ranks")
    probe.write_rank_table({k: hist}, out)
    print(json.dumps({"filters_used": k, "total": hist.total, "rates": hist.rates()}))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    tr_path, te_path = _require(cfg, "features_train", "features_test")
    xtr, ytr = reports.stack_features(reports.read_features(tr_path))
    xte, yte = reports.stack_features(reports.read_features(te_path))
    results = probe.filter_sweep(xtr, ytr, xte, yte, _probe_config(cfg), hidden=cfg.probe.hidden)
    (out,) = _outputs(cfg, "sweep")
    for k, (ckpt, hist) in results.items():
        ckpt.save(out.parent / f"probe_k{k}.ckpt.json")
        print(f"k={k}: rank-1 {hist.rates()[0]:.4f} rank-2 {hist.rates()[1]:.4f} rank-3 {hist.rates()[2]:.4f}")
    probe.write_rank_table({k: h for k, (_, h) in results.items()}, out)
    print(f"rank table -> {out}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    _require(cfg, "ae_log", "features_test", "sweep")
    out_dir = cfg.io.path("reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    records = ae.read_log(cfg.io.path("ae_log"))
    reports.write_loss_curve(records, out_dir / "loss_curve.csv")
    feats = reports.read_features(cfg.io.path("features_test"))
    x, _ = reports.stack_features(feats)
    order = [p.symbol() for p in windgen.enumerate_patterns(cfg.data.max_segments)]
    present = {r.pattern.symbol() for r in feats}
    averages = ae.average_by_pattern(x, [r.pattern.symbol() for r in feats],
                                     [s for s in order if s in present])
    reports.write_pattern_averages(averages, out_dir / "pattern_features.csv")
    table = probe.read_rank_table(cfg.io.path("sweep"))
    probe.write_rank_table(table, out_dir / "rank_rates.csv")
    print(f"reports -> {out_dir}")
    return EXIT_OK


HANDLERS = {
    "gen": cmd_gen, "check": cmd_check, "train-ae": cmd_train_ae, "extract": cmd_extract,
    "train-probe": cmd_train_probe, "eval": cmd_eval, "sweep": cmd_sweep, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        cfg = resolve_config(args, extra)
    except (UsageError, ConfigError) as exc:
        print(f"windae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    print(f"# windae {args.command} config")
    print(cfg.dump(), end="")
    try:
        return HANDLERS[args.command](cfg, args)
    except (ConfigError, CheckpointError) as exc:
        print(f"windae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"windae: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

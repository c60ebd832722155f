"""Batch entry points: generate, train, evaluate, ablate, walkdump.

Every command writes ``manifest.json`` next to its outputs. Failures exit
nonzero after printing one line ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from . import autodiff as ad
from . import walks
from .config import ConfigError, TrainConfig, load_config, parse_config
from .kernels import BACKEND
from .memory import BankError, MemoryBank
from .model import HMOD
from .predictor import MetricReport
from .training import TrainingError, baseline_ha, baseline_lr, evaluate, fit, make_split
from .trips import TripError, generate_synthetic, ingest, load_synthetic_spec, od_matrix, write_trips

log_ = logging.getLogger("hmod")

EXIT_CODES = {"usage": 2, "config": 3, "data": 4, "io": 5, "training": 6}

VARIANTS = {
    "full": {},
    "wo_c": {"disable_continuous": True},
    "wo_emb": {"disable_embedding": True},
    "wo_odloss": {"plain_mse": True},
    "D1": {"depth": 1},
    "D2": {"depth": 2},
    "D3": {"depth": 3},
    "D4": {"depth": 4},
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ------------------------------------------------------------------ resources

def bundled(name: str) -> Path:
    return Path(str(resources.files("hmod") / "data" / name))


def resolve(path_or_name: str) -> Path:
    """A filesystem path, or the name of a file shipped in ``hmod/data``."""
    p = Path(path_or_name)
    if p.exists():
        return p
    b = bundled(path_or_name)
    if b.exists():
        return b
    raise CliError("io", f"no such file: {path_or_name}")


def fingerprint(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_config(path: str | None, seed: int | None, threads: int | None) -> TrainConfig:
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if threads is not None:
        overrides["threads"] = threads
    try:
        if path is None:
            return parse_config("", **overrides)
        return load_config(resolve(path), **overrides)
    except ConfigError as exc:
        raise CliError("config", str(exc)) from None


def read_data(path: str):
    p = resolve(path)
    try:
        return ingest(p), p
    except TripError as exc:
        raise CliError("data", f"{p}: {exc}") from None


def out_dir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"cannot create {p}: {exc}") from None
    return p


def write_manifest(directory: Path, command: str, *, config: TrainConfig | None = None,
                   data: Path | None = None, extra: dict | None = None, artifacts=()) -> None:
    manifest = {"command": command, "version": __version__, "backend": BACKEND}
    if config is not None:
        text = config.to_text()
        manifest["config"] = text
        manifest["config_sha256"] = hashlib.sha256(text.encode()).hexdigest()
        manifest["seed"] = config.seed
        manifest["threads"] = config.threads
    if data is not None:
        manifest["data"] = str(data)
        manifest["data_sha256"] = fingerprint(data)
    manifest.update(extra or {})
    manifest["artifacts"] = sorted(str(a) for a in artifacts)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ results tables

def result_rows(reports: dict[str, MetricReport]) -> list[dict]:
    rows = []
    for method, rep in reports.items():
        row = {"method": method}
        row.update(rep.row())
        rows.append(row)
    return rows


def write_results(directory: Path, reports: dict[str, MetricReport], stem: str = "metrics") -> list[Path]:
    """Method x threshold x {RMSE, PCC} as CSV and JSON."""
    rows = result_rows(reports)
    fields = list(rows[0]) if rows else ["method"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    csv_path, json_path = directory / f"{stem}.csv", directory / f"{stem}.json"
    csv_path.write_text(buf.getvalue())
    json_path.write_text(json.dumps(rows, indent=2) + "\n")
    return [csv_path, json_path]


def _cell(v):
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    return v


def write_history(directory: Path, history) -> Path:
    path = directory / "history.csv"
    lines = ["epoch,train_loss,val_rmse,val_pcc"]
    for r in history:
        lines.append(f"{r.epoch},{r.train_loss!r},{r.val_rmse!r},{_cell(r.val_pcc)}")
    path.write_text("\n".join(lines) + "\n")
    return path


# ------------------------------------------------------------------ checkpoints

def save_model(path: Path, model: HMOD, bank: MemoryBank, best_epoch: int) -> None:
    tensors = {f"param/{k}": v for k, v in model.params.values().items()}
    tensors.update(bank.to_arrays())
    ad.save_checkpoint(path, tensors, {"config": model.config.to_text(), "n_nodes": model.n_nodes,
                                       "best_epoch": best_epoch})


def load_model(path: Path) -> tuple[HMOD, MemoryBank]:
    try:
        tensors, meta = ad.load_checkpoint(path)
        config = parse_config(meta["config"])
        model = HMOD(config, int(meta["n_nodes"]))
        model.params.load_values({k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")})
        bank = MemoryBank.from_arrays(tensors, config.delta_t)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError("io", f"{path}: cannot load checkpoint: {exc}") from None
    return model, bank


# ------------------------------------------------------------------ commands

def cmd_generate(args) -> None:
    spec_path = resolve(args.spec)
    try:
        spec = load_synthetic_spec(spec_path)
        log = generate_synthetic(spec, seed=args.seed)
    except TripError as exc:
        raise CliError("data", f"{spec_path}: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trips(log, out)
    write_manifest(out.parent, "generate", data=out,
                   extra={"spec": str(spec_path), "spec_sha256": fingerprint(spec_path),
                          "seed": spec.seed if args.seed is None else args.seed, "events": len(log)},
                   artifacts=[out])
    print(f"wrote {len(log)} trips to {out}")


def cmd_train(args) -> None:
    config = read_config(args.config, args.seed, args.threads)
    log, data_path = read_data(args.data)
    out = out_dir(args.out)
    with threadpool_limits(config.threads):
        split = make_split(log, config)
        result = fit(log, config, split)
        ckpt = out / "checkpoint.npz"
        save_model(ckpt, result.model, result.bank, result.best_epoch)
        report = evaluate(result.model, result.bank, log, split.test, split.origin)
        reports = {"HMOD": report, "HA": baseline_ha(log, config, split)[0],
                   "LR": baseline_lr(log, config, split)[0]}
    arts = [ckpt, write_history(out, result.history), *write_results(out, reports)]
    write_manifest(out, "train", config=config, data=data_path, artifacts=arts,
                   extra={"best_epoch": result.best_epoch, "split": _split_dict(split)})
    _print_table(reports)


def cmd_evaluate(args) -> None:
    model, bank = load_model(resolve(args.checkpoint))
    log, data_path = read_data(args.data)
    if log.node_count != model.n_nodes:
        raise CliError("data", f"checkpoint expects {model.n_nodes} nodes, data has {log.node_count}")
    out = out_dir(args.out)
    config = model.config
    with threadpool_limits(config.threads):
        split = make_split(log, config)
        reports = {"HMOD": evaluate(model, bank, log, split.test, split.origin),
                   "HA": baseline_ha(log, config, split)[0],
                   "LR": baseline_lr(log, config, split)[0]}
    arts = write_results(out, reports)
    write_manifest(out, "evaluate", config=config, data=data_path, artifacts=arts,
                   extra={"checkpoint": str(args.checkpoint), "checkpoint_sha256": fingerprint(resolve(args.checkpoint)),
                          "split": _split_dict(split)})
    _print_table(reports)


def cmd_ablate(args) -> None:
    config = read_config(args.config, args.seed, args.threads)
    log, data_path = read_data(args.data)
    out = out_dir(args.out)
    names = args.variant or list(VARIANTS)
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        raise CliError("usage", f"unknown variant: {unknown[0]} (choose from {', '.join(VARIANTS)})")
    reports = {}
    with threadpool_limits(config.threads):
        split = make_split(log, config)
        for name in names:
            try:
                variant = config.replace(**VARIANTS[name])
            except ConfigError as exc:
                raise CliError("config", f"variant {name}: {exc}") from None
            result = fit(log, variant, split)
            reports[name] = evaluate(result.model, result.bank, log, split.test, split.origin)
            log_.info("variant %s test rmse %.6f", name, reports[name].rmse)
        reports["HA"] = baseline_ha(log, config, split)[0]
        reports["LR"] = baseline_lr(log, config, split)[0]
    arts = write_results(out, reports, stem="ablation")
    model_rows = {k: v.rmse for k, v in reports.items() if k in VARIANTS}
    best = min(model_rows, key=model_rows.get)
    write_manifest(out, "ablate", config=config, data=data_path, artifacts=arts,
                   extra={"variants": names, "best_variant": best, "split": _split_dict(split)})
    _print_table(reports)
    print(f"best variant by test RMSE(>=0): {best}")


def cmd_walkdump(args) -> None:
    config = read_config(args.config, args.seed, None)
    log, data_path = read_data(args.data)
    out = out_dir(args.out)
    n = log.node_count
    if not 0 <= args.anchor < n:
        raise CliError("usage", f"anchor {args.anchor} out of range [0, {n})")
    if args.level not in config.levels:
        raise CliError("usage", f"level {args.level} not in {config.levels}")
    split = make_split(log, config)
    k = split.train[1] - 1 if args.window is None else args.window
    t1 = split.origin + (k + 1) * config.delta_t
    demand = None
    if args.level > 0:
        span = (2 ** (args.level - 1)) * config.delta_t
        demand = od_matrix(log, t1 - span, t1).values
    u = walks.walk_uniforms(config.seed, k, args.level, n, 2 * config.walk_pairs, config.walk_length)
    batch = walks.sample_walks([args.anchor], args.level, t1, config.walk_pairs, config.walk_length,
                               uniforms=u, log=log, demand=demand, horizon=config.walk_horizon,
                               timescale=config.timescale, smoothing=config.smoothing)
    path = out / "walks.csv"
    lines = ["anchor,level,window,walk,parity,steps,nodes,roles"]
    for w, s in enumerate(batch.samples()):
        lines.append(f"{s.anchor},{s.level},{k},{w},{s.parity},{s.steps},"
                     f"{' '.join(map(str, s.nodes))},{' '.join(r[0].upper() for r in s.roles)}")
    path.write_text("\n".join(lines) + "\n")
    write_manifest(out, "walkdump", config=config, data=data_path, artifacts=[path],
                   extra={"anchor": args.anchor, "level": args.level, "window": k})
    print(path.read_text(), end="")


def _split_dict(split) -> dict:
    return {"origin": split.origin, "windows": split.n_windows, "train": list(split.train),
            "val": list(split.val), "test": list(split.test)}


def _print_table(reports: dict[str, MetricReport]) -> None:
    rows = result_rows(reports)
    if not rows:
        return
    keys = [k for k in rows[0] if not k.endswith("_count")]
    print("  ".join(f"{k:>10}" for k in keys))
    for row in rows:
        cells = []
        for k in keys:
            v = row[k]
            cells.append(f"{v:>10}" if isinstance(v, str) else f"{'n/a' if v is None else format(v, '.4f'):>10}")
        print("  ".join(cells))


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hmod {__version__} ({BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic trip file from a spec")
    g.add_argument("--spec", required=True, help="spec file or bundled name (tiny.spec, synthetic12.spec)")
    g.add_argument("--out", required=True, help="trip file to write")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    for name, func, help_ in (("train", cmd_train, "fit HMOD and score it against HA and LR"),
                              ("ablate", cmd_ablate, "train every variant and tabulate test metrics")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--data", required=True)
        p.add_argument("--config")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        if name == "ablate":
            p.add_argument("--variant", action="append", help=f"repeatable; one of {', '.join(VARIANTS)}")
        p.set_defaults(func=func)

    e = sub.add_parser("evaluate", help="score a checkpoint on the test windows")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("walkdump", help="write the walks sampled for one anchor")
    w.add_argument("--data", required=True)
    w.add_argument("--config")
    w.add_argument("--out", required=True)
    w.add_argument("--seed", type=int)
    w.add_argument("--anchor", type=int, default=0)
    w.add_argument("--level", type=int, default=0)
    w.add_argument("--window", type=int, help="window index; default is the last training window")
    w.set_defaults(func=cmd_walkdump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except CliError as exc:
        category, message = exc.category, str(exc)
    except ConfigError as exc:
        category, message = "config", str(exc)
    except TripError as exc:
        category, message = "data", str(exc)
    except (TrainingError, BankError) as exc:
        category, message = "training", str(exc)
    except OSError as exc:
        category, message = "io", str(exc)
    else:
        return 0
    print(f"error: {category}: {message.splitlines()[0] if message else ''}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())

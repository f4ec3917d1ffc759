"""Command-line entry point: ``eagps <subcommand> [options]``.

Exit codes: 0 success, 1 validation or check failure, 2 I/O or parse error.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ALPHA_GRID, BETA_GRID, GAMMA_GRID, VARIANTS, HyperConfig, parse_kv
from .data import (ONE_YEAR, SequenceRecord, build_sequences, parse_interactions, read_bundle,
                   split_train_test, synth_dataset, write_bundle)
from .errors import CheckpointError, ConfigError, EAGPSError, ParseError
from .evaluator import benchmark, evaluate, write_csv, write_jsonl
from .numerics import finite_diff_grad_check
from .trainer import Model, model_for

log = logging.getLogger("eagps")

FLAG_KEYS = {
    "alpha": "alpha", "beta": "beta", "gamma": "gamma", "eta": "eta", "d": "d", "lr": "lr",
    "epochs": "epochs", "batch": "batch_size", "variant": "variant", "loss_mode": "loss_mode",
}


# configuration --------------------------------------------------------------

def resolve_config(args, base: HyperConfig | None = None) -> HyperConfig:
    """Defaults, then ``--config`` file, then flags (flags win)."""
    values = {}
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read config {args.config}: {exc}") from exc
        values.update(parse_kv(text))
    if getattr(args, "seed", None) is not None:
        s = args.seed
        values.update(init_seed=s, shuffle_seed=s + 1, dropout_seed=s + 2, mask_seed=s + 3)
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    return (base or HyperConfig()).with_overrides(**values)


@contextmanager
def run_dir(path):
    """Create ``path`` and hold an exclusive lock file inside it for the duration."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OSError(f"run directory {out} is locked by another process ({lock})") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield out
    finally:
        lock.unlink(missing_ok=True)


def echo_config(out: Path, hyper: HyperConfig, extra: dict | None = None) -> None:
    text = hyper.to_text()
    for k, v in (extra or {}).items():
        text += f"# {k}={v}\n"
    (out / "config.resolved.txt").write_text(text, encoding="utf-8")


def workers() -> int:
    try:
        return max(1, int(os.environ.get("EAGPS_THREADS", "1")))
    except ValueError:
        raise ConfigError("EAGPS_THREADS must be an integer") from None


def _metric_row(report) -> dict:
    row = {}
    for n in sorted(report.recall_at):
        row[f"recall@{n}"] = report.recall_at[n]
    for n in sorted(report.mrr_at):
        row[f"mrr@{n}"] = report.mrr_at[n]
    return row


def _train_and_eval(hyper: HyperConfig, bundle: str) -> dict:
    seqs = read_bundle(bundle)
    model = model_for(hyper, seqs)
    model.fit()
    return _metric_row(evaluate(model, seqs.test))


# subcommands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    log_ = synth_dataset(args.users, args.items, args.length, args.noise, args.seed or 0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for u, i, t in log_.records:
            fh.write(f"{u}\t{i}\t{t}\n")
    print(f"wrote {len(log_)} interactions to {args.out}")
    return 0


def cmd_prepare(args) -> int:
    try:
        with open(args.input, encoding="utf-8") as fh:
            interactions = parse_interactions(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {args.input}: {exc}") from exc
    seqs = build_sequences(interactions, args.min_seq_len, args.min_item_freq, args.window)
    seqs = split_train_test(seqs, args.ratio, args.seed or 0)
    with run_dir(args.out) as out:
        write_bundle(seqs, out)
        (out / "prepare.resolved.txt").write_text(
            f"input={args.input}\nmin_seq_len={args.min_seq_len}\nmin_item_freq={args.min_item_freq}\n"
            f"window={args.window}\nratio={args.ratio}\nseed={args.seed or 0}\n", encoding="utf-8")
    name = Path(args.input).stem
    print(f"Dataset\t{name}")
    print(f"Items\t{seqs.m_items}")
    print(f"Interactions\t{seqs.n_interactions}")
    print(f"Users\t{seqs.n_users}")
    print(f"Training Sequences\t{len(seqs.train)}")
    print(f"Testing Sequences\t{len(seqs.test)}")
    return 0


def cmd_train(args) -> int:
    seqs = read_bundle(args.data)
    if args.resume:
        model = load_checkpoint(args.resume, seqs.train)
        hyper = resolve_config(args, model.hyper)
        if hyper.variant != model.hyper.variant:
            raise ConfigError("cannot change the variant when resuming")
        model.hyper = hyper
    else:
        hyper = resolve_config(args)
        model = model_for(hyper, seqs)
    with run_dir(args.out) as out:
        echo_config(out, hyper, {"data": args.data, "resume": args.resume or ""})
        rows = []

        def record(epoch, value):
            rows.append((epoch, value))
            log.info("epoch %d loss %.6f", epoch, value)

        try:
            model.fit(hyper.epochs, on_epoch=record)
        finally:
            with (out / "loss.csv").open("w", encoding="utf-8") as fh:
                fh.write("epoch,loss\n")
                for epoch, value in rows:
                    fh.write(f"{epoch},{value!r}\n")
        save_checkpoint(model, out / "model.eagps")
    print(f"trained {hyper.variant} for {len(rows)} epochs (step {model.store.step}); "
          f"final loss {rows[-1][1] if rows else float('nan'):.6f}")
    return 0


def cmd_eval(args) -> int:
    seqs = read_bundle(args.data)
    model = load_checkpoint(args.checkpoint, seqs.train)
    ns = tuple(int(x) for x in args.ns.split(","))
    report = evaluate(model, seqs.test, ns)
    with run_dir(args.out) as out:
        echo_config(out, model.hyper, {"data": args.data, "checkpoint": args.checkpoint})
        rows = list(report.rows())
        write_jsonl(rows, out / "metrics.jsonl")
        write_csv(rows, out / "metrics.csv")
    for row in report.rows():
        print(f"{row['metric']}@{row['n']}\t{row['value']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    hyper = resolve_config(args)
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    configs = [hyper.with_overrides(variant=v) for v in variants]
    with run_dir(args.out) as out:
        echo_config(out, hyper, {"data": args.data, "variants": ",".join(variants)})
        results = _map(_train_and_eval, configs, itertools.repeat(args.data))
        rows = [{"variant": v, **r} for v, r in zip(variants, results)]
        write_csv(rows, out / "ablation.csv")
        write_jsonl(rows, out / "ablation.jsonl")
    _print_table(rows)
    return 0


def cmd_sweep(args) -> int:
    hyper = resolve_config(args)
    alphas = _ints(args.alphas) if args.alphas else ALPHA_GRID
    betas = _ints(args.betas) if args.betas else BETA_GRID
    gammas = _floats(args.gammas) if args.gammas else GAMMA_GRID
    grid = list(itertools.product(alphas, betas, gammas))
    if not grid:
        raise ConfigError("empty sweep grid")
    configs = [hyper.with_overrides(alpha=a, beta=b, gamma=g) for a, b, g in grid]
    with run_dir(args.out) as out:
        echo_config(out, hyper, {"data": args.data, "alphas": alphas, "betas": betas, "gammas": gammas})
        results = _map(_train_and_eval, configs, itertools.repeat(args.data))
        rows = [{"alpha": a, "beta": b, "gamma": g, **r} for (a, b, g), r in zip(grid, results)]
        write_csv(rows, out / "sweep.csv")
    print(f"wrote {len(rows)} rows to {Path(args.out) / 'sweep.csv'}")
    return 0


def gradcheck_fixture(m: int = 20, n: int = 5, seq_len: int = 8):
    """Tiny dataset in which user ``k`` walks the item cycle from ``4k``; covers every item."""
    step = max(1, m // n)
    return [SequenceRecord(k, tuple((step * k + j) % m for j in range(seq_len)), k) for k in range(n)]


def gradcheck_model(hyper: HyperConfig, m: int = 20, n: int = 5) -> Model:
    return Model(hyper, gradcheck_fixture(m, n), m, n)


def run_gradcheck(hyper: HyperConfig, corrupt: str | None = None, n_coords: int = 32):
    model = gradcheck_model(hyper)
    examples = model.examples()

    def loss_fn(store):
        # training mode with a fixed epoch and batch index freezes dropout and masks
        return model.objective(examples, training=True, epoch=0, batch_index=0)

    if corrupt and corrupt not in model.store:
        raise ConfigError(f"no parameter named {corrupt!r}")

    def corrupt_hook(name, g):
        # test hook: a wrong analytic gradient must make the check fail
        return g * 1.5 + 1e-3 if name == corrupt else g

    return finite_diff_grad_check(loss_fn, model.store, n_coords=n_coords,
                                  grad_hook=corrupt_hook if corrupt else None)


def cmd_gradcheck(args) -> int:
    base = HyperConfig(d=8, alpha=4, beta=2, eta=2, gamma=0.4, loss_mode="all-prefixes")
    hyper = resolve_config(args, base)
    report = run_gradcheck(hyper, args.corrupt_grad)
    for line in report.lines():
        print(line)
    name, err = report.worst
    status = "PASS" if report.passed else "FAIL"
    print(f"{status}: worst parameter {name} max_rel_err={err:.3e} tolerance={report.tolerance:.0e}")
    return 0 if report.passed else 1


def cmd_bench(args) -> int:
    hyper = resolve_config(args)
    seqs = read_bundle(args.data)
    ratios = _floats(args.ratios) if args.ratios else (0.2, 0.4, 0.6, 0.8, 1.0)
    records = benchmark(hyper, seqs, ratios, epochs=args.bench_epochs, repeats=args.repeats)
    rows = [r.to_dict() for r in records]
    with run_dir(args.out) as out:
        echo_config(out, hyper, {"data": args.data, "ratios": ratios})
        write_jsonl(rows, out / "bench.jsonl")
        write_csv(rows, out / "bench.csv")
    print("timing pinned to 1 BLAS thread")
    _print_table(rows)
    by_ratio = {r.data_ratio: r.wall_seconds for r in records}
    if 1.0 in by_ratio and 0.5 in by_ratio:
        print(f"wall(1.0)/wall(0.5) = {by_ratio[1.0] / by_ratio[0.5]:.3f}")
    return 0


# helpers --------------------------------------------------------------------

def _map(fn, *iterables):
    n = workers()
    if n == 1:
        return list(map(fn, *iterables))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, *iterables))


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _print_table(rows):
    if not rows:
        return
    keys = list(rows[0])
    print("\t".join(keys))
    for row in rows:
        print("\t".join(f"{row[k]:.4f}" if isinstance(row[k], float) else str(row[k]) for k in keys))


def _common(p, hyper_flags=True):
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="base seed for init, shuffling, dropout and masks")
    if hyper_flags:
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--alpha", type=int)
        p.add_argument("--beta", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--eta", type=int)
        p.add_argument("--d", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--loss-mode", dest="loss_mode", choices=("last-item", "all-prefixes"))
    p.add_argument("--ratios", help="comma-separated data ratios (bench)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eagps", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted-pattern interaction TSV")
    _common(p, hyper_flags=False)
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--items", type=int, default=200)
    p.add_argument("--length", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth, need_out=True)

    p = sub.add_parser("prepare", help="filter, fragment and split an interaction TSV")
    _common(p, hyper_flags=False)
    p.add_argument("--input", required=True)
    p.add_argument("--min-seq-len", type=int, default=3)
    p.add_argument("--min-item-freq", type=int, default=5)
    p.add_argument("--window", type=int, default=ONE_YEAR, help="fragment window in seconds")
    p.add_argument("--ratio", type=float, default=0.8)
    p.set_defaults(func=cmd_prepare, need_out=True)

    p = sub.add_parser("train", help="train a model on a prepared bundle")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train, need_out=True)

    p = sub.add_parser("eval", help="Recall@N / MRR@N of a checkpoint on the test split")
    _common(p, hyper_flags=False)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ns", default="5,10")
    p.set_defaults(func=cmd_eval, need_out=True)

    p = sub.add_parser("ablate", help="train and evaluate several variants")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    p.set_defaults(func=cmd_ablate, need_out=True)

    p = sub.add_parser("sweep", help="grid over alpha, beta and gamma")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--alphas")
    p.add_argument("--betas")
    p.add_argument("--gammas")
    p.set_defaults(func=cmd_sweep, need_out=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    _common(p)
    p.add_argument("--corrupt-grad", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck, need_out=False)

    p = sub.add_parser("bench", help="wall-clock scaling over data ratios")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--bench-epochs", type=int, default=3)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench, need_out=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.need_out and not args.out:
        parser.error("--out is required")
    try:
        return args.func(args)
    except (ParseError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EAGPSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

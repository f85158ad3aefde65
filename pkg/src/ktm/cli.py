"""``ktm`` command line: simulate, train, predict, eval.

Exit codes: 0 success, 1 runtime failure, 2 usage, input or config error.
Every command writes the fully resolved config next to its outputs; feeding
that file back through ``--config`` reproduces the run.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import SegmentationConfig, load_csv, segment, simulate_crossings
from .errors import InvalidConfigError, KtmError, ParseError
from .evaluation import run_experiment
from .pipeline import KtmModel, predict_mixture, sample_trajectories, train_ktm

log = logging.getLogger("ktm")


class UsageError(Exception):
    pass


def _echo_path(out):
    out = Path(out)
    if out.is_dir():
        return out / "config.yaml"
    return out.with_name(out.stem + ".config.yaml")


def _load_config(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.config is not None and not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    return RunConfig.load(args.config, overrides)


def _read_corpus(path, config):
    if not Path(path).is_file():
        raise UsageError(f"corpus file not found: {path}")
    return load_csv(path, config["data.columns"])


def cmd_simulate(args):
    config = _load_config(args)
    corpus = simulate_crossings(**config.simulate_kwargs())
    out = Path(args.out)
    corpus.to_csv(out)
    config.write(_echo_path(out))
    print(f"wrote {len(corpus)} trajectories to {out}")
    return 0


def cmd_train(args):
    config = _load_config(args)
    corpus = _read_corpus(args.corpus, config)
    pairs = segment(corpus, SegmentationConfig(config["data.ratio"]))
    out = Path(args.out)
    epochs = []

    def progress(epoch, loss):
        epochs.append((epoch, loss))
        print(f"epoch {epoch:4d}  loss {loss:.6f}")

    model = train_ktm(pairs, config.ktm_config(), callback=progress)
    model.save(out)
    with open(out.with_name(out.stem + ".train.log"), "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        fh.writelines(f"{e},{loss!r}\n" for e, loss in epochs)
    config.write(_echo_path(out))
    print(f"trained on {len(pairs)} pairs with {len(model.representatives)} representatives; model written to {out}")
    return 0


def cmd_predict(args):
    config = _load_config(args)
    if args.samples is not None:
        config.set("predict.samples", args.samples)
    if args.horizon is not None:
        config.set("predict.horizon", args.horizon)
    if not Path(args.model).is_file():
        raise UsageError(f"model file not found: {args.model}")
    model = KtmModel.load(args.model)
    queries = _read_corpus(args.query, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n, horizon = config["predict.samples"], config["predict.horizon"]
    times = np.arange(1, horizon + 1, dtype=float)
    mixtures, rows = [], []
    if len(queries):
        predict_mixture(model, queries[0])  # first call loads the compiled distance kernels
    for q, (ident, query) in enumerate(zip(queries.ids, queries.trajectories)):
        start = time.perf_counter()
        mixture = predict_mixture(model, query)
        elapsed = time.perf_counter() - start
        mixtures.append({"id": ident, "origin": query[-1].tolist(), "seconds": round(elapsed, 6), **mixture.to_dict()})
        print(f"{ident}: mixture predicted in {elapsed:.4f} s")
        if n > 0:
            for k, sample in enumerate(sample_trajectories(model, query, n, [config.seed, q])):
                rows.append((ident, k, sample.component, sample.discretise(times)))

    with open(out / "mixture.json", "w", encoding="utf-8") as fh:
        json.dump({"basis": list(model.basis.inducing_times), "queries": mixtures}, fh, indent=2)
        fh.write("\n")
    if n > 0:
        with open(out / "samples.csv", "w", encoding="utf-8") as fh:
            fh.write("id,sample,component,t,x,y\n")
            for ident, k, comp, points in rows:
                for t, (x, y) in zip(times, points):
                    fh.write(f"{ident},{k},{comp},{t!r},{float(x)!r},{float(y)!r}\n")
    config.write(out / "config.yaml")
    return 0


def cmd_eval(args):
    config = _load_config(args)
    if args.repetitions is not None:
        config.set("eval.repetitions", args.repetitions)
    if args.corpus is not None:
        corpus = _read_corpus(args.corpus, config)
    else:
        corpus = simulate_crossings(**config.simulate_kwargs())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump = out / "samples.csv" if args.dump_samples else None
    report = run_experiment(corpus, config.ktm_config(), config.eval_config(), config.seed, sample_dump=dump)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    config.write(out / "config.yaml")
    print(report.to_table(), end="")
    if not report.ok:
        for failure in report.failures:
            print(f"repetition {failure['repetition']} failed: {failure['error']}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config value, e.g. mdn.epochs=10")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ktm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a simulated crossing corpus")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="train a model on a corpus CSV")
    p.add_argument("corpus", help="id,t,x,y CSV")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict mixtures and sample trajectories")
    p.add_argument("model", help="model file from 'ktm train'")
    p.add_argument("query", help="id,t,x,y CSV of observed trajectories")
    p.add_argument("--samples", type=int, help="trajectories to sample per query")
    p.add_argument("--horizon", type=int, help="steps to discretise each sample at")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="repeated train/test comparison against CV")
    p.add_argument("corpus", nargs="?", help="id,t,x,y CSV (default: simulate from the config)")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--dump-samples", action="store_true", help="also write samples.csv for plotting")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, InvalidConfigError, ParseError) as exc:
        print(f"ktm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (KtmError, OSError) as exc:
        print(f"ktm {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

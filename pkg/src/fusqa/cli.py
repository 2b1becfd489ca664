"""``fusqa`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .biometry import DEFAULT_DATING, DatingModel, ga_from_crl, measure_crl
from .cae import CaeDetector
from .checkpoints import load_checkpoint
from .dataset import read_dataset, read_pgm, write_dataset
from .degrade import Sample, make_variant_set
from .errors import DataError, NumericError
from .evaluate import EvalReport, StageError, evaluate_model, load_config, run_benchmark, write_report
from .imgcore import LabelMask
from .nn import CheckpointError
from .phantom import PhantomSample, generate_phantoms
from .qa import TOPOLOGIES, QualityClassifier
from .validation import stack_pairs

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dating(path) -> DatingModel:
    return DatingModel.from_file(path) if path else DEFAULT_DATING


def _samples(directory) -> list[Sample]:
    data = read_dataset(directory)
    if not data or not isinstance(data[0], Sample):
        raise DataError(f"{directory} holds no quality-labelled samples (run 'fusqa degrade' first)")
    return data


def cmd_phantom(args):
    samples = generate_phantoms(range(args.seed, args.seed + args.count), args.domain, args.size, args.spacing)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} domain-{args.domain} phantoms to {args.out}")


def cmd_degrade(args):
    phantoms = read_dataset(args.inp)
    if phantoms and not isinstance(phantoms[0], PhantomSample):
        raise DataError(f"{args.inp} is already a degraded dataset")
    variants = [v for p in phantoms
                for v in make_variant_set(p, args.seed + p.seed, args.good, args.poor, args.flip_random_class)]
    write_dataset(variants, args.out)
    n_good = sum(v.quality for v in variants)
    print(f"wrote {len(variants)} samples ({n_good} good, {len(variants) - n_good} poor) to {args.out}")


def cmd_train(args):
    data = _samples(args.data)
    model = QualityClassifier(
        topology=args.topology, epochs=args.epochs, learning_rate=args.lr, momentum=args.momentum,
        batch_size=args.batch, augment=not args.no_augment, val_fraction=args.val_fraction,
        random_state=args.seed, verbose=args.verbose,
    )
    model.fit(stack_pairs(data), np.array([s.quality for s in data]), groups=[s.source_id for s in data])
    model.save(args.out, {"data": str(args.data)})
    last = model.history_[-1] if model.history_ else {}
    print(json.dumps({"checkpoint": str(args.out), "best_epoch": model.best_epoch_, "last_epoch": last}))


def cmd_train_cae(args):
    data = read_dataset(args.data)
    masks = [s.mask.labels for s in data if not isinstance(s, Sample) or s.quality == 1]
    if not masks:
        raise DataError(f"{args.data} contains no good masks")
    model = CaeDetector(tau=args.tau, epochs=args.epochs, learning_rate=args.lr, random_state=args.seed,
                        verbose=args.verbose).fit(np.stack(masks))
    model.save(args.out, {"data": str(args.data)})
    print(json.dumps({"checkpoint": str(args.out), "n_masks": len(masks), "last_epoch": model.history_[-1]}))


def cmd_eval(args):
    model = load_checkpoint(args.model)
    if args.tau is not None:
        if not isinstance(model, CaeDetector):
            raise UsageError("--tau only applies to autoencoder checkpoints")
        model.set_params(tau=args.tau)
    data = _samples(args.data)
    name = "cae" if isinstance(model, CaeDetector) else model.topology
    row, down = evaluate_model(model, data, _dating(args.dating_config))
    labels = np.array([s.quality for s in data])
    report = EvalReport(
        models={name: row}, downstream={"model": name, **down}, downstream_by_model={name: down},
        dataset={"path": str(args.data), "n_test": len(data), "n_test_good": int(labels.sum()),
                 "n_test_poor": int((1 - labels).sum())},
        config={"model": str(args.model)},
    )
    write_report(report, args.report, args.format)
    print(json.dumps({name: {k: row[k] for k in ("precision", "recall", "accuracy", "f1")}}))


def cmd_measure(args):
    labels = read_pgm(args.mask)
    mask = LabelMask(labels, args.spacing)
    m = measure_crl(mask)
    dating = _dating(args.dating_config)
    out = {"crl_mm": m.length_mm, "p1": list(m.p1), "p2": list(m.p2), "contour_size": m.contour_size}
    try:
        out["ga_days"] = ga_from_crl(m.length_mm, dating)
    except DataError as exc:
        out["ga_days"] = None
        out["error"] = str(exc)
        print(json.dumps(out))
        return EXIT_DATA
    print(json.dumps(out))


def cmd_bench(args):
    config = load_config(args.config) if args.config else None
    report = run_benchmark(config, args.seed, verbose=args.verbose)
    out = Path(args.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json", "json")
    write_report(report, out / "report.csv", "csv")
    for name, model in report.fitted_.items():
        model.save(out / "checkpoints" / f"{name}.fqm", {"benchmark_seed": args.seed})
    for name, row in report.models.items():
        print(f"{name:9s} precision={row['precision']:.3f} recall={row['recall']:.3f} "
              f"accuracy={row['accuracy']:.3f} f1={row['f1']:.3f}")
    d = report.downstream
    if d:
        for g in ("good", "poor"):
            print(f"predicted {g}: CRL err {d[g]['crl_err_mm']} mm, GA err {d[g]['ga_err_days']} days (n={d[g]['n']})")
    print(f"runtime {report.runtime['total_s']:.1f} s; report in {out}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fusqa", description="Segmentation quality assessment on synthetic fetal phantoms.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", help="generate a phantom dataset")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--domain", choices=["A", "B"], default="A")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--spacing", type=float, default=1.0, help="mm per pixel")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("degrade", help="expand phantoms into good/poor mask variants")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--good", type=int, default=4)
    s.add_argument("--poor", type=int, default=5)
    s.add_argument("--flip-random-class", action="store_true", help="flip a random class instead of the head")
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("train", help="train a quality classifier")
    s.add_argument("--data", required=True)
    s.add_argument("--topology", choices=TOPOLOGIES, default="single")
    s.add_argument("--epochs", type=int, default=12)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--batch", type=int, default=16)
    s.add_argument("--val-fraction", type=float, default=0.1)
    s.add_argument("--no-augment", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("train-cae", help="train the autoencoder baseline on good masks")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=8)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--tau", type=float, default=0.10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_train_cae)

    s = sub.add_parser("eval", help="score a checkpoint on a labelled dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.add_argument("--dating-config", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("measure", help="measure CRL and GA from a mask PGM")
    s.add_argument("--mask", required=True)
    s.add_argument("--spacing", type=float, required=True, help="mm per pixel")
    s.add_argument("--dating-config", default=None)
    s.set_defaults(func=cmd_measure)

    s = sub.add_parser("bench", help="run the end-to-end phantom benchmark")
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError) and exc.__cause__ is not None:
        exc = exc.__cause__
    if isinstance(exc, (NumericError, FloatingPointError, OverflowError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"fusqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StageError, DataError, CheckpointError, ValueError, OSError, ArithmeticError) as exc:
        print(f"fusqa: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())

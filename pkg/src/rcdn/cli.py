"""Command-line entry point: dataset generation, training, evaluation,
cross-domain experiments, and self-verification.

Exit codes (stable contract): 0 success, 1 selftest failure, 2 usage error,
3 I/O error, 4 numerical abort.
"""

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import (CheckpointError, ConfigError, NanAbortError, PpmParseError,
                     RcdnError, UsageError, ValidationError)

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _utcnow():
    return datetime.now(timezone.utc).isoformat()


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def _dataset_hash(data_root):
    path = os.path.join(data_root, "manifest.json")
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_run_manifest(out_dir, args, started, dataset_root=None):
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items()
                if k not in ("func",) and not k.startswith("_")}
    manifest = {
        "command": args._command,
        "config": resolved,
        "seed": resolved.get("seed"),
        "tool_version": __version__,
        "started": started,
        "finished": _utcnow(),
    }
    if dataset_root is not None:
        manifest["dataset_manifest_sha256"] = _dataset_hash(dataset_root)
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _train_config(args, seed=None, ablation=False):
    from .model import ModelConfig
    from .train_eval import TrainConfig

    model = ModelConfig(
        image_size=args.size,
        margin=args.margin,
        lambda_c=0.0 if ablation else args.lambda_c,
        lambda_s=0.0 if ablation else args.lambda_s,
        seed=args.seed if seed is None else seed,
    )
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       seed=args.seed if seed is None else seed, model=model)


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args):
    from .data import DatasetSpec, build_dataset

    started = _utcnow()
    if not _is_pow2(args.size):
        print(f"warning: size {args.size} is not a power of two; the direct "
              f"(slow) transform will be used for spectra", file=sys.stderr)
    spec = DatasetSpec(per_domain_train=args.per_domain_train,
                       per_domain_test=args.per_domain_test,
                       image_size=args.size, seed=args.seed)
    build_dataset(spec, args.out)
    _write_run_manifest(args.out, args, started, dataset_root=args.out)
    print(f"dataset written to {args.out}")
    return EXIT_OK


def cmd_train(args):
    from .train_eval import train

    started = _utcnow()
    os.makedirs(args.out, exist_ok=True)
    cfg = _train_config(args)
    cfg.checkpoint_path = os.path.join(args.out, f"model_{args.train_domain}.ckpt")
    cfg.log_path = os.path.join(args.out, "train_log.jsonl")
    _, trace = train(cfg, args.data, args.train_domain)
    _write_run_manifest(args.out, args, started, dataset_root=args.data)
    final = trace[-1]
    print(f"trained on {args.train_domain}: final total loss {final['total']:.4f}, "
          f"train accuracy {final.get('train_accuracy', float('nan')):.4f}")
    print(f"checkpoint: {cfg.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args):
    import csv

    from .model import load_checkpoint
    from .train_eval import evaluate

    started = _utcnow()
    model = load_checkpoint(args.checkpoint)
    res = evaluate(model, args.data, args.test_domain)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "eval.json"), "w") as fh:
        json.dump({"accuracy": res.accuracy, "tp": res.tp, "tn": res.tn,
                   "fp": res.fp, "fn": res.fn, "test_domain": args.test_domain},
                  fh, indent=2, sort_keys=True)
    with open(os.path.join(args.out, "predictions.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain", "label", "score", "prediction"])
        for rec in res.records:
            writer.writerow([rec["id"], rec["domain"], rec["label"],
                             f"{rec['score']:.6f}", rec["prediction"]])
    _write_run_manifest(args.out, args, started, dataset_root=args.data)
    print(f"accuracy on {args.test_domain}: {res.accuracy:.4f} "
          f"(tp={res.tp} tn={res.tn} fp={res.fp} fn={res.fn})")
    return EXIT_OK


def _run_crossdomain(args, out_dir, ablation):
    from .model import save_checkpoint
    from .train_eval import TRAIN_DOMAINS, cross_matrix, report, summarize, train

    models = {}
    for domain in TRAIN_DOMAINS:
        cfg = _train_config(args, ablation=ablation)
        cfg.log_path = os.path.join(out_dir, f"train_log_{domain}.jsonl")
        os.makedirs(out_dir, exist_ok=True)
        model, _ = train(cfg, args.data, domain)
        save_checkpoint(model, os.path.join(out_dir, f"model_{domain}.ckpt"))
        models[domain] = model
    matrix, evals = cross_matrix(models, args.data)
    summary = summarize(matrix)
    predictions = [rec for res in evals.values() for rec in res.records]
    extra = {"lambda_c": 0.0 if ablation else args.lambda_c,
             "lambda_s": 0.0 if ablation else args.lambda_s,
             "margin": args.margin, "epochs": args.epochs, "seed": args.seed}
    report(matrix, summary, out_dir, predictions=predictions, extra=extra)
    return matrix, summary


def cmd_crossdomain(args):
    from .train_eval import matrix_markdown

    started = _utcnow()
    matrix, summary = _run_crossdomain(args, args.out, ablation=False)
    print(f"cross-domain summary: in-domain {summary.in_domain_avg:.4f}, "
          f"cross {summary.cross_avg:.4f}, gap {summary.gap:.4f}, "
          f"ratio {summary.ratio:.3f}")
    if args.ablation:
        ab_dir = os.path.join(args.out, "ablation")
        ab_matrix, ab_summary = _run_crossdomain(args, ab_dir, ablation=True)
        with open(os.path.join(args.out, "comparison.md"), "w") as fh:
            fh.write("## Full objective\n\n")
            fh.write(matrix_markdown(matrix, summary))
            fh.write("\n## Classification-only ablation (weights zeroed)\n\n")
            fh.write(matrix_markdown(ab_matrix, ab_summary))
        print(f"ablation summary:     in-domain {ab_summary.in_domain_avg:.4f}, "
              f"cross {ab_summary.cross_avg:.4f}, gap {ab_summary.gap:.4f}, "
              f"ratio {ab_summary.ratio:.3f}")
    _write_run_manifest(args.out, args, started, dataset_root=args.data)
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest suites

def _suite_grad():
    from .autodiff import Tensor, gradcheck, tsum
    from . import nn

    rng = np.random.default_rng(7)
    cases = []

    def check(name, f, x, tol=1e-4):
        rep = gradcheck(f, Tensor(x), tol=tol)
        cases.append((name, rep.passed, f"max rel err {rep.max_rel_error:.2e}"))

    x = rng.uniform(-1, 1, (1, 2, 5, 5))
    w = Tensor(rng.uniform(-1, 1, (3, 2, 3, 3)))
    b = Tensor(rng.uniform(-1, 1, 3))
    check("conv2d", lambda t: tsum(nn.conv2d(t, w, b, stride=2, pad=1)), x)
    dw = Tensor(rng.uniform(-1, 1, (2, 1, 3, 3)))
    check("depthwise_conv2d", lambda t: tsum(nn.depthwise_conv2d(t, dw, pad=1)), x)
    v = rng.uniform(0.2, 1.0, (3, 4))
    check("l2_normalize", lambda t: tsum(nn.l2_normalize(t)), v)
    logits = rng.uniform(-1, 1, (4, 2))
    labels = np.array([0, 1, 1, 0])
    check("cross_entropy", lambda t: nn.softmax_cross_entropy(t, labels), logits)
    return cases


def _suite_dft():
    from .spectral import ComplexGrid, dft2d, fft_shift, naive_dft2d

    rng = np.random.default_rng(11)
    cases = []
    for n in (2, 4, 8, 16, 32):
        img = rng.uniform(0, 1, (n, n))
        fast = dft2d(img)
        slow = naive_dft2d(img)
        err = float(np.abs(fast - slow).max())
        cases.append((f"fft_vs_naive_{n}", err < 1e-9, f"max abs err {err:.2e}"))
        lhs = (np.abs(img) ** 2).sum()
        rhs = (np.abs(fast) ** 2).sum() / (n * n)
        perr = abs(lhs - rhs) / lhs
        cases.append((f"parseval_{n}", perr < 1e-10, f"rel err {perr:.2e}"))
        grid = ComplexGrid(fast[None])
        twice = fft_shift(fft_shift(grid))
        ok = np.array_equal(twice.data, grid.data)
        cases.append((f"shift_involution_{n}", ok, "exact" if ok else "mismatch"))
    return cases


def _suite_losses():
    from . import losses as losses_mod
    from .autodiff import Tensor

    cases = []
    part = losses_mod.BatchPartition(real_idx=np.array([0]), fake_idx=np.array([1]))
    loss, _ = losses_mod.center_loss(Tensor(np.array([0.3, 0.1])), part, 0.5)
    err = abs(loss.item() - 0.49)
    cases.append(("center_loss_fixture", err < 1e-12, f"got {loss.item():.12f}"))

    d = Tensor(np.array([0.2, 1.0]))
    sep, _ = losses_mod.separation_loss(d, part, 0.5)
    cases.append(("separation_inactive", abs(sep.item()) < 1e-12, f"got {sep.item()}"))
    d2 = Tensor(np.array([0.8, 0.9]))
    sep2, _ = losses_mod.separation_loss(d2, part, 0.5)
    cases.append(("separation_active", abs(sep2.item() - 0.4) < 1e-12,
                  f"got {sep2.item():.12f}"))

    logits = Tensor(np.array([[0.3, -0.2], [0.1, 0.5]]))
    labels = np.array([0, 1])
    bd = losses_mod.total_loss(logits, labels, Tensor(np.array([0.4, 0.6])), part,
                               0.0, 0.0, 0.5)
    err = abs(bd.total.item() - bd.l_cls.item())
    cases.append(("zero_weight_collapse", err < 1e-15, f"diff {err:.2e}"))
    return cases


def _suite_metrics():
    from .reference_results import REFERENCE_RESULTS
    from .train_eval import summary_from_fixture

    cases = []
    for name, fix in REFERENCE_RESULTS.items():
        s = summary_from_fixture(fix["diagonal"], fix["off_diagonal"])
        got = (s.in_domain_avg, s.cross_avg, s.gap, s.ratio)
        errs = [abs(g - e) for g, e in zip(got, fix["summary"])]
        ok = max(errs) < 5e-4
        cases.append((f"summary_{name}", ok, f"max err {max(errs):.5f}"))
    return cases


SELFTEST_SUITES = {
    "grad": _suite_grad,
    "dft": _suite_dft,
    "losses": _suite_losses,
    "metrics": _suite_metrics,
}


def cmd_selftest(args):
    names = [args.suite] if args.suite else list(SELFTEST_SUITES)
    for name in names:
        if name not in SELFTEST_SUITES:
            raise UsageError(f"unknown suite {name!r}; choose from "
                             f"{sorted(SELFTEST_SUITES)}")
    failures = []
    for name in names:
        cases = SELFTEST_SUITES[name]()
        for case, ok, detail in cases:
            status = "PASS" if ok else "FAIL"
            print(f"{status}  {name:8s} {case:28s} {detail}")
            if not ok:
                failures.append(f"{name}:{case}")
    if failures:
        print(f"selftest FAILED: {', '.join(failures)}")
        return EXIT_SELFTEST
    print("selftest passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing

def _add_common_train_flags(p):
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=64, help="image size (must match data)")
    p.add_argument("--lambda-c", type=float, default=0.5, dest="lambda_c")
    p.add_argument("--lambda-s", type=float, default=0.5, dest="lambda_s")
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="rcdn",
                                     description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="JSON file of flag defaults; explicit "
                                         "flags take precedence")
    sub = parser.add_subparsers(dest="_command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--per-domain-train", type=int, default=500, dest="per_domain_train")
    p.add_argument("--per-domain-test", type=int, default=200, dest="per_domain_test")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one detector")
    _add_common_train_flags(p)
    p.add_argument("--train-domain", required=True, choices=("FE", "I2I", "T2I"),
                   dest="train_domain")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one test domain")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test-domain", required=True, choices=("FE", "I2I", "T2I"),
                   dest="test_domain")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossdomain", help="train all three domains and report "
                                           "the full generalization matrix")
    _add_common_train_flags(p)
    p.add_argument("--ablation", action="store_true",
                   help="also run the classification-only baseline")
    p.set_defaults(func=cmd_crossdomain)

    p = sub.add_parser("selftest", help="run the built-in verification suites")
    p.add_argument("--suite", help="run only one suite "
                                   f"({', '.join(sorted(SELFTEST_SUITES))})")
    p.set_defaults(func=cmd_selftest)
    return parser


def _apply_config_file(args, argv):
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flags win
        if hasattr(args, key):
            setattr(args, key, value)
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args, argv)
        return args.func(args)
    except NanAbortError as exc:
        print(f"numerical abort: {exc} (epoch {exc.epoch}, batch {exc.batch_index})",
              file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, PpmParseError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ConfigError, UsageError, RcdnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

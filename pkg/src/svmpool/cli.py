"""Command-line front end.

Every failure prints one line ``error: <kind>: <message>`` to stderr and exits
with status 1; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from svmpool import grad, io, kermap, negbag, pipeline
from svmpool.core import Algorithm, NegativeBag, PoolingConfig, Provenance

ALGO_NAMES = {
    "enum": Algorithm.ENUMERATE,
    "alt": Algorithm.ALTERNATING,
    "tune": Algorithm.PARAM_TUNING,
    "ordered": Algorithm.ORDERED,
}
KERNEL_KEYS = {"kernel", "order", "period"}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


def field_types(cls) -> dict[str, str]:
    return {f.name: f.type if isinstance(f.type, str) else f.type.__name__ for f in dataclasses.fields(cls)}


def _coerce(kind: str, raw: str, where: str):
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise CliError("config", f"{where}: cannot parse {raw!r} as {kind}") from None


def parse_key_values(path, fields: dict[str, str]) -> dict:
    """``key=value`` lines with ``#`` comments; unknown keys are rejected with their line."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{path}:{lineno}"
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise CliError("config", f"{where}: expected key=value, got {line.strip()!r}")
        if key not in fields:
            raise CliError("config", f"{where}: unknown key {key!r} in line {line.strip()!r}")
        out[key] = _coerce(fields[key], value, where)
    return out


def load_config(path=None, **overrides) -> tuple[PoolingConfig, kermap.KernelMapConfig | None]:
    pool_fields = field_types(PoolingConfig)
    ker_fields = field_types(kermap.KernelMapConfig)
    values = parse_key_values(path, {**pool_fields, **ker_fields}) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = PoolingConfig(**{k: v for k, v in values.items() if k in pool_fields})
        ker = None
        if "kernel" in values:
            ker = kermap.KernelMapConfig(**{k: v for k, v in values.items() if k in KERNEL_KEYS})
        elif any(k in values for k in KERNEL_KEYS):
            raise ValueError("order/period given without a kernel")
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    return cfg, ker


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_gen_negatives(args) -> int:
    if args.corpus:
        corpus = io.read_negatives(args.corpus, Provenance.CORPUS_SAMPLE)
        neg = negbag.sample_corpus(corpus, args.count, args.seed)
    else:
        if not args.from_manifest:
            raise CliError("usage", "gen-negatives needs --from-manifest or --corpus")
        bags, _ = io.load_manifest_bags(args.from_manifest)
        mean, std = negbag.estimate_moments(bags)
        neg = negbag.gen_noise(negbag.NoiseSpec(mean, std, args.count, args.seed))
        if args.rectify:
            neg = NegativeBag(np.maximum(neg.features, 0.0), neg.provenance)
    io.write_negatives(neg, args.out)
    print(f"wrote {neg.m} negatives ({neg.provenance.value}) to {args.out}")
    return 0


def _report_path(args) -> str:
    return args.report or f"{args.out}.report.csv"


def cmd_pool(args) -> int:
    cfg, ker = load_config(args.config, eta=args.eta, kernel=args.kernel)
    bags, labels = io.load_manifest_bags(args.manifest)
    neg = io.read_negatives(args.neg)
    try:
        dset, reports = pipeline.pool_dataset(bags, labels, neg, cfg, ALGO_NAMES[args.algo], ker, args.jobs)
    except RuntimeError as exc:
        raise CliError("pool", str(exc)) from None
    io.write_descriptors(dset, args.out)
    lines = ["sequence_id,feasible,objective,iterations,error"]
    for r in reports:
        err = r.error.replace(",", ";").replace("\n", " ")
        lines.append(f"{r.sequence_id},{int(r.feasible)},{_fmt(r.objective)},{r.iterations},{err}")
    _write_text(_report_path(args), "\n".join(lines) + "\n")
    n_feas = sum(r.feasible for r in reports)
    n_fail = sum(bool(r.error) for r in reports)
    print(f"pooled {len(dset)}/{len(reports)} bags with {ALGO_NAMES[args.algo].value}; "
          f"feasible {n_feas}; failed {n_fail}")
    return 0


def cmd_baseline(args) -> int:
    bags, labels = io.load_manifest_bags(args.manifest)
    dset = pipeline.baseline_dataset(bags, labels, args.method, normalize=not args.raw)
    io.write_descriptors(dset, args.out)
    print(f"wrote {len(dset)} {args.method}-pooled descriptors to {args.out}")
    return 0


def model_to_json(model: pipeline.MulticlassModel) -> str:
    doc = {
        "format": "svmpool-ovr",
        "version": 1,
        "c": model.c,
        "classes": [int(c) for c in model.classes],
        "weights": [[float(v) for v in row] for row in model.weights],
        "biases": [float(v) for v in model.biases],
    }
    return json.dumps(doc, indent=1) + "\n"


def model_from_json(path) -> pipeline.MulticlassModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return pipeline.MulticlassModel(classes=np.array(doc["classes"], dtype=np.int64),
                                        weights=np.array(doc["weights"], dtype=np.float64),
                                        biases=np.array(doc["biases"], dtype=np.float64),
                                        c=float(doc["c"]))
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CliError("model", f"{path}: cannot load model ({exc})") from None


def cmd_train(args) -> int:
    dset = io.read_descriptors(args.desc)
    model = pipeline.train_classifier(dset, args.c, jobs=args.jobs)
    _write_text(args.out, model_to_json(model))
    print(f"trained {model.classes.shape[0]} one-vs-rest classifiers on {len(dset)} descriptors")
    return 0


def cmd_eval(args) -> int:
    dset = io.read_descriptors(args.desc)
    model = model_from_json(args.model)
    res = pipeline.evaluate(model, dset)
    classes = [int(c) for c in res["classes"]]
    width = max(6, *(len(str(c)) for c in classes))
    lines = [f"accuracy {res['accuracy']:.4f} ({int(np.trace(res['confusion']))}/{res['n']})",
             "confusion (rows: true class, columns: predicted class)",
             " " * width + "".join(f"{c:>{width + 1}}" for c in classes)]
    for c, row in zip(classes, res["confusion"]):
        lines.append(f"{c:>{width}}" + "".join(f"{int(v):>{width + 1}}" for v in row))
    text = "\n".join(lines) + "\n"
    doc = {"accuracy": res["accuracy"], "n": res["n"], "classes": classes,
           "confusion": [[int(v) for v in row] for row in res["confusion"]]}
    if args.report:
        _write_text(args.report, text)
        _write_text(f"{args.report}.json", json.dumps(doc, indent=1) + "\n")
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    results = grad.gradcheck(seed=args.seed, instances=args.instances, tol=args.tol, h=args.h)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"instance {r.index:3d} p={r.p} n_tot={r.n_tot} active={r.n_active} "
              f"max_rel_error={r.max_rel_error:.3e} {status}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} instances within {args.tol:g}")
    return 0 if failed == 0 else 1


SYNTH_EXTRA = {"train_fraction": "float", "split_seed": "int"}


def cmd_synth(args) -> int:
    fields = {**field_types(pipeline.SyntheticSpec), **SYNTH_EXTRA}
    values = parse_key_values(args.spec_file, fields) if args.spec_file else {}
    train_fraction = values.pop("train_fraction", 0.7)
    split_seed = values.pop("split_seed", None)
    try:
        spec = pipeline.SyntheticSpec(**values)
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    if split_seed is None:
        split_seed = spec.seed
    bags, labels = pipeline.make_synthetic(spec)
    out = Path(args.out_dir)
    (out / "bags").mkdir(parents=True, exist_ok=True)
    entries = []
    for bag, lab in zip(bags, labels):
        rel = f"bags/{bag.sequence_id}.svmp"
        io.write_bag(bag, out / rel)
        entries.append((rel, int(lab)))
    io.write_manifest(entries, out / "manifest.csv")
    train, test = pipeline.stratified_split(labels, train_fraction, split_seed)
    io.write_manifest([entries[i] for i in train], out / "train.csv")
    io.write_manifest([entries[i] for i in test], out / "test.csv")
    print(f"wrote {len(bags)} bags ({spec.classes} classes) to {out}; "
          f"train {len(train)}, test {len(test)}")
    return 0


def cmd_bench(args) -> int:
    cfg, ker = load_config(args.config, eta=args.eta)
    bags, labels = io.load_manifest_bags(args.manifest)
    neg = io.read_negatives(args.neg)
    if args.limit:
        bags, labels = bags[: args.limit], labels[: args.limit]
    rows = []
    for name in args.algos.split(","):
        if name not in ALGO_NAMES:
            raise CliError("usage", f"unknown algorithm {name!r}; choose from {sorted(ALGO_NAMES)}")
        algo = ALGO_NAMES[name]
        times, skipped = [], 0
        for bag in bags:
            if algo is Algorithm.ENUMERATE and bag.n > cfg.enumeration_cap:
                skipped += 1
                continue
            t0 = time.perf_counter()
            pipeline.pool_bag(bag, neg, cfg, algo)
            times.append(time.perf_counter() - t0)
        t = np.array(times) if times else np.array([np.nan])
        rows.append((algo.value, len(times), skipped, float(np.mean(t)), float(np.median(t)), float(np.max(t))))
    header = f"{'algorithm':<14}{'bags':>6}{'skipped':>9}{'mean_s':>12}{'median_s':>12}{'max_s':>12}"
    print(header)
    for r in rows:
        print(f"{r[0]:<14}{r[1]:>6}{r[2]:>9}{r[3]:>12.5f}{r[4]:>12.5f}{r[5]:>12.5f}")
    if args.out:
        lines = ["algorithm,bags,skipped,mean_s,median_s,max_s"]
        lines += [f"{r[0]},{r[1]},{r[2]},{r[3]:.6f},{r[4]:.6f},{r[5]:.6f}" for r in rows]
        _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svmpool", description="SVM pooling of feature sequences.")
    ap.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-negatives", help="write a negative bag")
    p.add_argument("--from-manifest")
    p.add_argument("--corpus", help="sample rows from this negative corpus instead of noise")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rectify", action="store_true", help="clip noise at zero (for kernel maps)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_negatives)

    p = sub.add_parser("pool", help="pool every bag of a manifest into a descriptor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--neg", required=True)
    p.add_argument("--algo", choices=sorted(ALGO_NAMES), default="tune")
    p.add_argument("--eta", type=float)
    p.add_argument("--kernel", choices=list(kermap.KERNELS))
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="per-bag CSV report (default: <out>.report.csv)")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("baseline", help="average or max pooling")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=["avg", "max"], required=True)
    p.add_argument("--raw", action="store_true", help="skip unit-norm normalization")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("train", help="train one-vs-rest linear SVMs on descriptors")
    p.add_argument("--desc", required=True)
    p.add_argument("--c", type=float, default=pipeline.DEFAULT_CLASSIFIER_C)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and confusion matrix")
    p.add_argument("--desc", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", help="text report path; JSON goes to <report>.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the layer Jacobian")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--h", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="materialize a synthetic dataset")
    p.add_argument("--spec-file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="per-sequence pooling time per algorithm")
    p.add_argument("--manifest", required=True)
    p.add_argument("--neg", required=True)
    p.add_argument("--algos", default="alt,tune")
    p.add_argument("--eta", type=float)
    p.add_argument("--config")
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def _kind(exc: Exception) -> str:
    if isinstance(exc, CliError):
        return exc.kind
    if isinstance(exc, io.FormatError):
        return exc.kind
    if isinstance(exc, OSError):
        return "io"
    return type(exc).__name__


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {_kind(exc)}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

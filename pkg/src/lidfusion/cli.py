"""Command-line entry point.

Subcommands: gen-data, train, eval, predict, compare, gradcheck. Every
command that writes an output also writes a `<output>.manifest.json`
recording the resolved configuration, seeds and input/output hashes, so a
run can be reproduced exactly from its manifest.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys

import numpy as np

from . import __version__, backends, dnn, lattice, synthgen
from .errors import InputError, LidFusionError
from .evaluation import Router, compare_backends, evaluate, render_comparison, EvalReport
from .signals import (
    NormConfig,
    PairSample,
    SignalVector,
    build_feature_matrix,
    read_jsonl,
    write_jsonl,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command: str, config: dict, inputs: list, outputs: list):
    manifest = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest()[:16],
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "versions": {
            "lidfusion": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    with open(f"{out_path}.manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _norm_config_path(data_path: str) -> str:
    stem = data_path[:-6] if data_path.endswith(".jsonl") else data_path
    return f"{stem}.norm_config.json"


def _load_norm_config(args) -> NormConfig:
    path = args.norm_config or _norm_config_path(args.data)
    with open(path) as f:
        return NormConfig.from_json(f.read())


def _load_json_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def cmd_gen_data(args) -> int:
    overrides = _load_json_file(args.config)
    if args.utterances is not None:
        overrides["utterance_count"] = args.utterances
    overrides["rng_seed"] = args.seed
    config = synthgen.GeneratorConfig(**overrides)
    corpus = synthgen.generate(config)
    write_jsonl(corpus.samples, args.out)
    norm_path = _norm_config_path(args.out)
    with open(norm_path, "w") as f:
        f.write(corpus.norm_config.to_json())
        f.write("\n")
    _write_manifest(
        args.out, "gen-data", dataclasses.asdict(config),
        inputs=[args.config] if args.config else [],
        outputs=[args.out, norm_path],
    )
    print(f"wrote {len(corpus.samples)} samples to {args.out}")
    return 0


def _split_samples(samples, which: str, ratio: float, seed: int):
    if which == "all":
        return samples
    train, test = synthgen.split_by_utterance(samples, ratio=ratio, seed=seed)
    return train if which == "train" else test


def cmd_train(args) -> int:
    samples = read_jsonl(args.data)
    norm_config = _load_norm_config(args)
    part = _split_samples(samples, args.split, args.split_ratio, args.split_seed)
    overrides = _load_json_file(args.config)

    if args.backend == "baseline":
        backend = backends.BaselineBackend()
        train_config: dict = {}
    elif args.backend == "lattice":
        overrides.setdefault("seed", args.seed)
        config = lattice.LatticeTrainConfig(**overrides)
        prepared = synthgen.prepare_training_set(part, mask_augment=False)
        fv = build_feature_matrix(prepared, norm_config)
        y = np.array([s.label for s in prepared], dtype=float)
        w = np.array([s.weight for s in prepared])
        model = lattice.train(fv, y, w, norm_config, config)
        backend = backends.LatticeBackend(model)
        train_config = dataclasses.asdict(config)
    else:
        overrides.setdefault("seed", args.seed)
        config = dnn.DnnConfig(**overrides)
        prepared = synthgen.prepare_training_set(part, mask_augment=not args.no_mask_augment)
        fv = build_feature_matrix(prepared, norm_config)
        y = np.array([s.label for s in prepared], dtype=float)
        w = np.array([s.weight for s in prepared])
        ensemble = dnn.train_ensemble(fv, y, w, config, n_jobs=args.threads)
        backend = backends.DnnBackend(ensemble, norm_config)
        train_config = config.to_dict()

    backends.save_model(backend, args.out)
    _write_manifest(
        args.out, "train",
        {
            "backend": args.backend,
            "seed": args.seed,
            "split": args.split,
            "split_ratio": args.split_ratio,
            "split_seed": args.split_seed,
            "train_config": train_config,
        },
        inputs=[args.data],
        outputs=[args.out],
    )
    print(f"trained {args.backend} model on {len(part)} samples -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    samples = read_jsonl(args.data)
    part = _split_samples(samples, args.split, args.split_ratio, args.split_seed)
    backend = backends.load_model(args.model)
    router = Router(backend=backend, neither_policy=args.neither_policy)
    report = evaluate(router, part)
    with open(args.report, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(
        args.report, "eval",
        {
            "split": args.split,
            "split_ratio": args.split_ratio,
            "split_seed": args.split_seed,
            "neither_policy": args.neither_policy,
        },
        inputs=[args.model, args.data],
        outputs=[args.report],
    )
    print(report.render_text())
    return 0


def cmd_predict(args) -> int:
    backend = backends.load_model(args.model)
    try:
        side_a = SignalVector.from_dict(json.loads(args.a))
        side_b = SignalVector.from_dict(json.loads(args.b))
        sample = PairSample(
            side_a=side_a, side_b=side_b,
            lang_a=args.lang_a, lang_b=args.lang_b,
            label=1, utterance_id="oneshot",
        )
    except (KeyError, json.JSONDecodeError, InputError) as exc:
        print(f"invalid signal payload: {exc}", file=sys.stderr)
        return 2
    prob = float(backend.pair_probability([sample])[0])
    decision = "A" if prob >= 0.5 else "B"
    print(f"{prob:.6f} {decision}")
    return 0


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        with open(path) as f:
            reports.append(EvalReport.from_dict(json.load(f)))
    table = compare_backends(reports, baseline=args.baseline)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(table, f, indent=2, sort_keys=True)
            f.write("\n")
        _write_manifest(args.out, "compare", {"baseline": args.baseline},
                        inputs=args.reports, outputs=[args.out])
    print(render_comparison(table))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    worst = run_gradcheck(n_draws=args.draws, seed=args.seed)
    print(f"max relative gradient error over {args.draws} draws: {worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance:g}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidfusion",
        description="Pairwise signal-combination classifiers for language identification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic pairwise corpus")
    p.add_argument("--config", help="JSON file with generator config overrides")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--utterances", type=int, help="shortcut for utterance_count")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_gen_data)

    def add_split_args(p):
        p.add_argument("--split", choices=["train", "test", "all"])
        p.add_argument("--split-ratio", type=float, default=0.8)
        p.add_argument("--split-seed", type=int, default=0)

    p = sub.add_parser("train", help="train a backend on the train partition")
    p.add_argument("--backend", choices=["lattice", "dnn", "baseline"], required=True)
    p.add_argument("--data", required=True, help="corpus JSONL")
    p.add_argument("--norm-config", help="normalization JSON (default: next to --data)")
    p.add_argument("--config", help="backend train-config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="parallel ensemble members")
    p.add_argument("--no-mask-augment", action="store_true",
                   help="disable both-side mask augmentation (dnn only)")
    add_split_args(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train, split_default="train")

    p = sub.add_parser("eval", help="evaluate a model on the test partition")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--neither-policy", choices=["langid_compare", "model"],
                   default="langid_compare")
    add_split_args(p)
    p.add_argument("--report", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval, split_default="test")

    p = sub.add_parser("predict", help="score one signal pair")
    p.add_argument("--model", required=True)
    p.add_argument("--a", required=True, help="side-a signals as JSON")
    p.add_argument("--b", required=True, help="side-b signals as JSON")
    p.add_argument("--lang-a", default="a")
    p.add_argument("--lang-b", default="b")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="tabulate reports against a baseline")
    p.add_argument("--baseline", default="baseline")
    p.add_argument("--out", help="write comparison JSON here")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "split", None) is None and hasattr(args, "split_default"):
        args.split = args.split_default
    try:
        return args.func(args)
    except (LidFusionError, OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

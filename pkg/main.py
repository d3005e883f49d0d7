import argparse
import json
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from src.config import (Complexity, DataGenerationConfig, NoiseConfig, RuntimeConfig, apply_complexity_defaults,
                        load_config, serialize_config, validate)
from src.errors import ConfigError, TsBenchError
from src.formats import load_dataset, load_scm, save_dataset, save_graph, save_links, save_scm
from src.granger import DEFAULT_CV_ALPHAS, GrangerParams, discover
from src.harness import (SCALE_CHOICES, Scale, export_results, load_experiment_spec, preset_experiments,
                         run_experiment, score_external)
from src.logging_setup import configure_logging
from src.pipeline import generate
from src.simulate import regenerate

logger = logging.getLogger("tsbench")

load_dotenv()

OUTPUT_ROOT_ENV = "TSBENCH_OUTPUT_ROOT"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


def output_root() -> Path:
    return Path(os.getenv(OUTPUT_ROOT_ENV, "output"))


def _out_dir(args, default_name: str) -> Path:
    path = Path(args.out) if args.out else output_root() / default_name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _floats(text: str):
    return [float(token) for token in text.split(",") if token.strip()]


def _ints(text: str):
    return [int(token) for token in text.split(",") if token.strip()]


def cmd_generate(args) -> int:
    partial = load_config(args.config) if args.config else DataGenerationConfig()
    result = generate(partial, args.seed, args.complexity)
    out = _out_dir(args, f"generate-{args.seed}")
    (out / "config.yaml").write_text(serialize_config(result.config), encoding="utf-8")
    save_graph(result.graph, out / "graph.txt")
    save_scm(result.scm, out / "scm.txt")
    for k, dataset in enumerate(result.datasets):
        save_dataset(dataset, out / f"data_{k}.csv", scm_file="scm.txt")
    logger.info("Wrote graph, SCM and %d dataset(s) to %s", len(result.datasets), out)
    return EXIT_OK


def cmd_regen(args) -> int:
    config = apply_complexity_defaults(load_config(args.config))
    scm = load_scm(args.scm)
    noise = None
    if args.noise_variance is not None:
        bounds = _floats(args.noise_variance)
        noise = NoiseConfig(noise_variance=bounds[0] if len(bounds) == 1 else tuple(bounds))
    runtime_update = {}
    if args.num_samples:
        runtime_update["num_samples"] = _ints(args.num_samples)
    if args.seeds:
        runtime_update["data_generating_seeds"] = _ints(args.seeds)
    runtime = RuntimeConfig(**runtime_update) if runtime_update else None
    datasets = regenerate(scm, config, noise_override=noise, runtime_override=runtime)
    out = _out_dir(args, "regen")
    for k, dataset in enumerate(datasets):
        save_dataset(dataset, out / f"data_{k}.csv", scm_file=str(args.scm))
    logger.info("Wrote %d regenerated dataset(s) to %s", len(datasets), out)
    return EXIT_OK


def cmd_discover(args) -> int:
    params = GrangerParams(cv_alphas=_floats(args.alphas), max_lag=args.max_lag, k_folds=args.k_folds,
                           significance=args.significance, shuffle_folds=args.shuffle_folds, seed=args.seed)
    links = discover(load_dataset(args.data), params, l_max=args.l_max)
    out = Path(args.out) if args.out else _out_dir(args, "discover") / "prediction.txt"
    save_links(links, out)
    logger.info("Wrote %d predicted link(s) to %s", len(links.links), out)
    return EXIT_OK


def cmd_score(args) -> int:
    score = score_external(args.truth, args.pred, args.l_max)
    text = json.dumps(score.as_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.spec:
        spec = load_experiment_spec(args.spec)
    else:
        presets = {s.name.value: s for s in preset_experiments(args.scale, master_seed=args.seed)}
        if args.preset not in presets:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(presets)}")
        spec = presets[args.preset]
    if args.method:
        spec = type(spec).model_validate({**spec.model_dump(), "methods": args.method})
    out = _out_dir(args, f"experiment-{spec.name.value}")
    work_dir = Path(args.work_dir) if args.work_dir else out / "work"
    result = run_experiment(spec, work_dir=work_dir, workers=args.workers)
    manifest = export_results(result, out, pdf=args.pdf)
    for name, digest in manifest.items():
        print(f"{digest}  {name}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = apply_complexity_defaults(load_config(args.config), args.complexity)
    report = validate(config)
    for finding in report.findings:
        print(finding)
    if report.ok:
        print("config is valid")
        return EXIT_OK
    return EXIT_VALIDATION


def cmd_presets(args) -> int:
    for spec in preset_experiments(args.scale):
        points = ", ".join(p.label for p in spec.sweep)
        print(f"{spec.name.value}: {spec.scm_count} SCMs x {spec.samples_per_dataset} samples; points: {points}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsbench", description="Synthetic time-series causal benchmark")
    parser.add_argument("--log-level", default=None, help="overrides TSBENCH_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="config -> graph, SCM and dataset files")
    p.add_argument("--config", help="YAML config; omitted fields come from the complexity preset")
    p.add_argument("--complexity", choices=[c.value for c in Complexity])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("regen", help="stored SCM + noise/runtime overrides -> datasets")
    p.add_argument("--scm", required=True)
    p.add_argument("--config", required=True, help="the config.yaml written by generate")
    p.add_argument("--noise-variance", help="a variance or 'lo,hi'")
    p.add_argument("--num-samples", help="comma-separated sample counts")
    p.add_argument("--seeds", help="comma-separated data seeds")
    p.add_argument("--out")
    p.set_defaults(func=cmd_regen)

    p = sub.add_parser("discover", help="dataset CSV -> prediction file")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["granger"], default="granger")
    p.add_argument("--max-lag", type=int, default=5)
    p.add_argument("--alphas", default=",".join(str(a) for a in DEFAULT_CV_ALPHAS))
    p.add_argument("--k-folds", type=int, default=5)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--l-max", type=int, default=None)
    p.add_argument("--shuffle-folds", action="store_true", help="shuffled instead of contiguous CV folds")
    p.add_argument("--seed", type=int, default=0, help="seeds the fold shuffle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("score", help="truth + prediction -> metrics")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--l-max", type=int, default=5)
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; scoring draws nothing random")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="preset or spec file -> result directory")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset")
    group.add_argument("--spec")
    p.add_argument("--scale", choices=SCALE_CHOICES, default=Scale.DESK.value)
    p.add_argument("--seed", type=int, default=0, help="master seed for presets")
    p.add_argument("--method", action="append", help="granger or name=prediction-directory; repeatable")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--work-dir")
    p.add_argument("--pdf", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate", help="report config findings")
    p.add_argument("--config", required=True)
    p.add_argument("--complexity", choices=[c.value for c in Complexity])
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("presets", help="list preset experiments")
    p.add_argument("--scale", choices=SCALE_CHOICES, default=Scale.DESK.value)
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_VALIDATION
    except (TsBenchError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
    except (ValidationError, ValueError) as e:
        logger.error("Invalid argument: %s", e)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

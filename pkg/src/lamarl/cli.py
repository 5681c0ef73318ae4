"""Command-line entry point: ``lamarl <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("lamarl")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        use_prior=False if getattr(args, "no_prior", False) else None,
        output_dir=getattr(args, "out", None),
    )


def _progress(row: dict) -> None:
    if row["episode"] % 10 == 0:
        log.info("episode %d  reward %.3f  M1 %.3f  M2 %.3f  collisions %d",
                 row["episode"], row["mean_reward"], row["M1"], row["M2"], row["collisions"])


def cmd_train(args) -> int:
    from .experiments import run_training

    cfg = _config(args)
    manifest = run_training(cfg, Path(cfg.output_dir), reuse=args.reuse, progress=_progress)
    print(f"run written to {cfg.output_dir} (digest {manifest['digest']})")
    return 0


def cmd_eval(args) -> int:
    from .experiments import evaluate, prior_controller
    from .region import load_shape_library

    cfg = _config(args)
    shapes = None
    if args.shapes:
        shapes = load_shape_library(args.shapes, args.scale or cfg.scale)
    controller = prior_controller(cfg.policy_spec()) if args.prior_only else None
    if controller is None and not args.checkpoint:
        print("eval needs --checkpoint (or --prior-only)", file=sys.stderr)
        return 2
    rows = evaluate(cfg, Path(cfg.output_dir), args.checkpoint, shapes, args.steps, args.seed or 0, controller,
                    trajectories=not args.no_trajectories)
    for row in rows:
        if row["status"] == "ok":
            print(f"{row['shape']:>10}  M1 {row['M1_mean']:.3f} ({row['M1_std']:.3f})  "
                  f"M2 {row['M2_mean']:.3f} ({row['M2_std']:.3f})  collisions {row['collisions']}")
        else:
            print(f"{row['shape']:>10}  {row['status']}")
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def cmd_ablate_prior(args) -> int:
    from .experiments import ablate_prior

    cfg = _config(args)
    report = ablate_prior(cfg, args.seeds, Path(cfg.output_dir), reuse=not args.fresh,
                          progress=lambda tag, row: _progress(row))
    for r in report["per_seed"]:
        se = "n/a" if r["SE"] is None else f"{r['SE']:.3f}"
        print(f"seed {r['seed']}: with {r['episodes_with']}  without {r['episodes_without']}  SE {se}  [{r['status']}]")
    med = report["median_SE"]
    print("median SE:", "undefined" if med is None else f"{med:.3f}")
    return 0 if med is not None else 1


def _client(args):
    from .llmgen.client import HttpClient, StubClient

    if args.stub_llm:
        return StubClient(args.stub_llm)
    return HttpClient(model=args.model)


def _ask_human(outcome) -> bool:
    print(json.dumps(outcome.review.to_dict(), indent=2))
    answer = input("accept the generated functions? [y/N] ")
    return answer.strip().lower() in ("y", "yes")


def cmd_generate(args) -> int:
    from .llmgen.pipeline import TranscriptLog, run_pipeline
    from .llmgen.prompt import shape_assembly_bundle

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    transcripts = TranscriptLog(out / "transcripts.jsonl")
    outcome = run_pipeline(_client(args), shape_assembly_bundle(), transcripts, args.temperature,
                           confirm=_ask_human if args.human_review else None)
    if outcome.result is not None:
        (out / "policy.json").write_text(outcome.result.policy_spec.to_json(indent=2) + "\n", encoding="utf-8")
        (out / "reward.json").write_text(outcome.result.reward_spec.to_json(indent=2) + "\n", encoding="utf-8")
    report = {"error": outcome.error, "review": outcome.review.to_dict() if outcome.review else None,
              "analysis": outcome.analysis.to_dict() if outcome.analysis else None}
    (out / "review.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if outcome.error:
        print(f"generation failed: {outcome.error}", file=sys.stderr)
        return 1
    if not outcome.review.passed:
        gaps = list(outcome.review.missing_skills) + list(outcome.review.missing_subgoals)
        print("review failed; missing: " + ", ".join(gaps), file=sys.stderr)
        return 1
    print(f"specs written to {out}; review passed")
    return 0


def cmd_ablate_prompt(args) -> int:
    from .llmgen.harness import success_rate_harness
    from .llmgen.pipeline import TranscriptLog
    from .llmgen.prompt import shape_assembly_bundle

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = success_rate_harness(_client(args), shape_assembly_bundle(), args.trials, args.variants,
                                   TranscriptLog(out / "transcripts.jsonl"), args.temperature, args.workers)
    (out / "success_rates.json").write_text(
        json.dumps({k: v.to_dict() for k, v in results.items()}, indent=2) + "\n", encoding="utf-8")
    for name, res in results.items():
        print(f"{name:>8}: {res.successes}/{res.trials} = {100 * res.rate:.2f}%")
    return 0


def cmd_export_plots(args) -> int:
    """Per-figure CSVs: training curves of every run below ``run_root`` and the SE table."""
    from .experiments import MANIFEST, TRAIN_LOG, read_manifest
    from .marl.train import read_log

    root, out = Path(args.runs), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = sorted(p.parent for p in root.rglob(MANIFEST) if (p.parent / TRAIN_LOG).exists())
    if not runs:
        print(f"no training runs under {root}", file=sys.stderr)
        return 1
    with open(out / "training_curves.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "seed", "use_prior", "episode", "mean_reward", "M1", "M2", "collisions"])
        for run in runs:
            m = read_manifest(run)
            for row in read_log(run / TRAIN_LOG):
                writer.writerow([run.relative_to(root).as_posix(), m["seed"], m["config"]["use_prior"],
                                 row["episode"], row["mean_reward"], row["M1"], row["M2"], row["collisions"]])
    se_path = root / "se_report.json"
    if se_path.exists():
        report = json.loads(se_path.read_text(encoding="utf-8"))
        with open(out / "sample_efficiency.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["seed", "episodes_with", "episodes_without", "SE", "status"])
            for r in report["per_seed"]:
                writer.writerow([r["seed"], r["episodes_with"], r["episodes_without"], r["SE"], r["status"]])
    print(f"plot data written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lamarl", description="Swarm shape assembly with prior-guided MADDPG.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="TOML experiment config (defaults reproduce the full-scale setup)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default=out_default, help="output directory (overrides output_dir)")

    p = sub.add_parser("train", help="train a policy")
    common(p)
    p.add_argument("--no-prior", action="store_true", help="train without the prior (alpha = 0)")
    p.add_argument("--reuse", action="store_true", help="skip if a complete run with the same config exists")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on each shape")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint.bin from a training run")
    p.add_argument("--shapes", help="shape directory (default: the config's library)")
    p.add_argument("--scale", type=float, help="cell size for --shapes")
    p.add_argument("--steps", type=int, help="rollout length (default 500)")
    p.add_argument("--prior-only", action="store_true", help="roll out the prior policy instead of a checkpoint")
    p.add_argument("--no-trajectories", action="store_true", help="skip the JSONL trajectory files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-prior", help="paired runs with and without the prior; sample efficiency")
    common(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--fresh", action="store_true", help="retrain even if matching runs exist")
    p.set_defaults(func=cmd_ablate_prior)

    for name, func, helptext in (("generate", cmd_generate, "run the function-generation pipeline"),
                                 ("ablate-prompt", cmd_ablate_prompt, "success rates over prompt variants")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--out", default=f"runs/{name}", help="output directory")
        p.add_argument("--stub-llm", metavar="DIR", help="answer from fixture files instead of the network")
        p.add_argument("--model", help="model id for the HTTP client")
        p.set_defaults(func=func)
    sub.choices["generate"].add_argument("--human-review", action="store_true", help="confirm the review by hand")
    sub.choices["generate"].add_argument("--temperature", type=float, default=0.0)
    sub.choices["ablate-prompt"].add_argument("--trials", type=int, default=200)
    sub.choices["ablate-prompt"].add_argument("--variants", nargs="+", default=["full", "no_apis", "no_cot", "neither"])
    sub.choices["ablate-prompt"].add_argument("--temperature", type=float, default=1.0)
    sub.choices["ablate-prompt"].add_argument("--workers", type=int, default=1)

    p = sub.add_parser("export-plots", help="collect CSVs for plotting")
    p.add_argument("--runs", required=True, help="directory holding run folders")
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_export_plots)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface module errors with context, nonzero exit
        from .llmgen.client import LLMError

        if isinstance(exc, LLMError):
            print(f"LLM error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())

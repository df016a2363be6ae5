"""
LatentKit CLI: Batch front end for ingestion, metrics, training, sampling and verification.

    python -m latentkit synth --problems 10 --seed 7 --out a.lttk
    python -m latentkit metrics --in a.lttk --out m.csv
    python -m latentkit train-lrm --in train.lttk --out model.lrm --seed 1
    python -m latentkit lto --in test.lttk --model model.lrm --seed 3
    python -m latentkit verify theorem2 --n 5 --beta 0.25 --draws 200000 --seed 7

Exit codes: 0 ok, 1 usage or config error, 2 data or format error,
3 a verification found a violated property.
"""
import argparse
import logging
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import yaml
from pydantic import ValidationError

from latentkit import __version__
from latentkit.config import RunConfig, load_config
from latentkit.core.container import load_container, save_container
from latentkit.core.geometry import PCA_COLUMNS, pca_project, pca_project_per_problem, projection_rows
from latentkit.core.report import Report, emit_to_path
from latentkit.core.sampler import (
    majority_vote, select_problems, summarize_selection, weighted_majority_vote,
)
from latentkit.core.spectral import (
    METRIC_COLUMNS, SUMMARY_COLUMNS, MetricEngine, profile_rows, summarize_profiles,
)
from latentkit.core.synthetic import generate
from latentkit.core.trajectory import (
    Label, TrajectorySet, ensure_valid, merge_sets, truncate_prefix, validate_set,
)
from latentkit.core.verification import check_reward_bound, check_sampler_equivalence
from latentkit.errors import LatentKitError, VerificationFailure
from latentkit.trainer.evaluate import evaluate
from latentkit.trainer.export import load_model, save_model
from latentkit.trainer.gradcheck import gradient_check
from latentkit.trainer.models.reward_model import init_model
from latentkit.trainer.train import train_with_history

logger = logging.getLogger("latentkit")

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(message)s"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

SELECTION_COLUMNS = ["problem_id", "candidates", "chosen_sample", "answer_id", "reward", "phi",
                     "rejected", "lto_correct", "majority_answer", "weighted_answer"]
VOTE_COLUMNS = ["problem_id", "candidates", "majority_answer", "majority_correct",
                "weighted_answer", "weighted_correct"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# ===============================================================
#  Helpers
# ===============================================================

def _stdout():
    return getattr(sys.stdout, "buffer", sys.stdout)


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"handler", "command", "verify_command", "verbose", "quiet"}
    return {k.replace("_", "-"): v for k, v in vars(args).items() if k not in skip and v is not None}


def _report(args, title: str = "", seed: Optional[int] = None) -> Report:
    return Report(subcommand=args.command if not getattr(args, "verify_command", None)
                  else f"verify {args.verify_command}",
                  flags=_flags(args), seed=seed, title=title)


def _load_inputs(paths: List[str], prefix_steps: Optional[int] = None, check: bool = True) -> TrajectorySet:
    tset = merge_sets([load_container(p) for p in paths])
    if check:
        ensure_valid(tset)
    if prefix_steps is not None:
        tset = truncate_prefix(tset, prefix_steps)
    return tset


def _has_labels(tset: TrajectorySet) -> bool:
    return any(s.is_labeled for s in tset.samples)


# ===============================================================
#  Subcommands
# ===============================================================

def cmd_synth(args, cfg: RunConfig) -> int:
    syn = cfg.synthetic.with_overrides(
        problems=args.problems, samples_per_problem=args.samples_per_problem, steps=args.steps,
        tokens=args.tokens, dim=args.dim, correct_rate=args.correct_rate, noise_std=args.noise_std,
        steps_noise=args.steps_noise, token_noise=args.token_noise, separation=args.separation,
        dispersion_ratio=args.dispersion_ratio, contraction=args.contraction,
        answer_vocab=args.answer_vocab, incorrect_attractors=args.incorrect_attractors,
        first_problem_id=args.first_problem_id, seed=args.seed,
    )
    tset = generate(syn)
    n_bytes = save_container(tset, args.out)
    correct = sum(1 for s in tset.samples if s.label == Label.CORRECT)
    report = _report(args, "synthetic trajectories", seed=syn.seed)
    report.add("problems", syn.problems).add("trajectories", len(tset))
    report.add("shape", f"T={syn.steps} L={syn.tokens} d={syn.dim}")
    report.add("correct_fraction", correct / len(tset)).add("bytes", n_bytes).add("out", args.out)
    emit_to_path(report, "text", args.report, _stdout())
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    tset = _load_inputs(args.inputs, check=False)
    result = validate_set(tset)
    report = _report(args, "validation")
    report.add("samples", len(tset)).add("violations", len(result)).add("valid", result.ok)
    report.columns = ["sample_index", "reason"]
    report.rows = [{"sample_index": v.sample_index, "reason": v.reason.replace(" ", "_")}
                   for v in result.violations]
    emit_to_path(report, "text", args.out, _stdout())
    return EXIT_OK if result.ok else EXIT_DATA


def cmd_metrics(args, cfg: RunConfig) -> int:
    mc = cfg.metrics.with_overrides(alpha=args.alpha, trim=args.trim, workers=args.workers,
                                    intrinsic=False if args.no_intrinsic else None)
    tset = _load_inputs(args.inputs)
    L, _ = tset.token_shape
    intrinsic = mc.intrinsic
    if intrinsic and L < 3:
        logger.warning(f"L={L} < 3 tokens per step: intrinsic dimension skipped")
        intrinsic = False
    engine = MetricEngine(alpha=mc.alpha, trim=mc.trim, intrinsic=intrinsic, workers=mc.workers)
    profiles = engine.run(list(tset.samples))
    rows = profile_rows(tset, profiles)

    emit_to_path(Report("metrics", columns=METRIC_COLUMNS, rows=rows), "csv", args.out, _stdout())
    if args.summary:
        emit_to_path(Report("metrics", columns=SUMMARY_COLUMNS, rows=summarize_profiles(rows)),
                     "csv", args.summary, _stdout())
    logger.info(f"Metrics for {len(tset)} trajectories ({len(rows)} rows)")
    return EXIT_OK


def cmd_pca(args, cfg: RunConfig) -> int:
    mc = cfg.metrics.with_overrides(pca_components=args.components, pooling=args.pooling)
    tset = _load_inputs(args.inputs)
    if args.joint:
        projections = pca_project(tset, mc.pca_components, mc.pooling)
    else:
        per_problem = pca_project_per_problem(tset, mc.pca_components, mc.pooling)
        projections = [p for group in per_problem.values() for p in group]
    columns = PCA_COLUMNS[:4] + [f"pc{k + 1}" for k in range(min(3, mc.pca_components))]
    emit_to_path(Report("pca", columns=columns, rows=projection_rows(projections)),
                 "csv", args.out, _stdout())
    return EXIT_OK


def _model_config(args, cfg: RunConfig, input_dim: int):
    return cfg.model.with_overrides(
        input_dim=input_dim, model_dim=args.model_dim, attention_blocks=args.blocks,
        heads=args.heads, ffn_multiplier=args.ffn_multiplier, head_hidden=args.head_hidden,
        pooling=args.pooling, pooling_k=args.pooling_k, seed=args.seed,
    )


def cmd_train_lrm(args, cfg: RunConfig) -> int:
    data = _load_inputs(args.inputs, args.prefix_steps)
    validation = _load_inputs([args.val], args.prefix_steps) if args.val else None
    mcfg = _model_config(args, cfg, data.token_shape[1])
    tcfg = cfg.training.with_overrides(epochs=args.epochs, learning_rate=args.lr,
                                       batch_size=args.batch_size, shuffle_seed=args.seed)
    model, history = train_with_history(init_model(mcfg), data, tcfg, validation)
    save_model(model, args.out)

    report = _report(args, "reward model training", seed=args.seed)
    report.add("samples", len(data.labeled)).add("parameters", model.num_parameters)
    report.add("final_loss", history.losses[-1] if history.losses else None).add("model", args.out)
    report.columns = ["epoch", "loss", "val_auc"]
    report.rows = [{"epoch": i + 1, "loss": loss, "val_auc": auc}
                   for i, (loss, auc) in enumerate(zip(history.losses, history.val_auc))]
    emit_to_path(report, "text", args.report, _stdout())
    return EXIT_OK


def cmd_eval_lrm(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    data = _load_inputs(args.inputs, args.prefix_steps)
    result = evaluate(model, data)
    report = _report(args, "reward model evaluation")
    report.add("count", result.count).add("positives", result.positives)
    report.add("accuracy", result.accuracy).add("roc_auc", result.roc_auc)
    emit_to_path(report, "text", args.out, _stdout())
    return EXIT_OK


def cmd_lto(args, cfg: RunConfig) -> int:
    sc = cfg.sampler.with_overrides(budget=args.budget, required=args.required, beta=args.beta,
                                    max_iterations=args.max_iterations, seed=args.seed,
                                    exponential_vote=True if args.exp_vote else None)
    model = load_model(args.model)
    tset = _load_inputs(args.inputs)
    rewards = model.score(tset.samples)
    selections = select_problems(tset, rewards, sc)

    report = _report(args, "latent thinking optimization", seed=sc.seed)
    report.add("problems", len(selections)).add("budget", sc.budget).add("beta", sc.beta)
    if _has_labels(tset):
        summary = summarize_selection(selections)
        report.add("base_rate", summary.base_rate).add("lto_rate", summary.lto_rate)
        report.add("majority_rate", summary.majority_rate).add("weighted_rate", summary.weighted_rate)
    report.columns = SELECTION_COLUMNS
    report.rows = [{
        "problem_id": s.problem_id, "candidates": s.candidates, "chosen_sample": s.chosen[0],
        "answer_id": s.answer_id, "reward": s.reward, "phi": s.phi, "rejected": s.rejected,
        "lto_correct": s.lto_correct, "majority_answer": s.majority_answer,
        "weighted_answer": s.weighted_answer,
    } for s in selections]
    emit_to_path(report, args.format, args.out, _stdout())
    return EXIT_OK


def cmd_vote(args, cfg: RunConfig) -> int:
    sc = cfg.sampler.with_overrides(budget=args.budget, beta=args.beta,
                                    exponential_vote=True if args.exp_vote else None)
    tset = _load_inputs(args.inputs)
    rewards = load_model(args.model).score(tset.samples) if args.model else None
    reward_of = {} if rewards is None else {id(s): r for s, r in zip(tset.samples, rewards)}

    rows = []
    for pid, samples in tset.by_problem().items():
        pool = [s for s in samples[: sc.budget] if s.trajectory.answer_id is not None]
        correct = {s.trajectory.answer_id for s in pool if s.label == Label.CORRECT}
        labeled = any(s.is_labeled for s in pool)
        row = {"problem_id": pid, "candidates": len(pool), "majority_answer": None,
               "majority_correct": None, "weighted_answer": None, "weighted_correct": None}
        if pool:
            answers = [s.trajectory.answer_id for s in pool]
            row["majority_answer"] = majority_vote(answers)
            if labeled:
                row["majority_correct"] = row["majority_answer"] in correct
            if rewards is not None:
                row["weighted_answer"] = weighted_majority_vote(
                    answers, [reward_of[id(s)] for s in pool], sc.exponential_vote, sc.beta)
                if labeled:
                    row["weighted_correct"] = row["weighted_answer"] in correct
        rows.append(row)

    report = _report(args, "answer voting")
    report.add("problems", len(rows))
    for key in ("majority_correct", "weighted_correct"):
        values = [r[key] for r in rows if r[key] is not None]
        report.add(key.replace("_correct", "_rate"), float(np.mean(values)) if values else None)
    report.columns = VOTE_COLUMNS
    report.rows = rows
    emit_to_path(report, args.format, args.out, _stdout())
    return EXIT_OK


def cmd_verify_theorem2(args, cfg: RunConfig) -> int:
    vc = cfg.verify.with_overrides(candidates=args.n, beta=args.beta, draws=args.draws, seeds=args.seeds)
    rng = np.random.default_rng(args.seed)
    rewards = rng.uniform(0.0, 1.0, size=vc.candidates)
    seeds = [args.seed + k for k in range(vc.seeds)]
    result = check_sampler_equivalence(rewards, vc.beta, vc.draws, seeds,
                                       vc.significance, vc.tv_tolerance)
    report = _report(args, "sampler distribution equivalence", seed=args.seed)
    report.add("rewards", list(result.rewards)).add("policy", list(result.policy))
    report.add("max_tv", result.max_tv).add("min_p_value", result.min_p_value)
    report.add("passed", result.passed)
    report.columns = ["seed", "tv_distance", "chi2", "p_value", "proposals"]
    report.rows = [{"seed": r.seed, "tv_distance": r.tv_distance, "chi2": r.chi2,
                    "p_value": r.p_value, "proposals": r.proposals} for r in result.runs]
    emit_to_path(report, "text", args.out, _stdout())
    if not result.passed:
        raise VerificationFailure("empirical acceptance frequencies diverge from the closed-form policy", result)
    return EXIT_OK


def cmd_verify_theorem3(args, cfg: RunConfig) -> int:
    vc = cfg.verify.with_overrides(instances=args.instances, max_candidates=args.max_n,
                                   epsilon=args.epsilon)
    if args.beta_min is not None or args.beta_max is not None:
        lo = args.beta_min if args.beta_min is not None else vc.beta_range[0]
        hi = args.beta_max if args.beta_max is not None else vc.beta_range[1]
        vc = vc.with_overrides(beta_range=[lo, hi])
    result = check_reward_bound(vc.instances, np.random.default_rng(args.seed), vc.max_candidates,
                                vc.epsilon, vc.beta_range)
    report = _report(args, "imperfect reward bound", seed=args.seed)
    report.add("instances", result.instances).add("violations", result.violations)
    report.add("vacuous_bounds", result.vacuous).add("max_gap", result.max_gap)
    report.add("max_gap_to_bound", result.max_gap_to_bound).add("passed", result.passed)
    emit_to_path(report, "text", args.out, _stdout())
    if not result.passed:
        raise VerificationFailure(f"bound violated on {result.violations} instance(s)", result)
    return EXIT_OK


def cmd_verify_gradcheck(args, cfg: RunConfig) -> int:
    vc = cfg.verify.with_overrides(grad_tolerance=args.tolerance)
    result = gradient_check(tolerance=vc.grad_tolerance, seed=args.seed)
    report = _report(args, "gradient check", seed=args.seed)
    report.add("entries", result.checked).add("max_relative_error", result.max_relative_error)
    report.add("tolerance", result.tolerance).add("passed", result.passed)
    report.columns = ["parameter", "max_relative_error"]
    report.rows = [{"parameter": k, "max_relative_error": v} for k, v in result.per_parameter.items()]
    emit_to_path(report, "text", args.out, _stdout())
    if not result.passed:
        raise VerificationFailure("analytic gradients disagree with finite differences", result)
    return EXIT_OK


# ===============================================================
#  Parser
# ===============================================================

def _add_inputs(p, repeatable: bool = False):
    p.add_argument("--in", dest="inputs", action="append", required=True, metavar="PATH",
                   help=".lttk container" + (" (repeat to merge)" if repeatable else ""))


def _add_model_flags(p):
    p.add_argument("--model-dim", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--ffn-multiplier", type=int)
    p.add_argument("--head-hidden", type=int)
    p.add_argument("--pooling", choices=["all", "first", "last"])
    p.add_argument("--pooling-k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentkit", description="Latent-thinking trajectory toolkit")
    parser.add_argument("--version", action="version", version=f"latentkit {__version__}")
    parser.add_argument("--config", type=str, default=None, help="YAML config (default: config.yaml)")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate labeled synthetic trajectories")
    for flag, typ in [("--problems", int), ("--samples-per-problem", int), ("--steps", int),
                      ("--tokens", int), ("--dim", int), ("--correct-rate", float),
                      ("--noise-std", float), ("--steps-noise", float), ("--token-noise", float),
                      ("--separation", float), ("--dispersion-ratio", float), ("--contraction", float),
                      ("--answer-vocab", int), ("--incorrect-attractors", int),
                      ("--first-problem-id", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="text report path (default: stdout)")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("validate", help="list invariant violations of a container")
    _add_inputs(p, repeatable=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("metrics", help="per-step entropy, effective rank, anisotropy, intrinsic dim")
    _add_inputs(p, repeatable=True)
    p.add_argument("--out", default=None, help="metric CSV (default: stdout)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--trim", type=float, help="TwoNN trimming fraction f")
    p.add_argument("--no-intrinsic", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--summary", default=None, help="per (label, step) summary CSV")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("pca", help="3D PCA projection of pooled step vectors")
    _add_inputs(p, repeatable=True)
    p.add_argument("--out", default=None)
    p.add_argument("--components", type=int)
    p.add_argument("--pooling", choices=["all", "first", "last"])
    p.add_argument("--joint", action="store_true", help="one basis for the whole set")
    p.set_defaults(handler=cmd_pca)

    p = sub.add_parser("train-lrm", help="train a latent reward model")
    _add_inputs(p, repeatable=True)
    p.add_argument("--out", required=True, help=".lrm model path")
    p.add_argument("--val", default=None, help="held-out container for per-epoch AUC")
    p.add_argument("--prefix-steps", type=int)
    _add_model_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_train_lrm)

    p = sub.add_parser("eval-lrm", help="accuracy and ROC-AUC of a reward model")
    _add_inputs(p, repeatable=True)
    p.add_argument("--model", required=True)
    p.add_argument("--prefix-steps", type=int)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_eval_lrm)

    p = sub.add_parser("lto", help="reward-guided rejection sampling per problem")
    _add_inputs(p)
    p.add_argument("--model", required=True)
    p.add_argument("--budget", type=int, help="first N candidates per problem")
    p.add_argument("--required", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--exp-vote", action="store_true", help="weight votes by exp(r/beta)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_lto)

    p = sub.add_parser("vote", help="majority and reward-weighted majority vote")
    _add_inputs(p)
    p.add_argument("--model", default=None, help="reward model for the weighted vote")
    p.add_argument("--budget", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--exp-vote", action="store_true")
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_vote)

    p = sub.add_parser("verify", help="executable checks of the sampler and the reward model")
    vsub = p.add_subparsers(dest="verify_command", parser_class=_Parser)
    vsub.required = True

    v = vsub.add_parser("theorem2", help="LTO acceptance frequencies vs the closed-form policy")
    v.add_argument("--n", type=int)
    v.add_argument("--beta", type=float)
    v.add_argument("--draws", type=int)
    v.add_argument("--seeds", type=int, help="number of independent sampler seeds")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out", default=None)
    v.set_defaults(handler=cmd_verify_theorem2)

    v = vsub.add_parser("theorem3", help="imperfect-reward bound on random instances")
    v.add_argument("--instances", type=int)
    v.add_argument("--max-n", type=int)
    v.add_argument("--epsilon", type=float)
    v.add_argument("--beta-min", type=float)
    v.add_argument("--beta-max", type=float)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out", default=None)
    v.set_defaults(handler=cmd_verify_theorem3)

    v = vsub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    v.add_argument("--tolerance", type=float)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out", default=None)
    v.set_defaults(handler=cmd_verify_gradcheck)

    return parser


# ===============================================================
#  Entry point
# ===============================================================

def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e))
        return EXIT_USAGE

    _configure_logging(args)
    handler: Callable = args.handler

    try:
        cfg = load_config(args.config)
    except (ValidationError, ValueError, yaml.YAMLError, OSError) as e:
        logger.error(f"Config error: {e}")
        return EXIT_USAGE

    try:
        return handler(args, cfg)
    except ValidationError as e:
        logger.error(f"Invalid option: {e}")
        return EXIT_USAGE
    except VerificationFailure as e:
        logger.error(f"Verification failed: {e}")
        return EXIT_VERIFY
    except (LatentKitError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DATA
    except Exception as e:
        logger.exception(f"Unhandled exception: {e}")
        return EXIT_DATA


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

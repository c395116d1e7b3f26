"""Command-line entry point: training, fine-tuning, distillation, evaluation and analysis.

Every command that writes results gets an artifact directory holding the
resolved ``config.yaml``, a ``seed`` file, its checkpoints and CSVs, and a
``manifest.json`` with SHA-256 hashes of everything else in the directory.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from itertools import combinations

import numpy as np
import yaml

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .experts import CheckpointExpert, ExpertRegistry
from .policy import MuscleTransformer, PolicySpec
from .policy.summary import analytic_parameter_count, format_summary, model_summary
from .sim import CATALOG, UnknownTaskError, get_task, observation_signatures, actuator_signatures, task_names
from .sim.tasks import catalog_text
from .trainer.config import ALGOS, TrainConfig, format_preset, make_config
from .trainer.evaluate import evaluate_expert, evaluate_policy, percent_of_expert
from .trainer.train import Trainer, distill, finetune, select_experts
from .vocab import Vocabulary

log = logging.getLogger("muscleformer")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
ARM_TASKS = ("ReachNear", "ReachFar", "RelocateLite")


class UsageError(Exception):
    """Bad flags or configuration; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- argument helpers ----------------------------------------------------------

def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def default_seed() -> int:
    raw = os.environ.get("MF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"MF_SEED must be an integer, got {raw!r}") from None


def parse_tasks(spec: str | None, default=None) -> list[str]:
    if spec is None:
        return list(default or task_names())
    names = task_names() if spec == "all" else [s.strip() for s in spec.split(",") if s.strip()]
    for n in names:
        try:
            get_task(n)
        except UnknownTaskError as exc:
            raise UsageError(str(exc)) from None
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate task in {spec!r}")
    return names


def parse_overrides(pairs) -> dict:
    """``key=value`` pairs with YAML-typed values (``lr=3e-4``, ``policy_spec={heads: 2}``)."""
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise UsageError(f"override {p!r} is not of the form key=value")
        k, v = p.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def resolve_config(algo: str, args, tasks: list[str] | None = None) -> TrainConfig:
    """Preset, then config file, then ``--set`` overrides, then explicit flags."""
    fields: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            doc = yaml.safe_load(f) or {}
        doc.pop("algo", None)
        fields.update(doc)
    fields.update(parse_overrides(getattr(args, "set", None)))
    if tasks is not None:
        fields["tasks"] = tasks
    if getattr(args, "steps", None) is not None:
        fields["total_steps"] = args.steps
    if getattr(args, "reduced_steps", None) is not None:
        fields["reduced_lr_steps"] = args.reduced_steps
    fields["seed"] = args.seed
    fields["workers"] = args.workers
    try:
        return make_config(algo, desk=not getattr(args, "paper_scale", False), **fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


# -- artifact directory -----------------------------------------------------------

class Artifacts:
    """Output directory with provenance files."""

    def __init__(self, path: str, args, config: dict | None = None):
        self.path = path
        os.makedirs(path, exist_ok=True)
        resolved = {"command": args.command, "seed": args.seed, "workers": args.workers}
        resolved.update({k: v for k, v in vars(args).items() if k not in resolved and k != "func" and _plain(v)})
        if config is not None:
            resolved["train"] = config
        with open(self.file("config.yaml"), "w") as f:
            yaml.safe_dump(resolved, f, sort_keys=False)
        with open(self.file("seed"), "w") as f:
            f.write(f"{args.seed}\n")

    def file(self, *parts: str) -> str:
        p = os.path.join(self.path, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def finish(self) -> None:
        entries = {}
        for root, _, files in os.walk(self.path):
            for name in sorted(files):
                full = os.path.join(root, name)
                rel = os.path.relpath(full, self.path)
                if rel == "manifest.json" or rel.endswith(".tmp"):
                    continue
                with open(full, "rb") as f:
                    entries[rel] = hashlib.sha256(f.read()).hexdigest()
        with open(self.file("manifest.json"), "w") as f:
            json.dump({"files": dict(sorted(entries.items()))}, f, indent=2)
            f.write("\n")


def _plain(v) -> bool:
    return v is None or isinstance(v, (str, int, float, bool)) or (
        isinstance(v, list) and all(isinstance(x, (str, int, float)) for x in v))


def _write_rows(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if x is None else (f"{x:.9g}" if isinstance(x, float) else x) for x in r])


# -- evaluation --------------------------------------------------------------------

EVAL_COLUMNS = ["task", "episodes", "mean_return", "solved_fraction", "stderr", "expert_solved_fraction",
                "pct_of_expert", "pct_stderr"]


def evaluate_checkpoint(ckpt, tasks, episodes: int, seed: int, experts: ExpertRegistry | None = None) -> list[list]:
    experts = experts or ExpertRegistry.analytic(tasks)
    disjoint = ckpt.metadata.get("disjoint_vocab", False)
    rows = []
    for name in tasks:
        task = get_task(name)
        res = evaluate_policy(ckpt.policy, ckpt.standardizer, task, episodes, seed, disjoint)
        ref = evaluate_expert(experts[name], task, episodes, seed)
        pct, pct_se = percent_of_expert(res, ref)
        rows.append([name, episodes, res.mean_return, res.solved_fraction, res.stderr, ref.solved_fraction, pct, pct_se])
    return rows


def _print_table(header, rows) -> None:
    print("  ".join(f"{h:>14}" for h in header))
    for r in rows:
        print("  ".join(f"{x:>14.4f}" if isinstance(x, float) else f"{x!s:>14}" for x in r))


# -- commands -------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = resolve_config(args.algo, args, parse_tasks(args.tasks))
    if cfg.algo == "finetune":
        raise UsageError("use the finetune command for RL fine-tuning")
    log.info("preset %s: %s", cfg.algo, format_preset(cfg))
    art = Artifacts(args.out, args, cfg.to_dict())
    res = Trainer(cfg, art.path).run()
    log.info("trained %s for %d env steps; checkpoint %s", cfg.algo, res.env_steps, res.checkpoint)
    art.finish()
    return EXIT_OK


def cmd_finetune(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    task = parse_tasks(args.task)
    if len(task) != 1:
        raise UsageError("finetune takes exactly one task")
    cfg = resolve_config("finetune", args, task)
    art = Artifacts(args.out, args, cfg.to_dict())
    res = finetune(ckpt, task[0], cfg, art.path)
    log.info("specialist for %s written to %s", task[0], res.checkpoint)
    art.finish()
    return EXIT_OK


def _parse_specialists(pairs) -> dict:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise UsageError(f"specialist {p!r} is not of the form TASK=PATH")
        t, path = p.split("=", 1)
        parse_tasks(t)
        out[t] = path
    return out


def _distill(ckpt, specialists: dict, tasks, args, art: Artifacts):
    registry, report = select_experts(tasks, specialists, args.select_episodes, args.seed)
    with open(art.file("registry.json"), "w") as f:
        json.dump({"experts": registry.describe(), "selection": report}, f, indent=2, sort_keys=True)
        f.write("\n")
    if not any(r["replaced"] for r in report.values()):
        log.warning("no specialist beat its expert; distillation reduces to continued OBC")
    cfg = resolve_config("obc", args, tasks)
    return distill(ckpt, registry, cfg, art.path)


def cmd_distill(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tasks = parse_tasks(args.tasks, ckpt.metadata.get("tasks"))
    specialists = _parse_specialists(args.specialist)
    art = Artifacts(args.out, args)
    res = _distill(ckpt, specialists, tasks, args, art)
    log.info("distilled generalist written to %s", res.checkpoint)
    art.finish()
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """OBC generalist, per-task fine-tuning, expert selection and distillation in one run."""
    tasks = parse_tasks(args.tasks)
    art = Artifacts(args.out, args)
    cfg = resolve_config("obc", args, tasks)
    log.info("step 1: OBC generalist, preset %s", format_preset(cfg))
    gen = Trainer(cfg, art.file("generalist", "")).run()
    pre = evaluate_checkpoint(load_checkpoint(gen.checkpoint), tasks, args.episodes, args.seed)

    specialists = {}
    for t in tasks:
        ft_args = argparse.Namespace(**{**vars(args), "steps": args.finetune_steps, "reduced_steps": None})
        ft_cfg = resolve_config("finetune", ft_args, [t])
        log.info("step 2: fine-tuning %s", t)
        res = finetune(load_checkpoint(gen.checkpoint), t, ft_cfg, art.file("finetune", t, ""))
        specialists[t] = res.checkpoint

    d_args = argparse.Namespace(**{**vars(args), "steps": args.distill_steps, "reduced_steps": 0})
    log.info("step 3: distillation")
    final = _distill(load_checkpoint(gen.checkpoint), specialists, tasks, d_args, _Sub(art, "distill"))
    post = evaluate_checkpoint(load_checkpoint(final.checkpoint), tasks, args.episodes, args.seed)
    rows = [[a[0], a[6], b[6], b[6] - a[6]] for a, b in zip(pre, post)]
    _write_rows(art.file("pipeline.csv"), ["task", "pct_before", "pct_after", "delta"], rows)
    _print_table(["task", "pct_before", "pct_after", "delta"], rows)
    art.finish()
    return EXIT_OK


class _Sub:
    """Subdirectory view of an artifact directory."""

    def __init__(self, parent: Artifacts, name: str):
        self.path = parent.file(name, "")

    def file(self, *parts):
        p = os.path.join(self.path, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tasks = parse_tasks(args.tasks, ckpt.metadata.get("tasks"))
    experts = ExpertRegistry.analytic(tasks)
    for t, path in _parse_specialists(args.expert).items():
        experts.set(t, CheckpointExpert(get_task(t), load_checkpoint(path), path=path))
    rows = evaluate_checkpoint(ckpt, tasks, args.episodes, args.seed, experts)
    _print_table(EVAL_COLUMNS, rows)
    if args.out:
        art = Artifacts(args.out, args)
        _write_rows(art.file("eval.csv"), EVAL_COLUMNS, rows)
        art.finish()
    return EXIT_OK


def collect_activations(ckpt, tasks, episodes: int, seed: int) -> dict:
    disjoint = ckpt.metadata.get("disjoint_vocab", False)
    return {t: evaluate_policy(ckpt.policy, ckpt.standardizer, get_task(t), episodes, seed, disjoint,
                               record=True).activations for t in tasks}


def cmd_collect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tasks = parse_tasks(args.tasks, ckpt.metadata.get("tasks"))
    art = Artifacts(args.out, args)
    analysis.write_activations_csv(art.file("activations.csv"), collect_activations(ckpt, tasks, args.episodes, args.seed))
    art.finish()
    return EXIT_OK


def _fit_bases(data: analysis.ActivationDataset, tasks, scopes) -> dict:
    """One basis per (scope, task); the shared basis is fit once on all tasks."""
    bases = {}
    shared = analysis.fit_pca(data.select_many(tasks)) if "shared" in scopes else None
    for t in tasks:
        if "task" in scopes:
            bases[("task", t)] = analysis.fit_pca(data.select(t))
        if shared is not None:
            bases[("shared", t)] = shared
    return bases


def cmd_analyze(args) -> int:
    return {"csi": analyze_csi, "ev": analyze_ev, "pvd": analyze_pairs, "pad": analyze_pairs}[args.kind](args)


def _scopes(s: str):
    return ("task", "shared") if s == "both" else (s,)


def analyze_ev(args) -> int:
    tasks = parse_tasks(args.tasks, ARM_TASKS)
    data = analysis.read_activations_csv(args.activations, tasks)
    art = Artifacts(args.out, args)
    for (scope, t), b in _fit_bases(data, tasks, _scopes(args.scope)).items():
        analysis.write_curve_csv(art.file(f"ev_{scope}_{t}.csv"), analysis.ev_curve(b))
    art.finish()
    return EXIT_OK


def analyze_csi(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tasks = parse_tasks(args.tasks, ARM_TASKS)
    data = analysis.read_activations_csv(args.activations, tasks)
    art = Artifacts(args.out, args)
    disjoint = ckpt.metadata.get("disjoint_vocab", False)
    summary = []
    for (scope, t), b in _fit_bases(data, tasks, _scopes(args.scope)).items():
        task = get_task(t)
        pts = analysis.csi_curve(ckpt.policy, ckpt.standardizer, task, b, args.episodes, args.seed, disjoint)
        analysis.write_curve_csv(art.file(f"csi_{scope}_{t}.csv"), pts)
        analysis.write_curve_csv(art.file(f"ev_{scope}_{t}.csv"), analysis.ev_curve(b))
        k90 = analysis.k_at_threshold(pts, args.threshold)
        ev = analysis.explained_variance(b, k90) if k90 else None
        summary.append([scope, t, k90, ev, pts[-1].value, pts[-1].ci_low, pts[-1].ci_high])
    header = ["scope", "task", "k_at_threshold", "ev_at_k", "full_rank_value", "full_rank_ci_low", "full_rank_ci_high"]
    _write_rows(art.file("csi_summary.csv"), header, summary)
    _print_table(header, summary)
    art.finish()
    return EXIT_OK


def subspace_pairs(kind: str, data_a, data_b, tasks, k: int):
    """Rows ``(comparison, task_a, task_b, value)`` of PVD or PAD.

    With only ``data_a`` every ordered pair of distinct tasks is compared
    within one policy (cross-task); with ``data_b`` each task is compared
    with the same task of the other policy (cross-seed).
    """
    def measure(xa, xb):
        ba, bb = analysis.fit_pca(xa), analysis.fit_pca(xb)
        return analysis.pvd(ba, xb, k) if kind == "pvd" else analysis.pad(ba, bb, k)

    rows = []
    if data_b is None:
        for ta, tb in combinations(tasks, 2):
            for x, y in ((ta, tb), (tb, ta)):
                if kind == "pad" and (x, y) == (tb, ta):
                    continue
                rows.append(["cross_task", x, y, measure(data_a.select(x), data_a.select(y))])
    else:
        for t in tasks:
            rows.append(["cross_seed", t, t, measure(data_a.select(t), data_b.select(t))])
    return rows


def analyze_pairs(args) -> int:
    tasks = parse_tasks(args.tasks, ARM_TASKS)
    a = analysis.read_activations_csv(args.activations, tasks)
    b = analysis.read_activations_csv(args.activations_b, tasks) if args.activations_b else None
    k = args.k
    if not 1 <= k <= a.n_actuators:
        raise UsageError(f"--k must lie in [1, {a.n_actuators}]")
    rows = subspace_pairs(args.kind, a, b, tasks, k)
    header = ["comparison", "task_a", "task_b", args.kind]
    art = Artifacts(args.out, args)
    _write_rows(art.file(f"{args.kind}.csv"), header, rows)
    _print_table(header, rows)
    print(f"mean {args.kind}: {np.mean([r[-1] for r in rows]):.6g}")
    art.finish()
    return EXIT_OK


def catalog_vocabulary() -> Vocabulary:
    vocab = Vocabulary(["value"])
    for t in CATALOG:
        for s in observation_signatures(t) + actuator_signatures(t):
            for w in s.words:
                vocab.register(w)
    return vocab


def cmd_vocab(args) -> int:
    sys.stdout.write(catalog_vocabulary().dump())
    return EXIT_OK


def cmd_catalog(args) -> int:
    sys.stdout.write(catalog_text())
    return EXIT_OK


def cmd_summary(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).policy
        print(format_summary(model))
        return EXIT_OK
    vocab = catalog_vocabulary()
    if args.full_size:
        spec = PolicySpec(tokenizer_extra_feature=True)
        vocab = Vocabulary(vocab.words[1:] + [f"word{i}" for i in range(args.words - len(vocab))])
    else:
        spec = PolicySpec.from_dict(make_config("obc").policy_spec)
    model = MuscleTransformer(spec, vocab)
    print(format_summary(model))
    _, total = model_summary(model)
    if total != analytic_parameter_count(spec, len(vocab))["total"]:
        raise RuntimeError("built model disagrees with the closed-form parameter count")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="muscleformer", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out=True, out_required=True):
        sp.add_argument("--seed", type=int, default=None, help="random seed (default: $MF_SEED or 0)")
        sp.add_argument("--workers", type=int, default=None, help="environment worker threads (default: cores - 1)")
        if out:
            sp.add_argument("--out", required=out_required, help="artifact directory")

    def training(sp):
        sp.add_argument("--config", help="YAML file of TrainConfig fields")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")
        sp.add_argument("--steps", type=int, help="main-phase environment steps")
        sp.add_argument("--reduced-steps", type=int, help="steps at the reduced learning rate")
        sp.add_argument("--paper-scale", action="store_true", help="use the published budgets and learning rates")

    sp = sub.add_parser("train", help="train a generalist")
    sp.add_argument("--algo", required=True, choices=[a for a in ALGOS if a != "finetune"])
    sp.add_argument("--tasks", default="all", help="'all' or comma-separated task names")
    common(sp); training(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("finetune", help="single-task PPO from a generalist checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--task", required=True)
    common(sp); training(sp)
    sp.set_defaults(func=cmd_finetune)

    sp = sub.add_parser("distill", help="resume OBC against improved specialists")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--specialist", action="append", metavar="TASK=PATH")
    sp.add_argument("--tasks")
    sp.add_argument("--select-episodes", type=int, default=200)
    common(sp); training(sp)
    sp.set_defaults(func=cmd_distill)

    sp = sub.add_parser("pipeline", help="OBC, fine-tune every task, then distill")
    sp.add_argument("--tasks", default="all")
    sp.add_argument("--finetune-steps", type=int, default=50_000)
    sp.add_argument("--distill-steps", type=int, default=50_000)
    sp.add_argument("--episodes", type=int, default=200)
    sp.add_argument("--select-episodes", type=int, default=200)
    common(sp); training(sp)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("eval", help="deterministic evaluation with %%-of-expert")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes", type=int, default=200)
    sp.add_argument("--tasks")
    sp.add_argument("--expert", action="append", metavar="TASK=PATH", help="checkpoint expert for a task")
    common(sp, out_required=False)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("collect-activations", help="record muscle activations to CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--tasks")
    common(sp)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("analyze", help="synergy analysis on activation CSVs")
    sp.add_argument("kind", choices=["csi", "ev", "pvd", "pad"])
    sp.add_argument("--activations", required=True)
    sp.add_argument("--activations-b", help="second policy's activations (cross-seed pvd/pad)")
    sp.add_argument("--checkpoint", help="policy to re-evaluate (csi)")
    sp.add_argument("--tasks", help="tasks of one embodiment (default: MiniArm tasks)")
    sp.add_argument("--scope", choices=["task", "shared", "both"], default="both")
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--threshold", type=float, default=0.9)
    sp.add_argument("--k", type=int, default=2)
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("vocab", help="print the catalog vocabulary")
    common(sp, out=False)
    sp.set_defaults(func=cmd_vocab)
    sp = sub.add_parser("catalog", help="print the task catalog as YAML")
    common(sp, out=False)
    sp.set_defaults(func=cmd_catalog)
    sp = sub.add_parser("summary", help="parameter counts of the desk or full-size network")
    sp.add_argument("--checkpoint")
    sp.add_argument("--full-size", action="store_true", help="d=128 network with --words vocabulary words")
    sp.add_argument("--words", type=int, default=214)
    common(sp, out=False)
    sp.set_defaults(func=cmd_summary)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        if args.seed is None:
            args.seed = default_seed()
        if args.workers is None:
            args.workers = default_workers()
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        if args.command == "analyze":
            if args.kind == "csi" and not args.checkpoint:
                raise UsageError("analyze csi needs --checkpoint")
        return args.func(args)
    except UsageError as exc:
        print(f"muscleformer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("failure", exc_info=True)
        print(f"muscleformer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

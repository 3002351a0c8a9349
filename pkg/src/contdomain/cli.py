"""Command-line entry point: ``contdomain <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .classifier import COSINE, LINEAR
from .config import dump_config, load_config
from .corpus import Corpus, generate_corpus, read_corpus, write_corpus
from .engine import VARIANTS, Variant, adapt_domain, build_store, checkpoint_diff, \
    checkpoint_dict, evaluate, load_checkpoint, load_store, save_checkpoint, save_store, \
    train_initial
from .experiments import STUDIES, ExperimentPlan, ReportRow, Session, auxiliary_study, \
    run_variants, summarize, sweep_der_threshold, sweep_hinge_thresholds, sweep_trends, \
    write_report

log = logging.getLogger("contdomain")


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _plan(args) -> ExperimentPlan:
    plan = load_config(args.config) if args.config else ExperimentPlan()
    if args.seed is not None:
        plan = replace(plan, corpus=replace(plan.corpus, seed=args.seed),
                       adaptation=replace(plan.adaptation, seed=args.seed))
    if getattr(args, "variant", None) and isinstance(args.variant, str):
        plan = replace(plan, variant=args.variant)
    plan.validate()
    return plan


def _corpus(args, plan: ExperimentPlan) -> Corpus:
    if getattr(args, "corpus", None):
        return read_corpus(args.corpus)
    return generate_corpus(plan.corpus)


def _emit(rows: List[ReportRow], args, name: str) -> Path:
    out = Path(args.out_dir) / f"{name}.csv"
    write_report(rows, out)
    print(f"wrote {out} ({len(rows)} rows)")
    if not args.no_plots:
        from .plotting import plot_report
        for p in plot_report(rows, out):
            print(f"wrote {p}")
    return out


def _print_summary(rows: List[ReportRow]) -> None:
    groups = {}
    for r in rows:
        groups.setdefault((r.study, r.setting, r.variant), []).append(r)
    for (study, setting, variant), group in groups.items():
        new, final = summarize(group)
        tag = f"{study}/{setting}" if setting else study
        print(f"{tag:28s} {variant:20s} mean-new {new:.3f} final-all {final:.3f}")


# ------------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    plan = _plan(args)
    corpus = generate_corpus(plan.corpus)
    out = Path(args.out_dir) / "corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out)
    print(f"wrote {out}: {len(corpus)} domains, "
          f"{sum(d.size for d in corpus.domains)} utterances")
    return 0


def cmd_train_initial(args) -> int:
    plan = _plan(args)
    corpus = _corpus(args, plan)
    if plan.n_initial > len(corpus):
        raise ValueError(f"corpus has only {len(corpus)} domains")
    mode = LINEAR if plan.variant.startswith("linear") else COSINE
    domains = corpus.domains[:plan.n_initial]
    model = train_initial(domains, plan.adaptation, mode)
    store = build_store(model, domains, plan.adaptation.exemplars_per_domain, plan.adaptation.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, plan.adaptation, out / "checkpoint.json")
    save_store(store, model.catalog, out / "store.json")
    test = [s for d in domains for s in d.test]
    print(f"{mode} model on {plan.n_initial} domains: test accuracy {evaluate(model, test):.4f}")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'store.json'}")
    return 0


def cmd_adapt(args) -> int:
    plan = _plan(args)
    model, cfg = load_checkpoint(args.checkpoint)
    store, catalog = load_store(args.store)
    if list(catalog) != list(model.catalog):
        raise ValueError("exemplar store and checkpoint disagree on the domain catalog")
    corpus = _corpus(args, plan)
    names = list(corpus.names)
    missing = [n for n in model.catalog if n not in names]
    if missing:
        raise ValueError(f"corpus lacks checkpoint domains: {', '.join(missing[:5])}")
    if args.domain not in names:
        raise ValueError(f"unknown domain {args.domain!r}")
    if args.domain in model.catalog:
        raise ValueError(f"domain {args.domain!r} is already in the catalog")
    # relabel so the checkpoint's catalog keeps its ids and the new domain is next
    head = list(model.catalog) + [args.domain]
    order = [names.index(n) for n in head] + [i for i, n in enumerate(names) if n not in head]
    corpus = corpus.relabel(order)
    variant = Variant.parse(plan.variant)
    before = checkpoint_dict(model, cfg)
    stats = adapt_domain(model, corpus.domains[len(head) - 1], store, cfg, variant)
    after = checkpoint_dict(model, cfg)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, cfg, out / "checkpoint.json")
    save_store(store, model.catalog, out / "store.json")
    k = model.n_domains
    acc = lambda ids: evaluate(model, [s for d in ids for s in corpus.domains[d].test])
    report = {"domain": args.domain, "variant": variant.name, "catalog_size": k,
              "new_domain_acc": acc([k - 1]), "all_domain_acc": acc(range(k)),
              "changed_tensors": checkpoint_diff(before, after),
              "best_epoch": stats.best_epoch, "seconds": round(stats.seconds, 4)}
    print(json.dumps(report, indent=1))
    return 0


def cmd_benchmark(args) -> int:
    plan = _plan(args)
    variants = args.variants or list(VARIANTS)
    rows = run_variants(plan, variants, Session())
    _print_summary(rows)
    _emit(rows, args, "benchmark")
    return 0


def cmd_sweep_hinge(args) -> int:
    plan = _plan(args)
    rows = sweep_hinge_thresholds(plan, args.pos, args.neg, args.fixed_neg, args.fixed_pos, Session())
    _print_summary(rows)
    for study in ("sweep-delta_pos", "sweep-delta_neg"):
        if sum(1 for r in rows if r.study == study and r.step == 1) >= 3:
            print(study, json.dumps(sweep_trends(rows, study)))
    _emit(rows, args, "sweep-hinge")
    return 0


def cmd_sweep_der(args) -> int:
    plan = _plan(args)
    rows = sweep_der_threshold(plan, args.values, Session())
    _print_summary(rows)
    if len(args.values) >= 3:
        print("sweep-delta_der", json.dumps(sweep_trends(rows, "sweep-delta_der")))
    _emit(rows, args, "sweep-der")
    return 0


def cmd_study(args) -> int:
    plan = _plan(args)
    rows = auxiliary_study(args.name, plan, Session())
    _print_summary(rows)
    _emit(rows, args, f"study-{args.name}")
    return 0


def cmd_show_config(args) -> int:
    print(dump_config(_plan(args)), end="")
    return 0


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [plan], [corpus], [adaptation] sections")
    common.add_argument("--seed", type=int, help="overrides both corpus and training seeds")
    common.add_argument("--out-dir", default="runs", help="output directory (default: runs)")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="contdomain", description=(
        "Continual domain adaptation for personalized domain classification "
        "on a synthetic corpus."))
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="write the synthetic corpus as JSONL")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train-initial", parents=[common],
                       help="train on the initial domains; write checkpoint and exemplar store")
    s.add_argument("--corpus", help="JSONL corpus (default: generate from config)")
    s.add_argument("--variant", choices=VARIANTS, help="linear* variants train a linear model")
    s.set_defaults(func=cmd_train_initial)

    s = sub.add_parser("adapt", parents=[common], help="add one domain to a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--store", required=True)
    s.add_argument("--domain", required=True, help="name of the domain to add")
    s.add_argument("--corpus", help="JSONL corpus (default: generate from config)")
    s.add_argument("--variant", choices=[v for v in VARIANTS if v != "retrain-upperbound"])
    s.set_defaults(func=cmd_adapt)

    s = sub.add_parser("benchmark", parents=[common], help="run the variant matrix")
    s.add_argument("--variant", dest="variants", action="append", choices=VARIANTS,
                   help="repeat to pick variants (default: all)")
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("sweep-hinge", parents=[common], help="sweep the hinge thresholds")
    s.add_argument("--pos", type=_floats, default=[0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    s.add_argument("--neg", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4])
    s.add_argument("--fixed-pos", type=float, default=0.5)
    s.add_argument("--fixed-neg", type=float, default=0.3)
    s.add_argument("--variant", choices=VARIANTS)
    s.set_defaults(func=cmd_sweep_hinge)

    s = sub.add_parser("sweep-der", parents=[common], help="sweep the regularizer margin")
    s.add_argument("--values", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    s.add_argument("--variant", choices=VARIANTS)
    s.set_defaults(func=cmd_sweep_der)

    s = sub.add_parser("study", parents=[common], help="run one auxiliary study")
    s.add_argument("name", choices=STUDIES)
    s.add_argument("--variant", choices=VARIANTS)
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    s.set_defaults(func=cmd_show_config)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark, sweeps and auxiliary studies over the synthetic corpus, written as CSV."""

from __future__ import annotations

import copy
import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .classifier import COSINE, LINEAR
from .corpus import Corpus, GeneratorConfig, generate_corpus
from .engine import VARIANTS, AdaptationConfig, ExemplarStore, MetricsRecord, Model, \
    Variant, adapt_domain, build_store, evaluate, train_initial

log = logging.getLogger(__name__)

ORDERS = ("random", "decreasing", "increasing")
REPORT_HEADER = ["study", "setting", "variant", "step", "domain", "new_domain_acc",
                 "accumulated_new_acc", "all_domain_acc"]
TIMING_HEADER = ["study", "setting", "variant", "step", "seconds"]
STUDIES = ("order", "plain-lambda", "downsampling", "initial-count", "long-run", "table1")


@dataclass
class ExperimentPlan:
    variant: str = "cos+der+ns"
    corpus: GeneratorConfig = field(default_factory=GeneratorConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    n_initial: int = 30
    n_incremental: int = 15
    order: str = "random"
    output: Optional[str] = None

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.order not in ORDERS:
            raise ValueError(f"unknown order {self.order!r}")
        if self.n_initial < 2 or self.n_incremental < 1:
            raise ValueError("need at least 2 initial and 1 incremental domain")
        if self.n_initial + self.n_incremental > self.corpus.n_domains:
            raise ValueError(f"plan uses {self.n_initial + self.n_incremental} domains but the "
                             f"corpus has {self.corpus.n_domains}")
        self.adaptation.validate()
        self.corpus.validate()


@dataclass
class ReportRow:
    variant: str
    step: int
    domain: str
    new_domain: float
    accumulated_new: float
    all_domains: float
    seconds: float
    study: str = "benchmark"
    setting: str = ""

    def __post_init__(self):
        for v in (self.new_domain, self.accumulated_new, self.all_domains):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"accuracy {v} outside [0, 1]")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in rows:
        w.writerow([r.study, r.setting, r.variant, r.step, r.domain, _fmt(r.new_domain),
                    _fmt(r.accumulated_new), _fmt(r.all_domains)])
    return buf.getvalue()


def timings_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_HEADER)
    for r in rows:
        w.writerow([r.study, r.setting, r.variant, r.step, f"{r.seconds:.4f}"])
    return buf.getvalue()


def write_report(rows: Sequence[ReportRow], path) -> Path:
    """Write the accuracy CSV and a sibling ``*.timing.csv`` with wall-clock seconds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows), encoding="utf-8")
    path.with_suffix(".timing.csv").write_text(timings_to_csv(rows), encoding="utf-8")
    return path


def read_report(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------- sessions


class Session:
    """Memoizes corpora and initial models so variants share one initial training."""

    def __init__(self):
        self._corpora: Dict[tuple, Corpus] = {}
        self._initial: Dict[tuple, Tuple[Model, ExemplarStore, float]] = {}

    @staticmethod
    def _key(obj) -> tuple:
        return tuple(sorted(vars(obj).items()))

    def corpus(self, cfg: GeneratorConfig) -> Corpus:
        key = self._key(cfg)
        if key not in self._corpora:
            self._corpora[key] = generate_corpus(cfg)
        return self._corpora[key]

    def initial(self, corpus_cfg: GeneratorConfig, cfg: AdaptationConfig, n_initial: int,
                mode: str) -> Tuple[Model, ExemplarStore, float]:
        """(frozen model, exemplar store, training seconds); callers get deep copies."""
        init_fields = ("initial_epochs", "initial_lr", "initial_batch", "adam_beta1",
                       "adam_beta2", "adam_eps", "d_word", "d_lstm", "d_domain", "d_hidden",
                       "domain_init", "domain_offset",
                       "seed", "exemplars_per_domain")
        if mode == COSINE:
            init_fields += ("delta_pos", "delta_neg")
        key = (self._key(corpus_cfg), n_initial, mode,
               tuple((f, getattr(cfg, f)) for f in init_fields))
        if key not in self._initial:
            corpus = self.corpus(corpus_cfg)
            domains = corpus.domains[:n_initial]
            t0 = time.perf_counter()
            model = train_initial(domains, cfg, mode)
            seconds = time.perf_counter() - t0
            store = build_store(model, domains, cfg.exemplars_per_domain, cfg.seed)
            self._initial[key] = (model, store, seconds)
        model, store, seconds = self._initial[key]
        return copy.deepcopy(model), copy.deepcopy(store), seconds


def domain_order(corpus: Corpus, n_initial: int, n_incremental: int, order: str,
                 seed: int) -> List[int]:
    """Catalog order: initial domains first, then incremental ones in ``order``."""
    initial = list(range(n_initial))
    pool = list(range(n_initial, n_initial + n_incremental))
    sizes = {d: corpus.domains[d].size for d in pool}
    if order == "random":
        rng = np.random.default_rng([seed, 7])
        incremental = [pool[i] for i in rng.permutation(len(pool))]
    elif order == "decreasing":
        incremental = sorted(pool, key=lambda d: (-sizes[d], d))
    elif order == "increasing":
        incremental = sorted(pool, key=lambda d: (sizes[d], d))
    else:
        raise ValueError(f"unknown order {order!r}")
    return initial + incremental


def _step_metrics(model: Model, corpus: Corpus, n_initial: int, step: int,
                  test_cache: Optional[Dict[int, np.ndarray]]) -> MetricsRecord:
    k = n_initial + step

    def acc(ids: Iterable[int]) -> float:
        ids = list(ids)
        samples = [s for d in ids for s in corpus.domains[d].test]
        enc = None
        if test_cache is not None:
            enc = np.concatenate([test_cache[d] for d in ids], axis=0)
        return evaluate(model, samples, enc)

    return MetricsRecord(step, acc([k - 1]), acc(range(n_initial, k)), acc(range(k)))


def run_benchmark(plan: ExperimentPlan, session: Optional[Session] = None,
                  study: str = "benchmark", setting: str = "",
                  initial: Optional[AdaptationConfig] = None) -> List[ReportRow]:
    """Initial training then sequential adaptation; one row per adaptation step.

    ``initial`` overrides the config used for initial training (the adaptation
    steps always use ``plan.adaptation``).
    """
    plan.validate()
    session = session or Session()
    cfg = plan.adaptation
    corpus = _ordered_corpus(plan, session)
    k0 = plan.n_initial
    rows: List[ReportRow] = []

    if plan.variant == "retrain-upperbound":
        return [_retrain_row(plan, corpus, step, study, setting)
                for step in range(1, plan.n_incremental + 1)]

    variant = Variant.parse(plan.variant)
    # the session's initial model is trained on generator ids 0..k0-1, which every order keeps
    model, store, _ = session.initial(plan.corpus, initial or cfg, k0, variant.mode)
    test_cache = None
    if not variant.full_update:
        test_cache = {d: model.encode(corpus.domains[d].test)
                      for d in range(k0 + plan.n_incremental)}
    for step in range(1, plan.n_incremental + 1):
        new = corpus.domains[k0 + step - 1]
        stats = adapt_domain(model, new, store, cfg, variant)
        m = _step_metrics(model, corpus, k0, step, test_cache)
        rows.append(ReportRow(plan.variant, step, new.name, m.new_domain, m.accumulated_new,
                              m.all_domains, stats.seconds, study, setting))
        log.info("%s step %d: new %.3f acc-new %.3f all %.3f (%.2fs)", plan.variant, step,
                 m.new_domain, m.accumulated_new, m.all_domains, stats.seconds)
    return rows


def _ordered_corpus(plan: ExperimentPlan, session: Session) -> Corpus:
    base = session.corpus(plan.corpus)
    order = domain_order(base, plan.n_initial, plan.n_incremental, plan.order, plan.adaptation.seed)
    return base.relabel(order + [d for d in range(len(base)) if d not in set(order)])


def _retrain_row(plan: ExperimentPlan, corpus: Corpus, step: int, study: str,
                 setting: str) -> ReportRow:
    k0 = plan.n_initial
    t0 = time.perf_counter()
    model = train_initial(corpus.domains[:k0 + step], plan.adaptation, COSINE)
    seconds = time.perf_counter() - t0
    m = _step_metrics(model, corpus, k0, step, None)
    return ReportRow("retrain-upperbound", step, corpus.names[k0 + step - 1], m.new_domain,
                     m.accumulated_new, m.all_domains, seconds, study, setting)


def retrain_upper_bound(plan: ExperimentPlan, step: Optional[int] = None,
                        session: Optional[Session] = None) -> ReportRow:
    """The retrain-upperbound row for a single step (default: the last one)."""
    plan.validate()
    step = plan.n_incremental if step is None else step
    if not 1 <= step <= plan.n_incremental:
        raise ValueError(f"step must be in 1..{plan.n_incremental}, got {step}")
    return _retrain_row(plan, _ordered_corpus(plan, session or Session()), step, "benchmark", "")


def run_variants(plan: ExperimentPlan, variants: Sequence[str] = VARIANTS,
                 session: Optional[Session] = None) -> List[ReportRow]:
    session = session or Session()
    rows: List[ReportRow] = []
    for v in variants:
        rows += run_benchmark(replace(plan, variant=v), session)
    return rows


# --------------------------------------------------------------------- sweeps


def summarize(rows: Sequence[ReportRow]) -> Tuple[float, float]:
    """(mean new-domain accuracy over steps, all-domain accuracy at the last step)."""
    rows = sorted(rows, key=lambda r: r.step)
    return float(np.mean([r.new_domain for r in rows])), rows[-1].all_domains


def _sweep_value(x: float) -> str:
    return f"{x:g}"


def sweep_hinge_thresholds(plan: ExperimentPlan, pos_values: Sequence[float] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                           neg_values: Sequence[float] = (0.0, 0.1, 0.2, 0.3, 0.4),
                           fixed_neg: float = 0.3, fixed_pos: float = 0.5,
                           session: Optional[Session] = None) -> List[ReportRow]:
    """Vary the positive threshold at a fixed negative one, then the reverse.

    Only the adaptation steps see the swept thresholds; every setting starts
    from the same initial model trained with ``plan.adaptation``.
    """
    session = session or Session()
    rows: List[ReportRow] = []
    settings = [("delta_pos", p, replace(plan.adaptation, delta_pos=p, delta_neg=fixed_neg))
                for p in pos_values]
    settings += [("delta_neg", n, replace(plan.adaptation, delta_pos=fixed_pos, delta_neg=n))
                 for n in neg_values]
    for name, value, cfg in settings:
        if cfg.delta_neg >= cfg.delta_pos:
            log.warning("skipping %s=%s: negative threshold must be below positive", name, value)
            continue
        rows += run_benchmark(replace(plan, adaptation=cfg), session, study=f"sweep-{name}",
                              setting=_sweep_value(value), initial=plan.adaptation)
    return rows


def sweep_der_threshold(plan: ExperimentPlan, values: Sequence[float] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
                        session: Optional[Session] = None) -> List[ReportRow]:
    session = session or Session()
    rows: List[ReportRow] = []
    for v in values:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"delta_der must be in [0, 1), got {v}")
        cfg = replace(plan.adaptation, delta_der=v)
        rows += run_benchmark(replace(plan, adaptation=cfg), session, study="sweep-delta_der",
                              setting=_sweep_value(v))
    return rows


def sweep_trends(rows: Sequence[ReportRow], study: str) -> Dict[str, float]:
    """Spearman correlations of the swept value with the two summary accuracies."""
    by_setting: Dict[float, List[ReportRow]] = {}
    for r in rows:
        if r.study == study:
            by_setting.setdefault(float(r.setting), []).append(r)
    xs = sorted(by_setting)
    if len(xs) < 3:
        raise ValueError(f"need at least 3 sweep points for {study}, got {len(xs)}")
    new, final = zip(*(summarize(by_setting[x]) for x in xs))
    return {"new_domain": _spearman(xs, new), "all_domains": _spearman(xs, final)}


def _spearman(xs, ys) -> float:
    # undefined (nan) when the accuracies do not vary at all
    if np.ptp(ys) == 0:
        return float("nan")
    return float(spearmanr(xs, ys)[0])


# -------------------------------------------------------------------- studies


def auxiliary_study(name: str, plan: ExperimentPlan,
                    session: Optional[Session] = None) -> List[ReportRow]:
    """One of the micro-benchmark studies, tagged in the ``study`` column."""
    session = session or Session()
    if name == "order":
        rows = []
        for order in ORDERS:
            rows += run_benchmark(replace(plan, order=order), session, "order", order)
        return rows
    if name == "plain-lambda":
        rows = []
        for weighted in (True, False):
            cfg = replace(plan.adaptation, weighted_lambda=weighted)
            rows += run_benchmark(replace(plan, adaptation=cfg), session, "plain-lambda",
                                  "weighted" if weighted else "plain")
        return rows
    if name == "downsampling":
        rows = []
        for down in (True, False):
            cfg = replace(plan.adaptation, downsample=down)
            rows += run_benchmark(replace(plan, adaptation=cfg), session, "downsampling",
                                  "downsampled" if down else "full-pool")
        return rows
    if name == "initial-count":
        rows = []
        counts = sorted({max(2, plan.n_initial // 3), max(2, 2 * plan.n_initial // 3), plan.n_initial})
        # incremental domains stay the same ids regardless of how many initial ones are used
        base = session.corpus(plan.corpus)
        for n in counts:
            keep = list(range(n)) + list(range(plan.n_initial, plan.n_initial + plan.n_incremental))
            rest = [d for d in range(len(base)) if d not in set(keep)]
            rows += _run_on_subset(plan, base, keep + rest, n, session, "initial-count", str(n))
        return rows
    if name == "long-run":
        n_total = plan.corpus.n_domains
        n_initial = max(2, n_total // 3)
        long_plan = replace(plan, n_initial=n_initial, n_incremental=n_total - n_initial)
        return run_benchmark(long_plan, session, "long-run", f"{n_initial}+{n_total - n_initial}")
    if name == "table1":
        return initial_training_comparison(plan, session)
    raise ValueError(f"unknown study {name!r}; choose from {', '.join(STUDIES)}")


def _run_on_subset(plan: ExperimentPlan, base: Corpus, order: List[int], n_initial: int,
                   session: Session, study: str, setting: str) -> List[ReportRow]:
    # a fresh session keyed on the relabelled corpus keeps the shared cache consistent
    corpus = base.relabel(order)
    sub = Session()
    sub._corpora[Session._key(plan.corpus)] = corpus
    return run_benchmark(replace(plan, n_initial=n_initial), sub, study, setting)


def initial_training_comparison(plan: ExperimentPlan,
                                session: Optional[Session] = None) -> List[ReportRow]:
    """Test accuracy of cosine vs linear initial training for several domain counts.

    Rows use step 0; the accuracy is repeated in the three metric columns.
    """
    session = session or Session()
    corpus = session.corpus(plan.corpus)
    counts = sorted({max(2, plan.n_initial // 3), max(2, 2 * plan.n_initial // 3), plan.n_initial})
    rows = []
    for n in counts:
        for mode in (LINEAR, COSINE):
            model, _, seconds = session.initial(plan.corpus, plan.adaptation, n, mode)
            test = [s for d in corpus.domains[:n] for s in d.test]
            acc = evaluate(model, test)
            rows.append(ReportRow(mode, 0, f"{n}-domains", acc, acc, acc, seconds, "table1", str(n)))
    return rows

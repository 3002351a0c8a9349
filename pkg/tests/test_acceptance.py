"""Acceptance suite: one test per primary criterion on the default benchmark.

Each test prints a ``criterion N: PASS|FAIL`` line (echoed again in the
terminal summary) and then asserts it. The benchmark is the default plan:
30 initial plus 15 incremental synthetic domains, seed 0.
"""

import itertools

import numpy as np
import pytest

from contdomain import autodiff as ad
from contdomain.autodiff import Tensor, finite_difference_check
from contdomain.classifier import COSINE, argmax_predict
from contdomain.corpus import Sample
from contdomain.encoder import UNK, Vocabulary
from contdomain.engine import VARIANTS, AdaptationConfig, Model, Variant, adapt_domain, \
    checkpoint_dict, checkpoint_diff, select_exemplars
from contdomain.experiments import ExperimentPlan, Session, auxiliary_study, domain_order, \
    retrain_upper_bound, run_variants, summarize, sweep_der_threshold, \
    sweep_hinge_thresholds, sweep_trends, write_report
from contdomain.losses import der_loss, hinge_kink_distance, total_loss
from contdomain.personalization import summarize_enabled

PLAN = ExperimentPlan()
ADAPTIVE = [v for v in VARIANTS if v != "retrain-upperbound"]
TOL_GRAD = 1e-4
POINTS = 100


def by_setting(rows):
    groups = {}
    for r in rows:
        groups.setdefault(r.setting or r.variant, []).append(r)
    return {k: summarize(v) for k, v in groups.items()}


@pytest.fixture(scope="module")
def session():
    return Session()


@pytest.fixture(scope="module")
def variant_rows(session):
    return run_variants(PLAN, ADAPTIVE, session)


@pytest.fixture(scope="module")
def upper_bound(session):
    return retrain_upper_bound(PLAN, session=session)


# ---------------------------------------------------------------- 1: gradients


def _away_from(x, kink, gap=1e-3):
    near = np.abs(x - kink) < gap
    x[near] += 2 * gap
    return x


def _pos(rng, shape):
    return rng.uniform(0.2, 3.0, shape)


# name -> (function of the parameter tensors, sampler for the parameter values)
PRIMITIVES = {
    "add": (ad.add, lambda r: [r.normal(size=(3, 4)), r.normal(size=(1, 4))]),
    "sub": (ad.sub, lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 1))]),
    "mul": (ad.mul, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "div": (ad.div, lambda r: [r.normal(size=(3, 4)),
                               r.choice([-1.0, 1.0], (3, 4)) * _pos(r, (3, 4))]),
    "scale": (lambda a: ad.scale(a, -1.7), lambda r: [r.normal(size=(2, 3))]),
    "matmul": (ad.matmul, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))]),
    "matvec": (ad.matvec, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "transpose": (ad.transpose, lambda r: [r.normal(size=(2, 3))]),
    "reshape": (lambda a: ad.reshape(a, (3, 2)), lambda r: [r.normal(size=(2, 3))]),
    "concat": (lambda a, b: ad.concat([a, b], axis=1),
               lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 2))]),
    "slice_cols": (lambda a: ad.slice_cols(a, 1, 3), lambda r: [r.normal(size=(2, 4))]),
    "take_rows": (lambda a: ad.take_rows(a, [3, 0, 3, 1]), lambda r: [r.normal(size=(4, 3))]),
    "sigmoid": (ad.sigmoid, lambda r: [r.normal(scale=2.0, size=(3, 3))]),
    "tanh": (ad.tanh, lambda r: [r.normal(scale=2.0, size=(3, 3))]),
    "exp": (ad.exp, lambda r: [r.normal(size=(3, 3))]),
    "log": (ad.log, lambda r: [_pos(r, (3, 3))]),
    "softplus": (ad.softplus, lambda r: [r.normal(scale=3.0, size=(3, 3))]),
    "maximum": (lambda a: ad.maximum(a, 0.05),
                lambda r: [_away_from(r.normal(size=(3, 3)), 0.05)]),
    "selu": (ad.selu, lambda r: [_away_from(r.normal(size=(3, 3)), 0.0)]),
    "sqrt": (ad.sqrt, lambda r: [_pos(r, (3, 3))]),
    "l2norm": (lambda a: ad.l2norm(a, axis=-1), lambda r: [r.normal(size=(3, 4))]),
    "sum": (lambda a: ad.sum(a, axis=0), lambda r: [r.normal(size=(3, 4))]),
    "mean": (lambda a: ad.mean(a, axis=1), lambda r: [r.normal(size=(3, 4))]),
    "cosine_similarity": (ad.cosine_similarity, lambda r: [r.normal(size=(4,)), r.normal(size=(4,))]),
    "cosine_matrix": (ad.cosine_matrix, lambda r: [r.normal(size=(3, 4)), r.normal(size=(5, 4))]),
    "softmax_weights": (lambda a: ad.softmax_weights(a, np.array([[1, 1, 0, 1], [0, 0, 0, 0],
                                                                  [1, 0, 1, 1]])),
                        lambda r: [r.normal(scale=2.0, size=(3, 4))]),
}


def _primitive_error(name, seed):
    f, sample = PRIMITIVES[name]
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    params = [Tensor(v, f"p{i}", True) for i, v in enumerate(sample(rng))]
    with ad.no_record():
        shape = f(*[Tensor(p.value) for p in params]).shape
    weights = Tensor(rng.normal(size=shape))
    return finite_difference_check(lambda: ad.sum(ad.mul(f(*params), weights)), params)


TOY_CFG = AdaptationConfig(d_word=2, d_lstm=2, d_domain=3, d_hidden=3)
TOY_VOCAB = Vocabulary.from_tokens([UNK, "a", "b", "c"])


def _toy_point(rng):
    """A 3-domain model (2 initial, 1 added) at random parameters, with a batch.

    Returns None when the point lies within 1e-4 of a kink of the hinge, the
    regularizer or the SELU.
    """
    model = Model(TOY_VOCAB, ["x", "y"], TOY_CFG, COSINE, seed=int(rng.integers(1 << 30)))
    model.add_domain("z")
    for p in model.parameters():
        p.value[...] = rng.normal(scale=0.8, size=p.shape)
    samples = []
    for _ in range(4):
        tokens = tuple(rng.choice(["a", "b", "c", "zz"], int(rng.integers(1, 4))))
        enabled = tuple(int(e) for e in np.flatnonzero(rng.random(3) < 0.6))
        samples.append(Sample(tokens, int(rng.integers(3)), enabled))
    labels = [s.domain for s in samples]
    known = model.domain_table.blocks[0].value.copy()
    lambdas = rng.uniform(0.0, 5.0, 2)
    t_new = model.domain_table.blocks[-1]
    th, der_cfg = TOY_CFG.thresholds, TOY_CFG.der

    def loss():
        return total_loss(model.scores(samples), labels, th, der_loss(t_new, known, lambdas, der_cfg))

    with ad.no_record():
        enc = model.encoder.encode_batch(model.indices(samples))
        summary = summarize_enabled(enc, model.mask(samples), model.domain_table.tensor(),
                                    model.projection)
        x = np.concatenate([enc.value, summary.value], axis=1)
        pre = x @ model.hidden.weight.value + model.hidden.bias.value
        scores = model.scores(samples).value
    t = t_new.value[0]
    cos = known @ t / (np.linalg.norm(known, axis=1) * np.linalg.norm(t))
    gap = min(np.abs(pre).min(), hinge_kink_distance(scores, labels, th),
              np.abs(cos - der_cfg.margin).min())
    if gap < 1e-4:
        return None
    return loss, model.parameters()


def test_criterion_01_gradients(acceptance_report):
    worst = {}
    for name in PRIMITIVES:
        worst[name] = max(_primitive_error(name, seed) for seed in range(POINTS))
    rng = np.random.default_rng(2024)
    toy, tried = [], 0
    while len(toy) < POINTS:
        tried += 1
        point = _toy_point(rng)
        if point is not None:
            toy.append(finite_difference_check(*point))
    worst["L_total"] = max(toy)
    name, err = max(worst.items(), key=lambda kv: kv[1])
    acceptance_report(1, err < TOL_GRAD,
                      f"{len(PRIMITIVES)} primitives + L_total on a 3-domain toy, {POINTS} points "
                      f"each ({tried - POINTS} kink points resampled); worst relative error "
                      f"{err:.2e} ({name}) < {TOL_GRAD:g}")


# ----------------------------------------------------------- 2: freezing


def test_criterion_02_two_tensors_change_per_step(session, acceptance_report):
    base = session.corpus(PLAN.corpus)
    order = domain_order(base, PLAN.n_initial, PLAN.n_incremental, PLAN.order, PLAN.adaptation.seed)
    corpus = base.relabel(order + [d for d in range(len(base)) if d not in set(order)])
    cfg = PLAN.adaptation
    bad = []
    for name in [v for v in ADAPTIVE if not Variant.parse(v).full_update]:
        variant = Variant.parse(name)
        model, store, _ = session.initial(PLAN.corpus, cfg, PLAN.n_initial, variant.mode)
        before = checkpoint_dict(model, cfg)
        for step in range(PLAN.n_incremental):
            k = PLAN.n_initial + step
            adapt_domain(model, corpus.domains[k], store, cfg, variant)
            after = checkpoint_dict(model, cfg)
            # a new row shows up as a change from absent to present
            changed = checkpoint_diff(before, after)
            if changed != sorted([f"domain_embedding/row{k:05d}", f"prediction/row{k:05d}"]):
                bad.append((name, step + 1, changed))
            before = after
    acceptance_report(2, not bad,
                      f"{PLAN.n_incremental} steps x {len(ADAPTIVE) - 1} variants, "
                      f"steps with other than t_new and w_new changed: {bad[:3] or 'none'}")


# ------------------------------------------------------ 3: forgetting matrix


def test_criterion_03_forgetting_and_ordering(variant_rows, upper_bound, acceptance_report):
    s = by_setting(variant_rows)
    lfu_new, lfu_all = s["linear-full-update"]
    new, final = s["cos+der+ns"]
    gap = upper_bound.all_domains - final
    a = lfu_new >= 0.99 and lfu_all <= 0.10
    b = new >= 0.85 and gap <= 0.10
    chain = [s[v][1] for v in ("cos+der+ns", "cos+ns", "cos", "linear")]
    c = all(x >= y for x, y in zip(chain, chain[1:])) and chain[0] - chain[-1] >= 0.02
    best = all(final >= s[v][1] for v in ADAPTIVE)
    ok = a and b and c and best
    acceptance_report(3, ok, (
        f"(a) linear-full-update new {lfu_new:.3f}>=0.99, all {lfu_all:.3f}<=0.10 "
        f"[{'ok' if a else 'fail'}]; (b) cos+der+ns new {new:.3f}>=0.85, retrain upper bound "
        f"{upper_bound.all_domains:.3f} vs {final:.3f}, gap {gap:.3f}<=0.10 "
        f"[{'ok' if b else 'fail'}]; (c) final all "
        + " >= ".join(f"{x:.3f}" for x in chain)
        + f" (cos+der+ns, cos+ns, cos, linear), best overall {best} [{'ok' if c and best else 'fail'}]"))


# ------------------------------------------------------ 4: exemplar oracle


def _exhaustive_optima(enc, n):
    mean = enc.mean(axis=0)
    cos = enc @ mean / np.maximum(np.linalg.norm(enc, axis=1) * np.linalg.norm(mean), 1e-12)
    totals = {c: sum(cos[list(c)]) for c in itertools.combinations(range(len(enc)), n)}
    best = max(totals.values())
    return {c for c, t in totals.items() if t >= best - 1e-12}


def test_criterion_04_exemplar_oracle(acceptance_report):
    rng = np.random.default_rng(4)
    misses, ties = [], 0
    for i in range(50):
        size = int(rng.integers(1, 13))
        n = int(rng.integers(1, min(4, size) + 1))
        enc = rng.normal(size=(size, 4))
        if i % 5 == 0 and size > 1:
            enc[size // 2:] = enc[0]  # duplicated rows force exact ties
        optima = _exhaustive_optima(enc, n)
        ties += len(optima) > 1
        picked = tuple(int(j) for j in select_exemplars(enc, n, np.random.default_rng(i)))
        if picked not in optima:
            misses.append(i)
    acceptance_report(4, not misses,
                      f"50 instances (|D|<=12, N<=4, {ties} with tied optima), "
                      f"selection outside the exhaustive optimum set: {misses or 'none'}")


# --------------------------------------------------------- 5: hinge sweep


def test_criterion_05_hinge_sweep_trends(session, acceptance_report):
    rows = sweep_hinge_thresholds(PLAN, session=session)
    pos = sweep_trends(rows, "sweep-delta_pos")
    neg = sweep_trends(rows, "sweep-delta_neg")
    checks = {
        "pos->new >= 0.6": pos["new_domain"] >= 0.6,
        "pos->all <= -0.6": pos["all_domains"] <= -0.6,
        "neg->new <= -0.6": neg["new_domain"] <= -0.6,
        "neg->all >= 0.6": neg["all_domains"] >= 0.6,
    }
    detail = (f"spearman delta_pos: new {pos['new_domain']:+.2f}, all {pos['all_domains']:+.2f}; "
              f"delta_neg: new {neg['new_domain']:+.2f}, all {neg['all_domains']:+.2f}; failing: "
              + (", ".join(k for k, v in checks.items() if not v) or "none"))
    acceptance_report(5, all(checks.values()), detail)


# ----------------------------------------------------------- 6: der sweep


def test_criterion_06_der_sweep(session, acceptance_report):
    rows = sweep_der_threshold(PLAN, session=session)
    s = by_setting(rows)
    rho = sweep_trends(rows, "sweep-delta_der")["new_domain"]
    at0, at1, at5 = s["0"][1], s["0.1"][1], s["0.5"][1]
    ok = at1 > at0 and at1 > at5 and rho <= -0.6
    acceptance_report(6, ok, f"final all at 0 / 0.1 / 0.5: {at0:.3f} / {at1:.3f} / {at5:.3f}; "
                             f"spearman(delta_der, new) {rho:+.2f} <= -0.6")


# ------------------------------------------------------------- 7: order


def test_criterion_07_order_insensitivity(session, acceptance_report):
    s = by_setting(auxiliary_study("order", PLAN, session))
    finals = {k: v[1] for k, v in s.items()}
    spread = max(finals.values()) - min(finals.values())
    acceptance_report(7, spread <= 0.02,
                      ", ".join(f"{k} {v:.3f}" for k, v in finals.items()) + f"; spread {spread:.3f} <= 0.02")


# ------------------------------------------------------ 8: cosine scores


def test_criterion_08_cosine_bounds_and_scale_invariance(acceptance_report):
    rng = np.random.default_rng(8)
    pairs, out_of_range, flipped = 0, 0, 0
    while pairs < 10_000:
        b, k, d = int(rng.integers(1, 40)), int(rng.integers(2, 9)), int(rng.integers(1, 9))
        h = rng.normal(size=(b, d)) * 10.0 ** rng.uniform(-3, 3, (b, 1))
        w = rng.normal(size=(k, d)) * 10.0 ** rng.uniform(-3, 3, (k, 1))
        with ad.no_record():
            s = ad.cosine_matrix(Tensor(h), Tensor(w)).value
            scaled = ad.cosine_matrix(Tensor(h), Tensor(w * rng.uniform(1e-3, 1e3, (k, 1)))).value
        out_of_range += int(np.sum((s < -1.0) | (s > 1.0)))
        flipped += int(np.sum(argmax_predict(s) != argmax_predict(scaled)))
        pairs += b
    acceptance_report(8, out_of_range == 0 and flipped == 0,
                      f"{pairs} (h, W) pairs: {out_of_range} scores outside [-1, 1], "
                      f"{flipped} argmax changes under positive row rescaling")


# ------------------------------------------------------ 9: down-sampling


def test_criterion_09_downsampling_helps_new_domains(session, acceptance_report):
    s = by_setting(auxiliary_study("downsampling", PLAN, session))
    gain = s["downsampled"][0] - s["full-pool"][0]
    acceptance_report(9, gain >= 0.02,
                      f"mean new-domain accuracy {s['downsampled'][0]:.3f} down-sampled vs "
                      f"{s['full-pool'][0]:.3f} full pool, gain {gain:.3f} >= 0.02")


# -------------------------------------------------------- 10: determinism


def test_criterion_10_byte_identical_csv(variant_rows, tmp_path, acceptance_report):
    first = write_report(variant_rows, tmp_path / "first.csv").read_bytes()
    again = write_report(run_variants(PLAN, ADAPTIVE, Session()), tmp_path / "again.csv").read_bytes()
    acceptance_report(10, first == again and len(first) > 0,
                      f"{len(ADAPTIVE)} variants x {PLAN.n_incremental} steps rerun from scratch: "
                      f"{len(first)} vs {len(again)} bytes, identical {first == again}")


# --------------------------------------------------------- 11: cost


def test_criterion_11_adaptation_is_cheaper_than_retraining(variant_rows, upper_bound,
                                                            acceptance_report):
    steps = [r.seconds for r in variant_rows if r.variant == PLAN.variant]
    mean = float(np.mean(steps))
    ratio = mean / upper_bound.seconds
    acceptance_report(11, ratio < 0.2,
                      f"{PLAN.variant} mean step {mean:.2f}s vs retrain on "
                      f"{PLAN.n_initial + PLAN.n_incremental} domains {upper_bound.seconds:.1f}s, "
                      f"ratio {ratio:.3f} < 0.2")

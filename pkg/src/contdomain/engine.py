"""Initial training, one-domain-at-a-time adaptation, exemplars, and checkpoints."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .classifier import COSINE, LINEAR, HiddenLayer, PredictionLayer, argmax_predict, \
    forward_hidden, predict_scores
from .corpus import DomainData, Sample
from .encoder import Encoder, Vocabulary
from .losses import DerConfig, HingeThresholds, der_loss, domain_mean_representation, \
    hinge_loss, log_sigmoid_loss, similarity_weights
from .personalization import ExpandableTable, enabled_mask, summarize_enabled

log = logging.getLogger(__name__)


@dataclass
class AdaptationConfig:
    # loss
    delta_pos: float = 0.5
    delta_neg: float = 0.3
    delta_der: float = 0.1
    lambda_dsl: float = 5.0
    lambda_norm: float = 0.4
    weighted_lambda: bool = True
    # exemplars
    exemplars_per_domain: int = 20
    downsample: bool = True
    # optimization
    initial_epochs: int = 20
    initial_lr: float = 0.001
    initial_batch: int = 64
    adapt_epochs: int = 10
    adapt_lr: float = 0.01
    adapt_batch: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # model sizes
    d_word: int = 32
    d_lstm: int = 32
    d_domain: int = 64
    d_hidden: int = 64
    domain_init: float = 0.1
    domain_offset: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        HingeThresholds(self.delta_pos, self.delta_neg)
        DerConfig(self.delta_der, self.lambda_dsl, self.lambda_norm)
        if min(self.initial_lr, self.adapt_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if min(self.initial_epochs, self.adapt_epochs) < 1:
            raise ValueError("epoch counts must be at least 1")
        if min(self.initial_batch, self.adapt_batch) < 1:
            raise ValueError("batch sizes must be at least 1")
        if self.exemplars_per_domain < 1:
            raise ValueError("exemplar budget must be at least 1")

    @property
    def thresholds(self) -> HingeThresholds:
        return HingeThresholds(self.delta_pos, self.delta_neg)

    @property
    def der(self) -> DerConfig:
        return DerConfig(self.delta_der, self.lambda_dsl, self.lambda_norm)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class MetricsRecord:
    step: int
    new_domain: float
    accumulated_new: float
    all_domains: float

    def __post_init__(self):
        for name in ("new_domain", "accumulated_new", "all_domains"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} accuracy {v} outside [0, 1]")


# ---------------------------------------------------------------------- model


class Model:
    """Encoder + enabled-domain summary + two-layer classifier over a growing catalog."""

    def __init__(self, vocab: Vocabulary, catalog: Sequence[str], cfg: AdaptationConfig,
                 mode: str = COSINE, seed: Optional[int] = None):
        if len(catalog) < 1:
            raise ValueError("model needs at least one domain")
        seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng([seed, 1])
        self.mode = mode
        self.vocab = vocab
        self.catalog = list(catalog)
        self.encoder = Encoder(len(vocab), cfg.d_word, cfg.d_lstm, seed=seed)
        d_u = self.encoder.d_out
        self.projection: Optional[Tensor] = None
        if cfg.d_domain != d_u:
            self.projection = Tensor(rng.uniform(-0.1, 0.1, (d_u, cfg.d_domain)),
                                     "personalization.projection", True)
        k = len(self.catalog)
        # rows share a random offset direction plus per-row noise
        offset = cfg.domain_offset * rng.uniform(-1.0, 1.0, cfg.d_domain)
        self.domain_table = ExpandableTable(
            "domain_embedding", offset + rng.uniform(-cfg.domain_init, cfg.domain_init, (k, cfg.d_domain)))
        self.hidden = HiddenLayer(d_u + cfg.d_domain, cfg.d_hidden, rng)
        self.prediction = PredictionLayer(k, cfg.d_hidden, rng, mode)
        self.encoder_trainable = True
        self.hidden_trainable = True
        self._expand_rng = np.random.default_rng([seed, 2])

    @property
    def n_domains(self) -> int:
        return len(self.catalog)

    @property
    def encoder_frozen(self) -> bool:
        return not self.encoder_trainable

    def encoder_parameters(self) -> List[Tensor]:
        extra = [self.projection] if self.projection is not None else []
        return self.encoder.parameters() + extra

    def parameters(self) -> List[Tensor]:
        return (self.encoder_parameters() + self.domain_table.parameters()
                + self.hidden.parameters() + self.prediction.parameters())

    def trainable_parameters(self) -> List[Tensor]:
        out: List[Tensor] = []
        if self.encoder_trainable:
            out += self.encoder_parameters()
        out += self.domain_table.trainable_parameters()
        if self.hidden_trainable:
            out += self.hidden.parameters()
        out += self.prediction.table.trainable_parameters()
        return out

    def freeze_encoder(self) -> "Model":
        self.encoder_trainable = False
        return self

    def freeze_all(self) -> "Model":
        self.freeze_encoder()
        self.hidden_trainable = False
        self.domain_table.freeze()
        self.prediction.table.freeze()
        return self

    def add_domain(self, name: str, freeze_existing: bool = True) -> int:
        if name in self.catalog:
            raise ValueError(f"domain {name!r} is already in the catalog")
        self.domain_table.expand(self._expand_rng, freeze_existing=freeze_existing)
        self.prediction.table.expand(self._expand_rng, freeze_existing=freeze_existing)
        self.catalog.append(name)
        return self.n_domains - 1

    # forward ------------------------------------------------------------

    def indices(self, samples: Sequence[Sample]) -> List[List[int]]:
        return [self.vocab.lookup(s.tokens) for s in samples]

    def mask(self, samples: Sequence[Sample]) -> np.ndarray:
        n = self.n_domains
        return enabled_mask([[e for e in s.enabled if e < n] for s in samples], n)

    def scores_from_encodings(self, encodings: Tensor, mask: np.ndarray) -> Tensor:
        summary = summarize_enabled(encodings, mask, self.domain_table.tensor(), self.projection)
        hidden = forward_hidden(encodings, summary, self.hidden)
        return predict_scores(hidden, self.prediction)

    def scores(self, samples: Sequence[Sample]) -> Tensor:
        encodings = self.encoder.encode_batch(self.indices(samples))
        return self.scores_from_encodings(encodings, self.mask(samples))

    def encode(self, samples: Sequence[Sample]) -> np.ndarray:
        return self.encoder.encode_all(self.indices(samples))

    def predict(self, samples: Sequence[Sample], encodings: Optional[np.ndarray] = None,
                chunk: int = 1024) -> np.ndarray:
        if len(samples) == 0:
            return np.zeros(0, dtype=np.int64)
        if encodings is None:
            encodings = self.encode(samples)
        out = []
        with ad.no_record():
            for i in range(0, len(samples), chunk):
                part = samples[i:i + chunk]
                s = self.scores_from_encodings(Tensor(encodings[i:i + chunk]), self.mask(part))
                out.append(argmax_predict(s))
        return np.concatenate(out)


def evaluate(model: Model, samples: Sequence[Sample],
             encodings: Optional[np.ndarray] = None) -> float:
    """Fraction of samples whose predicted domain equals the label."""
    if len(samples) == 0:
        raise ValueError("evaluate: empty dataset")
    for s in samples:
        if not 0 <= s.domain < model.n_domains:
            raise ValueError(f"evaluate: domain id {s.domain} not in the model catalog")
    pred = model.predict(samples, encodings)
    labels = np.array([s.domain for s in samples])
    return float(np.mean(pred == labels))


# ------------------------------------------------------------------ optimizer


class Adam:
    """Adam with bias correction; state kept per parameter object."""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for j, (p, g) in enumerate(zip(self.params, grads)):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            self.m[j] = b1 * self.m[j] + (1 - b1) * g
            self.v[j] = b2 * self.v[j] + (1 - b2) * g * g
            update = self.lr * (self.m[j] / c1) / (np.sqrt(self.v[j] / c2) + self.eps)
            # fresh array: earlier snapshots of the value stay untouched
            p.value = p.value - update


def adam_step(params: Sequence[Tensor], grads: Dict[str, np.ndarray], state: Adam,
              frozen: Sequence[str] = ()) -> None:
    """One update of ``state``'s parameters; names in ``frozen`` keep their values."""
    skip = set(frozen)
    g = [np.zeros_like(p.value) if p.name in skip else grads[p.name] for p in params]
    before = {p.name: p.value for p in params if p.name in skip}
    state.step(g)
    for p in params:
        if p.name in before:
            p.value = before[p.name]


# ------------------------------------------------------------------- training


@dataclass
class _Prepared:
    samples: List[Sample]
    labels: np.ndarray
    masks: np.ndarray
    indices: Optional[List[List[int]]] = None
    encodings: Optional[np.ndarray] = None


def _prepare(model: Model, samples: Sequence[Sample], cache_encodings: bool) -> _Prepared:
    samples = list(samples)
    prep = _Prepared(samples, np.array([s.domain for s in samples]), model.mask(samples))
    if cache_encodings:
        prep.encodings = model.encode(samples)
    else:
        prep.indices = model.indices(samples)
    return prep


LossFn = Callable[[Tensor, np.ndarray], Tensor]


def _fit(model: Model, train: Sequence[Sample], loss_fn: LossFn, epochs: int, lr: float,
         batch_size: int, cfg: AdaptationConfig, rng: np.random.Generator,
         dev_score: Callable[[], float]) -> Tuple[int, float]:
    """Adam over shuffled mini-batches; restores the best epoch by ``dev_score``.

    When the encoder is frozen its outputs are computed once and reused, so
    the per-step tape starts at the utterance vectors.
    """
    params = model.trainable_parameters()
    opt = Adam(params, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    prep = _prepare(model, train, cache_encodings=model.encoder_frozen)
    n = len(prep.samples)
    best_epoch, best = -1, -np.inf
    snapshot = [p.value for p in params]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            with Tape() as tape:
                if prep.encodings is not None:
                    enc = Tensor(prep.encodings[rows])
                else:
                    enc = model.encoder.encode_batch([prep.indices[r] for r in rows])
                scores = model.scores_from_encodings(enc, prep.masks[rows])
                loss = loss_fn(scores, prep.labels[rows])
            grads = ad.backpropagate(tape, loss, params)
            opt.step([grads[p.name] for p in params])
        score = dev_score()
        log.debug("epoch %d loss %.4f dev %.4f", epoch, float(loss.value), score)
        if score > best:
            best, best_epoch = score, epoch
            snapshot = [p.value for p in params]
    for p, v in zip(params, snapshot):
        p.value = v
    return best_epoch, best


def train_initial(domains: Sequence[DomainData], cfg: AdaptationConfig, mode: str = COSINE,
                  seed: Optional[int] = None) -> Model:
    """Train every module jointly on the initial domains, then freeze everything.

    ``domains`` must be catalog positions 0..k-1. Cosine mode uses the hinge
    loss, linear mode the per-domain log-sigmoid loss.
    """
    cfg.validate()
    if len(domains) < 2:
        raise ValueError("initial training needs at least two domains")
    for i, d in enumerate(domains):
        if d.domain != i:
            raise ValueError(f"initial domain at position {i} has id {d.domain}")
        if not d.train or not d.dev or not d.test:
            raise ValueError(f"domain {d.name!r} has an empty split")
    seed = cfg.seed if seed is None else seed
    k = len(domains)
    train = [s.restricted(k) for d in domains for s in d.train]
    dev = [s.restricted(k) for d in domains for s in d.dev]
    vocab = Vocabulary.build(s.tokens for s in train)
    model = Model(vocab, [d.name for d in domains], cfg, mode, seed)
    th = cfg.thresholds

    if mode == COSINE:
        def loss_fn(scores, labels):
            return hinge_loss(scores, labels, th)
    else:
        loss_fn = log_sigmoid_loss

    _fit(model, train, loss_fn, cfg.initial_epochs, cfg.initial_lr, cfg.initial_batch, cfg,
         np.random.default_rng([seed, 3]), lambda: evaluate(model, dev))
    model.freeze_all()
    return model


# ------------------------------------------------------------------ exemplars


def select_exemplars(encodings: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of the ``n`` rows closest in cosine to the rows' mean.

    The summed-cosine objective is separable, so top-n by individual cosine
    is optimal; exact ties are broken by a random pre-permutation.
    """
    if n < 1:
        raise ValueError("exemplar budget must be at least 1")
    encodings = np.asarray(encodings, dtype=np.float64)
    if encodings.shape[0] == 0:
        raise ValueError("select_exemplars: empty domain data")
    mean = domain_mean_representation(encodings)
    norms = np.linalg.norm(encodings, axis=1) * np.linalg.norm(mean)
    cos = encodings @ mean / np.maximum(norms, ad.COS_EPS)
    perm = rng.permutation(len(cos))
    ranked = perm[np.argsort(-cos[perm], kind="stable")]
    return np.sort(ranked[:n])


def downsample_exemplars(pool: Sequence[Sample], m: int, rng: np.random.Generator) -> List[Sample]:
    if m < 0:
        raise ValueError("target size must be nonnegative")
    if len(pool) <= m:
        return list(pool)
    keep = np.sort(rng.choice(len(pool), size=m, replace=False))
    return [pool[i] for i in keep]


@dataclass
class ExemplarStore:
    budget: int
    exemplars: Dict[int, List[Sample]] = field(default_factory=dict)
    means: Dict[int, np.ndarray] = field(default_factory=dict)

    def add_domain(self, domain: int, samples: Sequence[Sample], encodings: np.ndarray,
                   rng: np.random.Generator, n_known: int) -> None:
        """Store the domain's mean vector and exemplars (enabled sets snapshotted)."""
        if domain in self.means:
            raise ValueError(f"domain {domain} already stored")
        for s in samples:
            if s.domain != domain:
                raise ValueError(f"sample labelled {s.domain} offered as exemplar of {domain}")
        self.means[domain] = domain_mean_representation(encodings)
        picked = select_exemplars(encodings, self.budget, rng)
        self.exemplars[domain] = [samples[i].restricted(n_known) for i in picked]

    def pool(self) -> List[Sample]:
        return [s for d in sorted(self.exemplars) for s in self.exemplars[d]]

    def known_means(self, n: int) -> List[np.ndarray]:
        return [self.means[i] for i in range(n)]


def build_store(model: Model, domains: Sequence[DomainData], budget: int, seed: int) -> ExemplarStore:
    store = ExemplarStore(budget)
    k = model.n_domains
    for d in domains:
        enc = model.encode(d.train)
        store.add_domain(d.domain, d.train, enc, np.random.default_rng([seed, 4, d.domain]), k)
    return store


# ------------------------------------------------------------------ adaptation


VARIANTS = ("linear-full-update", "linear", "cos", "cos+der", "cos+ns", "cos+der+ns",
            "retrain-upperbound")


@dataclass(frozen=True)
class Variant:
    name: str
    mode: str
    full_update: bool
    der: bool
    ns: bool

    @classmethod
    def parse(cls, name: str) -> "Variant":
        if name not in VARIANTS or name == "retrain-upperbound":
            raise ValueError(f"not an adaptation variant: {name!r}")
        if name.startswith("linear"):
            return cls(name, LINEAR, name == "linear-full-update", False, False)
        parts = name.split("+")
        return cls(name, COSINE, False, "der" in parts, "ns" in parts)


@dataclass
class AdaptStats:
    seconds: float
    best_epoch: int
    dev_accuracy: float
    lambdas: np.ndarray
    n_train: int


def adapt_domain(model: Model, new: DomainData, store: ExemplarStore, cfg: AdaptationConfig,
                 variant: Variant, seed: Optional[int] = None) -> AdaptStats:
    """Accommodate one new domain in place; returns timing and selection stats.

    Expands both tables by a row, trains only the new rows (everything for
    ``linear-full-update``) on the new data plus down-sampled exemplars, then
    adds the domain's exemplars to ``store``.
    """
    cfg.validate()
    if variant.mode != model.mode:
        raise ValueError(f"variant {variant.name} needs a {variant.mode} model, got {model.mode}")
    if new.name in model.catalog:
        raise ValueError(f"domain {new.name!r} is already in the catalog")
    if new.domain != model.n_domains:
        raise ValueError(f"new domain id {new.domain} but catalog has {model.n_domains} domains")
    if not new.train or not new.dev:
        raise ValueError(f"domain {new.name!r} has no training or dev data")
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    k = model.n_domains

    if variant.full_update:
        model.encoder_trainable = True
        model.hidden_trainable = True
        model.domain_table.unfreeze()
        model.prediction.table.unfreeze()
    model.add_domain(new.name, freeze_existing=not variant.full_update)
    n_known = model.n_domains
    train_new = [s.restricted(n_known) for s in new.train]
    dev_new = [s.restricted(n_known) for s in new.dev]

    lambdas = np.zeros(k)
    new_enc = None
    if variant.der or variant.ns or not variant.full_update:
        new_enc = model.encode(train_new)
    if variant.der and cfg.lambda_dsl > 0:
        if cfg.weighted_lambda:
            lambdas = similarity_weights(domain_mean_representation(new_enc),
                                         store.known_means(k), cfg.lambda_dsl)
        else:
            lambdas = np.full(k, cfg.lambda_dsl)

    train = list(train_new)
    if variant.ns:
        pool = store.pool()
        if cfg.downsample:
            pool = downsample_exemplars(pool, len(train_new), np.random.default_rng([seed, 5, k]))
        train += pool

    th = cfg.thresholds
    der_cfg = cfg.der
    table = model.domain_table
    frozen_rows = table.value[:k]

    if variant.mode == COSINE:
        def loss_fn(scores, labels):
            loss = hinge_loss(scores, labels, th)
            if variant.der:
                loss = ad.add(loss, der_loss(table.blocks[-1], frozen_rows, lambdas, der_cfg))
            return loss
    else:
        loss_fn = log_sigmoid_loss

    dev_enc = None if variant.full_update else model.encode(dev_new)

    def dev_score():
        return evaluate(model, dev_new, dev_enc)

    best_epoch, dev_acc = _fit(model, train, loss_fn, cfg.adapt_epochs, cfg.adapt_lr,
                               cfg.adapt_batch, cfg, np.random.default_rng([seed, 6, k]), dev_score)
    model.freeze_all()
    if variant.full_update:
        new_enc = model.encode(train_new)
    store.add_domain(new.domain, train_new, new_enc, np.random.default_rng([seed, 4, new.domain]),
                     n_known)
    return AdaptStats(time.perf_counter() - t0, best_epoch, dev_acc, lambdas, len(train))


# ----------------------------------------------------------------- checkpoints


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(rec: dict) -> np.ndarray:
    raw = base64.b64decode(rec["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(rec["shape"]).copy()


def checkpoint_tensors(model: Model) -> Dict[str, np.ndarray]:
    """Flat name -> array view of every parameter; tables split into rows."""
    out: Dict[str, np.ndarray] = {}
    for p in model.encoder_parameters():
        out[p.name] = p.value
    for p in model.hidden.parameters():
        out[p.name] = p.value
    for label, table in (("domain_embedding", model.domain_table),
                         ("prediction", model.prediction.table)):
        for i, row in enumerate(table.value):
            out[f"{label}/row{i:05d}"] = row
    return out


def checkpoint_dict(model: Model, cfg: AdaptationConfig) -> dict:
    return {
        "format": "contdomain-checkpoint/1",
        "mode": model.mode,
        "catalog": list(model.catalog),
        "vocabulary": model.vocab.tokens(),
        "frozen_prefix": {"domain_embedding": model.domain_table.frozen_prefix,
                          "prediction": model.prediction.table.frozen_prefix},
        "trainable": {"encoder": model.encoder_trainable, "hidden": model.hidden_trainable},
        "config": asdict(cfg),
        "config_hash": cfg.digest(),
        "tensors": {k: _encode_array(v) for k, v in sorted(checkpoint_tensors(model).items())},
    }


def checkpoint_bytes(model: Model, cfg: AdaptationConfig) -> bytes:
    return json.dumps(checkpoint_dict(model, cfg), sort_keys=True, indent=1).encode("utf-8")


def save_checkpoint(model: Model, cfg: AdaptationConfig, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, cfg))


def load_checkpoint(path) -> Tuple[Model, AdaptationConfig]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return model_from_dict(data)


def model_from_dict(data: dict) -> Tuple[Model, AdaptationConfig]:
    if data.get("format") != "contdomain-checkpoint/1":
        raise ValueError("not a contdomain checkpoint")
    known = {f.name for f in fields(AdaptationConfig)}
    cfg = AdaptationConfig(**{k: v for k, v in data["config"].items() if k in known})
    if cfg.digest() != data["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    tensors = {k: _decode_array(v) for k, v in data["tensors"].items()}
    vocab = Vocabulary.from_tokens(data["vocabulary"])
    model = Model(vocab, data["catalog"], cfg, data["mode"])
    for p in model.encoder_parameters() + model.hidden.parameters():
        if tensors[p.name].shape != p.shape:
            raise ValueError(f"checkpoint tensor {p.name} has shape {tensors[p.name].shape}")
        p.value = tensors[p.name]
    k = len(data["catalog"])
    for label, table in (("domain_embedding", model.domain_table),
                         ("prediction", model.prediction.table)):
        rows = np.stack([tensors[f"{label}/row{i:05d}"] for i in range(k)])
        table.set_rows(rows, data["frozen_prefix"][label])
    model.encoder_trainable = data["trainable"]["encoder"]
    model.hidden_trainable = data["trainable"]["hidden"]
    return model, cfg


def checkpoint_diff(a: dict, b: dict) -> List[str]:
    """Names of tensors whose bytes differ between two checkpoint dicts (incl. added/removed)."""
    ta, tb = a["tensors"], b["tensors"]
    return sorted(n for n in set(ta) | set(tb) if ta.get(n) != tb.get(n))


def save_store(store: ExemplarStore, catalog: Sequence[str], path) -> None:
    recs = {
        "budget": store.budget,
        "catalog": list(catalog),
        "exemplars": [{"domain": d, "tokens": list(s.tokens), "label": s.domain,
                       "enabled": list(s.enabled)}
                      for d in sorted(store.exemplars) for s in store.exemplars[d]],
        "means": {str(d): _encode_array(m) for d, m in sorted(store.means.items())},
    }
    Path(path).write_text(json.dumps(recs, sort_keys=True, indent=1), encoding="utf-8")


def load_store(path) -> Tuple[ExemplarStore, List[str]]:
    recs = json.loads(Path(path).read_text(encoding="utf-8"))
    store = ExemplarStore(recs["budget"])
    for d in recs["means"]:
        store.means[int(d)] = _decode_array(recs["means"][d])
        store.exemplars[int(d)] = []
    for r in recs["exemplars"]:
        if r["label"] != r["domain"]:
            raise ValueError(f"exemplar labelled {r['label']} filed under domain {r['domain']}")
        store.exemplars.setdefault(r["domain"], []).append(
            Sample(tuple(r["tokens"]), r["label"], tuple(r["enabled"])))
    return store, recs["catalog"]

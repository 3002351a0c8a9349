"""Synthetic utterance corpus: topic bags of words with enabled-domain sets.

Each domain owns a weighted set of topic words drawn from a shared
vocabulary; designated similar pairs copy part of each other's topic words.
An utterance mixes topic words with background words. Every sample carries
an enabled-domain set over the *full* catalog; consumers restrict it to the
domains known at the time (see :meth:`Sample.restricted`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Sample:
    tokens: Tuple[str, ...]
    domain: int
    enabled: Tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValueError("sample has no tokens")
        if len(set(self.enabled)) != len(self.enabled):
            raise ValueError("enabled set has duplicate ids")

    def restricted(self, n_known: int) -> "Sample":
        """Copy whose enabled set only keeps ids of the first ``n_known`` domains."""
        kept = tuple(i for i in self.enabled if i < n_known)
        return self if kept == self.enabled else Sample(self.tokens, self.domain, kept)


@dataclass
class DomainData:
    domain: int
    name: str
    train: List[Sample] = field(default_factory=list)
    dev: List[Sample] = field(default_factory=list)
    test: List[Sample] = field(default_factory=list)

    def split(self, name: str) -> List[Sample]:
        return getattr(self, name)

    @property
    def size(self) -> int:
        return len(self.train) + len(self.dev) + len(self.test)


@dataclass
class Corpus:
    """Catalog of domain names plus per-domain split data, indexed by catalog position."""

    names: List[str]
    domains: List[DomainData]

    def __post_init__(self):
        if len(self.names) != len(self.domains):
            raise ValueError("catalog and domain data disagree in length")
        for i, d in enumerate(self.domains):
            if d.domain != i:
                raise ValueError(f"domain data at position {i} carries id {d.domain}")

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return (isinstance(other, Corpus) and self.names == other.names
                and all(a == b for a, b in zip(self.domains, other.domains)))

    def relabel(self, order: Sequence[int]) -> "Corpus":
        """Corpus whose catalog follows ``order`` (old ids), remapping labels and enabled sets."""
        order = list(order)
        if sorted(order) != list(range(len(self))):
            raise ValueError("order must be a permutation of the catalog")
        new_id = {old: new for new, old in enumerate(order)}

        def remap(s: Sample) -> Sample:
            return Sample(s.tokens, new_id[s.domain], tuple(new_id[e] for e in s.enabled))

        domains = []
        for new, old in enumerate(order):
            src = self.domains[old]
            domains.append(DomainData(new, src.name, [remap(s) for s in src.train],
                                      [remap(s) for s in src.dev], [remap(s) for s in src.test]))
        return Corpus([self.names[o] for o in order], domains)


@dataclass
class GeneratorConfig:
    """Synthetic corpus shape.

    Topical words are grouped into concepts of ``words_per_concept`` words; a
    domain's ``topic_words`` are the union of ``topic_words // words_per_concept``
    concepts, so new domains are new combinations of known words.
    """

    n_domains: int = 45
    vocab_size: int = 220
    n_background: int = 40
    topic_words: int = 12
    words_per_concept: int = 4
    utterances_per_domain: int = 250
    size_jitter: float = 0.3
    min_length: int = 4
    max_length: int = 10
    topic_prob: float = 0.7
    similar_pair_fraction: float = 0.3
    shared_topic_fraction: float = 0.5
    p_enable_truth: float = 0.9
    n_distractors: int = 5
    seed: int = 0

    @property
    def n_concepts(self) -> int:
        return (self.vocab_size - self.n_background) // self.words_per_concept

    @property
    def concepts_per_domain(self) -> int:
        return self.topic_words // self.words_per_concept

    def validate(self) -> None:
        for name in ("topic_prob", "similar_pair_fraction", "shared_topic_fraction",
                     "p_enable_truth", "size_jitter"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("n_domains", "vocab_size", "topic_words", "words_per_concept",
                     "utterances_per_domain", "min_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_length < self.min_length:
            raise ValueError("max_length must be >= min_length")
        if self.n_background < 0 or self.n_distractors < 0:
            raise ValueError("counts must be nonnegative")
        if self.topic_words % self.words_per_concept:
            raise ValueError("topic_words must be a multiple of words_per_concept")
        if self.n_concepts < self.concepts_per_domain:
            raise ValueError(f"vocabulary too small: {self.vocab_size - self.n_background} topical "
                             f"words for {self.topic_words} topic words per domain")
        if math.comb(self.n_concepts, self.concepts_per_domain) < self.n_domains:
            raise ValueError("vocabulary too small: not enough distinct concept combinations "
                             f"for {self.n_domains} domains")
        if round(self.utterances_per_domain * (1 - self.size_jitter)) < 10:
            raise ValueError("every domain needs at least 10 utterances to split 8:1:1")


def split_8_1_1(samples: Sequence, seed) -> Tuple[list, list, list]:
    """Seeded shuffle then an 8:1:1 train/dev/test cut."""
    n = len(samples)
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_dev = int(round(n / 10))
    n_test = int(round(n / 10))
    n_train = n - n_dev - n_test
    items = [samples[i] for i in perm]
    return items[:n_train], items[n_train:n_train + n_dev], items[n_train + n_dev:]


def _similar_pairs(rng: np.random.Generator, n: int, fraction: float) -> List[Tuple[int, int]]:
    n_pairs = int(round(fraction * n / 2))
    perm = rng.permutation(n)
    return [(int(perm[2 * i]), int(perm[2 * i + 1])) for i in range(n_pairs)]


def _domain_concepts(rng: np.random.Generator, cfg: GeneratorConfig
                     ) -> Tuple[List[Tuple[int, ...]], List[Tuple[int, int]]]:
    """Distinct concept combinations per domain; similar pairs share some concepts."""
    per = cfg.concepts_per_domain
    n_shared = min(per - 1, int(round(cfg.shared_topic_fraction * per))) if per > 1 else 0
    # least-used concepts first, so any prefix of the catalog covers the concept set
    usage = np.zeros(cfg.n_concepts)
    combos: List[Tuple[int, ...]] = []
    seen = set()
    while len(combos) < cfg.n_domains:
        keys = usage + rng.random(cfg.n_concepts) * 0.5
        c = tuple(sorted(int(x) for x in np.argsort(keys, kind="stable")[:per]))
        if c in seen:
            c = tuple(sorted(int(x) for x in rng.choice(cfg.n_concepts, size=per, replace=False)))
        if c not in seen:
            seen.add(c)
            combos.append(c)
            usage[list(c)] += 1
    pairs = _similar_pairs(rng, cfg.n_domains, cfg.similar_pair_fraction)
    for a, b in pairs:
        for _ in range(100):
            donor = [int(x) for x in rng.choice(combos[a], size=n_shared, replace=False)]
            rest = [c for c in rng.permutation(cfg.n_concepts) if c not in combos[a]]
            cand = tuple(sorted(donor + [int(x) for x in rest[:per - n_shared]]))
            if cand not in seen:
                seen.discard(combos[b])
                seen.add(cand)
                combos[b] = cand
                break
    return combos, pairs


def generate_corpus(cfg: GeneratorConfig) -> Corpus:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    words = [f"w{i:04d}" for i in range(cfg.vocab_size)]
    background = np.arange(cfg.n_background)

    combos, _ = _domain_concepts(rng, cfg)
    wpc = cfg.words_per_concept
    topics = [np.array([cfg.n_background + c * wpc + j for c in combo for j in range(wpc)])
              for combo in combos]
    weights = [rng.dirichlet(np.full(cfg.topic_words, 2.0)) for _ in range(cfg.n_domains)]

    lo = max(10, int(round(cfg.utterances_per_domain * (1 - cfg.size_jitter))))
    hi = int(round(cfg.utterances_per_domain * (1 + cfg.size_jitter)))
    others = np.arange(cfg.n_domains)

    names = [f"domain{i:03d}" for i in range(cfg.n_domains)]
    domains = []
    for d in range(cfg.n_domains):
        count = int(rng.integers(lo, hi + 1))
        samples = []
        for _ in range(count):
            length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
            is_topic = rng.random(length) < cfg.topic_prob
            toks = []
            for flag in is_topic:
                if flag or len(background) == 0:
                    toks.append(words[int(rng.choice(topics[d], p=weights[d]))])
                else:
                    toks.append(words[int(rng.choice(background))])
            enabled = []
            if rng.random() < cfg.p_enable_truth:
                enabled.append(d)
            pool = others[others != d]
            n_extra = min(cfg.n_distractors, len(pool))
            enabled.extend(int(x) for x in rng.choice(pool, size=n_extra, replace=False))
            samples.append(Sample(tuple(toks), d, tuple(sorted(enabled))))
        train, dev, test = split_8_1_1(samples, [cfg.seed, d])
        domains.append(DomainData(d, names[d], train, dev, test))
    return Corpus(names, domains)


def similar_pairs(cfg: GeneratorConfig) -> List[Tuple[int, int]]:
    """The similar-domain pairs :func:`generate_corpus` uses for ``cfg``."""
    return _domain_concepts(np.random.default_rng(cfg.seed), cfg)[1]


# ------------------------------------------------------------------------ I/O


def write_corpus(corpus: Corpus, path) -> None:
    """One JSON record per line, grouped by domain in catalog order."""
    lines = []
    for d in corpus.domains:
        for split in SPLITS:
            for s in d.split(split):
                rec = {"tokens": list(s.tokens), "domain": corpus.names[s.domain],
                       "enabled": [corpus.names[e] for e in s.enabled], "split": split}
                lines.append(json.dumps(rec, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corpus(path, catalog: Optional[Sequence[str]] = None) -> Corpus:
    """Inverse of :func:`write_corpus`.

    Without ``catalog`` the domain order is the order of first appearance as
    a ground-truth label. With it, any other name is an error.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({err.msg})") from None
            for key in ("tokens", "domain", "enabled", "split"):
                if key not in rec:
                    raise ValueError(f"{path}:{lineno}: missing field {key!r}")
            if rec["split"] not in SPLITS:
                raise ValueError(f"{path}:{lineno}: unknown split {rec['split']!r}")
            if not isinstance(rec["tokens"], list) or not rec["tokens"]:
                raise ValueError(f"{path}:{lineno}: tokens must be a nonempty list")
            records.append((lineno, rec))

    if catalog is None:
        names: List[str] = []
        for _, rec in records:
            if rec["domain"] not in names:
                names.append(rec["domain"])
    else:
        names = list(catalog)
    ids: Dict[str, int] = {n: i for i, n in enumerate(names)}

    domains = [DomainData(i, n) for i, n in enumerate(names)]
    for lineno, rec in records:
        for name in [rec["domain"], *rec["enabled"]]:
            if name not in ids:
                raise ValueError(f"{path}:{lineno}: unknown domain {name!r}")
        try:
            sample = Sample(tuple(rec["tokens"]), ids[rec["domain"]],
                            tuple(ids[n] for n in rec["enabled"]))
        except ValueError as err:
            raise ValueError(f"{path}:{lineno}: {err}") from None
        domains[sample.domain].split(rec["split"]).append(sample)
    return Corpus(names, domains)

"""INI-style run configuration: ``[corpus]``, ``[adaptation]`` and ``[plan]`` sections.

Each key is a field of the matching dataclass; values are parsed with the
field's declared type, so a typo fails loudly instead of being ignored.
"""

from __future__ import annotations

import configparser
from dataclasses import fields, replace
from typing import Dict, Optional

from .corpus import GeneratorConfig
from .engine import AdaptationConfig
from .experiments import ExperimentPlan

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind, raw: str, key: str):
    raw = raw.strip()
    if kind in (bool, "bool"):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    if kind in ("Optional[str]", "str", str):
        return raw
    raise TypeError(f"{key}: unsupported field type {kind!r}")


def _apply(obj, values: Dict[str, str], section: str):
    known = {f.name: f.type for f in fields(obj)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise KeyError(f"[{section}] unknown key {key!r}; valid keys: {', '.join(sorted(known))}")
        updates[key] = _convert(known[key], raw, f"[{section}] {key}")
    return replace(obj, **updates)


def parse_config(text: str, base: Optional[ExperimentPlan] = None) -> ExperimentPlan:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    parser.read_string(text)
    plan = base or ExperimentPlan()
    extra = set(parser.sections()) - {"corpus", "adaptation", "plan"}
    if extra:
        raise KeyError(f"unknown config section(s): {', '.join(sorted(extra))}")
    corpus, adaptation = plan.corpus, plan.adaptation
    if parser.has_section("corpus"):
        corpus = _apply(corpus, dict(parser["corpus"]), "corpus")
    if parser.has_section("adaptation"):
        adaptation = _apply(adaptation, dict(parser["adaptation"]), "adaptation")
    plan = replace(plan, corpus=corpus, adaptation=adaptation)
    if parser.has_section("plan"):
        values = dict(parser["plan"])
        for nested in ("corpus", "adaptation"):
            if nested in values:
                raise KeyError(f"[plan] {nested} must be given as its own section")
        plan = _apply(plan, values, "plan")
    return plan


def load_config(path, base: Optional[ExperimentPlan] = None) -> ExperimentPlan:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def dump_config(plan: ExperimentPlan) -> str:
    lines = []
    for section, obj in (("plan", plan), ("corpus", plan.corpus), ("adaptation", plan.adaptation)):
        lines.append(f"[{section}]")
        for f in fields(obj):
            v = getattr(obj, f.name)
            if f.name in ("corpus", "adaptation") or v is None:
                continue
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)

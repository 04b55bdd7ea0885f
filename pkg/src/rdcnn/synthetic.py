"""Templated synthetic clinical corpus for desk-scale end-to-end checks.

Clauses are built from fixed context words and typed entity slots over a
small character alphabet. Some entity surfaces only occur at test time and
a typed lexicon covers a fixed fraction of all surfaces, so the lexicon
can help on unseen entities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rdcnn.corpus import ENTITY_TYPES, EntitySpan, EntityType, Record
from rdcnn.dictionary import Lexicon

ALPHABET = (
    "腹胸头颈背肝肾肺心胃"
    "痛热咳喘肿晕吐泻痒麻"
    "查验超声影像血尿检测"
    "药针术疗敷灸服注射剂"
    "炎症癌瘤病毒感染伤裂"
)  # 50 symbols
END = "。"


@dataclass
class SyntheticCorpus:
    train: list[Record]
    test: list[Record]
    lexicon: Lexicon
    seen: dict[str, EntityType]
    unseen: dict[str, EntityType]


def _word(rng, lo, hi):
    size = int(rng.integers(lo, hi + 1))
    return "".join(rng.choice(list(ALPHABET), size=size))


def generate(
    seed: int = 0,
    n_train: int = 500,
    n_test: int = 100,
    surfaces_per_type: int = 20,
    unseen_fraction: float = 0.1,
    lexicon_coverage: float = 0.6,
    n_context: int = 30,
    n_templates: int = 24,
) -> SyntheticCorpus:
    """Draw a train/test split and a lexicon from one seeded generator."""
    rng = np.random.default_rng(seed)
    surfaces: dict[str, EntityType] = {}
    for etype in ENTITY_TYPES:
        count = 0
        while count < surfaces_per_type:
            w = _word(rng, 1, 4)
            if w not in surfaces:
                surfaces[w] = etype
                count += 1
    contexts = []
    while len(contexts) < n_context:
        w = _word(rng, 1, 3)
        if w not in surfaces and w not in contexts:
            contexts.append(w)

    # Template: context word, then 1-2 (slot, context word) pairs.
    templates = []
    for _ in range(n_templates):
        parts = [contexts[rng.integers(n_context)]]
        for _ in range(int(rng.integers(1, 3))):
            parts.append(ENTITY_TYPES[rng.integers(len(ENTITY_TYPES))])
            parts.append(contexts[rng.integers(n_context)])
        templates.append(parts)

    names = list(surfaces)
    order = rng.permutation(len(names))
    n_unseen = int(round(unseen_fraction * len(names)))
    unseen = {names[i]: surfaces[names[i]] for i in order[:n_unseen]}
    seen = {names[i]: surfaces[names[i]] for i in order[n_unseen:]}
    covered = rng.permutation(len(names))[: int(round(lexicon_coverage * len(names)))]
    lexicon = Lexicon({names[i]: surfaces[names[i]] for i in sorted(covered)})

    def by_type(pool):
        return {t: [w for w, wt in pool.items() if wt == t] for t in ENTITY_TYPES}

    seen_by_type, all_by_type = by_type(seen), by_type(surfaces)

    def clause(pools):
        parts = templates[rng.integers(len(templates))]
        text, spans = "", []
        for part in parts:
            if isinstance(part, EntityType):
                options = pools[part]
                w = options[rng.integers(len(options))]
                spans.append(EntitySpan(len(text), len(text) + len(w) - 1, part))
                text += w
            else:
                text += part
        return Record(text + END, spans)

    train = [clause(seen_by_type) for _ in range(n_train)]
    test = [clause(all_by_type) for _ in range(n_test)]
    return SyntheticCorpus(train, test, lexicon, seen, unseen)

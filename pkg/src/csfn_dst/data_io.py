"""Corpus ingestion, canonical corpus JSON, and the synthetic toy corpus.

Canonical corpus file::

    {"version": 1,
     "splits": {"train": [ids], "valid": [ids], "test": [ids]},
     "dialogues": [{"id": str,
                    "turns": [{"system": str, "user": str,
                               "state": [[domain, slot, value], ...]}]}]}

``state`` is the cumulative gold state after the user turn. The don't-care
value is stored as the text ``"dont care"``.
"""
from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .encoding import DONTCARE, value_tokens
from .schema_graph import SchemaDef

log = logging.getLogger(__name__)

CORPUS_VERSION = 1
SPLITS = ("train", "valid", "test")
DONTCARE_TEXT = " ".join(DONTCARE)
EXCLUDED_DOMAINS = frozenset({"hospital", "police"})


class CorpusError(ValueError):
    pass


@dataclass
class Turn:
    system: str
    user: str
    state: list  # [(domain, slot, value_text)]

    def state_dict(self) -> dict:
        return state_from_triplets(self.state)


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]


@dataclass
class Corpus:
    train: list[Dialogue] = field(default_factory=list)
    valid: list[Dialogue] = field(default_factory=list)
    test: list[Dialogue] = field(default_factory=list)
    schema: dict | None = None

    def split(self, name: str) -> list[Dialogue]:
        if name not in SPLITS:
            raise CorpusError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_dialogues(self) -> list[Dialogue]:
        return self.train + self.valid + self.test


def state_from_triplets(triplets) -> dict:
    """``[(domain, slot, value_text)]`` -> ``{(domain, slot): value_tokens}``."""
    state = {}
    for d, s, v in triplets:
        toks = value_tokens(v)
        if toks:
            state[(d, s)] = toks
    return state


def state_to_triplets(state: dict) -> list:
    return [[d, s, " ".join(state[(d, s)])] for d, s in sorted(state)]


# -- canonical JSON -------------------------------------------------------
def corpus_to_json(corpus: Corpus) -> dict:
    def dump(dial):
        return {
            "id": dial.id,
            "turns": [{"system": t.system, "user": t.user, "state": [list(x) for x in t.state]} for t in dial.turns],
        }

    out = {
        "version": CORPUS_VERSION,
        "splits": {name: [d.id for d in corpus.split(name)] for name in SPLITS},
        "dialogues": [dump(d) for d in corpus.all_dialogues()],
    }
    if corpus.schema is not None:
        out["schema"] = corpus.schema
    return out


def corpus_from_json(raw: dict) -> Corpus:
    version = raw.get("version", CORPUS_VERSION)
    if version != CORPUS_VERSION:
        raise CorpusError(f"corpus version {version}, expected {CORPUS_VERSION}")
    dialogues = []
    for d in raw["dialogues"]:
        turns = [Turn(t.get("system", ""), t["user"], [tuple(x) for x in t.get("state", [])]) for t in d["turns"]]
        dialogues.append(Dialogue(str(d["id"]), turns))
    by_id = {d.id: d for d in dialogues}
    if len(by_id) != len(dialogues):
        raise CorpusError("duplicate dialogue ids")
    corpus = Corpus(schema=raw.get("schema"))
    splits = raw.get("splits")
    if splits is None:
        n = len(dialogues)
        a, b = int(0.8 * n), int(0.9 * n)
        corpus.train, corpus.valid, corpus.test = dialogues[:a], dialogues[a:b], dialogues[b:]
        return corpus
    seen = set()
    for name in SPLITS:
        ids = splits.get(name, [])
        if seen.intersection(ids):
            raise CorpusError(f"split {name!r} overlaps another split")
        seen.update(ids)
        setattr(corpus, name, [by_id[i] for i in ids])
    return corpus


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_json(corpus), ensure_ascii=False, sort_keys=True, indent=1), encoding="utf-8"
    )


def load_corpus(path) -> Corpus:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: malformed JSON ({exc})") from None
    return corpus_from_json(raw)


# -- MultiWOZ (TRADE-preprocessed layout) ---------------------------------
TRADE_FILES = {"train": "train_dials.json", "valid": "dev_dials.json", "test": "test_dials.json"}

_SLOT_ALIASES = {
    "pricerange": "price_range",
    "leaveat": "leave_at",
    "arriveby": "arrive_by",
}
_DONTCARE_VARIANTS = {"dontcare", "dont care", "don't care", "do n't care", "doesn't care", "does not care"}
_EMPTY_VARIANTS = {"", "none", "not mentioned"}


def normalize_slot_name(raw: str) -> str:
    name = raw.strip().lower()
    name = _SLOT_ALIASES.get(name, name)
    return name.replace(" ", "_")


def normalize_value(raw: str) -> str | None:
    """Lowercased value text; ``None`` for empty markers; don't-care unified."""
    v = " ".join(raw.strip().lower().split())
    if v in _EMPTY_VARIANTS:
        return None
    if v in _DONTCARE_VARIANTS:
        return DONTCARE_TEXT
    return v.replace("-", " ").strip() or None


@dataclass
class IngestReport:
    dialogues_excluded: int = 0
    dropped: Counter = field(default_factory=Counter)
    normalized: Counter = field(default_factory=Counter)


def _convert_trade_dialogue(raw: dict, known: set, report: IngestReport):
    domains = set(raw.get("domains", []))
    if domains and domains <= EXCLUDED_DOMAINS:
        report.dialogues_excluded += 1
        return None
    turns = []
    for t in sorted(raw["dialogue"], key=lambda x: x.get("turn_idx", 0)):
        state = {}
        for entry in t.get("belief_state", []):
            for key, value in entry["slots"]:
                domain, _, slot = key.partition("-")
                domain, slot = domain.strip().lower(), normalize_slot_name(slot)
                if domain in EXCLUDED_DOMAINS:
                    report.dropped[f"excluded domain {domain}"] += 1
                    continue
                if (domain, slot) not in known:
                    report.dropped[f"unknown {domain}-{slot}"] += 1
                    continue
                norm = normalize_value(value)
                if norm is None:
                    continue
                if norm != value:
                    report.normalized[f"{value!r} -> {norm!r}"] += 1
                state[(domain, slot)] = norm
        triplets = [(d, s, state[(d, s)]) for d, s in sorted(state)]
        turns.append(Turn(t.get("system_transcript", "").strip(), t.get("transcript", "").strip(), triplets))
    return Dialogue(str(raw.get("dialogue_idx", raw.get("id"))), turns)


def load_multiwoz(path, schema: SchemaDef, split: str = "test") -> tuple[Corpus, IngestReport]:
    """Read TRADE-style ``*_dials.json`` files.

    ``path`` is a directory holding ``train_dials.json`` / ``dev_dials.json``
    / ``test_dials.json`` (missing files give empty splits), or a single file
    whose dialogues all go to ``split``.
    """
    path = Path(path)
    known = set(schema.domain_slots)
    report = IngestReport()
    corpus = Corpus(schema=schema.to_dict())
    files = {split: path} if path.is_file() else {k: path / v for k, v in TRADE_FILES.items()}
    for name, fpath in files.items():
        if not fpath.exists():
            continue
        try:
            raw = json.loads(fpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{fpath}: malformed JSON ({exc})") from None
        dialogues = [d for d in (_convert_trade_dialogue(r, known, report) for r in raw) if d is not None]
        setattr(corpus, name, dialogues)
    if report.dropped:
        log.warning("dropped %d annotations: %s", sum(report.dropped.values()), dict(report.dropped))
    return corpus, report


# -- synthetic toy corpus -------------------------------------------------
TOY_VALUES = {
    "area": ["centre", "north", "south", "east", "west"],
    "price_range": ["cheap", "moderate", "expensive"],
    "stars": ["two", "three", "four", "five"],
    "departure": ["cambridge station", "the gonville hotel", "kings college", "clare hall",
                  "the cow pub", "addenbrookes hospital", "the botanic garden", "jesus green"],
    "destination": ["cambridge station", "the gonville hotel", "kings college", "clare hall",
                    "the cow pub", "addenbrookes hospital", "the botanic garden", "jesus green"],
    "leave_at": ["09:30", "10:15", "11:45", "13:00", "14:30", "16:45", "18:00", "19:15"],
    "arrive_by": ["09:30", "10:15", "11:45", "13:00", "14:30", "16:45", "18:00", "19:15"],
}

TOY_TEMPLATES = {
    "area": ["in the {v}", "in the {v} of town", "located in the {v}"],
    "price_range": ["that is {v}", "in the {v} price range", "with a {v} price"],
    "stars": ["with {v} stars", "rated {v} stars"],
    "departure": ["from {v}", "leaving from {v}", "picking me up at {v}"],
    "destination": ["to {v}", "going to {v}", "dropping me at {v}"],
    "leave_at": ["leaving at {v}", "departing after {v}"],
    "arrive_by": ["arriving by {v}", "to get there by {v}"],
}

TOY_DONTCARE = {
    "area": ["any area is fine", "i do not mind the area"],
    "price_range": ["any price is fine", "i do not mind the price"],
    "stars": ["any number of stars is fine", "i do not mind the stars"],
    "leave_at": ["any departure time is fine", "i do not mind when we leave"],
}

_TOY_OPENERS = {
    "hotel": ["i am looking for a hotel", "i need a hotel", "can you find me a hotel"],
    "taxi": ["i need a taxi", "please book me a taxi", "i want a taxi"],
}
_TOY_FOLLOWUPS = {
    "hotel": ["for the hotel ,", "also the hotel should be", "the hotel must be"],
    "taxi": ["for the taxi ,", "the taxi should be", "also the taxi needs to be"],
}
_TOY_SYSTEM = ["what else can i help you with ?", "sure , anything else ?", "ok , noted . what else ?",
               "i can help with that . any other preferences ?", "got it . is there anything more ?"]


def generate_toy_corpus(schema: SchemaDef, n_dialogues: int = 200, seed: int = 7,
                        dontcare_rate: float = 0.2) -> Corpus:
    """Templated dialogues whose values always appear in the user turn.

    States only grow: each turn adds one to three new slots, some as
    don't-care. Splits are 80/10/10 in generation order.
    """
    rng = random.Random(seed)
    dialogues = []
    for n in range(n_dialogues):
        pairs = [(d, s) for d, s in schema.domain_slots if s in TOY_VALUES]
        k = rng.randint(2, len(pairs))
        chosen = rng.sample(pairs, k)
        chosen.sort(key=lambda p: (schema.domains.index(p[0]), rng.random()))
        n_turns = rng.randint(2, min(6, k))
        # split k slot mentions into n_turns non-empty groups of at most three
        sizes = [1] * n_turns
        for _ in range(k - n_turns):
            open_ = [i for i, s in enumerate(sizes) if s < 3]
            if not open_:
                break
            sizes[rng.choice(open_)] += 1
        chosen = chosen[: sum(sizes)]
        state, turns, pos, mentioned = {}, [], 0, set()
        for t, size in enumerate(sizes):
            group = chosen[pos : pos + size]
            pos += size
            clauses = []
            by_domain = {}
            for d, s in group:
                by_domain.setdefault(d, []).append(s)
            for d, slots in by_domain.items():
                opener = rng.choice(_TOY_FOLLOWUPS[d] if d in mentioned else _TOY_OPENERS[d])
                mentioned.add(d)
                parts = []
                for s in slots:
                    if s in TOY_DONTCARE and rng.random() < dontcare_rate:
                        parts.append(rng.choice(TOY_DONTCARE[s]))
                        state[(d, s)] = DONTCARE_TEXT
                    else:
                        v = rng.choice(TOY_VALUES[s])
                        if s == "destination" and state.get((d, "departure")) == v:
                            v = rng.choice([x for x in TOY_VALUES[s] if x != v])
                        parts.append(rng.choice(TOY_TEMPLATES[s]).format(v=v))
                        state[(d, s)] = v
                clauses.append(opener + " " + " and ".join(parts))
            user = " . ".join(clauses)
            system = "" if t == 0 else rng.choice(_TOY_SYSTEM)
            turns.append(Turn(system, user, [(d, s, state[(d, s)]) for d, s in sorted(state)]))
        dialogues.append(Dialogue(f"toy-{seed}-{n:05d}", turns))
    a, b = int(0.8 * n_dialogues), int(0.9 * n_dialogues)
    return Corpus(dialogues[:a], dialogues[a:b], dialogues[b:], schema=schema.to_dict())

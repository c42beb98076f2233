"""Multi-domain schema, database, goal sampling, and match-count vectors.

Fixture JSON: {"domains": [{"name", "informable": {slot: [values]},
"requestable": [slots], "bookable": bool, "records": [{slot: value}]}]}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

BUCKETS = 4  # match-count buckets: 0, 1, 2-3, >=4


@dataclass
class DomainSchema:
    name: str
    informable: dict[str, list[str]]
    requestable: list[str]
    bookable: bool
    records: list[dict[str, str]]

    def __post_init__(self):
        if not self.informable or not self.requestable:
            raise ValueError(f"domain {self.name!r} needs informable and requestable slots")
        overlap = set(self.informable) & set(self.requestable)
        if overlap:
            raise ValueError(f"domain {self.name!r}: slots both informable and requestable: {overlap}")


@dataclass
class Schema:
    domains: list[DomainSchema]
    by_name: dict[str, DomainSchema] = field(init=False)

    def __post_init__(self):
        self.by_name = {d.name: d for d in self.domains}
        if len(self.by_name) != len(self.domains):
            raise ValueError("duplicate domain names")

    @property
    def db_vec_dim(self) -> int:
        return BUCKETS * len(self.domains)

    def to_dict(self) -> dict:
        return {
            "domains": [
                {
                    "name": d.name,
                    "informable": d.informable,
                    "requestable": d.requestable,
                    "bookable": d.bookable,
                    "records": d.records,
                }
                for d in self.domains
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls([DomainSchema(**dom) for dom in d["domains"]])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_fixture(name: str) -> Schema:
    """Load a packaged schema fixture: "main" or "alt"."""
    text = resources.files("dialoq").joinpath(f"fixtures/schema_{name}.json").read_text("utf-8")
    return Schema.from_dict(json.loads(text))


@dataclass
class DomainGoal:
    domain: str
    constraints: dict[str, str]
    requests: list[str]
    book: bool


@dataclass
class Goal:
    domains: list[DomainGoal]

    def to_dict(self) -> dict:
        return {
            "domains": [
                {"domain": g.domain, "constraints": g.constraints,
                 "requests": g.requests, "book": g.book}
                for g in self.domains
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Goal":
        return cls([DomainGoal(**g) for g in d["domains"]])


def count_matches(domain: DomainSchema, constraints: dict[str, str]) -> int:
    n = 0
    for rec in domain.records:
        if all(rec.get(s) == v for s, v in constraints.items()):
            n += 1
    return n


def bucket_index(count: int) -> int:
    if count == 0:
        return 0
    if count == 1:
        return 1
    if count <= 3:
        return 2
    return 3


def db_match_vector(constraints_by_domain: dict[str, dict[str, str]],
                    schema: Schema) -> np.ndarray:
    """Per domain (schema order), a one-hot over match-count buckets."""
    vec = np.zeros(schema.db_vec_dim, dtype=np.float32)
    for i, dom in enumerate(schema.domains):
        cons = constraints_by_domain.get(dom.name, {})
        vec[BUCKETS * i + bucket_index(count_matches(dom, cons))] = 1.0
    return vec


DOMAIN_COUNT_WEIGHTS = [0.6, 0.3, 0.1]  # 1, 2, 3 domains per goal


def sample_goal(schema: Schema, rng: np.random.Generator,
                allowed_domains: list[str] | None = None,
                max_attempts: int = 1000) -> Goal:
    """Sample a satisfiable goal: every domain's constraints match >=1 record."""
    names = [d.name for d in schema.domains]
    if allowed_domains is not None:
        names = [n for n in names if n in allowed_domains]
    if not names:
        raise ValueError("no domains available for goal sampling")
    n_domains = min(int(rng.choice([1, 2, 3], p=DOMAIN_COUNT_WEIGHTS)), len(names))
    chosen = [names[i] for i in sorted(rng.choice(len(names), size=n_domains, replace=False))]
    goals = []
    for name in chosen:
        dom = schema.by_name[name]
        slots = list(dom.informable)
        for attempt in range(max_attempts):
            k = int(rng.integers(1, min(3, len(slots)) + 1))
            picked = [slots[i] for i in sorted(rng.choice(len(slots), size=k, replace=False))]
            constraints = {s: str(rng.choice(dom.informable[s])) for s in picked}
            if count_matches(dom, constraints) >= 1:
                break
        else:
            raise ValueError(f"no satisfiable constraints found for domain {name!r} "
                             f"after {max_attempts} attempts")
        n_req = int(rng.integers(1, min(3, len(dom.requestable)) + 1))
        reqs = [dom.requestable[i]
                for i in sorted(rng.choice(len(dom.requestable), size=n_req, replace=False))]
        book = bool(dom.bookable and rng.random() < 0.5)
        goals.append(DomainGoal(name, constraints, reqs, book))
    return Goal(goals)


# ---------------------------------------------------------------------------
# Deterministic fixture construction. The shipped JSON files are the output of
# build_main_schema()/build_alt_schema(); tests pin that equivalence.

_MAIN_SPEC = {
    "restaurant": {
        "informable": {
            "area": ["centre", "north", "south", "east", "west"],
            "food": ["italian", "chinese", "indian", "thai", "british",
                     "french", "mexican", "korean"],
            "pricerange": ["cheap", "moderate", "expensive"],
        },
        "requestable": ["phone", "address", "postcode"],
        "bookable": True,
        "n_records": 44,
    },
    "hotel": {
        "informable": {
            "area": ["centre", "north", "south", "east", "west"],
            "stars": ["one", "two", "three", "four"],
            "parking": ["yes", "no"],
            "pricerange": ["cheap", "moderate", "expensive"],
        },
        "requestable": ["phone", "address", "postcode"],
        "bookable": True,
        "n_records": 36,
    },
    "attraction": {
        "informable": {
            "area": ["centre", "north", "south", "east", "west"],
            "category": ["museum", "park", "cinema", "theatre", "gallery", "club"],
            "pricerange": ["free", "cheap", "expensive"],
        },
        "requestable": ["phone", "address", "openhours"],
        "bookable": False,
        "n_records": 30,
    },
    "taxi": {
        "informable": {
            "departure": ["station", "airport", "museum", "square", "harbour",
                          "stadium", "market", "bridge"],
            "destination": ["station", "airport", "museum", "square", "harbour",
                            "stadium", "market", "bridge"],
            "cartype": ["sedan", "van", "luxury"],
        },
        "requestable": ["phone", "plate"],
        "bookable": True,
        "n_records": 40,
    },
    "police": {
        "informable": {
            "area": ["centre", "north", "south", "east", "west"],
            "service": ["theft", "traffic", "lostproperty"],
            "urgency": ["low", "high"],
        },
        "requestable": ["phone", "address"],
        "bookable": False,
        "n_records": 20,
    },
    "hospital": {
        "informable": {
            "department": ["cardiology", "neurology", "pediatrics", "oncology",
                           "emergency", "dermatology"],
            "area": ["centre", "north", "south", "east", "west"],
            "insurance": ["public", "private"],
        },
        "requestable": ["phone", "address"],
        "bookable": False,
        "n_records": 24,
    },
}

_ALT_SPEC = {
    "diner": {
        "informable": {
            "district": ["uptown", "downtown", "riverside", "oldtown", "suburb"],
            "cuisine": ["grill", "noodle", "curry", "tapas", "bakery",
                        "seafood", "vegan", "bbq"],
            "budget": ["low", "mid", "high"],
        },
        "requestable": ["contact", "location", "zipcode"],
        "bookable": True,
        "n_records": 44,
    },
    "hostel": {
        "informable": {
            "district": ["uptown", "downtown", "riverside", "oldtown", "suburb"],
            "rating": ["bronze", "silver", "gold", "platinum"],
            "garage": ["present", "absent"],
            "budget": ["low", "mid", "high"],
        },
        "requestable": ["contact", "location", "zipcode"],
        "bookable": True,
        "n_records": 36,
    },
    "venue": {
        "informable": {
            "district": ["uptown", "downtown", "riverside", "oldtown", "suburb"],
            "genre": ["exhibit", "garden", "screen", "stage", "studio", "lounge"],
            "budget": ["low", "mid", "high"],
        },
        "requestable": ["contact", "location", "schedule"],
        "bookable": False,
        "n_records": 30,
    },
    "shuttle": {
        "informable": {
            "origin": ["terminal", "plaza", "campus", "docks", "arena",
                       "depot", "mall", "tower"],
            "target": ["terminal", "plaza", "campus", "docks", "arena",
                       "depot", "mall", "tower"],
            "vehicle": ["coach", "minibus", "cab"],
        },
        "requestable": ["contact", "permit"],
        "bookable": True,
        "n_records": 40,
    },
    "patrol": {
        "informable": {
            "district": ["uptown", "downtown", "riverside", "oldtown", "suburb"],
            "issue": ["fraud", "noise", "vandalism"],
            "priority": ["routine", "urgent"],
        },
        "requestable": ["contact", "location"],
        "bookable": False,
        "n_records": 20,
    },
    "clinic": {
        "informable": {
            "ward": ["surgery", "radiology", "maternity", "orthopedics",
                     "psychiatry", "dental"],
            "district": ["uptown", "downtown", "riverside", "oldtown", "suburb"],
            "coverage": ["basic", "extended"],
        },
        "requestable": ["contact", "location"],
        "bookable": False,
        "n_records": 24,
    },
}


def _build_schema(spec: dict, seed: int) -> Schema:
    rng = np.random.default_rng(seed)
    domains = []
    for name, cfg in spec.items():
        records = []
        for i in range(cfg["n_records"]):
            rec = {s: str(rng.choice(vals)) for s, vals in cfg["informable"].items()}
            for r in cfg["requestable"]:
                rec[r] = f"{r}-{name[:3]}{i:02d}-{rng.integers(100, 999)}"
            records.append(rec)
        domains.append(DomainSchema(
            name=name,
            informable=cfg["informable"],
            requestable=cfg["requestable"],
            bookable=cfg["bookable"],
            records=records,
        ))
    return Schema(domains)


def build_main_schema(seed: int = 7) -> Schema:
    return _build_schema(_MAIN_SPEC, seed)


def build_alt_schema(seed: int = 11) -> Schema:
    return _build_schema(_ALT_SPEC, seed)

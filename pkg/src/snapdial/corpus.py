"""Restaurant-domain ontology and database, a template-based synthetic
dialogue generator with gold tracker labels and per-turn database match
counts, delexicalisation/lexicalisation, vocabulary building, and the
3:1:1 corpus split.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .numerics import Rng

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"

DONTCARE = "dontcare"
NOT_MENTIONED = "none"

DISPLAY_NAMES = {
    "food": "food",
    "pricerange": "price range",
    "area": "area",
    "address": "address",
    "phone": "phone",
    "postcode": "postcode",
}


class ConfigError(ValueError):
    """Invalid generation or pipeline configuration."""


class LexicalisationError(ValueError):
    def __init__(self, token: str):
        super().__init__(f"no substitution available for token {token}")
        self.token = token


@dataclass
class Ontology:
    informable: dict[str, list[str]]
    requestable: list[str]

    def __post_init__(self):
        if len(self.informable) != 3:
            raise ConfigError("expected 3 informable slots")
        if len(self.requestable) != 6:
            raise ConfigError("expected 6 requestable slots")
        for slot, values in self.informable.items():
            if not values or len(set(values)) != len(values):
                raise ConfigError(f"bad value list for slot {slot}")

    @property
    def informable_slots(self) -> list[str]:
        return list(self.informable.keys())

    def value_tokens(self) -> list[str]:
        """All [v.slot] placeholders, name first."""
        seen = ["[v.name]"]
        for slot in self.requestable:
            seen.append(f"[v.{slot}]")
        return seen

    def slot_tokens(self) -> list[str]:
        return [f"[s.{slot}]" for slot in self.requestable]

    def delex_tokens(self) -> list[str]:
        return self.value_tokens() + self.slot_tokens()

    def to_json(self) -> dict:
        return {"informable": self.informable, "requestable": self.requestable}

    @classmethod
    def from_json(cls, obj: dict) -> "Ontology":
        return cls(informable=dict(obj["informable"]),
                   requestable=list(obj["requestable"]))


def default_ontology() -> Ontology:
    return Ontology(
        informable={
            "food": ["british", "chinese", "french", "indian",
                     "italian", "mexican", "thai"],
            "pricerange": ["cheap", "moderate", "expensive"],
            "area": ["north", "south", "east", "west", "centre"],
        },
        requestable=["address", "phone", "postcode",
                     "food", "pricerange", "area"],
    )


@dataclass
class Database:
    entities: list[dict]

    def __post_init__(self):
        names = [e["name"] for e in self.entities]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate entity names in database")

    def query(self, constraints: dict[str, str | None]) -> list[dict]:
        """Entities matching every value-constrained slot.

        None / dontcare / not-mentioned entries are unconstrained.
        """
        out = []
        for e in self.entities:
            ok = True
            for slot, val in constraints.items():
                if val in (None, DONTCARE, NOT_MENTIONED):
                    continue
                if e.get(slot) != val:
                    ok = False
                    break
            if ok:
                out.append(e)
        return out

    def by_name(self, name: str) -> dict | None:
        for e in self.entities:
            if e["name"] == name:
                return e
        return None

    def to_json(self) -> list[dict]:
        return self.entities

    @classmethod
    def from_json(cls, obj: list) -> "Database":
        return cls(entities=[dict(e) for e in obj])


_NAME_FIRST = [
    "golden", "royal", "blue", "silver", "jade", "crimson", "velvet",
    "rustic", "urban", "cosy", "grand", "little", "ancient", "lucky",
    "happy", "sunny", "misty", "ivory", "copper", "amber", "scarlet",
    "emerald", "wild", "gentle", "proud", "quiet",
]
_NAME_SECOND = [
    "palace", "garden", "lotus", "table", "kitchen", "corner", "spoon",
    "fork", "lantern", "anchor", "barn", "house", "tavern", "den",
    "nook", "hearth", "galley", "pantry", "parlour", "orchard", "grill",
    "terrace",
]
_STREETS = [
    "mill", "station", "king", "queen", "bridge", "market", "castle",
    "chapel", "clifton", "histon", "trumpington", "regent", "tenison",
    "victoria", "newnham", "norfolk", "devonshire", "gwydir",
]
_STREET_KINDS = ["road", "street", "lane", "avenue"]


def build_database(ontology: Ontology, rng: Rng, size: int = 99) -> Database:
    """Synthesize a venue table; a handful of names reuse food values so
    delexicalisation has to resolve overlaps by longest match."""
    names: list[str] = []
    foods = ontology.informable["food"]
    for food in foods:
        names.append(f"{food} {rng.choice(_NAME_SECOND)}")
    while len(names) < size:
        cand = f"{rng.choice(_NAME_FIRST)} {rng.choice(_NAME_SECOND)}"
        if cand not in names:
            names.append(cand)
    names = names[:size]

    used_addr: set[str] = set()
    entities = []
    letters = "abcdefghijklmnopqrstuvwxyz"
    for i, name in enumerate(names):
        while True:
            addr = (f"{rng.integers(1, 99)} {rng.choice(_STREETS)} "
                    f"{rng.choice(_STREET_KINDS)}")
            if addr not in used_addr:
                used_addr.add(addr)
                break
        phone = f"01223 {rng.integers(100000, 999999)}"
        postcode = (f"cb{rng.integers(1, 5)}{rng.integers(0, 10)}"
                    f"{rng.choice(letters)}{rng.choice(letters)}")
        entities.append({
            "name": name,
            "food": rng.choice(foods),
            "pricerange": rng.choice(ontology.informable["pricerange"]),
            "area": rng.choice(ontology.informable["area"]),
            "address": addr,
            "phone": phone,
            "postcode": postcode,
        })
    return Database(entities=entities)


# ---------------------------------------------------------------------------
# delexicalisation


class Delexicaliser:
    """Longest-match, case-insensitive replacement of slot values and slot
    display names with generic placeholders."""

    def __init__(self, ontology: Ontology, database: Database):
        entries: list[tuple[tuple[str, ...], str]] = []
        for e in database.entities:
            entries.append((tuple(e["name"].split()), "[v.name]"))
            entries.append((tuple(e["address"].split()), "[v.address]"))
            entries.append((tuple(e["phone"].split()), "[v.phone]"))
            entries.append((tuple(e["postcode"].split()), "[v.postcode]"))
        for slot, values in ontology.informable.items():
            for v in values:
                entries.append((tuple(v.split()), f"[v.{slot}]"))
        for slot in ontology.requestable:
            entries.append((tuple(DISPLAY_NAMES[slot].split()), f"[s.{slot}]"))
        # longest span first; source order above breaks length ties
        # (names beat plain values)
        order = {}
        for idx, (span, tok) in enumerate(entries):
            if span not in order:
                order[span] = (tok, idx)
        self.entries = sorted(
            ((span, tok) for span, (tok, idx) in order.items()),
            key=lambda st: (-len(st[0]), st[0]))
        self.max_span = max(len(s) for s, _ in self.entries)
        self._by_span: dict[tuple[str, ...], str] = {
            span: tok for span, tok in reversed(self.entries)}
        # reversed insert keeps the highest-priority replacement per span

    def __call__(self, tokens: list[str]) -> list[str]:
        low = [t.lower() for t in tokens]
        out: list[str] = []
        i = 0
        n = len(low)
        while i < n:
            matched = False
            for span_len in range(min(self.max_span, n - i), 0, -1):
                span = tuple(low[i:i + span_len])
                tok = self._by_span.get(span)
                if tok is not None:
                    out.append(tok)
                    i += span_len
                    matched = True
                    break
            if not matched:
                out.append(low[i])
                i += 1
        return out


def delexicalise(tokens: list[str], ontology: Ontology,
                 database: Database) -> list[str]:
    return Delexicaliser(ontology, database)(tokens)


def lexicalise(tokens: list[str], entity: dict | None,
               top_values: dict[str, str] | None,
               ontology: Ontology) -> str:
    """Substitute entity values / belief-top values / display names back
    into a skeletal sentence; raises LexicalisationError when a
    placeholder has no source."""
    informable = set(ontology.informable_slots)
    out: list[str] = []
    for tok in tokens:
        if tok == EOS_TOKEN:
            continue
        if tok.startswith("[v.") and tok.endswith("]"):
            slot = tok[3:-1]
            if entity is not None and slot in entity:
                out.extend(str(entity[slot]).split())
            elif slot in informable and top_values and slot in top_values:
                out.extend(top_values[slot].split())
            else:
                raise LexicalisationError(tok)
        elif tok.startswith("[s.") and tok.endswith("]"):
            slot = tok[3:-1]
            if slot not in DISPLAY_NAMES:
                raise LexicalisationError(tok)
            out.extend(DISPLAY_NAMES[slot].split())
        else:
            out.append(tok)
    return " ".join(out)


# ---------------------------------------------------------------------------
# corpus data model


@dataclass
class Turn:
    user: list[str]
    user_lex: list[str]
    sys: list[str]
    labels: dict[str, str]
    requested: dict[str, int]
    db_match: int

    def to_json(self) -> dict:
        labels = dict(self.labels)
        labels["requestable"] = dict(self.requested)
        return {"user": self.user, "user_lex": self.user_lex,
                "sys": self.sys, "labels": labels, "dbMatch": self.db_match}

    @classmethod
    def from_json(cls, obj: dict) -> "Turn":
        labels = dict(obj["labels"])
        requested = dict(labels.pop("requestable"))
        return cls(user=list(obj["user"]), user_lex=list(obj["user_lex"]),
                   sys=list(obj["sys"]), labels=labels,
                   requested={k: int(v) for k, v in requested.items()},
                   db_match=int(obj["dbMatch"]))


@dataclass
class Dialogue:
    id: str
    goal_constraints: dict[str, str]
    goal_requests: list[str]
    turns: list[Turn] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"id": self.id,
                "goal": {"constraints": self.goal_constraints,
                         "requests": self.goal_requests},
                "turns": [t.to_json() for t in self.turns]}

    @classmethod
    def from_json(cls, obj: dict) -> "Dialogue":
        return cls(id=obj["id"],
                   goal_constraints=dict(obj["goal"]["constraints"]),
                   goal_requests=list(obj["goal"]["requests"]),
                   turns=[Turn.from_json(t) for t in obj["turns"]])


# ---------------------------------------------------------------------------
# templates

_GREETINGS = ["hello ,", "hi ,", "good day ,", "hey there ,",
              "good morning ,", "good evening ,", "greetings ,", "", "", ""]
_USER_TAILS = [
    "", "", "", "for tonight", "for my family", "for a celebration",
    "if possible", "when you get a chance", "my colleague recommended it",
    "we are in a hurry", "somewhere with a warm atmosphere",
    "nothing too fancy", "for a quiet evening", "for our anniversary",
    "before the cinema starts", "after our museum visit",
    "my parents are visiting this weekend", "to impress a client",
    "since we are celebrating a birthday", "as my cousin suggested",
    "because our usual spot closed down", "preferably with outdoor seating",
    "ideally somewhere child friendly", "suitable for vegetarians too",
    "with plenty of parking nearby", "within walking distance hopefully",
    "for a first date actually", "to treat my grandmother",
    "while the weather holds", "as soon as you can manage",
    "for a business lunch tomorrow", "following my doctor appointment",
    "once the match finishes", "given how hungry we are",
    "for twelve people roughly", "assuming they take bookings",
    "even though it is late", "despite the festival crowds",
    "so we can catch the last bus", "unless everything is booked",
    "provided the kitchen stays open", "whenever suits them honestly",
    "my neighbour keeps praising it", "after rehearsal on thursday",
    "during the holiday period", "although the forecast looks grim",
]

_INFORM = {
    ("food",): [
        "i am looking for a restaurant that serves {food} {FOODW}",
        "i want some {food} {FOODW}",
        "can you find me a {food} place",
        "i am after {food} cuisine",
        "any good {food} restaurants around",
        "find me a {food} restaurant please",
        "i fancy some {food} {FOODW} today",
        "is there a {food} place in town",
    ],
    ("pricerange",): [
        "i am looking for a {pricerange} restaurant",
        "i need a {pricerange} place to eat",
        "something {pricerange} please",
        "find me a {pricerange} restaurant",
        "a {pricerange} priced place would be great",
        "are there any {pricerange} restaurants",
    ],
    ("area",): [
        "i am looking for a restaurant in the {area}",
        "i want to eat in the {area} of town",
        "any restaurants in the {area}",
        "find me a place in the {area} please",
        "i am in the {area} and need a restaurant",
        "somewhere in the {area} would be good",
    ],
    ("food", "pricerange"): [
        "i want a {pricerange} {food} restaurant",
        "i am looking for {food} {FOODW} at a {pricerange} price",
        "a {pricerange} place serving {food} {FOODW} please",
        "find me some {pricerange} {food} {FOODW}",
        "i need a {pricerange} {food} restaurant",
        "is there a {pricerange} restaurant with {food} {FOODW}",
    ],
    ("food", "area"): [
        "i want {food} {FOODW} in the {area}",
        "looking for a {food} restaurant in the {area} of town",
        "any {food} places in the {area}",
        "find me {food} {FOODW} in the {area} please",
        "i am after a {food} restaurant somewhere in the {area}",
        "{food} {FOODW} in the {area} would be lovely",
    ],
    ("pricerange", "area"): [
        "i want a {pricerange} restaurant in the {area}",
        "looking for something {pricerange} in the {area}",
        "a {pricerange} place in the {area} of town please",
        "find me a {pricerange} restaurant in the {area}",
        "any {pricerange} restaurants in the {area}",
        "i need a {pricerange} place on the {area} side",
    ],
    ("food", "pricerange", "area"): [
        "i want a {pricerange} {food} restaurant in the {area}",
        "looking for {food} {FOODW} , {pricerange} , in the {area} of town",
        "find me a {pricerange} {food} place in the {area}",
        "i need a {pricerange} {food} restaurant in the {area}",
        "a {food} restaurant please , {pricerange} and in the {area}",
        "is there a {pricerange} {food} restaurant in the {area}",
    ],
    (): [
        "i am looking for a restaurant , anything will do",
        "find me a restaurant , i really do not mind which",
        "i need somewhere to eat , any restaurant is fine",
    ],
}

_USER_ANSWER = {
    "food": [
        "i would like {food} {FOODW}",
        "{food} please",
        "how about {food} {FOODW}",
        "{food} cuisine would be lovely",
        "something {food} sounds nice",
        "i fancy {food} {FOODW}",
        "we adore {food} dishes",
        "keen on {food} tonight",
    ],
    "pricerange": [
        "{pricerange} please",
        "i want something {pricerange}",
        "{pricerange} priced if possible",
        "let us keep it {pricerange}",
        "a {pricerange} one",
        "{pricerange} would suit us",
        "budget wise make it {pricerange}",
        "definitely {pricerange}",
    ],
    "area": [
        "in the {area} please",
        "the {area} part of town",
        "somewhere in the {area}",
        "the {area} side",
        "{area} would be best",
        "we are near the {area}",
        "around the {area} ideally",
        "let us stick to the {area}",
    ],
}

_USER_DONTCARE = {
    "food": [
        "any kind of {FOODW} is fine",
        "i do not mind the {FOODW} type",
        "whatever cuisine , surprise me",
        "no preference on {FOODW}",
        "open minded about the {FOODW} honestly",
        "all cuisines sound tempting",
    ],
    "pricerange": [
        "any price is fine",
        "the price does not matter",
        "i do not mind the cost",
        "whatever the price",
        "money is no object today",
        "cost is irrelevant frankly",
    ],
    "area": [
        "any area is fine",
        "i do not mind which part of town",
        "anywhere in town works",
        "no preference on the area",
        "any district suits me",
        "wherever , distance is no issue",
    ],
}

_USER_RELAX = {
    "food": ["how about {food} {FOODW} instead",
             "ok then , {food} {FOODW} please",
             "let us try {food} cuisine"],
    "pricerange": ["ok , {pricerange} is fine then",
                   "how about {pricerange} instead",
                   "let us try {pricerange} places"],
    "area": ["how about the {area} instead",
             "ok , try the {area} of town",
             "let us look in the {area} then"],
}

# noun phrases users say when asking for a slot value
_REQUEST_NP = {
    "address": ["the address", "their address", "the exact address"],
    "phone": ["the phone number", "their number", "a contact number"],
    "postcode": ["the postcode", "their postcode", "the postal code"],
    "food": ["the food type", "the kind of food they serve"],
    "pricerange": ["the price range", "their prices"],
    "area": ["the area it is in", "the part of town"],
}
_REQUEST_LEAD = ["what is", "can i get", "may i have", "could you tell me",
                 "would you mind sharing", "i also need", "please give me",
                 "do you happen to know"]

_USER_BYE = [
    "thank you goodbye",
    "thanks a lot , bye",
    "that is everything , goodbye",
    "great , thank you , bye",
    "perfect , thanks , goodbye",
    "lovely , thank you , bye bye",
    "that is all i need , thanks",
    "cheers , goodbye",
    "brilliant , many thanks , goodbye",
    "wonderful , you have been helpful , bye",
    "okay that settles it , goodbye",
    "splendid , see you , bye",
]

_SYS_REQUEST = {
    "food": [
        "what kind of [s.food] would you like",
        "any preference on the type of [s.food]",
        "what sort of [s.food] are you looking for",
        "do you have a [s.food] type in mind",
    ],
    "pricerange": [
        "do you have a [s.pricerange] in mind",
        "what [s.pricerange] would suit you",
        "which [s.pricerange] shall i search in",
        "is there a [s.pricerange] you prefer",
    ],
    "area": [
        "which [s.area] of town do you prefer",
        "what [s.area] are you thinking of",
        "do you have a preferred [s.area]",
        "which part of town would you like",
    ],
}

_ADJ = ["great", "nice", "lovely", "fine"]

# offers: the intro varies (parallel forms), while which attributes get
# mentioned is a deterministic function of the dialogue state (the slots
# the user left open), so conditioning can predict response content
_SYS_OFFER_INTRO = [
    "[v.name] is a {ADJ} choice",
    "[v.name] would be a {ADJ} choice",
    "how about [v.name]",
    "you could try [v.name]",
    "i would recommend [v.name]",
    "[v.name] matches your request",
]
_SYS_OFFER_ATTR = {
    "food": ", they serve [v.food] [s.food]",
    "pricerange": ", it is in the [v.pricerange] [s.pricerange]",
    "area": ", in the [v.area] of town",
}

_SYS_NOMATCH_INTRO = [
    "i am sorry ,",
    "sorry ,",
    "i am afraid",
    "unfortunately",
    "sadly",
    "my apologies ,",
]
_SYS_NOMATCH_BODY = "there is no [v.food] restaurant in the [v.area]"

_SYS_ANSWER = {
    "address": [
        "the [s.address] is [v.address]",
        "their [s.address] is [v.address]",
    ],
    "phone": [
        "the [s.phone] number is [v.phone]",
        "their [s.phone] number is [v.phone]",
    ],
    "postcode": [
        "the [s.postcode] is [v.postcode]",
        "their [s.postcode] is [v.postcode]",
    ],
    "food": [
        "they serve [v.food] [s.food]",
        "it serves [v.food] [s.food]",
    ],
    "pricerange": [
        "it is in the [v.pricerange] [s.pricerange]",
        "they are in the [v.pricerange] [s.pricerange]",
    ],
    "area": [
        "it is in the [v.area] of town",
        "they are in the [v.area] of town",
    ],
}
_SYS_ANSWER_LEAD = ["", "sure ,", "of course ,", "certainly ,", "right ,",
                    "no problem ,"]

_SYS_BYE = [
    "you are welcome , goodbye",
    "thank you for using this system , goodbye",
    "glad i could help , bye bye",
    "happy to help , goodbye",
    "you are welcome , enjoy your meal , goodbye",
    "bye , have a lovely day",
]


def _fill(template: str, values: dict[str, str], rng: Rng) -> list[str]:
    s = template.replace("{FOODW}", "food").replace("{ADJ}", rng.choice(_ADJ))
    for slot, v in values.items():
        s = s.replace("{" + slot + "}", v)
    toks = s.split()
    if not toks:
        raise ConfigError(f"empty template: {template!r}")
    return toks


# ---------------------------------------------------------------------------
# generation


@dataclass
class Goal:
    constraints: dict[str, str]
    requests: list[str]


def sample_goal(ontology: Ontology, database: Database, rng: Rng,
                force_no_match: bool = False,
                dontcare_rate: float = 0.15) -> Goal:
    slots = ontology.informable_slots
    if force_no_match:
        # hunt for a fully-constrained combination with zero matches
        for _ in range(200):
            cons = {s: rng.choice(ontology.informable[s]) for s in slots}
            if not database.query(cons):
                break
        else:
            raise ConfigError("database has no empty constraint combination")
    else:
        entity = rng.choice(database.entities)
        cons = {}
        for s in slots:
            cons[s] = DONTCARE if rng.random() < dontcare_rate else entity[s]

    requests = [s for s in ["address", "phone", "postcode"]
                if rng.random() < 0.55]
    if not requests:
        requests = [rng.choice(["address", "phone", "postcode"])]
    for s in slots:
        if cons[s] == DONTCARE and rng.random() < 0.2:
            requests.append(s)
    return Goal(constraints=cons, requests=requests)


def _nomatch_template(rng: Rng) -> list[str]:
    return (rng.choice(_SYS_NOMATCH_INTRO) + " " + _SYS_NOMATCH_BODY).split()


def _offer_template(open_slots: list[str], rng: Rng) -> list[str]:
    toks = _fill(rng.choice(_SYS_OFFER_INTRO), {}, rng)
    for slot in open_slots:
        toks += _SYS_OFFER_ATTR[slot].split()
    return toks


def _relax(constraints: dict[str, str], ontology: Ontology,
           database: Database, rng: Rng) -> tuple[str, str]:
    """Pick (slot, new value) making the constraint set satisfiable."""
    slots = ontology.informable_slots
    for drop in rng.shuffled(slots):
        kept = {s: v for s, v in constraints.items() if s != drop}
        cands = database.query(kept)
        if cands:
            return drop, rng.choice(cands)[drop]
    ent = rng.choice(database.entities)
    return slots[0], ent[slots[0]]


def script_dialogue(goal: Goal, ontology: Ontology, database: Database,
                    rng: Rng, dialogue_id: str) -> Dialogue:
    """Play out one scripted dialogue; returns it with final constraints as
    the stored goal (a no-match opening is relaxed mid-dialogue)."""
    delex = Delexicaliser(ontology, database)
    slots = ontology.informable_slots
    constraints = dict(goal.constraints)
    stated: dict[str, str] = {}
    turns: list[Turn] = []
    pointer: dict | None = None

    def labels_now() -> dict[str, str]:
        return {s: stated.get(s, NOT_MENTIONED) for s in slots}

    def requested_now(asked: list[str]) -> dict[str, int]:
        return {s: int(s in asked) for s in ontology.requestable}

    def db_count() -> int:
        return len(database.query({s: stated.get(s) for s in slots}))

    def add_turn(user_lex: list[str], sys_toks: list[str],
                 asked: list[str]):
        turns.append(Turn(
            user=delex(user_lex),
            user_lex=list(user_lex),
            sys=sys_toks + [EOS_TOKEN],
            labels=labels_now(),
            requested=requested_now(asked),
            db_match=db_count(),
        ))

    # opening inform turn
    value_slots = [s for s in slots if constraints[s] != DONTCARE]
    if value_slots:
        k = min(len(value_slots),
                rng.choice([1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3,
                            3, 3, 3, 3]))
        first = rng.shuffled(value_slots)[:k]
        first = [s for s in slots if s in first]
        tmpl = rng.choice(_INFORM[tuple(first)])
        user = _fill(tmpl, {s: constraints[s] for s in first}, rng)
        for s in first:
            stated[s] = constraints[s]
    else:
        user = _fill(rng.choice(_INFORM[()]), {}, rng)
        for s in slots:
            stated[s] = DONTCARE
    greeting = rng.choice(_GREETINGS)
    if greeting:
        user = greeting.split() + user
    tail = rng.choice(_USER_TAILS)
    if tail:
        user = user + tail.split()

    offered = False
    relaxed_once = False

    def system_react(asked_requests: list[str]) -> list[str]:
        """System side of the current turn; mutates pointer/offered."""
        nonlocal pointer, offered
        missing = [s for s in slots if s not in stated]
        if missing:
            slot = rng.choice(missing)
            system_react.pending_slot = slot
            return rng.choice(_SYS_REQUEST[slot]).split()
        matches = database.query({s: stated.get(s) for s in slots})
        if not matches:
            system_react.pending_slot = None
            return _nomatch_template(rng)
        if pointer is None or pointer["name"] not in [m["name"] for m in matches]:
            pointer = rng.choice(matches)
        if not offered:
            offered = True
            system_react.pending_slot = None
            open_slots = [s for s in slots if stated.get(s) == DONTCARE]
            return _offer_template(open_slots, rng)
        lead = rng.choice(_SYS_ANSWER_LEAD)
        clauses = [rng.choice(_SYS_ANSWER[s]).split() for s in asked_requests]
        toks = lead.split() if lead else []
        for i, cl in enumerate(clauses):
            if i > 0:
                toks += [rng.choice(["and", ","])]
            toks += cl
        system_react.pending_slot = None
        return toks

    system_react.pending_slot = None

    sys_toks = system_react([])
    add_turn(user, sys_toks, [])

    # elicitation: answer whatever the system asked until an offer happens
    guard = 0
    while not offered:
        guard += 1
        if guard > 12:
            raise ConfigError("dialogue script failed to reach an offer")
        slot = system_react.pending_slot
        if slot is not None:
            if constraints[slot] == DONTCARE:
                user = _fill(rng.choice(_USER_DONTCARE[slot]), {}, rng)
                stated[slot] = DONTCARE
            else:
                user = _fill(rng.choice(_USER_ANSWER[slot]),
                             {slot: constraints[slot]}, rng)
                stated[slot] = constraints[slot]
        else:
            # previous system turn reported no match: relax one slot
            if relaxed_once:
                raise ConfigError("no-match loop in dialogue script")
            relaxed_once = True
            slot, new_value = _relax(stated, ontology, database, rng)
            user = _fill(rng.choice(_USER_RELAX[slot]), {slot: new_value}, rng)
            stated[slot] = new_value
            constraints[slot] = new_value
        sys_toks = system_react([])
        add_turn(user, sys_toks, [])

    # information requests, in goal order, grouped 1-2 per turn
    queue = list(goal.requests)
    while queue:
        take = 2 if len(queue) >= 2 and rng.random() < 0.5 else 1
        group, queue = queue[:take], queue[take:]
        lead = rng.choice(_REQUEST_LEAD)
        user = lead.split()
        for i, s in enumerate(group):
            if i > 0:
                user += ["and"]
            user += rng.choice(_REQUEST_NP[s]).split()
        sys_toks = system_react(group)
        add_turn(user, sys_toks, group)

    user = rng.choice(_USER_BYE).split()
    sys_toks = rng.choice(_SYS_BYE).split()
    add_turn(user, sys_toks, [])

    final_constraints = {s: stated.get(s, DONTCARE) for s in slots}
    return Dialogue(id=dialogue_id, goal_constraints=final_constraints,
                    goal_requests=list(goal.requests), turns=turns)


def generate_corpus(ontology: Ontology, database: Database,
                    n_dialogues: int, rng: Rng,
                    no_match_rate: float = 0.06) -> list[Dialogue]:
    if n_dialogues < 1:
        raise ConfigError("n_dialogues must be >= 1")
    dialogues = []
    for i in range(n_dialogues):
        force = rng.random() < no_match_rate
        goal = sample_goal(ontology, database, rng, force_no_match=force)
        dialogues.append(script_dialogue(goal, ontology, database, rng,
                                         dialogue_id=f"d{i:05d}"))
    return dialogues


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    PAD, UNK, BOS, EOS = 0, 1, 2, 3

    def __init__(self, tokens: list[str]):
        expected = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN]
        if tokens[:4] != expected:
            raise ConfigError("vocabulary must start with the special tokens")
        if len(set(tokens)) != len(tokens):
            raise ConfigError("duplicate tokens in vocabulary")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.UNK
        return [self.index.get(t, unk) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode()).hexdigest()

    def to_json(self) -> list[str]:
        return self.tokens

    @classmethod
    def from_json(cls, obj: list) -> "Vocabulary":
        return cls(list(obj))


def build_vocab(dialogues: list[Dialogue], ontology: Ontology,
                min_count: int = 2) -> Vocabulary:
    """Vocabulary over the delexicalised corpus; rare words collapse to the
    unknown token, placeholders and specials are always present."""
    if not dialogues:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for d in dialogues:
        for t in d.turns:
            for tok in t.user + t.sys:
                counts[tok] = counts.get(tok, 0) + 1
    specials = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN]
    delex = ontology.delex_tokens()
    words = sorted(tok for tok, c in counts.items()
                   if c >= min_count and tok not in specials
                   and tok not in delex)
    return Vocabulary(specials + delex + words)


# ---------------------------------------------------------------------------
# split & io


def split(dialogues: list[Dialogue], rng: Rng,
          ratios: tuple[int, int, int] = (3, 1, 1)):
    if len(dialogues) < 5:
        raise ConfigError("need at least 5 dialogues to split 3:1:1")
    order = rng.shuffled(dialogues)
    n = len(order)
    total = sum(ratios)
    exact = [n * r / total for r in ratios]
    base = [int(e) for e in exact]
    rem = n - sum(base)
    fracs = sorted(range(3), key=lambda i: (-(exact[i] - base[i]), i))
    for i in fracs[:rem]:
        base[i] += 1
    a, b, _ = base
    return order[:a], order[a:a + b], order[a + b:]


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def save_corpus(path, ontology: Ontology, dialogues: list[Dialogue]):
    payload = {"ontology": ontology.to_json(),
               "dialogues": [d.to_json() for d in dialogues]}
    with open(path, "w", encoding="utf-8") as f:
        f.write(_dump(payload))


def load_corpus(path) -> tuple[Ontology, list[Dialogue]]:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    return (Ontology.from_json(obj["ontology"]),
            [Dialogue.from_json(d) for d in obj["dialogues"]])


def save_database(path, database: Database):
    with open(path, "w", encoding="utf-8") as f:
        f.write(_dump(database.to_json()))


def load_database(path) -> Database:
    with open(path, encoding="utf-8") as f:
        return Database.from_json(json.load(f))


def save_ontology(path, ontology: Ontology):
    with open(path, "w", encoding="utf-8") as f:
        f.write(_dump(ontology.to_json()))


def load_ontology(path) -> Ontology:
    with open(path, encoding="utf-8") as f:
        return Ontology.from_json(json.load(f))

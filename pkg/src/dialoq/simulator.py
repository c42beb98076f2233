"""Agenda-based user simulator, reward function, and the rule-based expert.

The user keeps a per-domain agenda derived from its goal: inform the
constraints, voice the requests, ask for the booking. Given the goal, the
user is fully deterministic, so whole episode traces replay exactly.

Intents: user acts are Inform/Request/Book plus the closing general acts;
system acts are Request/Inform/Book/NoOffer and general-reqmore.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .schema import DomainGoal, Goal, Schema, count_matches, db_match_vector
from .vocab import DialogAct

INFORM, REQUEST, BOOK, NOOFFER = "Inform", "Request", "Book", "NoOffer"
GENERAL = "general"
REQMORE = DialogAct(GENERAL, "reqmore", ("none",))
THANK = DialogAct(GENERAL, "thank", ("none",))
BYE = DialogAct(GENERAL, "bye", ("none",))


@dataclass
class RewardConfig:
    """-1 per turn; +2T on success, -T on failure, T-turn cap."""

    max_turns: int = 40
    per_turn: float = -1.0

    def __post_init__(self):
        if self.max_turns < 2:
            raise ValueError("max_turns must be >= 2")

    @property
    def success_bonus(self) -> float:
        return 2.0 * self.max_turns

    @property
    def failure_penalty(self) -> float:
        return -1.0 * self.max_turns


@dataclass
class EnvStep:
    user_acts: list[DialogAct]
    reward: float
    done: bool
    success: bool | None = None

    def __post_init__(self):
        if (self.success is not None) != self.done:
            raise ValueError("success must be set exactly when done")


@dataclass
class _DomainState:
    goal: DomainGoal
    communicated: set[str] = field(default_factory=set)  # constraint slots voiced
    dontcared: set[str] = field(default_factory=set)     # asked, no preference
    answered: set[str] = field(default_factory=set)      # requests satisfied
    booked: bool = False

    def satisfied(self) -> bool:
        return (
            self.communicated >= set(self.goal.constraints)
            and self.answered >= set(self.goal.requests)
            and (self.booked or not self.goal.book)
        )


class DialogEnv:
    """One dialog session at a time; step() consumes the system acts of a turn."""

    def __init__(self, schema: Schema, reward: RewardConfig | None = None,
                 patience: int = 3, initial_informs: int = 2):
        self.schema = schema
        self.reward = reward or RewardConfig()
        self.patience = patience
        self.initial_informs = initial_informs
        self.goal: Goal | None = None
        self._states: dict[str, _DomainState] = {}
        self.turn_count = 0
        self._streak = 0
        self.done = True

    def reset(self, goal: Goal) -> list[DialogAct]:
        self.goal = goal
        self._states = {g.domain: _DomainState(g) for g in goal.domains}
        self.turn_count = 0
        self._streak = 0
        self.done = False
        first = goal.domains[0]
        st = self._states[first.domain]
        slots = list(first.constraints)[: self.initial_informs]
        if slots:
            st.communicated.update(slots)
            return [DialogAct(first.domain, INFORM, tuple(slots))]
        return [DialogAct(first.domain, REQUEST, (first.requests[0],))]

    # -- observable db state -------------------------------------------------

    def db_constraints(self) -> dict[str, dict[str, str]]:
        return {
            d: {s: st.goal.constraints[s] for s in sorted(st.communicated)}
            for d, st in self._states.items()
        }

    def db_vector(self):
        return db_match_vector(self.db_constraints(), self.schema)

    def db_match_counts(self) -> dict[str, int]:
        cons = self.db_constraints()
        return {
            dom.name: count_matches(dom, cons.get(dom.name, {}))
            for dom in self.schema.domains
        }

    # -- core protocol --------------------------------------------------------

    def _active(self) -> _DomainState | None:
        for g in self.goal.domains:
            if not self._states[g.domain].satisfied():
                return self._states[g.domain]
        return None

    def _all_satisfied(self) -> bool:
        return self._active() is None

    def step(self, system_acts: list[DialogAct]) -> EnvStep:
        if self.done:
            raise RuntimeError("step() after episode end")
        self.turn_count += 1
        progress = False
        replies: list[tuple[str, str]] = []  # (domain, slot) informs owed

        for act in system_acts:
            st = self._states.get(act.domain)
            if act.intent == REQUEST and st is not None:
                dom = self.schema.by_name[act.domain]
                for slot in act.slots:
                    if slot == "none" or slot not in dom.informable:
                        continue
                    if slot in st.goal.constraints:
                        if slot not in st.communicated:
                            st.communicated.add(slot)
                            progress = True
                        replies.append((act.domain, slot))
                    else:
                        if slot not in st.dontcared:
                            st.dontcared.add(slot)
                            progress = True
                        replies.append((act.domain, slot))
            elif act.intent == INFORM and st is not None:
                for slot in act.slots:
                    if slot in st.goal.requests and slot not in st.answered:
                        st.answered.add(slot)
                        progress = True
            elif act.intent == BOOK and st is not None:
                if (st.goal.book and not st.booked
                        and st.communicated >= set(st.goal.constraints)):
                    st.booked = True
                    progress = True
            # NoOffer and general acts have no state effect

        if self._all_satisfied():
            return self._finish(success=True, acts=[THANK])
        if self.turn_count >= self.reward.max_turns:
            return self._finish(success=False, acts=[BYE])

        user_acts: list[DialogAct] = []
        if replies:
            by_domain: dict[str, list[str]] = {}
            for d, s in replies:
                by_domain.setdefault(d, [])
                if s not in by_domain[d]:
                    by_domain[d].append(s)
            user_acts = [DialogAct(d, INFORM, tuple(slots)) for d, slots in by_domain.items()]
        else:
            # agenda pop; the user moving its own goal along does not count as
            # progress for patience, only system-caused progress does
            st = self._active()
            pending_constraints = [s for s in st.goal.constraints if s not in st.communicated]
            pending_requests = [s for s in st.goal.requests if s not in st.answered]
            if pending_constraints:
                st.communicated.add(pending_constraints[0])
                user_acts = [DialogAct(st.goal.domain, INFORM, (pending_constraints[0],))]
            elif pending_requests:
                user_acts = [DialogAct(st.goal.domain, REQUEST, (pending_requests[0],))]
            else:  # booking is the only thing left for this domain
                user_acts = [DialogAct(st.goal.domain, BOOK, ("none",))]

        if self._all_satisfied():  # the user's own inform can close the goal
            return self._finish(success=True, acts=user_acts + [THANK])

        self._streak = 0 if progress else self._streak + 1
        if self._streak >= self.patience:
            return self._finish(success=False, acts=[BYE])
        return EnvStep(user_acts, self.reward.per_turn, False, None)

    def _finish(self, success: bool, acts: list[DialogAct]) -> EnvStep:
        self.done = True
        bonus = self.reward.success_bonus if success else self.reward.failure_penalty
        return EnvStep(acts, self.reward.per_turn + bonus, True, success)


class RulePolicy:
    """Hand-written expert: answer voiced requests, confirm bookings, otherwise
    probe uninformed slots of the domain the user last talked about."""

    def __init__(self, schema: Schema):
        self.schema = schema
        self.reset()

    def reset(self):
        self.informed: dict[str, set[str]] = {}
        self.probed: dict[str, set[str]] = {}
        self.requested: dict[str, list[str]] = {}
        self.answered: dict[str, set[str]] = {}
        self.book_asked: dict[str, bool] = {}
        self.booked: dict[str, bool] = {}
        self.domain_order: list[str] = []
        self.last_domain: str | None = None

    def _touch(self, domain: str):
        if domain not in self.informed:
            self.informed[domain] = set()
            self.probed[domain] = set()
            self.requested[domain] = []
            self.answered[domain] = set()
            self.book_asked[domain] = False
            self.booked[domain] = False
            self.domain_order.append(domain)

    def observe_user(self, acts: list[DialogAct]):
        for act in acts:
            if act.domain == GENERAL:
                continue
            self._touch(act.domain)
            self.last_domain = act.domain
            if act.intent == INFORM:
                self.informed[act.domain].update(act.slots)
            elif act.intent == REQUEST:
                for s in act.slots:
                    if s != "none" and s not in self.requested[act.domain]:
                        self.requested[act.domain].append(s)
            elif act.intent == BOOK:
                self.book_asked[act.domain] = True

    def _domains(self) -> list[str]:
        if self.last_domain is None:
            return list(self.domain_order)
        rest = [d for d in self.domain_order if d != self.last_domain]
        return [self.last_domain] + rest

    def act(self, db_match_counts: dict[str, int] | None = None) -> DialogAct:
        # no record satisfies the stated constraints: flag it, ask to relax
        if db_match_counts is not None:
            for d in self._domains():
                if db_match_counts.get(d, 1) == 0:
                    return DialogAct(d, NOOFFER, ("none",))
        for d in self._domains():
            pending = [s for s in self.requested[d] if s not in self.answered[d]]
            if pending:
                self.answered[d].add(pending[0])
                return DialogAct(d, INFORM, (pending[0],))
        for d in self._domains():
            if self.book_asked[d] and not self.booked[d]:
                self.booked[d] = True
                return DialogAct(d, BOOK, ("none",))
        for d in self._domains():
            dom = self.schema.by_name.get(d)
            if dom is None:
                continue
            for slot in dom.informable:
                if slot not in self.informed[d] and slot not in self.probed[d]:
                    self.probed[d].add(slot)
                    return DialogAct(d, REQUEST, (slot,))
        return REQMORE

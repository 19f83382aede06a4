"""Core data model: topologies, the three process-automaton flavors, and systems.

Everything here is immutable after construction and canonically ordered, so two
systems built from the same declarations compare equal regardless of the order
the declarations arrived in.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union


class DelayDomain(enum.Enum):
    """How time passes in a system: not at all, in unit ticks, or densely."""

    NONE = "none"
    TICK = "discrete"
    DENSE = "dense"


# ---------------------------------------------------------------------------
# Actions

@dataclass(frozen=True)
class Send:
    channel: str
    message: str


@dataclass(frozen=True)
class Recv:
    channel: str
    message: str


@dataclass(frozen=True)
class TestEmpty:
    channel: str


@dataclass(frozen=True)
class Internal:
    name: str


@dataclass(frozen=True)
class Tick:
    pass


@dataclass(frozen=True)
class Inc:
    counter: str


@dataclass(frozen=True)
class Dec:
    counter: str


@dataclass(frozen=True)
class ZTest:
    counter: str


Action = Union[Send, Recv, TestEmpty, Internal, Tick, Inc, Dec, ZTest]

_ACTION_RANK = {Internal: 0, Send: 1, Recv: 2, TestEmpty: 3,
                Inc: 4, Dec: 5, ZTest: 6, Tick: 7}


def action_key(a: Action) -> tuple:
    """Total order on actions, used for canonical sorting."""
    if isinstance(a, (Send, Recv)):
        return (_ACTION_RANK[type(a)], a.channel, a.message)
    if isinstance(a, TestEmpty):
        return (_ACTION_RANK[TestEmpty], a.channel, "")
    if isinstance(a, Internal):
        return (_ACTION_RANK[Internal], a.name, "")
    if isinstance(a, (Inc, Dec, ZTest)):
        return (_ACTION_RANK[type(a)], a.counter, "")
    return (_ACTION_RANK[Tick], "", "")


def format_action(a: Action) -> str:
    if isinstance(a, Send):
        return f"send({a.channel}, {a.message})"
    if isinstance(a, Recv):
        return f"recv({a.channel}, {a.message})"
    if isinstance(a, TestEmpty):
        return f"empty({a.channel})"
    if isinstance(a, Internal):
        return f"internal({a.name})"
    if isinstance(a, Tick):
        return "tick"
    if isinstance(a, Inc):
        return f"inc {a.counter}"
    if isinstance(a, Dec):
        return f"dec {a.counter}"
    if isinstance(a, ZTest):
        return f"ztest {a.counter}"
    raise TypeError(f"not an action: {a!r}")


# ---------------------------------------------------------------------------
# Guards (dense flavor only)

GUARD_OPS = ("<", "<=", "=", ">=", ">")


@dataclass(frozen=True)
class GuardAtom:
    """One conjunct `clock op const` with const a natural number."""

    clock: str
    op: str
    const: int

    def __str__(self) -> str:
        return f"{self.clock} {self.op} {self.const}"


def format_guard(atoms: tuple[GuardAtom, ...]) -> str:
    return " && ".join(str(a) for a in atoms)


# ---------------------------------------------------------------------------
# Transitions and automata

@dataclass(frozen=True)
class Transition:
    """Untimed transition (tick and counter flavors)."""

    src: str
    action: Action
    dst: str


@dataclass(frozen=True)
class TimedRule:
    """Dense-flavor transition: guarded, with a reset set."""

    src: str
    action: Action
    guard: tuple[GuardAtom, ...]
    resets: frozenset[str]
    dst: str


def _trans_key(t: Transition) -> tuple:
    return (t.src, action_key(t.action), t.dst)


def _rule_key(r: TimedRule) -> tuple:
    gk = tuple((a.clock, a.op, a.const) for a in r.guard)
    return (r.src, action_key(r.action), r.dst, gk, tuple(sorted(r.resets)))


@dataclass(frozen=True)
class TickAutomaton:
    locations: tuple[str, ...]
    initial: frozenset[str]
    final: frozenset[str]
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(sorted(set(self.locations))))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "final", frozenset(self.final))
        object.__setattr__(
            self, "transitions", tuple(sorted(set(self.transitions), key=_trans_key)))


@dataclass(frozen=True)
class CounterAutomaton:
    """Minsky machine control: counters with inc/dec/ztest plus communication."""

    locations: tuple[str, ...]
    initial: frozenset[str]
    final: frozenset[str]
    counters: frozenset[str]
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(sorted(set(self.locations))))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "final", frozenset(self.final))
        object.__setattr__(self, "counters", frozenset(self.counters))
        object.__setattr__(
            self, "transitions", tuple(sorted(set(self.transitions), key=_trans_key)))


@dataclass(frozen=True)
class TimedAutomaton:
    locations: tuple[str, ...]
    initial: frozenset[str]
    final: frozenset[str]
    clocks: frozenset[str]
    rules: tuple[TimedRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(sorted(set(self.locations))))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "final", frozenset(self.final))
        object.__setattr__(self, "clocks", frozenset(self.clocks))
        object.__setattr__(
            self, "rules", tuple(sorted(set(self.rules), key=_rule_key)))


ProcessAutomaton = Union[TickAutomaton, CounterAutomaton, TimedAutomaton]

_FLAVOR_OF_AUTOMATON = {
    TickAutomaton: DelayDomain.TICK,
    CounterAutomaton: DelayDomain.NONE,
    TimedAutomaton: DelayDomain.DENSE,
}


# ---------------------------------------------------------------------------
# Topology and system

@dataclass(frozen=True)
class Channel:
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class Topology:
    """Processes plus directed FIFO channels; self-loops and parallel channels
    are legal here (the classifier deals with them)."""

    processes: frozenset[str]
    channels: tuple[Channel, ...]
    testable: frozenset[str]
    messages: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "processes", frozenset(self.processes))
        object.__setattr__(self, "channels",
                           tuple(sorted(self.channels, key=lambda c: c.id)))
        object.__setattr__(self, "testable", frozenset(self.testable))
        object.__setattr__(self, "messages", frozenset(self.messages))

    def channel(self, cid: str) -> Optional[Channel]:
        for c in self.channels:
            if c.id == cid:
                return c
        return None


@dataclass(frozen=True)
class Acceptance:
    """Which extra conditions acceptance demands beyond final locations."""

    require_empty_channels: bool = True
    require_zero_counters: bool = True
    require_zero_clocks: bool = True


DEFAULT_ACCEPTANCE = Acceptance()


@dataclass(frozen=True, eq=True)
class System:
    name: str
    topology: Topology
    delay: DelayDomain
    automata: dict[str, ProcessAutomaton]
    acceptance: Acceptance = DEFAULT_ACCEPTANCE

    def __post_init__(self):
        object.__setattr__(self, "automata",
                           dict(sorted(self.automata.items())))

    def __hash__(self):  # dict field; identity hash is enough for caching
        return id(self)


# ---------------------------------------------------------------------------
# Validation

@dataclass(frozen=True)
class SourceSpan:
    """Byte range plus human 1-based line/column of the start."""

    start: int
    end: int
    line: int
    column: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("span start beyond end")


@dataclass(frozen=True)
class Diagnostic:
    message: str
    subject: tuple = ()
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        if self.span is not None:
            return f"{self.span.line}:{self.span.column}: {self.message}"
        return self.message


def _diag(out: list, msg: str, subject: tuple = ()) -> None:
    out.append(Diagnostic(msg, subject))


def validate_system(sys: System) -> list[Diagnostic]:
    """Check every structural invariant; an empty list means well-formed.

    Total by design: malformed values produce diagnostics, never exceptions.
    """
    out: list[Diagnostic] = []
    topo = sys.topology

    seen_cids: set[str] = set()
    for ch in topo.channels:
        if ch.id in seen_cids:
            _diag(out, f"duplicate channel id {ch.id}", ("channel", ch.id))
        seen_cids.add(ch.id)
        for end, role in ((ch.source, "source"), (ch.target, "target")):
            if end not in topo.processes:
                _diag(out, f"channel {ch.id} {role} {end} is not a declared process",
                      ("channel", ch.id))
    for cid in sorted(topo.testable):
        if cid not in seen_cids:
            _diag(out, f"testable flag on unknown channel {cid}", ("channel", cid))

    for p in sorted(topo.processes):
        if p not in sys.automata:
            _diag(out, f"process {p} has no automaton", ("process", p))
    for p in sorted(sys.automata):
        if p not in topo.processes:
            _diag(out, f"automaton for undeclared process {p}", ("process", p))

    by_source = {c.id: c.source for c in topo.channels}
    by_target = {c.id: c.target for c in topo.channels}

    for p, aut in sys.automata.items():
        want = _FLAVOR_OF_AUTOMATON.get(type(aut))
        if want is None:
            _diag(out, f"process {p}: unknown automaton kind {type(aut).__name__}",
                  ("process", p))
            continue
        if want is not sys.delay:
            _diag(out,
                  f"process {p}: {type(aut).__name__} requires delay domain "
                  f"{want.value!r} but system declares {sys.delay.value!r}",
                  ("process", p))

        locs = set(aut.locations)
        for loc in sorted(aut.initial - locs):
            _diag(out, f"process {p}: initial location {loc} undeclared", ("process", p))
        for loc in sorted(aut.final - locs):
            _diag(out, f"process {p}: final location {loc} undeclared", ("process", p))

        if isinstance(aut, TimedAutomaton):
            items = [(i, r.src, r.action, r.dst, r) for i, r in enumerate(aut.rules)]
        else:
            items = [(i, t.src, t.action, t.dst, None) for i, t in enumerate(aut.transitions)]

        for i, src, act, dst, rule in items:
            sub = ("trans", p, i)
            for loc in (src, dst):
                if loc not in locs:
                    _diag(out, f"process {p}: transition uses undeclared location {loc}", sub)
            _validate_action(out, sys, p, act, by_source, by_target, sub)
            if rule is not None:
                for atom in rule.guard:
                    if atom.clock not in aut.clocks:
                        _diag(out, f"process {p}: guard clock {atom.clock} undeclared", sub)
                    if atom.op not in GUARD_OPS:
                        _diag(out, f"process {p}: bad guard operator {atom.op!r}", sub)
                    if not isinstance(atom.const, int) or atom.const < 0:
                        _diag(out, f"process {p}: guard constant must be a natural number", sub)
                for x in sorted(rule.resets):
                    if x not in aut.clocks:
                        _diag(out, f"process {p}: reset of undeclared clock {x}", sub)
            if isinstance(aut, CounterAutomaton) and isinstance(act, (Inc, Dec, ZTest)):
                if act.counter not in aut.counters:
                    _diag(out, f"process {p}: counter {act.counter} undeclared", sub)

    return out


def _validate_action(out, sys, p, act, by_source, by_target, sub) -> None:
    topo = sys.topology
    aut = sys.automata[p]
    if isinstance(act, (Send, Recv)):
        if act.channel not in by_source:
            _diag(out, f"process {p}: action on undeclared channel {act.channel}", sub)
            return
        if isinstance(act, Send) and by_source[act.channel] != p:
            _diag(out, f"process {p}: send on channel {act.channel} "
                       f"but {p} is not its source", sub)
        if isinstance(act, Recv) and by_target[act.channel] != p:
            _diag(out, f"process {p}: recv on channel {act.channel} "
                       f"but {p} is not its target", sub)
        if act.message not in topo.messages:
            _diag(out, f"process {p}: undeclared message {act.message}", sub)
    elif isinstance(act, TestEmpty):
        if act.channel not in by_target:
            _diag(out, f"process {p}: emptiness test on undeclared channel {act.channel}", sub)
            return
        if by_target[act.channel] != p:
            _diag(out, f"process {p}: emptiness test on {act.channel} "
                       f"but tests sit on the receiver side", sub)
        if act.channel not in topo.testable:
            _diag(out, f"process {p}: channel {act.channel} is not testable", sub)
    elif isinstance(act, Tick):
        if not isinstance(aut, TickAutomaton):
            _diag(out, f"process {p}: tick action outside the tick flavor", sub)
    elif isinstance(act, (Inc, Dec, ZTest)):
        if not isinstance(aut, CounterAutomaton):
            _diag(out, f"process {p}: counter action outside the counter flavor", sub)


# ---------------------------------------------------------------------------
# Underlying undirected multigraph

def underlying_graph(topo: Topology) -> list[tuple[str, str, str]]:
    """Undirected support of the topology: one (channel id, u, v) edge per
    channel, orientation erased, self-loops preserved."""
    return [(c.id, c.source, c.target) for c in topo.channels]

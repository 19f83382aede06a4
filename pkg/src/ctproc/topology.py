"""Decidability classification of communication topologies.

The frontier implemented here:

* discrete time (tick or counter flavor): decidable iff the topology is a
  polyforest and every weakly-connected component tests at most one channel;
* dense time, test-free: decidable iff the topology is a polyforest;
* dense time, some component with two or more testable channels: undecidable;
* dense time, polyforest with testable channels but at most one per
  component: open.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .model import DelayDomain, System, Topology, ZTest, CounterAutomaton

RULE_CYCLE = "not-polyforest"
RULE_MULTI_TEST = "two-testable-in-component"
RULE_POLYFOREST = "polyforest"
RULE_TEST_BUDGET = "at-most-one-testable-per-component"
RULE_TEST_FREE = "test-free"
RULE_OPEN_SINGLE_TEST = "dense-single-test-open"
RULE_ZTEST_INFO = "zero-tested-counters"


class VerdictStatus(enum.Enum):
    DECIDABLE = "Decidable"
    UNDECIDABLE = "Undecidable"
    OPEN = "Open"


@dataclass(frozen=True)
class Reason:
    rule: str
    witness: tuple[str, ...] = ()
    note: str = ""


@dataclass(frozen=True)
class ComponentInfo:
    processes: frozenset[str]
    channels: tuple[str, ...]
    testable: tuple[str, ...]


@dataclass(frozen=True)
class Verdict:
    status: VerdictStatus
    reasons: tuple[Reason, ...]
    components: tuple[ComponentInfo, ...]

    def witness_cycle(self) -> tuple[str, ...] | None:
        for r in self.reasons:
            if r.rule == RULE_CYCLE:
                return r.witness
        return None


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def is_polyforest(topo: Topology) -> tuple[bool, tuple[str, ...] | None]:
    """Forest test on the undirected support.

    Returns (True, None) or (False, cycle) where cycle is a tuple of channel
    ids forming one undirected cycle; a self-loop is a cycle of length 1 and a
    parallel pair a cycle of length 2.
    """
    uf = _UnionFind(topo.processes)
    adj: dict[str, list[tuple[str, str]]] = {p: [] for p in topo.processes}
    for ch in topo.channels:   # sorted by id, so the witness is deterministic
        if ch.source == ch.target:
            return False, (ch.id,)
        if uf.union(ch.source, ch.target):
            adj[ch.source].append((ch.target, ch.id))
            adj[ch.target].append((ch.source, ch.id))
            continue
        # ch closes a cycle: recover the tree path source..target
        path = _tree_path(adj, ch.source, ch.target)
        return False, tuple(path + [ch.id])
    return True, None


def _tree_path(adj, start, goal) -> list[str]:
    prev: dict[str, tuple[str, str]] = {start: ("", "")}
    queue = [start]
    while queue:
        u = queue.pop(0)
        if u == goal:
            break
        for v, cid in adj[u]:
            if v not in prev:
                prev[v] = (u, cid)
                queue.append(v)
    path = []
    node = goal
    while node != start:
        u, cid = prev[node]
        path.append(cid)
        node = u
    path.reverse()
    return path


def weak_components(topo: Topology) -> list[ComponentInfo]:
    """Partition of processes by connectivity in the undirected support;
    isolated processes form singleton components."""
    uf = _UnionFind(topo.processes)
    for ch in topo.channels:
        uf.union(ch.source, ch.target)
    groups: dict[str, set[str]] = {}
    for p in topo.processes:
        groups.setdefault(uf.find(p), set()).add(p)
    comps = []
    for root in sorted(groups):
        procs = frozenset(groups[root])
        chans = tuple(c.id for c in topo.channels if c.source in procs)
        tested = tuple(c for c in chans if c in topo.testable)
        comps.append(ComponentInfo(procs, chans, tested))
    return comps


def classify(topo: Topology, flavor: DelayDomain) -> Verdict:
    """Place a topology/flavor pair on the decidability frontier."""
    forest, cycle = is_polyforest(topo)
    comps = tuple(weak_components(topo))
    reasons: list[Reason] = []

    if not forest:
        reasons.append(Reason(RULE_CYCLE, cycle,
                              "undirected support contains a cycle"))
        return Verdict(VerdictStatus.UNDECIDABLE, tuple(reasons), comps)

    multi = [c for c in comps if len(c.testable) >= 2]
    any_test = any(c.testable for c in comps)

    if flavor in (DelayDomain.TICK, DelayDomain.NONE):
        # Counter systems have an empty delay domain; the tick verdict is a
        # sound upper classification for them.
        if multi:
            reasons.append(Reason(RULE_MULTI_TEST, multi[0].testable,
                                  "component tests more than one channel"))
            return Verdict(VerdictStatus.UNDECIDABLE, tuple(reasons), comps)
        reasons.append(Reason(RULE_POLYFOREST))
        reasons.append(Reason(RULE_TEST_BUDGET if any_test else RULE_TEST_FREE))
        return Verdict(VerdictStatus.DECIDABLE, tuple(reasons), comps)

    # Dense flavor.
    if multi:
        reasons.append(Reason(RULE_MULTI_TEST, multi[0].testable,
                              "component tests more than one channel"))
        return Verdict(VerdictStatus.UNDECIDABLE, tuple(reasons), comps)
    if any_test:
        witness = tuple(c.testable[0] for c in comps if c.testable)
        reasons.append(Reason(RULE_OPEN_SINGLE_TEST, witness,
                              "single-tested dense components are an open problem"))
        return Verdict(VerdictStatus.OPEN, tuple(reasons), comps)
    reasons.append(Reason(RULE_POLYFOREST))
    reasons.append(Reason(RULE_TEST_FREE))
    return Verdict(VerdictStatus.DECIDABLE, tuple(reasons), comps)


def classify_system(sys: System) -> Verdict:
    """classify() on a whole system, with zero-tested counters reported
    informationally for the counter flavor."""
    verdict = classify(sys.topology, sys.delay)
    if sys.delay is not DelayDomain.NONE:
        return verdict
    ztested = []
    for p in sorted(sys.automata):
        aut = sys.automata[p]
        if isinstance(aut, CounterAutomaton):
            for t in aut.transitions:
                if isinstance(t.action, ZTest):
                    ztested.append(f"{p}.{t.action.counter}")
    if not ztested:
        return verdict
    info = Reason(RULE_ZTEST_INFO, tuple(sorted(set(ztested))),
                  "counters with zero tests (informational)")
    return Verdict(verdict.status, verdict.reasons + (info,), verdict.components)


def format_verdict(v: Verdict) -> str:
    lines = [f"verdict: {v.status.value}"]
    for r in v.reasons:
        w = f" witness=[{', '.join(r.witness)}]" if r.witness else ""
        n = f"  # {r.note}" if r.note else ""
        lines.append(f"  rule {r.rule}{w}{n}")
    for i, c in enumerate(v.components):
        lines.append(f"  component {i}: procs={{{', '.join(sorted(c.processes))}}} "
                     f"testable=[{', '.join(c.testable)}]")
    return "\n".join(lines)


def verdict_to_dict(v: Verdict) -> dict:
    return {
        "status": v.status.value,
        "reasons": [{"rule": r.rule, "witness": list(r.witness), "note": r.note}
                    for r in v.reasons],
        "components": [{"processes": sorted(c.processes),
                        "channels": list(c.channels),
                        "testable": list(c.testable)}
                       for c in v.components],
    }

"""VASS / Petri-net backend: Karp-Miller coverability trees, boundedness
certificates, and a reachability driver for zero-counter acceptance.

Exact answers are claimed in two situations only: all counters certified
bounded (exhaustive search of the finite space), or the final control state
uncoverable (monotonicity). Everything else is bounded search and may come
back Unknown.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

OMEGA = math.inf

DEFAULT_NODE_BUDGET = 10 ** 6


@dataclass(frozen=True)
class VassTransition:
    label: tuple
    delta: tuple[int, ...]
    dst: object


@dataclass
class ExplicitVass:
    """A concrete VASS: states, counters, delta-vector transitions.

    `transitions` maps state -> list[VassTransition]; firing requires the
    marking plus delta to stay nonnegative. Acceptance is a final state with
    every counter at zero.
    """

    counters: tuple[str, ...]
    states: tuple
    initial: tuple            # list of (state, marking)
    finals: frozenset
    transitions: dict

    def initial_states(self):
        return list(self.initial)

    def out(self, state) -> list[VassTransition]:
        return self.transitions.get(state, [])

    def is_final(self, state) -> bool:
        return state in self.finals


# ---------------------------------------------------------------------------
# Omega markings

def omega_leq(a: tuple, b: tuple) -> bool:
    return all(x <= y for x, y in zip(a, b))


def omega_add(m: tuple, delta: tuple[int, ...]) -> Optional[tuple]:
    """m + delta, absorbing on omega; None when some counter would go negative."""
    out = []
    for v, d in zip(m, delta):
        if v is OMEGA:
            out.append(OMEGA)
            continue
        n = v + d
        if n < 0:
            return None
        out.append(n)
    return tuple(out)


# ---------------------------------------------------------------------------
# Karp-Miller

@dataclass
class KmNode:
    state: object
    marking: tuple
    parent: Optional[int]
    via: Optional[tuple]      # transition label that produced this node
    children: list[int] = field(default_factory=list)
    accelerated: bool = False
    duplicate: bool = False


@dataclass
class KarpMillerResult:
    nodes: list[KmNode]
    complete: bool
    counters: tuple[str, ...]

    def bounded(self) -> Optional[dict[str, bool]]:
        if not self.complete:
            return None
        seen_omega = [False] * len(self.counters)
        for n in self.nodes:
            for i, v in enumerate(n.marking):
                if v is OMEGA:
                    seen_omega[i] = True
        return {c: not w for c, w in zip(self.counters, seen_omega)}

    def bounds(self) -> Optional[dict[str, int]]:
        """Exact per-counter maxima for the bounded counters (complete trees)."""
        if not self.complete:
            return None
        out: dict[str, int] = {}
        for i, c in enumerate(self.counters):
            vals = [n.marking[i] for n in self.nodes if n.marking[i] is not OMEGA]
            if any(n.marking[i] is OMEGA for n in self.nodes):
                continue
            out[c] = max(vals) if vals else 0
        return out

    def all_bounded(self) -> bool:
        b = self.bounded()
        return b is not None and all(b.values())

    def covers_state(self, pred: Callable) -> bool:
        return any(pred(n.state) for n in self.nodes)


def karp_miller(v, max_nodes: int = DEFAULT_NODE_BUDGET) -> KarpMillerResult:
    """Coverability tree with classic ancestor-comparison omega acceleration.

    Deterministic: fixed expansion order. A node whose label already appeared
    elsewhere becomes a leaf (the subtree would be a copy). Budget overruns
    return complete=False, never a wrong answer.
    """
    nodes: list[KmNode] = []
    seen: set = set()
    work = deque()
    for state, marking in v.initial_states():
        idx = len(nodes)
        nodes.append(KmNode(state, tuple(marking), None, None))
        key = (state, tuple(marking))
        dup = key in seen
        nodes[idx].duplicate = dup
        seen.add(key)
        if not dup:
            work.append(idx)

    while work:
        if len(nodes) >= max_nodes:
            return KarpMillerResult(nodes, False, tuple(v.counters))
        cur = work.popleft()
        state, marking = nodes[cur].state, nodes[cur].marking
        for t in v.out(state):
            m = omega_add(marking, t.delta)
            if m is None:
                continue
            # accelerate against ancestors with the same control state:
            # strictly-increased coordinates get pumped to omega
            accelerated = False
            anc = cur
            while anc is not None:
                a = nodes[anc]
                if a.state == t.dst and omega_leq(a.marking, m) and a.marking != m:
                    m = tuple(OMEGA if x is OMEGA or (y is not OMEGA and x > y) else x
                              for x, y in zip(m, a.marking))
                    accelerated = True
                anc = a.parent
            idx = len(nodes)
            child = KmNode(t.dst, m, cur, t.label, accelerated=accelerated)
            nodes.append(child)
            nodes[cur].children.append(idx)
            key = (t.dst, m)
            if key in seen:
                child.duplicate = True
            else:
                seen.add(key)
                work.append(idx)
    return KarpMillerResult(nodes, True, tuple(v.counters))


def format_km_tree(result: KarpMillerResult) -> str:
    lines = []

    def mark(m):
        return "(" + ", ".join("w" if x is OMEGA else str(x) for x in m) + ")"

    def walk(idx: int, depth: int):
        n = result.nodes[idx]
        tag = " *" if n.duplicate else ""
        lab = f" via {n.via}" if n.via is not None else ""
        lines.append("  " * depth + f"{n.state} {mark(n.marking)}{lab}{tag}")
        for c in n.children:
            walk(c, depth + 1)

    roots = [i for i, n in enumerate(result.nodes) if n.parent is None]
    for r in roots:
        walk(r, 0)
    if not result.complete:
        lines.append("(budget exhausted; tree incomplete)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Reachability with zero-counter acceptance

class VassStatus(enum.Enum):
    ACCEPTING = "Accepting"
    REJECTING = "Rejecting"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class VassOutcome:
    status: VassStatus
    path: Optional[tuple] = None        # tuple of VassTransition
    start: Optional[tuple] = None       # (state, marking) the path fires from
    certificate: str = ""
    stats: dict = field(default_factory=dict)


def vass_replay(v, path: Iterable[VassTransition],
                start=None) -> Optional[tuple]:
    """Fire a transition sequence from an initial state; returns the final
    (state, marking) or None when some step is disabled."""
    if start is None:
        inits = v.initial_states()
        if not inits:
            return None
        state, marking = inits[0]
    else:
        state, marking = start
    marking = tuple(marking)
    for t in path:
        legal = [u for u in v.out(state)
                 if u.label == t.label and u.delta == t.delta and u.dst == t.dst]
        if not legal:
            return None
        m = omega_add(marking, t.delta)
        if m is None:
            return None
        state, marking = t.dst, m
    return state, marking


def _bfs_exact(v, value_cap: Optional[int], max_states: int):
    """BFS over (state, marking); a value_cap prunes (and reports it)."""
    parents: dict = {}
    frontier = deque()
    pruned = 0
    for state, marking in v.initial_states():
        key = (state, tuple(marking))
        if key not in parents:
            parents[key] = (None, None)
            frontier.append(key)
    found = None
    while frontier:
        key = frontier.popleft()
        state, marking = key
        if v.is_final(state) and all(x == 0 for x in marking):
            found = key
            break
        if len(parents) > max_states:
            return None, parents, pruned, True
        for t in v.out(state):
            m = omega_add(marking, t.delta)
            if m is None:
                continue
            if value_cap is not None and any(x > value_cap for x in m):
                pruned += 1
                continue
            nk = (t.dst, m)
            if nk not in parents:
                parents[nk] = (key, t)
                frontier.append(nk)
    return found, parents, pruned, False


def _extract_path(parents: dict, key) -> tuple:
    """Returns (path, root) where root is the initial (state, marking)."""
    path = []
    while True:
        pk, t = parents[key]
        if pk is None:
            break
        path.append(t)
        key = pk
    return tuple(reversed(path)), key


def vass_reach(v, mode: str = "auto", k: Optional[int] = None,
               node_budget: int = DEFAULT_NODE_BUDGET,
               state_budget: int = 500_000) -> VassOutcome:
    """Decide acceptance (final state, all counters zero) where possible.

    auto mode: Karp-Miller first. All counters bounded -> exhaustive BFS
    decides exactly. Final control uncoverable -> Rejecting by monotonicity.
    Otherwise bounded-value search with growing caps; Unknown on budget.
    """
    if mode == "bounded":
        cap = k if k is not None else 16
        found, parents, pruned, blew = _bfs_exact(v, cap, state_budget)
        if found is not None:
            path, root = _extract_path(parents, found)
            return VassOutcome(VassStatus.ACCEPTING, path, root,
                               stats={"states": len(parents), "cap": cap})
        return VassOutcome(VassStatus.UNKNOWN,
                           certificate=f"bounded search, cap {cap}",
                           stats={"states": len(parents), "pruned": pruned})

    km = karp_miller(v, node_budget)
    stats = {"km_nodes": len(km.nodes), "km_complete": km.complete}
    if km.complete:
        if not km.covers_state(v.is_final):
            return VassOutcome(VassStatus.REJECTING,
                               certificate="final control state uncoverable",
                               stats=stats)
        if km.all_bounded():
            bounds = km.bounds()
            found, parents, pruned, blew = _bfs_exact(v, None, state_budget)
            stats["states"] = len(parents)
            if blew:
                return VassOutcome(VassStatus.UNKNOWN,
                                   certificate="state budget exhausted", stats=stats)
            if found is not None:
                path, root = _extract_path(parents, found)
                return VassOutcome(VassStatus.ACCEPTING, path, root, stats=stats)
            bmax = max(bounds.values(), default=0)
            return VassOutcome(
                VassStatus.REJECTING,
                certificate=f"all counters bounded by {bmax}; search exhaustive",
                stats=stats)
    # some counter unbounded (or tree incomplete): growing-cap search
    for cap in (4, 8, 16, 32, 64):
        found, parents, pruned, blew = _bfs_exact(v, cap, state_budget)
        stats[f"states_cap{cap}"] = len(parents)
        if found is not None:
            path, root = _extract_path(parents, found)
            return VassOutcome(VassStatus.ACCEPTING, path, root, stats=stats)
        if blew:
            break
        if pruned == 0:
            # the cap never bit: the search was exhaustive after all
            return VassOutcome(VassStatus.REJECTING,
                               certificate=f"exhaustive at cap {cap}", stats=stats)
    return VassOutcome(VassStatus.UNKNOWN, certificate="budget exhausted",
                       stats=stats)


# ---------------------------------------------------------------------------
# Flat text export

def export_vass(v, limit: int = 100_000) -> str:
    """Flat text: counters, then one line per reachable control state, then
    one line per transition with its delta vector."""
    lines = ["vass"]
    for c in v.counters:
        lines.append(f"counter {c}")
    inits = v.initial_states()
    init_states = {s for s, _m in inits}
    seen = []
    seen_set = set()
    queue = deque(sorted(init_states, key=repr))
    while queue:
        s = queue.popleft()
        if s in seen_set:
            continue
        seen_set.add(s)
        seen.append(s)
        if len(seen) > limit:
            lines.append("# state limit hit; export truncated")
            break
        for t in v.out(s):
            if t.dst not in seen_set:
                queue.append(t.dst)
    names = {s: f"s{i}" for i, s in enumerate(seen)}
    for s in seen:
        flags = []
        if s in init_states:
            flags.append("initial")
        if v.is_final(s):
            flags.append("final")
        lines.append(f"state {names[s]} {' '.join(flags)}".rstrip() + f"  # {s!r}")
    for s in seen:
        for t in v.out(s):
            if t.dst not in names:
                continue
            delta = ", ".join(f"{c}{d:+d}" for c, d in zip(v.counters, t.delta) if d)
            lines.append(f"trans {names[s]} -> {names[t.dst]} : [{delta}] label {t.label!r}")
    return "\n".join(lines) + "\n"

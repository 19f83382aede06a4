"""Exact operational semantics for the discrete flavors (tick and counter).

Global configurations, successor generation, explicit-state BFS reachability
(the oracle other engines are tested against), trace replay, and random
simulation.

A global tick moves every process simultaneously and is enabled only when
every process has a tick transition at its current location; everything else
is asynchronous. The tick counter in a configuration never influences
enabledness, so the explorer deduplicates configurations modulo it; this is
what makes exhaustion certificates possible for systems with tick loops.
"""

from __future__ import annotations

import enum
import itertools
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .model import (Action, CounterAutomaton, Dec, DelayDomain, Inc, Internal,
                    Recv, Send, System, TestEmpty, Tick, TickAutomaton,
                    Transition, ZTest, format_action)


class FlavorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configurations, steps, traces

@dataclass(frozen=True)
class GlobalConfig:
    """One global state: locations, channel words (head first), counters,
    and the number of global tick rounds so far."""

    locs: tuple[tuple[str, str], ...]                    # (process, location)
    channels: tuple[tuple[str, tuple[str, ...]], ...]    # (channel, word)
    counters: tuple[tuple[str, str, int], ...]           # (process, counter, n)
    ticks: int = 0

    def loc(self, p: str) -> str:
        return dict(self.locs)[p]

    def channel(self, c: str) -> tuple[str, ...]:
        return dict(self.channels)[c]

    def counter(self, p: str, x: str) -> int:
        for (pp, xx, n) in self.counters:
            if pp == p and xx == x:
                return n
        raise KeyError((p, x))


@dataclass(frozen=True)
class Step:
    procs: tuple[str, ...]   # singleton, or every process for a tick
    action: Action


@dataclass(frozen=True)
class Trace:
    initial: GlobalConfig
    steps: tuple[tuple[Step, GlobalConfig], ...]
    deadlocked: bool = False

    def __len__(self) -> int:
        return len(self.steps)

    def final(self) -> GlobalConfig:
        return self.steps[-1][1] if self.steps else self.initial


def format_trace(trace: Trace) -> str:
    def chan_part(cfg: GlobalConfig) -> str:
        return ", ".join(f"{c}={'.'.join(w)}" for c, w in cfg.channels)

    lines = [f"init: channels: {chan_part(trace.initial)} ; ticks={trace.initial.ticks}"]
    for i, (step, cfg) in enumerate(trace.steps):
        procs = ",".join(step.procs)
        lines.append(f"step {i}: [{procs}] {format_action(step.action)} ; "
                     f"channels: {chan_part(cfg)} ; ticks={cfg.ticks}")
    if trace.deadlocked:
        lines.append("deadlock")
    return "\n".join(lines)


def trace_to_dict(trace: Trace) -> dict:
    def cfg(c: GlobalConfig) -> dict:
        return {"locs": dict(c.locs),
                "channels": {k: list(v) for k, v in c.channels},
                "counters": [[p, x, n] for p, x, n in c.counters],
                "ticks": c.ticks}
    return {
        "initial": cfg(trace.initial),
        "deadlocked": trace.deadlocked,
        "steps": [{"procs": list(s.procs), "action": format_action(s.action),
                   "config": cfg(c)} for s, c in trace.steps],
    }


# ---------------------------------------------------------------------------
# Compiled interpreter

_INT, _SEND, _RECV, _EMPTY, _INC, _DEC, _ZTEST = range(7)


class Interp:
    """Compiled successor generator for one discrete-flavor system."""

    def __init__(self, sys: System):
        if sys.delay is DelayDomain.DENSE:
            raise FlavorError("explicit semantics covers the discrete flavors only")
        self.sys = sys
        self.procs = sorted(sys.automata)
        self.chan_ids = [c.id for c in sys.topology.channels]
        chan_ix = {c: i for i, c in enumerate(self.chan_ids)}
        self.loc_names: list[tuple[str, ...]] = []
        self.loc_ix: list[dict[str, int]] = []
        self.counter_keys: list[tuple[str, str]] = []
        ctr_ix: dict[tuple[str, str], int] = {}
        for p in self.procs:
            aut = sys.automata[p]
            self.loc_names.append(aut.locations)
            self.loc_ix.append({l: i for i, l in enumerate(aut.locations)})
            if isinstance(aut, CounterAutomaton):
                for x in sorted(aut.counters):
                    ctr_ix[(p, x)] = len(self.counter_keys)
                    self.counter_keys.append((p, x))

        # async_ops[pi][li] = list of (kind, arg1, arg2, dst_ix, action)
        # tick_ops[pi][li]  = list of (dst_ix, transition)
        self.async_ops: list[list[list[tuple]]] = []
        self.tick_ops: list[list[list[tuple]]] = []
        for pi, p in enumerate(self.procs):
            aut = sys.automata[p]
            per_loc = [[] for _ in aut.locations]
            per_loc_tick = [[] for _ in aut.locations]
            for t in aut.transitions:
                li = self.loc_ix[pi][t.src]
                di = self.loc_ix[pi][t.dst]
                a = t.action
                if isinstance(a, Tick):
                    per_loc_tick[li].append((di, t))
                elif isinstance(a, Internal):
                    per_loc[li].append((_INT, 0, 0, di, a))
                elif isinstance(a, Send):
                    per_loc[li].append((_SEND, chan_ix[a.channel], a.message, di, a))
                elif isinstance(a, Recv):
                    per_loc[li].append((_RECV, chan_ix[a.channel], a.message, di, a))
                elif isinstance(a, TestEmpty):
                    per_loc[li].append((_EMPTY, chan_ix[a.channel], 0, di, a))
                elif isinstance(a, Inc):
                    per_loc[li].append((_INC, ctr_ix[(p, a.counter)], 0, di, a))
                elif isinstance(a, Dec):
                    per_loc[li].append((_DEC, ctr_ix[(p, a.counter)], 0, di, a))
                elif isinstance(a, ZTest):
                    per_loc[li].append((_ZTEST, ctr_ix[(p, a.counter)], 0, di, a))
            self.async_ops.append(per_loc)
            self.tick_ops.append(per_loc_tick)

    # -- packing ------------------------------------------------------------

    def initial_packed(self) -> list[tuple]:
        zero_ch = tuple(() for _ in self.chan_ids)
        zero_ct = tuple(0 for _ in self.counter_keys)
        combos = itertools.product(*[
            sorted(self.loc_ix[pi][l] for l in self.sys.automata[p].initial)
            for pi, p in enumerate(self.procs)])
        return [(tuple(c), zero_ch, zero_ct, 0) for c in combos]

    def pack(self, cfg: GlobalConfig) -> tuple:
        locs = dict(cfg.locs)
        chans = dict(cfg.channels)
        ctrs = {(p, x): n for p, x, n in cfg.counters}
        return (tuple(self.loc_ix[pi][locs[p]] for pi, p in enumerate(self.procs)),
                tuple(tuple(chans.get(c, ())) for c in self.chan_ids),
                tuple(ctrs.get(k, 0) for k in self.counter_keys),
                cfg.ticks)

    def unpack(self, packed: tuple) -> GlobalConfig:
        locs, chans, ctrs, ticks = packed
        return GlobalConfig(
            locs=tuple((p, self.loc_names[pi][locs[pi]])
                       for pi, p in enumerate(self.procs)),
            channels=tuple(zip(self.chan_ids, chans)),
            counters=tuple((p, x, ctrs[i])
                           for i, (p, x) in enumerate(self.counter_keys)),
            ticks=ticks)

    # -- successor relation --------------------------------------------------

    def successors_packed(self, packed: tuple) -> list[tuple]:
        """Returns [(proc_ix or -1, action, next_packed)]; -1 marks a tick."""
        locs, chans, ctrs, ticks = packed
        out = []
        for pi in range(len(self.procs)):
            for kind, a1, a2, di, act in self.async_ops[pi][locs[pi]]:
                if kind == _INT:
                    out.append((pi, act, (_move(locs, pi, di), chans, ctrs, ticks)))
                elif kind == _SEND:
                    w = chans[a1] + (a2,)
                    out.append((pi, act,
                                (_move(locs, pi, di), _put(chans, a1, w), ctrs, ticks)))
                elif kind == _RECV:
                    w = chans[a1]
                    if w and w[0] == a2:
                        out.append((pi, act,
                                    (_move(locs, pi, di), _put(chans, a1, w[1:]),
                                     ctrs, ticks)))
                elif kind == _EMPTY:
                    if not chans[a1]:
                        out.append((pi, act, (_move(locs, pi, di), chans, ctrs, ticks)))
                elif kind == _INC:
                    out.append((pi, act,
                                (_move(locs, pi, di), chans, _bump(ctrs, a1, 1), ticks)))
                elif kind == _DEC:
                    if ctrs[a1] > 0:
                        out.append((pi, act,
                                    (_move(locs, pi, di), chans, _bump(ctrs, a1, -1),
                                     ticks)))
                elif kind == _ZTEST:
                    if ctrs[a1] == 0:
                        out.append((pi, act, (_move(locs, pi, di), chans, ctrs, ticks)))
        # global tick: every process needs a tick move at its location
        choices = [self.tick_ops[pi][locs[pi]] for pi in range(len(self.procs))]
        if choices and all(choices):
            for combo in itertools.product(*choices):
                nloc = tuple(di for di, _t in combo)
                out.append((-1, Tick(), (nloc, chans, ctrs, ticks + 1)))
        return out

    def step_of(self, who: int, action: Action) -> Step:
        if who < 0:
            return Step(tuple(self.procs), action)
        return Step((self.procs[who],), action)

    # -- acceptance ----------------------------------------------------------

    def compile_targets(self, targets) -> Optional[list[list[tuple[int, int]]]]:
        """Target maps process->location (possibly partial); None keeps the
        default 'every process at some final location'."""
        if targets is None:
            return None
        compiled = []
        for tm in targets:
            row = []
            for p, loc in sorted(tm.items()):
                if p not in self.sys.automata:
                    raise ValueError(f"target names unknown process {p}")
                pi = self.procs.index(p)
                if loc not in self.loc_ix[pi]:
                    raise ValueError(f"target names unknown location {p}={loc}")
                row.append((pi, self.loc_ix[pi][loc]))
            compiled.append(row)
        return compiled

    def accepts(self, packed: tuple, compiled_targets) -> bool:
        locs, chans, ctrs, _ticks = packed
        if compiled_targets is None:
            for pi, p in enumerate(self.procs):
                if self.loc_names[pi][locs[pi]] not in self.sys.automata[p].final:
                    return False
        else:
            if not any(all(locs[pi] == li for pi, li in row)
                       for row in compiled_targets):
                return False
        acc = self.sys.acceptance
        if acc.require_empty_channels and any(chans):
            return False
        if acc.require_zero_counters and any(ctrs):
            return False
        return True


def _move(locs: tuple, pi: int, di: int) -> tuple:
    return locs[:pi] + (di,) + locs[pi + 1:]


def _put(chans: tuple, ci: int, w: tuple) -> tuple:
    return chans[:ci] + (w,) + chans[ci + 1:]


def _bump(ctrs: tuple, i: int, d: int) -> tuple:
    return ctrs[:i] + (ctrs[i] + d,) + ctrs[i + 1:]


def successors(sys: System, cfg: GlobalConfig) -> list[tuple[Step, GlobalConfig]]:
    """All enabled steps from cfg, in a fixed deterministic order."""
    it = Interp(sys)
    packed = it.pack(cfg)
    return [(it.step_of(w, a), it.unpack(nxt))
            for (w, a, nxt) in it.successors_packed(packed)]


def initial_configs(sys: System) -> list[GlobalConfig]:
    it = Interp(sys)
    return [it.unpack(p) for p in it.initial_packed()]


# ---------------------------------------------------------------------------
# Reachability

class ReachStatus(enum.Enum):
    REACHABLE = "Reachable"
    UNREACHABLE = "Unreachable"
    BOUND_EXHAUSTED = "BoundExhausted"


@dataclass(frozen=True)
class ReachOutcome:
    status: ReachStatus
    trace: Optional[Trace]
    stats: dict


def _key(packed: tuple) -> tuple:
    return packed[:3]   # drop the tick counter: it never affects enabledness


def reach_explicit(sys: System, targets=None, bound: Optional[int] = None,
                   depth: Optional[int] = None,
                   max_states: Optional[int] = None) -> ReachOutcome:
    """BFS over global configurations.

    Unreachable is claimed only when the whole quotient space was exhausted
    without a single configuration pruned by the channel bound, the depth
    bound, or the state budget; otherwise BoundExhausted. Witness traces are
    minimal in step count.
    """
    it = Interp(sys)
    compiled = it.compile_targets(targets)

    parents: dict[tuple, tuple] = {}
    frontier = deque()
    pruned = 0
    explored = 0
    max_depth = 0

    for init in it.initial_packed():
        k = _key(init)
        if k not in parents:
            parents[k] = (None, None, init)
            if it.accepts(init, compiled):
                return ReachOutcome(
                    ReachStatus.REACHABLE,
                    Trace(it.unpack(init), ()),
                    {"states": 1, "pruned": 0, "depth": 0})
            frontier.append((k, 0))

    while frontier:
        key, d = frontier.popleft()
        if depth is not None and d >= depth:
            pruned += 1
            continue
        packed = parents[key][2]
        explored += 1
        for (who, act, nxt) in it.successors_packed(packed):
            nk = _key(nxt)
            if nk in parents:
                continue
            if bound is not None and any(len(w) > bound for w in nxt[1]):
                pruned += 1
                continue
            parents[nk] = (key, it.step_of(who, act), nxt)
            max_depth = max(max_depth, d + 1)
            if it.accepts(nxt, compiled):
                return ReachOutcome(
                    ReachStatus.REACHABLE,
                    _build_trace(it, parents, nk),
                    {"states": len(parents), "pruned": pruned, "depth": d + 1})
            if max_states is not None and len(parents) > max_states:
                return ReachOutcome(
                    ReachStatus.BOUND_EXHAUSTED, None,
                    {"states": len(parents), "pruned": pruned,
                     "depth": max_depth, "budget": "states"})
            frontier.append((nk, d + 1))

    status = ReachStatus.UNREACHABLE if pruned == 0 else ReachStatus.BOUND_EXHAUSTED
    return ReachOutcome(status, None,
                        {"states": len(parents), "pruned": pruned,
                         "depth": max_depth, "explored": explored})


def _build_trace(it: Interp, parents: dict, key: tuple) -> Trace:
    rev = []
    while True:
        pk, step, packed = parents[key]
        if pk is None:
            initial = packed
            break
        rev.append((step, packed))
        key = pk
    rev.reverse()
    return Trace(it.unpack(initial),
                 tuple((s, it.unpack(p)) for s, p in rev))


# ---------------------------------------------------------------------------
# Replay and simulation

@dataclass(frozen=True)
class ReplayResult:
    valid: bool
    bad_index: Optional[int] = None
    reason: str = ""


def replay(sys: System, trace: Trace) -> ReplayResult:
    """Check that every stored step is one of its predecessor's successors."""
    it = Interp(sys)
    try:
        cur = it.pack(trace.initial)
    except KeyError as e:
        return ReplayResult(False, -1, f"initial config malformed: {e}")
    for i, (step, cfg) in enumerate(trace.steps):
        try:
            want = it.pack(cfg)
        except KeyError as e:
            return ReplayResult(False, i, f"config malformed: {e}")
        hits = [nxt for (who, act, nxt) in it.successors_packed(cur)
                if nxt == want and it.step_of(who, act) == step]
        if not hits:
            return ReplayResult(False, i, "step not in successor set")
        cur = want
    return ReplayResult(True)


def simulate(sys: System, steps: int, seed: int = 0,
             policy="random", script: Optional[Iterable[int]] = None) -> Trace:
    """Random (or scripted) walk of at most `steps` steps; deterministic
    for a given seed. A deadlock before the budget is flagged on the trace."""
    it = Interp(sys)
    rng = random.Random(seed)
    inits = it.initial_packed()
    start = inits[0] if len(inits) == 1 else rng.choice(inits)
    cur = start
    script_iter = iter(script) if script is not None else None
    acc = []
    deadlocked = False
    for _ in range(steps):
        succ = it.successors_packed(cur)
        if not succ:
            deadlocked = True
            break
        if policy == "random":
            who, act, nxt = succ[rng.randrange(len(succ))]
        else:
            try:
                idx = next(script_iter)
            except StopIteration:
                break
            who, act, nxt = succ[idx % len(succ)]
        acc.append((it.step_of(who, act), it.unpack(nxt)))
        cur = nxt
    return Trace(it.unpack(start), tuple(acc), deadlocked)


# ---------------------------------------------------------------------------
# Bounded reachable sets, free and slot-normalized

def topo_order(sys: System) -> list[str]:
    """Topological order of processes along channel direction (senders first).
    Requires a polyforest; ties are broken by name."""
    from .topology import is_polyforest
    ok, _cycle = is_polyforest(sys.topology)
    if not ok:
        raise ValueError("slot normalization needs a polyforest topology")
    procs = sorted(sys.automata)
    indeg = {p: 0 for p in procs}
    for c in sys.topology.channels:
        indeg[c.target] += 1
    order = []
    ready = sorted(p for p in procs if indeg[p] == 0)
    while ready:
        p = ready.pop(0)
        order.append(p)
        for c in sys.topology.channels:
            if c.source == p:
                indeg[c.target] -= 1
                if indeg[c.target] == 0:
                    ready.append(c.target)
        ready.sort()
    return order


def reachable_set(sys: System, max_steps: int,
                  scheduler: str = "free") -> set[GlobalConfig]:
    """All configurations (tick counts included) reachable within max_steps.

    scheduler="slotted" restricts each tick round to a fixed sender-before-
    receiver process order; on test-free polyforests this reaches the same set.
    """
    it = Interp(sys)
    if scheduler == "slotted":
        order = {p: i for i, p in enumerate(topo_order(sys))}
        rank = [order[p] for p in it.procs]
        for p, aut in sys.automata.items():
            for t in aut.transitions:
                if isinstance(t.action, TestEmpty):
                    raise ValueError("slot normalization holds for test-free systems")
    seen: dict[tuple, int] = {}
    out: set[GlobalConfig] = set()
    frontier = deque()
    for init in it.initial_packed():
        state = (init, 0) if scheduler == "slotted" else (init, None)
        if state not in seen:
            seen[state] = 0
            out.add(it.unpack(init))
            frontier.append((state, 0))
    while frontier:
        (packed, phase), d = frontier.popleft()
        if d >= max_steps:
            continue
        for (who, _act, nxt) in it.successors_packed(packed):
            if scheduler == "slotted":
                if who >= 0:
                    if rank[who] < phase:
                        continue
                    nphase = rank[who]
                else:
                    nphase = 0
                state = (nxt, nphase)
            else:
                state = (nxt, None)
            if state in seen:
                continue
            seen[state] = d + 1
            out.add(it.unpack(nxt))
            frontier.append((state, d + 1))
    return out

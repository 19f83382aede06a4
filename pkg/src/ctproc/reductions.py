"""Topology-preserving reductions.

Direction A: test-free polyforest tick systems become VASS with zero-counter
acceptance. The construction runs each process on local time and fuses every
matching send/recv pair into a rendezvous transition of the asynchronous
product; one lag counter per channel tracks receiver-local-ticks minus
sender-local-ticks. Local ticks of the sender decrement the lag (blocking at
zero keeps the sender's clock from passing its receiver's), local ticks of the
receiver increment it; acceptance with all lags zero recovers synchronized
global time, and rendezvous leaves nothing in flight so channels end empty.

Disconnected topologies get a chain of virtual lag counters through one root
per weak component: global ticks couple even processes that never exchange a
message, and the virtual lags restore exactly that coupling.

Direction B: a counter automaton becomes a one-process channel system where
every counter is a self-loop channel over a unary message; increments send,
decrements receive, zero tests become emptiness tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

from .model import (Acceptance, Channel, CounterAutomaton, Dec, DelayDomain,
                    Inc, Internal, Recv, Send, System, TestEmpty, Tick,
                    TickAutomaton, Topology, Transition, ZTest)
from .semantics import GlobalConfig, Interp, Step, Trace
from .topology import is_polyforest, weak_components
from .vass import VassOutcome, VassTransition, vass_reach


class ReductionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Direction A: tick system -> VASS

class ProductVass:
    """Lazily-expanded product VASS for a test-free polyforest tick system.

    States are tuples of per-process location indices; with allow_orphans a
    frozenset of closed channel indices is appended (once a channel discards a
    message, FIFO forbids any later rendezvous on it).
    """

    def __init__(self, sys: System, targets=None, allow_orphans: bool = False):
        if sys.delay is not DelayDomain.TICK:
            raise ReductionError("the VASS reduction takes tick-flavor systems")
        for p, aut in sorted(sys.automata.items()):
            for t in aut.transitions:
                if isinstance(t.action, TestEmpty):
                    raise ReductionError(
                        "emptiness tests unsupported by VASS reduction")
        ok, cycle = is_polyforest(sys.topology)
        if not ok:
            raise ReductionError(
                f"topology is not a polyforest (cycle {list(cycle)})")
        if not allow_orphans and not sys.acceptance.require_empty_channels:
            raise ReductionError(
                "reduction needs empty-channel acceptance (or allow_orphans)")

        self.sys = sys
        self.allow_orphans = allow_orphans
        self.interp = Interp(sys)      # reuse the compiled index maps
        self.procs = self.interp.procs
        self.nproc = len(self.procs)
        self.chan_ids = self.interp.chan_ids
        proc_ix = {p: i for i, p in enumerate(self.procs)}

        # lag counter per channel, plus a virtual chain across components
        self.counters = tuple(f"lag_{c}" for c in self.chan_ids)
        self._tick_delta_base = []
        chan_source = {}
        chan_target = {}
        for ci, c in enumerate(sys.topology.channels):
            chan_source[ci] = proc_ix[c.source]
            chan_target[ci] = proc_ix[c.target]
        roots = sorted(min(comp.processes) for comp in weak_components(sys.topology))
        self.virtual_edges = []
        for i in range(len(roots) - 1):
            self.virtual_edges.append((proc_ix[roots[i]], proc_ix[roots[i + 1]]))
            self.counters += (f"vlag_{i}",)
        if allow_orphans:
            self.orphan_base = len(self.counters)
            self.counters += tuple(f"orph_{c}" for c in self.chan_ids)

        ncnt = len(self.counters)
        nch = len(self.chan_ids)
        # per-process tick delta over the lag counters
        self.tick_delta = []
        for pi in range(self.nproc):
            d = [0] * ncnt
            for ci in range(nch):
                if chan_source[ci] == pi:
                    d[ci] -= 1
                if chan_target[ci] == pi:
                    d[ci] += 1
            for vi, (s, t) in enumerate(self.virtual_edges):
                if s == pi:
                    d[nch + vi] -= 1
                if t == pi:
                    d[nch + vi] += 1
            self.tick_delta.append(tuple(d))
        self.zero_delta = tuple([0] * ncnt)

        # sends/recvs by (proc, loc, channel)
        self.sends: dict[tuple[int, int, int], list] = {}
        self.recvs: dict[tuple[int, int, int], list] = {}
        chan_ix = {c: i for i, c in enumerate(self.chan_ids)}
        for pi, p in enumerate(self.procs):
            aut = sys.automata[p]
            for t in aut.transitions:
                li = self.interp.loc_ix[pi][t.src]
                di = self.interp.loc_ix[pi][t.dst]
                if isinstance(t.action, Send):
                    self.sends.setdefault((pi, li, chan_ix[t.action.channel]),
                                          []).append((t.action.message, di, t))
                elif isinstance(t.action, Recv):
                    self.recvs.setdefault((pi, li, chan_ix[t.action.channel]),
                                          []).append((t.action.message, di, t))
        self.chan_ends = {ci: (chan_source[ci], chan_target[ci])
                          for ci in range(nch)}
        self._targets = self.interp.compile_targets(targets)

    # -- VASS interface -----------------------------------------------------

    def initial_states(self):
        zero = tuple([0] * len(self.counters))
        out = []
        for locs, _ch, _ct, _tk in self.interp.initial_packed():
            state = (locs, frozenset()) if self.allow_orphans else (locs, None)
            out.append((state, zero))
        return out

    def out(self, state) -> list[VassTransition]:
        locs, closed = state
        res = []
        for pi in range(self.nproc):
            for kind, a1, a2, di, act in self.interp.async_ops[pi][locs[pi]]:
                if kind == 0:   # internal moves only; send/recv fuse below
                    nlocs = locs[:pi] + (di,) + locs[pi + 1:]
                    res.append(VassTransition(
                        ("local", self.procs[pi], act,
                         self.interp.loc_names[pi][di]),
                        self.zero_delta, (nlocs, closed)))
            for di, t in self.interp.tick_ops[pi][locs[pi]]:
                nlocs = locs[:pi] + (di,) + locs[pi + 1:]
                res.append(VassTransition(("ltick", self.procs[pi], t.dst),
                                          self.tick_delta[pi], (nlocs, closed)))
        for ci, (spi, tpi) in sorted(self.chan_ends.items()):
            if closed and ci in closed:
                continue
            for (msg, sdi, st) in self.sends.get((spi, locs[spi], ci), []):
                for (rmsg, rdi, rt) in self.recvs.get((tpi, locs[tpi], ci), []):
                    if rmsg != msg:
                        continue
                    nlocs = list(locs)
                    nlocs[spi] = sdi
                    nlocs[tpi] = rdi
                    res.append(VassTransition(
                        ("rendezvous", self.chan_ids[ci], msg, st.dst, rt.dst),
                        self.zero_delta, (tuple(nlocs), closed)))
                if self.allow_orphans:
                    nlocs = locs[:spi] + (sdi,) + locs[spi + 1:]
                    delta = list(self.zero_delta)
                    delta[self.orphan_base + ci] += 1
                    res.append(VassTransition(
                        ("orphan", self.chan_ids[ci], msg, st.dst),
                        tuple(delta), (nlocs, closed | {ci})))
        return res

    def is_final(self, state) -> bool:
        locs, _closed = state
        if self._targets is None:
            for pi, p in enumerate(self.procs):
                if self.interp.loc_names[pi][locs[pi]] not in self.sys.automata[p].final:
                    return False
            return True
        return any(all(locs[pi] == li for pi, li in row) for row in self._targets)


def tick_to_vass(sys: System, targets=None, allow_orphans: bool = False) -> ProductVass:
    """Build the lag-counter rendezvous VASS; see the module docstring.

    Preconditions: tick flavor, no testable transitions, polyforest topology,
    empty-channel acceptance (unless allow_orphans).
    """
    return ProductVass(sys, targets=targets, allow_orphans=allow_orphans)


def vass_acceptance(v, **kwargs) -> VassOutcome:
    """Facade over the backend engine."""
    return vass_reach(v, **kwargs)


# ---------------------------------------------------------------------------
# Provenance: accepting VASS paths map back to accepting traces

def vass_path_to_trace(pv: ProductVass, path, start=None) -> Trace:
    """Reschedule an accepting VASS path into a global trace of the original
    system: per round, processes act in sender-before-receiver order, then
    everyone ticks. The result replays under the exact semantics, which makes
    every Accepting answer a checkable certificate.

    `start` is the VASS (state, marking) the path fires from (VassOutcome
    records it); the first initial state is assumed when omitted.
    """
    from .semantics import topo_order

    sys = pv.sys
    it = pv.interp
    procs = it.procs
    # split each process's local run into rounds at its local ticks
    rounds: dict[str, list[list]] = {p: [[]] for p in procs}
    tickdst: dict[str, list[str]] = {p: [] for p in procs}
    for t in path:
        tag = t.label[0]
        if tag == "local":
            _tag, p, act, dst = t.label
            rounds[p][-1].append((act, dst))
        elif tag == "ltick":
            p, dst = t.label[1], t.label[2]
            tickdst[p].append(dst)
            rounds[p].append([])
        elif tag == "rendezvous":
            _tag, cid, msg, sdst, rdst = t.label
            ch = sys.topology.channel(cid)
            rounds[ch.source][-1].append((Send(cid, msg), sdst))
            rounds[ch.target][-1].append((Recv(cid, msg), rdst))
        elif tag == "orphan":
            _tag, cid, msg, sdst = t.label
            ch = sys.topology.channel(cid)
            rounds[ch.source][-1].append((Send(cid, msg), sdst))
    totals = {p: len(rounds[p]) - 1 for p in procs}
    T = max(totals.values(), default=0)
    if any(v != T for v in totals.values()):
        raise ReductionError("provenance mapping: unequal local tick counts")

    order = topo_order(sys)
    if start is not None:
        init_locs = start[0][0]
    else:
        init_locs, _c, _ct, _tk = it.initial_packed()[0]
    locs = {p: it.loc_names[pi][init_locs[pi]] for pi, p in enumerate(procs)}
    chans = {c: [] for c in it.chan_ids}
    steps = []
    ticks = 0

    def snap() -> GlobalConfig:
        return GlobalConfig(
            locs=tuple(sorted(locs.items())),
            channels=tuple((c, tuple(chans[c])) for c in it.chan_ids),
            counters=(), ticks=ticks)

    initial = snap()

    def fire(p: str, act, dst: str) -> None:
        aut = sys.automata[p]
        for t in aut.transitions:
            if t.src == locs[p] and t.action == act and t.dst == dst:
                locs[p] = dst
                return
        raise ReductionError(f"provenance mapping: no transition {p}:{locs[p]} {act}")

    for r in range(T + 1):
        for p in order:
            for act, dst in rounds[p][r]:
                if isinstance(act, Send):
                    chans[act.channel].append(act.message)
                elif isinstance(act, Recv):
                    if not chans[act.channel] or chans[act.channel][0] != act.message:
                        raise ReductionError("provenance mapping: FIFO violation")
                    chans[act.channel].pop(0)
                fire(p, act, dst)
                steps.append((Step((p,), act), snap()))
        if r < T:
            for p in procs:
                dst = tickdst[p][r]
                for t in sys.automata[p].transitions:
                    if t.src == locs[p] and isinstance(t.action, Tick) and t.dst == dst:
                        locs[p] = dst
                        break
                else:
                    raise ReductionError(f"provenance mapping: missing tick {p}")
            ticks += 1
            steps.append((Step(tuple(procs), Tick()), snap()))
    return Trace(initial, tuple(steps))


# ---------------------------------------------------------------------------
# Direction B: counter automaton -> channel system

UNARY_MESSAGE = "u"


def counters_to_channels(cnt: CounterAutomaton, name: str = "lifted",
                         process: str = "m") -> System:
    """Self-loop encoding: counter x becomes channel ch_x from the process to
    itself over a unary message; inc sends, dec receives, ztest tests
    emptiness. Tick self-loops on every location keep global time free (the
    source machine has no time at all)."""
    for t in cnt.transitions:
        if isinstance(t.action, (Send, Recv, TestEmpty)):
            raise ReductionError(
                "counters_to_channels takes a standalone machine without "
                "communication actions")
    chan_of = {x: f"ch_{x}" for x in sorted(cnt.counters)}
    trans = []
    tested = set()
    for t in cnt.transitions:
        a = t.action
        if isinstance(a, Inc):
            na = Send(chan_of[a.counter], UNARY_MESSAGE)
        elif isinstance(a, Dec):
            na = Recv(chan_of[a.counter], UNARY_MESSAGE)
        elif isinstance(a, ZTest):
            na = TestEmpty(chan_of[a.counter])
            tested.add(chan_of[a.counter])
        elif isinstance(a, Internal):
            na = a
        else:
            raise ReductionError(f"unexpected action {a} in counter automaton")
        trans.append(Transition(t.src, na, t.dst))
    for loc in cnt.locations:
        trans.append(Transition(loc, Tick(), loc))
    aut = TickAutomaton(cnt.locations, cnt.initial, cnt.final, tuple(trans))
    topo = Topology(
        processes=frozenset({process}),
        channels=tuple(Channel(chan_of[x], process, process)
                       for x in sorted(cnt.counters)),
        testable=frozenset(tested),
        messages=frozenset({UNARY_MESSAGE}) if cnt.counters else frozenset(),
    )
    return System(name, topo, DelayDomain.TICK, {process: aut},
                  Acceptance(require_empty_channels=True,
                             require_zero_counters=True,
                             require_zero_clocks=True))

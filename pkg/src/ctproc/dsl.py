"""Text format for systems (`.ctp` files): parser and canonical serializer.

The format is line-oriented and declarative::

    system demo {
      delay discrete;            # or: dense | none
      msgs { m1, m2 };
      accept { empty_channels, zero_counters, zero_clocks };   # optional
      process p {
        init l0;
        final l2;
        clocks { x };            # dense flavor; counters { x } for counter flavor
        l0 -> l1 : send(c, m1);
        l1 -> l1 : tick;
        l0 -> l2 : recv(c, m2) when x >= 1 reset {x};
        l0 -> l2 : empty(c);
        l0 -> l2 : inc x;
      }
      channel c : p -> q testable;
    }

`#` starts a comment. The optional `accept` line lists the conditions required
at acceptance; omitting it means all of them (the default convention).
Serialization is deterministic: identifiers come out sorted, so
parse(serialize(s)) is structurally equal to s.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .model import (Acceptance, Action, Channel, CounterAutomaton, Dec,
                    DelayDomain, GuardAtom, Inc, Internal, Recv, Send,
                    SourceSpan, System, TestEmpty, Tick, TickAutomaton,
                    TimedAutomaton, TimedRule, Topology, Transition, ZTest,
                    format_action, format_guard, validate_system)

FILE_EXTENSION = ".ctp"

KEYWORDS = {
    "system", "delay", "discrete", "dense", "none", "msgs", "process",
    "init", "final", "clocks", "counters", "channel", "testable", "when",
    "reset", "send", "recv", "empty", "tick", "internal", "inc", "dec",
    "ztest", "accept",
}

_ACCEPT_FLAGS = ("empty_channels", "zero_counters", "zero_clocks")


@dataclass(frozen=True)
class ParseError:
    message: str
    span: SourceSpan
    expected: tuple[str, ...] = ()

    def __str__(self) -> str:
        s = f"{self.span.line}:{self.span.column}: {self.message}"
        if self.expected:
            s += " (expected " + " | ".join(self.expected) + ")"
        return s


class ParseFailure(Exception):
    """Raised by parse(); carries every error collected."""

    def __init__(self, errors: list[ParseError]):
        super().__init__("; ".join(str(e) for e in errors[:5]))
        self.errors = errors


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<op>->|<=|>=|&&|[{}(),;:=<>|])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str      # ident | int | op | eof
    text: str
    span: SourceSpan


def _lex(text: str) -> tuple[list[Token], list[ParseError]]:
    toks: list[Token] = []
    errors: list[ParseError] = []
    pos, line, bol = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            span = SourceSpan(pos, pos + 1, line, pos - bol + 1)
            errors.append(ParseError(f"unexpected character {text[pos]!r}", span))
            pos += 1
            continue
        kind = m.lastgroup
        lexeme = m.group()
        if kind not in ("ws", "comment"):
            span = SourceSpan(m.start(), m.end(), line, m.start() - bol + 1)
            toks.append(Token(kind, lexeme, span))
        line += lexeme.count("\n")
        if "\n" in lexeme:
            bol = m.start() + lexeme.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", SourceSpan(n, n, line, n - bol + 1)))
    return toks, errors


# ---------------------------------------------------------------------------
# Parser (recursive descent with per-statement recovery)

@dataclass
class _ProcDecl:
    name: str
    span: SourceSpan
    init: list[str] = field(default_factory=list)
    final: list[str] = field(default_factory=list)
    clocks: list[str] = field(default_factory=list)
    counters: list[str] = field(default_factory=list)
    has_clocks: bool = False
    has_counters: bool = False
    # (src, action, guard, resets, dst, span)
    trans: list[tuple] = field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.toks, lex_errors = _lex(text)
        self.errors: list[ParseError] = list(lex_errors)
        self.i = 0

    # -- token helpers ------------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("ident", "op", "int")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def error(self, msg: str, expected: tuple[str, ...] = (), span=None) -> None:
        self.errors.append(ParseError(msg, span or self.peek().span, expected))

    def expect(self, text: str) -> bool:
        if self.accept(text):
            return True
        got = self.peek()
        self.error(f"expected {text!r}, found {got.text or 'end of input'!r}",
                   (text,))
        return False

    def expect_ident(self, what: str) -> Token | None:
        t = self.peek()
        if t.kind == "ident" and t.text not in KEYWORDS:
            return self.next()
        self.error(f"expected {what}, found {t.text or 'end of input'!r}",
                   ("identifier",))
        return None

    def skip_past(self, *stops: str) -> None:
        """Panic-mode recovery: drop tokens through the next stop token."""
        depth = 0
        while True:
            t = self.peek()
            if t.kind == "eof":
                return
            if t.text == "{":
                depth += 1
            elif t.text == "}":
                if depth == 0 and "}" in stops:
                    self.next()
                    return
                depth = max(0, depth - 1)
            elif depth == 0 and t.text in stops:
                self.next()
                return
            self.next()

    # -- grammar ------------------------------------------------------------

    def parse_system(self):
        name = "system0"
        delay: DelayDomain | None = None
        msgs: list[str] = []
        accept_flags: list[str] | None = None
        procs: list[_ProcDecl] = []
        channels: list[tuple] = []   # (id, src, dst, testable, span)

        if self.peek().kind == "eof":
            self.error("empty input", ("system",))
            return None
        if not self.expect("system"):
            return None
        t = self.expect_ident("system name")
        if t:
            name = t.text
        self.expect("{")

        while not self.at("}") and self.peek().kind != "eof":
            if self.accept(";"):
                continue
            if self.accept("delay"):
                tok = self.peek()
                if tok.text in ("discrete", "dense", "none"):
                    self.next()
                    d = DelayDomain(tok.text if tok.text != "discrete" else "discrete")
                    if delay is not None:
                        self.error("duplicate delay declaration", span=tok.span)
                    delay = {"discrete": DelayDomain.TICK,
                             "dense": DelayDomain.DENSE,
                             "none": DelayDomain.NONE}[tok.text]
                else:
                    self.error("expected delay kind", ("discrete", "dense", "none"))
                    self.skip_past(";")
                    continue
                self.expect(";")
            elif self.accept("msgs"):
                msgs.extend(self.ident_block())
            elif self.accept("accept"):
                flags = self.ident_block(keywords_ok=True)
                accept_flags = [] if accept_flags is None else accept_flags
                for f in flags:
                    if f in _ACCEPT_FLAGS:
                        accept_flags.append(f)
                    else:
                        self.error(f"unknown acceptance flag {f!r}", _ACCEPT_FLAGS)
            elif self.accept("process"):
                p = self.parse_process()
                if p:
                    procs.append(p)
            elif self.accept("channel"):
                ch = self.parse_channel()
                if ch:
                    channels.append(ch)
            else:
                self.error(f"unexpected {self.peek().text!r} in system body",
                           ("delay", "msgs", "accept", "process", "channel", "}"))
                self.skip_past(";", "}")
        self.expect("}")

        if delay is None:
            self.error("missing delay declaration", ("delay",))
            return None
        return name, delay, msgs, accept_flags, procs, channels

    def ident_block(self, keywords_ok: bool = False) -> list[str]:
        """`{ a, b, c }` with optional trailing `;`."""
        out: list[str] = []
        if not self.expect("{"):
            self.skip_past(";", "}")
            return out
        while not self.at("}") and self.peek().kind != "eof":
            t = self.peek()
            if t.kind == "ident" and (keywords_ok or t.text not in KEYWORDS):
                out.append(self.next().text)
            else:
                self.error(f"expected identifier, found {t.text!r}", ("identifier",))
                self.skip_past(",", "}")
                continue
            if not self.accept(","):
                break
        self.expect("}")
        self.accept(";")
        return out

    def parse_process(self) -> _ProcDecl | None:
        t = self.expect_ident("process name")
        if t is None:
            self.skip_past("}")
            return None
        decl = _ProcDecl(t.text, t.span)
        if not self.expect("{"):
            return decl
        while not self.at("}") and self.peek().kind != "eof":
            if self.accept(";"):
                continue
            if self.accept("init"):
                decl.init.extend(self.ident_list())
                self.expect(";")
            elif self.accept("final"):
                decl.final.extend(self.ident_list(allow_empty=True))
                self.expect(";")
            elif self.accept("clocks"):
                decl.has_clocks = True
                decl.clocks.extend(self.ident_block())
            elif self.accept("counters"):
                decl.has_counters = True
                decl.counters.extend(self.ident_block())
            elif self.peek().kind == "ident" and self.peek().text not in KEYWORDS:
                tr = self.parse_transition()
                if tr:
                    decl.trans.append(tr)
            else:
                self.error(f"unexpected {self.peek().text!r} in process body",
                           ("init", "final", "clocks", "counters", "transition", "}"))
                self.skip_past(";", "}")
        self.expect("}")
        self.accept(";")
        return decl

    def ident_list(self, allow_empty: bool = False) -> list[str]:
        out: list[str] = []
        if allow_empty and self.at(";"):
            return out
        while True:
            t = self.expect_ident("location name")
            if t is None:
                self.skip_past(";")
                self.i -= 1  # leave the ';' for the caller's expect
                return out
            out.append(t.text)
            if not self.accept(","):
                return out

    def parse_transition(self):
        src = self.next()  # known ident
        if not self.expect("->"):
            self.skip_past(";")
            return None
        dst = self.expect_ident("target location")
        if dst is None or not self.expect(":"):
            self.skip_past(";")
            return None
        act = self.parse_action()
        if act is None:
            self.skip_past(";")
            return None
        guard: list[GuardAtom] = []
        resets: list[str] = []
        if self.accept("when"):
            guard = self.parse_guard()
        if self.accept("reset"):
            resets = self.ident_block()
        span = SourceSpan(src.span.start, self.peek().span.start,
                          src.span.line, src.span.column)
        self.expect(";")
        return (src.text, act, tuple(guard), frozenset(resets), dst.text, span)

    def parse_action(self) -> Action | None:
        t = self.peek()
        if self.accept("tick"):
            return Tick()
        if t.text in ("send", "recv"):
            self.next()
            self.expect("(")
            ch = self.expect_ident("channel name")
            self.expect(",")
            msg = self.expect_ident("message name")
            self.expect(")")
            if ch is None or msg is None:
                return None
            return Send(ch.text, msg.text) if t.text == "send" else Recv(ch.text, msg.text)
        if self.accept("empty"):
            self.expect("(")
            ch = self.expect_ident("channel name")
            self.expect(")")
            return TestEmpty(ch.text) if ch else None
        if self.accept("internal"):
            self.expect("(")
            nm = self.expect_ident("action name")
            self.expect(")")
            return Internal(nm.text) if nm else None
        if t.text in ("inc", "dec", "ztest"):
            self.next()
            x = self.expect_ident("counter name")
            if x is None:
                return None
            return {"inc": Inc, "dec": Dec, "ztest": ZTest}[t.text](x.text)
        self.error(f"expected an action, found {t.text or 'end of input'!r}",
                   ("send", "recv", "empty", "tick", "internal", "inc", "dec", "ztest"))
        return None

    def parse_guard(self) -> list[GuardAtom]:
        atoms: list[GuardAtom] = []
        while True:
            x = self.expect_ident("clock name")
            op_tok = self.peek()
            if op_tok.text in ("<", "<=", "=", ">=", ">"):
                self.next()
            else:
                self.error("expected comparison operator",
                           ("<", "<=", "=", ">=", ">"))
                return atoms
            c = self.peek()
            if c.kind == "int":
                self.next()
            else:
                self.error("expected a natural-number constant", ("integer",))
                return atoms
            if x is not None:
                atoms.append(GuardAtom(x.text, op_tok.text, int(c.text)))
            if not self.accept("&&"):
                return atoms

    def parse_channel(self):
        cid = self.expect_ident("channel name")
        self.expect(":")
        src = self.expect_ident("source process")
        self.expect("->")
        dst = self.expect_ident("target process")
        testable = self.accept("testable")
        span = cid.span if cid else self.peek().span
        self.expect(";")
        if cid is None or src is None or dst is None:
            return None
        return (cid.text, src.text, dst.text, testable, span)


# ---------------------------------------------------------------------------
# Semantic construction

def _build_system(parsed, errors: list[ParseError]) -> System | None:
    name, delay, msgs, accept_flags, procs, channels = parsed

    def err(msg: str, span: SourceSpan) -> None:
        errors.append(ParseError(msg, span))

    seen: dict[str, SourceSpan] = {}
    for decl in procs:
        if decl.name in seen:
            err(f"duplicate process {decl.name}", decl.span)
        seen[decl.name] = decl.span
    cids: set[str] = set()
    for cid, src, dst, _testable, span in channels:
        if cid in cids:
            err(f"duplicate channel {cid}", span)
        cids.add(cid)
        for p in (src, dst):
            if p not in seen:
                err(f"channel {cid} endpoint {p} is not a declared process", span)

    automata = {}
    span_by_trans: dict[tuple, SourceSpan] = {}
    for decl in procs:
        locs = set(decl.init) | set(decl.final)
        for (s, _a, _g, _r, d, _sp) in decl.trans:
            locs.update((s, d))
        if not decl.init:
            err(f"process {decl.name} has no init declaration", decl.span)
        if decl.has_clocks and delay is not DelayDomain.DENSE:
            err(f"process {decl.name} declares clocks outside the dense flavor", decl.span)
        if decl.has_counters and delay is not DelayDomain.NONE:
            err(f"process {decl.name} declares counters outside the counter flavor",
                decl.span)

        if delay is DelayDomain.DENSE:
            rules = []
            for i, (s, a, g, r, d, sp) in enumerate(decl.trans):
                rules.append(TimedRule(s, a, g, r, d))
                span_by_trans[(decl.name, i)] = sp
            automata[decl.name] = TimedAutomaton(
                tuple(sorted(locs)), frozenset(decl.init), frozenset(decl.final),
                frozenset(decl.clocks), tuple(rules))
        else:
            trans = []
            for i, (s, a, g, r, d, sp) in enumerate(decl.trans):
                if g or r:
                    err("guards and resets only make sense in the dense flavor", sp)
                trans.append(Transition(s, a, d))
                span_by_trans[(decl.name, i)] = sp
            if delay is DelayDomain.NONE:
                automata[decl.name] = CounterAutomaton(
                    tuple(sorted(locs)), frozenset(decl.init), frozenset(decl.final),
                    frozenset(decl.counters), tuple(trans))
            else:
                automata[decl.name] = TickAutomaton(
                    tuple(sorted(locs)), frozenset(decl.init), frozenset(decl.final),
                    tuple(trans))

    topo = Topology(
        processes=frozenset(seen),
        channels=tuple(Channel(cid, s, d) for cid, s, d, _t, _sp in channels),
        testable=frozenset(cid for cid, _s, _d, t, _sp in channels if t),
        messages=frozenset(msgs),
    )
    if accept_flags is None:
        acceptance = Acceptance()
    else:
        acceptance = Acceptance(
            require_empty_channels="empty_channels" in accept_flags,
            require_zero_counters="zero_counters" in accept_flags,
            require_zero_clocks="zero_clocks" in accept_flags,
        )
    sysm = System(name, topo, delay, automata, acceptance)

    if errors:
        return None  # do not bother validating a partial build

    # Canonicalization reorders transitions, so map validator subjects back to
    # source spans via the canonical automata.
    index_of: dict[tuple, SourceSpan] = {}
    for decl in procs:
        aut = automata[decl.name]
        rows = aut.rules if isinstance(aut, TimedAutomaton) else aut.transitions
        originals = {}
        for i, (s, a, g, r, d, sp) in enumerate(decl.trans):
            if delay is DelayDomain.DENSE:
                key = TimedRule(s, a, g, r, d)
            else:
                key = Transition(s, a, d)
            originals.setdefault(key, sp)
        for j, row in enumerate(rows):
            if row in originals:
                index_of[("trans", decl.name, j)] = originals[row]

    for diag in validate_system(sysm):
        errors.append(ParseError(diag.message,
                                 index_of.get(diag.subject, SourceSpan(0, 0, 1, 1))))
    if errors:
        return None
    return sysm


def parse(text: str) -> System:
    """Parse a `.ctp` document; raises ParseFailure with all errors found."""
    p = _Parser(text)
    parsed = p.parse_system()
    errors = list(p.errors)
    if parsed is None:
        raise ParseFailure(errors or
                           [ParseError("unparseable input", SourceSpan(0, 0, 1, 1))])
    sysm = _build_system(parsed, errors)
    if sysm is None:
        raise ParseFailure(errors)
    return sysm


def try_parse(text: str):
    """Like parse() but returns (system_or_None, errors)."""
    try:
        return parse(text), []
    except ParseFailure as f:
        return None, f.errors


def parse_file(path) -> System:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


# ---------------------------------------------------------------------------
# Serializer

def serialize(sys: System) -> str:
    """Canonical text for a system: sorted identifiers, two-space indent."""
    out: list[str] = [f"system {sys.name} {{"]
    out.append(f"  delay {sys.delay.value};")
    if sys.topology.messages:
        out.append("  msgs { " + ", ".join(sorted(sys.topology.messages)) + " };")
    acc = sys.acceptance
    if acc != Acceptance():
        flags = [name for name, on in (
            ("empty_channels", acc.require_empty_channels),
            ("zero_counters", acc.require_zero_counters),
            ("zero_clocks", acc.require_zero_clocks)) if on]
        out.append("  accept { " + ", ".join(flags) + " };")
    for p in sorted(sys.automata):
        aut = sys.automata[p]
        out.append(f"  process {p} {{")
        out.append("    init " + ", ".join(sorted(aut.initial)) + ";")
        if aut.final:
            out.append("    final " + ", ".join(sorted(aut.final)) + ";")
        if isinstance(aut, TimedAutomaton) and aut.clocks:
            out.append("    clocks { " + ", ".join(sorted(aut.clocks)) + " };")
        if isinstance(aut, CounterAutomaton) and aut.counters:
            out.append("    counters { " + ", ".join(sorted(aut.counters)) + " };")
        if isinstance(aut, TimedAutomaton):
            for r in aut.rules:
                line = f"    {r.src} -> {r.dst} : {format_action(r.action)}"
                if r.guard:
                    line += " when " + format_guard(r.guard)
                if r.resets:
                    line += " reset {" + ", ".join(sorted(r.resets)) + "}"
                out.append(line + ";")
        else:
            for t in aut.transitions:
                out.append(f"    {t.src} -> {t.dst} : {format_action(t.action)};")
        out.append("  }")
    for c in sys.topology.channels:
        flag = " testable" if c.id in sys.topology.testable else ""
        out.append(f"  channel {c.id} : {c.source} -> {c.target}{flag};")
    out.append("}")
    return "\n".join(out) + "\n"

"""First-order formulas over relational vocabularies: AST, text grammar,
quantifier depth, and brute-force Tarski evaluation.

Grammar (EBNF):

    formula := quant | impl
    quant   := ("E"|"A") var "." formula
    impl    := or ("->" impl)?
    or      := and ("|" and)*
    and     := neg ("&" neg)*
    neg     := "~" neg | atom | "(" formula ")"
    atom    := pred "(" var ("," var)* ")" | term ("<"|"="|"<=") term
    var     := "x" digits
    term    := var | digits

Precedence: ~ binds tighter than &, then |, then ->; -> associates to the
right, & and | to the left.  "a <= b" is sugar for "~(b < a)".  A bare
number used as a term denotes the element with that position in the
designated order (an extension to the core grammar; numbers never occur
in generated formulas, only in the gap-sentence family).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .structures import Structure, Vocabulary


class ParseError(ValueError):
    """Syntax error with position information."""

    def __init__(self, message: str, pos: int):
        super().__init__("%s (at position %d)" % (message, pos))
        self.pos = pos


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Formula:
    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class Rel(Formula):
    name: str
    args: tuple[int, ...]


@dataclass(frozen=True)
class Eq(Formula):
    left: int
    right: int


@dataclass(frozen=True)
class Less(Formula):
    # Operands are variable indices, or Const for order-position literals.
    left: "int | Const"
    right: "int | Const"


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula


@dataclass(frozen=True)
class And(Formula):
    subs: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    subs: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: int
    sub: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: int
    sub: Formula


def depth(f: Formula) -> int:
    """Quantifier depth: 0 for atoms, max over children for connectives,
    child depth plus one for quantifiers."""
    if isinstance(f, (Rel, Eq, Less)):
        return 0
    if isinstance(f, Not):
        return depth(f.sub)
    if isinstance(f, (And, Or)):
        return max((depth(s) for s in f.subs), default=0)
    if isinstance(f, Implies):
        return max(depth(f.left), depth(f.right))
    if isinstance(f, (Exists, Forall)):
        return depth(f.sub) + 1
    raise TypeError("not a formula: %r" % (f,))


def free_vars(f: Formula) -> frozenset[int]:
    if isinstance(f, Rel):
        return frozenset(f.args)
    if isinstance(f, Eq):
        return frozenset((f.left, f.right))
    if isinstance(f, Less):
        return frozenset(x for x in (f.left, f.right) if not isinstance(x, Const))
    if isinstance(f, Not):
        return free_vars(f.sub)
    if isinstance(f, (And, Or)):
        out: frozenset[int] = frozenset()
        for s in f.subs:
            out |= free_vars(s)
        return out
    if isinstance(f, Implies):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.sub) - {f.var}
    raise TypeError("not a formula: %r" % (f,))


def is_sentence(f: Formula) -> bool:
    return not free_vars(f)


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(r"\s*(->|<=|[()<=~&|.,]|[A-Za-z_][A-Za-z_0-9]*|\d+)")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError("unexpected character %r" % text[pos], pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, vocab: Vocabulary):
        self.tokens = _tokenize(text)
        self.vocab = vocab
        self.i = 0
        self.end = len(text)

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def pos(self) -> int:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else self.end

    def take(self, expected: str | None = None) -> str:
        if self.i >= len(self.tokens):
            raise ParseError("unexpected end of input", self.end)
        tok, pos = self.tokens[self.i]
        if expected is not None and tok != expected:
            raise ParseError("expected %r, found %r" % (expected, tok), pos)
        self.i += 1
        return tok

    def parse(self) -> Formula:
        f = self.formula()
        if self.i < len(self.tokens):
            raise ParseError("trailing input %r" % self.peek(), self.pos())
        return f

    def formula(self) -> Formula:
        tok = self.peek()
        if tok in ("E", "A"):
            return self.quant()
        return self.impl()

    def quant(self) -> Formula:
        kind = self.take()
        v = self.variable()
        self.take(".")
        body = self.formula()
        return Exists(v, body) if kind == "E" else Forall(v, body)

    def impl(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.impl())
        return left

    def disj(self) -> Formula:
        parts = [self.conj()]
        while self.peek() == "|":
            self.take()
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conj(self) -> Formula:
        parts = [self.neg()]
        while self.peek() == "&":
            self.take()
            parts.append(self.neg())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def neg(self) -> Formula:
        tok = self.peek()
        if tok == "~":
            self.take()
            return Not(self.neg())
        if tok == "(":
            self.take()
            f = self.formula()
            self.take(")")
            return f
        return self.atom()

    def atom(self) -> Formula:
        pos = self.pos()
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.end)
        if re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", tok) and not re.fullmatch(r"x\d+", tok):
            name = self.take()
            if not self.vocab.has_symbol(name):
                raise ParseError("unknown predicate %r" % name, pos)
            self.take("(")
            args = [self.variable()]
            while self.peek() == ",":
                self.take()
                args.append(self.variable())
            self.take(")")
            if len(args) != self.vocab.arity(name):
                raise ParseError("predicate %s expects %d arguments, got %d"
                                 % (name, self.vocab.arity(name), len(args)), pos)
            return Rel(name, tuple(args))
        left = self.term()
        op = self.take()
        if op not in ("<", "=", "<="):
            raise ParseError("expected comparison operator, found %r" % op, pos)
        right = self.term()
        if op == "=":
            if isinstance(left, Const) or isinstance(right, Const):
                raise ParseError("equality with a position literal is not supported", pos)
            return Eq(left, right)
        if op == "<":
            return Less(left, right)
        return Not(Less(right, left))

    def term(self) -> "int | Const":
        tok = self.peek()
        if tok is not None and tok.isdigit():
            return Const(int(self.take()))
        return self.variable()

    def variable(self) -> int:
        pos = self.pos()
        tok = self.take()
        m = re.fullmatch(r"x(\d+)", tok)
        if not m:
            raise ParseError("expected variable, found %r" % tok, pos)
        return int(m.group(1))


def parse(text: str, vocab: Vocabulary) -> Formula:
    return _Parser(text, vocab).parse()


# ---------------------------------------------------------------------------
# Pretty printer (inverse of parse on ASTs)

def _term_str(t) -> str:
    return str(t.value) if isinstance(t, Const) else "x%d" % t


def _pp(f: Formula, level: int) -> str:
    # levels: 0 formula (quant allowed), 1 impl, 2 or, 3 and, 4 neg/atom
    if isinstance(f, (Exists, Forall)):
        body = "%s x%d. %s" % ("E" if isinstance(f, Exists) else "A", f.var,
                               _pp(f.sub, 0))
        return body if level == 0 else "(%s)" % body
    if isinstance(f, Implies):
        body = "%s -> %s" % (_pp(f.left, 2), _pp(f.right, 1))
        return body if level <= 1 else "(%s)" % body
    if isinstance(f, Or):
        body = " | ".join(_pp(s, 3) for s in f.subs)
        return body if level <= 2 else "(%s)" % body
    if isinstance(f, And):
        body = " & ".join(_pp(s, 4) for s in f.subs)
        return body if level <= 3 else "(%s)" % body
    if isinstance(f, Not):
        return "~%s" % _pp(f.sub, 4)
    if isinstance(f, Rel):
        return "%s(%s)" % (f.name, ",".join("x%d" % a for a in f.args))
    if isinstance(f, Eq):
        return "x%d = x%d" % (f.left, f.right)
    if isinstance(f, Less):
        return "%s < %s" % (_term_str(f.left), _term_str(f.right))
    raise TypeError("not a formula: %r" % (f,))


def pretty(f: Formula) -> str:
    return _pp(f, 0)


# ---------------------------------------------------------------------------
# Evaluation

def eval_formula(m: Structure, f: Formula,
                 assignment: Mapping[int, int] | None = None) -> bool:
    """Tarski satisfaction on a plain structure; quantifiers range over 0..n-1."""
    env = dict(assignment or {})
    missing = free_vars(f) - env.keys()
    if missing:
        raise EvalError("unassigned free variables: %s"
                        % ", ".join("x%d" % v for v in sorted(missing)))
    return _eval(m, f, env)


def _resolve(env, t) -> int:
    return t.value if isinstance(t, Const) else env[t]


def _eval(m: Structure, f: Formula, env: dict[int, int]) -> bool:
    if isinstance(f, Rel):
        return m.holds(f.name, tuple(env[a] for a in f.args))
    if isinstance(f, Eq):
        return env[f.left] == env[f.right]
    if isinstance(f, Less):
        a, b = _resolve(env, f.left), _resolve(env, f.right)
        return a < b
    if isinstance(f, Not):
        return not _eval(m, f.sub, env)
    if isinstance(f, And):
        return all(_eval(m, s, env) for s in f.subs)
    if isinstance(f, Or):
        return any(_eval(m, s, env) for s in f.subs)
    if isinstance(f, Implies):
        return (not _eval(m, f.left, env)) or _eval(m, f.right, env)
    if isinstance(f, (Exists, Forall)):
        old = env.get(f.var)
        hit = False
        want = isinstance(f, Exists)
        for c in range(m.n):
            env[f.var] = c
            if _eval(m, f.sub, env) == want:
                hit = True
                break
        if old is None:
            env.pop(f.var, None)
        else:
            env[f.var] = old
        return hit if want else not hit
    raise TypeError("not a formula: %r" % (f,))


# ---------------------------------------------------------------------------
# Built-in sentences

# "Some point splits the order with no graph edge from strictly below it to
# at-or-above it" -- trivially witnessed by the minimum, so true on every
# nonempty graph-with-order.
PSI0_TEXT = "E x0. A x1. A x2. ((x1<x0 & ~(x2<x0)) -> ~R(x1,x2))"

TRUE_TEXT = "A x0. x0 = x0"       # holds in every structure, the empty one included
FALSE_TEXT = "E x0. ~(x0 = x0)"   # fails in every structure


def builtin_sentences(vocab: Vocabulary | None = None) -> dict[str, Formula]:
    from .structures import GRAPH_ORDER
    vb = vocab or GRAPH_ORDER
    out = {"true": parse(TRUE_TEXT, vb), "false": parse(FALSE_TEXT, vb)}
    if vb.has_symbol("R"):
        out["psi0"] = parse(PSI0_TEXT, vb)
    return out


def gap_sentence(cutpoints: list[int], vocab: Vocabulary | None = None) -> Formula:
    """Disjunction over consecutive cutpoints (m_i, m_{i+1}) of "some edge
    runs from at-or-below m_i to at-or-above m_{i+1}".  Position literals
    keep the quantifier depth at 2.  The empty family is the false sentence."""
    from .structures import GRAPH_ORDER
    vb = vocab or GRAPH_ORDER
    if len(cutpoints) < 2:
        return parse(FALSE_TEXT, vb)
    parts = []
    for lo, hi in zip(cutpoints, cutpoints[1:]):
        parts.append(Exists(0, Exists(1, And((
            Not(Less(Const(lo), 0)),
            Not(Less(1, Const(hi))),
            Rel("R", (0, 1)),
        )))))
    return parts[0] if len(parts) == 1 else Or(tuple(parts))

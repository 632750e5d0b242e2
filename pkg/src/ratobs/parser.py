"""The system-definition DSL: parsing into :class:`RationalSystem` and back.

Grammar::

    system := "system" IDENT "{" decl* "}"
    decl   := "params" (IDENT ("=" RATIONAL)?)+ ";"
            | "states" (IDENT "=" RATIONAL)+ ";"
            | "d" IDENT "=" expr ";"          (also written dIDENT)
            | "output" IDENT "=" expr ";"
            | "assume" expr "!=" "0" ";"
    expr   := sums/differences of products/quotients of powers of atoms;
              atoms are rationals, identifiers and parenthesised exprs;
              ``^`` takes a nonnegative integer exponent.

``#`` starts a line comment.  Parameters bound with ``=`` are substituted
into the equations at parse time; unbound parameters stay symbolic.
"""

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import RationalFunction, VarTable, poly_text, rf_text, to_q
from .errors import (DenominatorZeroAtX0, DimensionMismatch, DSLSyntaxError,
                     UndefinedSymbol)

KEYWORDS = {"system", "params", "states", "output", "assume"}


@dataclass
class RationalSystem:
    """A rational (or polynomial) system ``dx/dt = f(x), y = h(x), x(0) = x0``.

    ``vt`` holds parameters (role ``parameter``) then states (role
    ``state``), so rendered monomials read ``a12*x2``.  ``params`` maps every declared parameter name to its
    binding or ``None``; bound values are already substituted into ``f``,
    ``h`` and ``assumptions``.
    """

    name: str
    vt: VarTable
    state_names: list
    f: list
    h: list
    output_names: list
    x0: list
    params: dict = field(default_factory=dict)
    assumptions: list = field(default_factory=list)

    def __post_init__(self):
        if not self.state_names:
            raise DimensionMismatch("a system needs at least one state")
        if not self.h:
            raise DimensionMismatch("a system needs at least one output")
        if len(self.f) != len(self.state_names) or len(self.x0) != len(self.state_names):
            raise DimensionMismatch("dynamics, initial state and states differ in length")

    @property
    def n(self):
        return len(self.state_names)

    @property
    def m_y(self):
        return len(self.h)

    @property
    def kind(self):
        states = set(self.state_vars)
        if all(not (g.den.variables() & states) for g in self.f + self.h):
            return "polynomial"
        return "rational"

    @property
    def state_vars(self):
        return [self.vt.index(s) for s in self.state_names]

    @property
    def free_params(self):
        return [p for p, v in self.params.items() if v is None]

    @property
    def param_vars(self):
        return [self.vt.index(p) for p in self.free_params]

    def bind(self, values):
        """A copy with additional parameters bound to exact rationals."""
        values = {k: to_q(v) for k, v in values.items()}
        unknown = set(values) - set(self.params)
        if unknown:
            raise UndefinedSymbol(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        sub = {self.vt.index(k): v for k, v in values.items() if self.params[k] is None}
        params = dict(self.params)
        params.update({k: v for k, v in values.items() if self.params[k] is None})
        assumptions = []
        for a in self.assumptions:
            b = a.partial_eval(sub)
            if b.is_constant():
                if b.is_zero():
                    raise DenominatorZeroAtX0(
                        f"binding violates assumption {poly_text(a)} != 0")
                continue
            assumptions.append(b)
        return RationalSystem(
            self.name, self.vt, list(self.state_names),
            [g.partial_eval(sub) for g in self.f],
            [g.partial_eval(sub) for g in self.h],
            list(self.output_names), list(self.x0), params, assumptions)

    def x0_point(self):
        return {i: v for i, v in zip(self.state_vars, self.x0)}

    def render(self):
        return render(self)

    def same_as(self, other):
        """Structural equality, independent of the variable table object."""
        return render(self) == render(other)


# -- lexer -------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<neq>!=)
  | (?P<op>[-+*/^(){};=])
""", re.VERBOSE)

_UNICODE = {"−": "-", "·": "*", "≠": "!=", "×": "*"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text):
    for u, a in _UNICODE.items():
        text = text.replace(u, a)
    pos, line, line_start = 0, 1, 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}",
                                 line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# -- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        self.i = min(self.i + 1, len(self.toks) - 1)
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        shown = tok.text if tok.kind != "eof" else "end of input"
        return DSLSyntaxError(f"{msg}, found {shown!r}", tok.line, tok.col)

    def expect(self, text):
        t = self.peek()
        if t.text != text or t.kind == "eof":
            raise self.error(f"expected {text!r}")
        return self.next()

    def ident(self):
        t = self.peek()
        if t.kind != "ident":
            raise self.error("expected an identifier")
        return self.next()

    def rational(self):
        sign = 1
        if self.peek().text in "+-" and self.peek().kind == "op":
            sign = -1 if self.next().text == "-" else 1
        t = self.peek()
        if t.kind != "num":
            raise self.error("expected a rational number")
        self.next()
        value = Fraction(t.text)
        if self.peek().text == "/" and self.peek(1).kind == "num":
            self.next()
            d = self.next()
            if Fraction(d.text) == 0:
                raise DSLSyntaxError("zero denominator in rational literal", d.line, d.col)
            value /= Fraction(d.text)
        return to_q(sign * value)

    # expressions produce small ASTs resolved after all declarations are read
    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next()
            node = (op.text, node, self.term(), op)
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next()
            node = (op.text, node, self.unary(), op)
        return node

    def unary(self):
        t = self.peek()
        if t.kind == "op" and t.text in "+-":
            self.next()
            inner = self.unary()
            return ("neg", inner, t) if t.text == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text == "^" and self.peek().kind == "op":
            op = self.next()
            t = self.peek()
            if t.kind != "num" or "." in t.text or int(t.text) == 0:
                raise self.error("expected a positive integer exponent")
            self.next()
            return ("^", base, int(t.text), op)
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.next()
            return ("num", to_q(Fraction(t.text)), t)
        if t.kind == "ident":
            self.next()
            return ("id", t.text, t)
        if t.text == "(" and t.kind == "op":
            self.next()
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected a number, identifier or '('")

    def system(self):
        t = self.peek()
        if t.text != "system" or t.kind != "ident":
            raise self.error("expected 'system'")
        self.next()
        name = self.ident().text
        self.expect("{")
        decls = []
        while not (self.peek().text == "}" and self.peek().kind == "op"):
            if self.peek().kind == "eof":
                raise self.error("expected '}'")
            decls.append(self.decl())
        self.expect("}")
        if self.peek().kind != "eof":
            raise self.error("unexpected text after system block")
        return name, decls

    def decl(self):
        t = self.peek()
        if t.kind != "ident":
            raise self.error("expected a declaration")
        if t.text == "params":
            self.next()
            items = []
            while self.peek().kind == "ident":
                pt = self.next()
                val = None
                if self.peek().text == "=":
                    self.next()
                    val = self.rational()
                items.append((pt, val))
            if not items:
                raise self.error("expected a parameter name")
            self.expect(";")
            return ("params", items, t)
        if t.text == "states":
            self.next()
            items = []
            while self.peek().kind == "ident":
                st = self.next()
                self.expect("=")
                items.append((st, self.rational()))
            if not items:
                raise self.error("expected a state name")
            self.expect(";")
            return ("states", items, t)
        if t.text == "output":
            self.next()
            name = self.ident()
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return ("output", name, e, t)
        if t.text == "assume":
            self.next()
            e = self.expr()
            if self.peek().kind != "neq":
                raise self.error("expected '!='")
            self.next()
            z = self.peek()
            if z.text != "0":
                raise self.error("expected '0'")
            self.next()
            self.expect(";")
            return ("assume", e, t)
        if t.text == "d" and self.peek(1).kind == "ident":
            self.next()
            target = self.next()
        elif t.text.startswith("d") and len(t.text) > 1:
            self.next()
            target = Token("ident", t.text[1:], t.line, t.col + 1)
        else:
            raise self.error("expected a declaration")
        self.expect("=")
        e = self.expr()
        self.expect(";")
        return ("d", target, e, t)


def _resolve(node, vt, bound, any_role=False):
    kind = node[0]
    if kind == "num":
        return RationalFunction.const(vt, node[1])
    if kind == "id":
        name, tok = node[1], node[2]
        if name in bound:
            return RationalFunction.const(vt, bound[name])
        if name not in vt:
            raise UndefinedSymbol(f"undefined symbol {name!r}", tok.line, tok.col)
        i = vt.index(name)
        if not any_role and vt.role(i) not in ("state", "parameter"):
            raise UndefinedSymbol(f"{name!r} is not a state or parameter",
                                  tok.line, tok.col)
        return RationalFunction.var(vt, i)
    if kind == "neg":
        return -_resolve(node[1], vt, bound, any_role)
    if kind == "^":
        return _resolve(node[1], vt, bound, any_role) ** node[2]
    a = _resolve(node[1], vt, bound, any_role)
    b = _resolve(node[2], vt, bound, any_role)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if b.is_zero():
        tok = node[3]
        raise DSLSyntaxError("division by zero", tok.line, tok.col)
    return a / b


def parse_expr(text, vt):
    """Parse a lone expression over the variables already in ``vt``."""
    p = _Parser(text)
    node = p.expr()
    if p.peek().kind != "eof":
        raise p.error("unexpected trailing input")
    return _resolve(node, vt, {}, any_role=True)


def parse(text):
    """Parse DSL source into a :class:`RationalSystem`.

    Raises DSLSyntaxError, UndefinedSymbol, DimensionMismatch or
    DenominatorZeroAtX0, each carrying a line/column position.
    """
    p = _Parser(text)
    name, decls = p.system()

    vt = VarTable()
    state_names, x0 = [], []
    params = {}
    seen = {}

    def declare(tok, what):
        if tok.text in KEYWORDS:
            raise DSLSyntaxError(f"{tok.text!r} is reserved", tok.line, tok.col)
        if tok.text in seen:
            raise DSLSyntaxError(f"{tok.text!r} already declared as {seen[tok.text]}",
                                 tok.line, tok.col)
        seen[tok.text] = what

    for d in decls:
        if d[0] == "params":
            for tok, val in d[1]:
                declare(tok, "parameter")
                params[tok.text] = val
                vt.add(tok.text, "parameter")
    for d in decls:
        if d[0] == "states":
            for tok, val in d[1]:
                declare(tok, "state")
                state_names.append(tok.text)
                x0.append(val)
                vt.add(tok.text, "state")
    if not state_names:
        raise DimensionMismatch("no states declared", p.toks[0].line, p.toks[0].col)
    bound = {k: v for k, v in params.items() if v is not None}

    f = {}
    h, output_names, assumptions = [], [], []
    for d in decls:
        if d[0] == "d":
            tok = d[1]
            if tok.text not in state_names:
                raise UndefinedSymbol(f"derivative of undeclared state {tok.text!r}",
                                      tok.line, tok.col)
            if tok.text in f:
                raise DSLSyntaxError(f"duplicate equation for {tok.text!r}",
                                     tok.line, tok.col)
            f[tok.text] = _resolve(d[2], vt, bound)
        elif d[0] == "output":
            tok = d[1]
            declare(tok, "output")
            output_names.append(tok.text)
            h.append(_resolve(d[2], vt, bound))
        elif d[0] == "assume":
            a = _resolve(d[1], vt, bound)
            tok = d[2]
            if a.is_zero():
                raise DenominatorZeroAtX0("assumption is identically zero",
                                          tok.line, tok.col)
            if not a.is_constant():
                assumptions.append(a.num.monic())
    missing = [s for s in state_names if s not in f]
    if missing:
        raise DimensionMismatch(f"no equation for state(s) {', '.join(missing)}",
                                p.toks[0].line, p.toks[0].col)
    if not h:
        raise DimensionMismatch("no output declared", p.toks[0].line, p.toks[0].col)

    sys = RationalSystem(name, vt, state_names, [f[s] for s in state_names], h,
                         output_names, x0, params, assumptions)
    _check_defined_at_x0(sys)
    return sys


def _check_defined_at_x0(sys):
    point = sys.x0_point()
    for label, g in zip(
            [f"d{s}" for s in sys.state_names] + sys.output_names, sys.f + sys.h):
        den = g.den.partial_eval(point)
        if den.is_zero():
            raise DenominatorZeroAtX0(f"{label}: denominator vanishes at x0")


def parse_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def render(sys):
    """Render a system back to DSL source; ``parse(render(s))`` equals ``s``."""
    lines = [f"system {sys.name} {{"]
    if sys.params:
        items = [k if v is None else f"{k} = {v}" for k, v in sys.params.items()]
        lines.append(f"  params {' '.join(items)};")
    states = " ".join(f"{s} = {v}" for s, v in zip(sys.state_names, sys.x0))
    lines.append(f"  states {states};")
    for s, g in zip(sys.state_names, sys.f):
        lines.append(f"  d{s} = {rf_text(g)};")
    for y, g in zip(sys.output_names, sys.h):
        lines.append(f"  output {y} = {rf_text(g)};")
    for a in sys.assumptions:
        lines.append(f"  assume {poly_text(a)} != 0;")
    lines.append("}")
    return "\n".join(lines) + "\n"

"""Lexical and structural analysis of Dafny source text.

The parser is deliberately shallow: it tokenizes far enough to never be
confused by comments, strings, or nested braces, and recovers method /
function / lemma / constructor declarations with their signatures, spec
clauses, and body extents as exact character spans. It does not build a
typed AST and it never raises on arbitrary input; regions it cannot make
sense of are simply not covered by any unit.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace

from .errors import UnknownUnit

# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | frozenset("0123456789'?")
_DIGITS = frozenset("0123456789")
_WS = frozenset(" \t\r\n\f\v")

# longest first so maximal munch works with a linear scan
_MULTI_OPS = (
    "<==>", "==>", "<==", "!in", ":=", "::", "==", "!=", "<=", ">=",
    "&&", "||", "..", "=>", "->", "~>",
)


@dataclass(frozen=True)
class Token:
    kind: str  # "id" | "num" | "str" | "op"
    text: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Lex Dafny source into significant tokens.

    Comments and whitespace are dropped; block comments nest; string,
    verbatim-string, and character literals are single tokens. A single
    quote directly continuing an identifier (x') stays in the identifier.
    """
    toks: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in _WS:
            i += 1
            continue
        if c == "/" and i + 1 < n:
            if text[i + 1] == "/":
                j = text.find("\n", i)
                i = n if j < 0 else j + 1
                continue
            if text[i + 1] == "*":
                depth, j = 1, i + 2
                while j < n and depth:
                    if text.startswith("/*", j):
                        depth, j = depth + 1, j + 2
                    elif text.startswith("*/", j):
                        depth, j = depth - 1, j + 2
                    else:
                        j += 1
                i = j
                continue
        if c == '"' or (c == "@" and i + 1 < n and text[i + 1] == '"'):
            start = i
            if c == "@":  # verbatim: "" escapes a quote
                j = i + 2
                while j < n:
                    if text[j] == '"':
                        if j + 1 < n and text[j + 1] == '"':
                            j += 2
                            continue
                        j += 1
                        break
                    j += 1
            else:
                j = i + 1
                while j < n:
                    if text[j] == "\\" and j + 1 < n:
                        j += 2
                        continue
                    if text[j] == '"':
                        j += 1
                        break
                    if text[j] == "\n":  # unterminated; stop at line end
                        break
                    j += 1
            toks.append(Token("str", text[start:j], start, j))
            i = j
            continue
        if c == "'":
            j = _scan_char_literal(text, i)
            if j > 0:
                toks.append(Token("str", text[i:j], i, j))
                i = j
            else:
                toks.append(Token("op", c, i, i + 1))
                i += 1
            continue
        if c in _IDENT_START:
            j = i + 1
            while j < n and text[j] in _IDENT_CONT:
                j += 1
            toks.append(Token("id", text[i:j], i, j))
            i = j
            continue
        if c in _DIGITS:
            j = i + 1
            if c == "0" and j < n and text[j] in "xX":
                j += 1
                while j < n and (text[j] in "0123456789abcdefABCDEF_"):
                    j += 1
            else:
                while j < n and (text[j] in _DIGITS or text[j] == "_"):
                    j += 1
                if j < n and text[j] == "." and j + 1 < n and text[j + 1] in _DIGITS:
                    j += 1
                    while j < n and (text[j] in _DIGITS or text[j] == "_"):
                        j += 1
            toks.append(Token("num", text[i:j], i, j))
            i = j
            continue
        matched = False
        for op in _MULTI_OPS:
            if text.startswith(op, i):
                if op == "!in" and i + 3 < n and text[i + 3] in _IDENT_CONT:
                    continue  # "!inx" is ! followed by identifier
                toks.append(Token("op", op, i, i + len(op)))
                i += len(op)
                matched = True
                break
        if not matched:
            toks.append(Token("op", c, i, i + 1))
            i += 1
    return toks


def _scan_char_literal(text: str, i: int) -> int:
    """Return end index of a char literal starting at i, or -1."""
    n = len(text)
    j = i + 1
    if j >= n:
        return -1
    if text[j] == "\\":
        j += 1
        if j >= n:
            return -1
        esc = text[j]
        j += 1
        if esc in "uU":
            if j < n and text[j] == "{":
                k = text.find("}", j)
                if k < 0:
                    return -1
                j = k + 1
            else:
                k = j
                while k < n and k < j + 4 and text[k] in "0123456789abcdefABCDEF":
                    k += 1
                j = k
    elif text[j] in "'\n":
        return -1
    else:
        j += 1
    if j < n and text[j] == "'":
        return j + 1
    return -1


def iter_identifiers(text: str):
    """Yield every identifier token in the text (strings/comments excluded)."""
    for tok in tokenize(text):
        if tok.kind == "id":
            yield tok.text


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

CLAUSE_KINDS = ("requires", "ensures", "invariant", "decreases", "modifies", "reads")

_UNIT_KEYWORDS = {
    "method": "method",
    "constructor": "constructor",
    "lemma": "lemma",
    "colemma": "lemma",
    "function": "function",
    "predicate": "function",
    "copredicate": "function",
}
_MODIFIERS = {"ghost", "static", "abstract", "opaque", "twostate", "least", "greatest"}
_SCOPE_KEYWORDS = {"class", "module", "trait"}
# keywords that cannot occur inside a spec expression and therefore end a
# clause list when a declaration has no body
_DECL_STOP = (
    set(_UNIT_KEYWORDS)
    | _SCOPE_KEYWORDS
    | {"datatype", "codatatype", "newtype", "const", "import", "export",
       "include", "iterator"}
)

# a '{' directly after one of these continues an expression (set/map display)
# rather than opening a body
_EXPR_CONTINUE = {
    "+", "-", "*", "/", "%", "==", "!=", "<", ">", "<=", ">=", "==>", "<==",
    "<==>", "&&", "||", "!", "!in", "in", ",", "(", "[", "::", ":=", "=>",
    ".", ":", "|", "then", "else", "case",
}

_HEAP_TOKEN_RE = re.compile(r"\b(old|fresh|unchanged|allocated)\b")


@dataclass(frozen=True)
class SpecClause:
    """One requires/ensures/invariant/decreases/modifies/reads clause."""

    kind: str
    expr_text: str
    span: tuple[int, int] = (0, 0)  # full clause incl. keyword, char offsets
    attached_loop: int | None = None  # loop index for in-body clauses

    def __post_init__(self):
        if self.kind not in CLAUSE_KINDS:
            raise ValueError(f"unknown clause kind: {self.kind}")

    def render(self) -> str:
        return f"{self.kind} {self.expr_text}"


@dataclass(frozen=True)
class MethodUnit:
    """One method/function/lemma/constructor with exact source spans."""

    name: str
    kind: str  # method | function | lemma | constructor
    qualified_name: str
    span: tuple[int, int]
    signature_span: tuple[int, int]
    params: tuple[tuple[str, str], ...]
    returns: tuple[tuple[str, str], ...]
    spec_clauses: tuple[SpecClause, ...]
    body_span: tuple[int, int] | None
    type_params_text: str = ""

    @property
    def method_spec_clauses(self) -> tuple[SpecClause, ...]:
        return tuple(c for c in self.spec_clauses if c.attached_loop is None)

    def clauses_of(self, kind: str) -> list[str]:
        return [c.expr_text for c in self.method_spec_clauses if c.kind == kind]


@dataclass(frozen=True)
class ClauseSet:
    """Preconditions and postconditions of one method, conjunction semantics.

    An empty list stands for the predicate ``true``.
    """

    pre: tuple[str, ...] = ()
    post: tuple[str, ...] = ()
    heap_dependent: bool = False

    @staticmethod
    def conjoin(exprs) -> str:
        exprs = [e for e in exprs if e.strip()]
        if not exprs:
            return "true"
        if len(exprs) == 1:
            return exprs[0]
        return " && ".join(f"({e})" for e in exprs)

    def pre_predicate(self) -> str:
        return self.conjoin(self.pre)

    def post_predicate(self) -> str:
        return self.conjoin(self.post)


@dataclass(frozen=True)
class SourceFile:
    """A parsed Dafny file: raw text plus ordered, disjoint unit spans."""

    path_or_id: str
    text: str
    units: tuple[MethodUnit, ...]
    content_hash: str

    def serialize(self) -> str:
        """Reassemble the text from unit spans and the gaps between them."""
        pieces, pos = [], 0
        for u in self.units:
            pieces.append(self.text[pos:u.span[0]])
            pieces.append(self.text[u.span[0]:u.span[1]])
            pos = u.span[1]
        pieces.append(self.text[pos:])
        return "".join(pieces)

    def find_unit(self, name: str) -> MethodUnit:
        matches = [u for u in self.units if u.qualified_name == name]
        if not matches:
            matches = [u for u in self.units if u.name == name]
        if not matches:
            raise UnknownUnit(f"no method/function/lemma named {name!r}")
        return matches[0]

    def unit_names(self) -> list[str]:
        return [u.qualified_name for u in self.units]


def normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def content_hash(text: str) -> str:
    return hashlib.sha256(normalize_newlines(text).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def parse(text: str, path_or_id: str = "<memory>") -> SourceFile:
    """Structurally parse Dafny source. Never raises on malformed input."""
    try:
        units = _parse_units(text)
    except Exception:
        units = []
    return SourceFile(
        path_or_id=path_or_id,
        text=text,
        units=tuple(units),
        content_hash=content_hash(text),
    )


def _parse_units(text: str) -> list[MethodUnit]:
    toks = tokenize(text)
    units: list[MethodUnit] = []
    scopes: list[tuple[str, int]] = []  # (name, depth at open)
    depth = 0
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == "id":
            j = _skip_modifiers_and_attrs(toks, i)
            if j < len(toks) and toks[j].kind == "id" and toks[j].text in _UNIT_KEYWORDS:
                parsed = _parse_one_unit(text, toks, i, j, scopes)
                if parsed is not None:
                    unit, nxt = parsed
                    units.append(unit)
                    i = nxt
                    continue
            if t.text in _SCOPE_KEYWORDS:
                nxt = _enter_scope(toks, i, scopes, depth)
                if nxt is not None:
                    depth += 1
                    i = nxt
                    continue
        if t.text == "{":
            depth += 1
        elif t.text == "}":
            depth -= 1
            if scopes and depth == scopes[-1][1]:
                scopes.pop()
        i += 1
    return units


def _skip_modifiers_and_attrs(toks: list[Token], i: int) -> int:
    while i < len(toks):
        t = toks[i]
        if t.kind == "id" and t.text in _MODIFIERS:
            i += 1
            continue
        if t.text == "{" and i + 1 < len(toks) and toks[i + 1].text == ":":
            i = _skip_balanced(toks, i)
            continue
        break
    return i


def _skip_balanced(toks: list[Token], i: int) -> int:
    """Given toks[i] an opening bracket, return index just past its match."""
    opener = toks[i].text
    closer = {"(": ")", "[": "]", "{": "}"}[opener]
    level = 0
    while i < len(toks):
        if toks[i].text == opener:
            level += 1
        elif toks[i].text == closer:
            level -= 1
            if level == 0:
                return i + 1
        i += 1
    return i


def _enter_scope(toks, i, scopes, depth):
    """Consume 'class/module/trait [attrs] Name ... {' and push the scope."""
    j = i + 1
    name = ""
    while j < len(toks) and j < i + 40:  # a header is short
        t = toks[j]
        if t.text == "{" and j + 1 < len(toks) and toks[j + 1].text == ":":
            j = _skip_balanced(toks, j)
            continue
        if t.kind == "id" and not name and t.text not in _DECL_STOP:
            name = t.text
            j += 1
            continue
        if t.text == "{":
            scopes.append((name, depth))
            return j + 1
        if t.text in (";", "=") or (t.kind == "id" and t.text in _DECL_STOP):
            return None  # e.g. "import module X" or abstract module alias
        j += 1
    return None


def _parse_one_unit(text, toks, start_idx, kw_idx, scopes):
    try:
        return _parse_unit_inner(text, toks, start_idx, kw_idx, scopes)
    except Exception:
        return None


def _parse_unit_inner(text, toks, start_idx, kw_idx, scopes):
    n = len(toks)
    kw = toks[kw_idx].text
    kind = _UNIT_KEYWORDS[kw]
    i = kw_idx + 1
    # Dafny 3 compound forms: "function method", "predicate method"
    if kw in ("function", "predicate") and i < n and toks[i].text == "method":
        i += 1
    # attributes after the keyword
    while i < n and toks[i].text == "{" and i + 1 < n and toks[i + 1].text == ":":
        i = _skip_balanced(toks, i)

    name = ""
    if i < n and toks[i].kind == "id" and toks[i].text not in _DECL_STOP:
        name = toks[i].text
        i += 1
    if not name:
        if kind != "constructor":
            return None
        name = "constructor"

    type_params_text = ""
    if i < n and toks[i].text == "<":
        tp_start = toks[i].start
        level = 0
        while i < n:
            if toks[i].text == "<":
                level += 1
            elif toks[i].text == ">":
                level -= 1
                if level == 0:
                    type_params_text = text[tp_start:toks[i].end]
                    i += 1
                    break
            i += 1
        else:
            return None

    params: list[tuple[str, str]] = []
    if i < n and toks[i].text == "(":
        end = _skip_balanced(toks, i)
        params = _parse_param_list(toks[i + 1:end - 1])
        i = end
    elif kind in ("method", "constructor", "lemma"):
        return None  # signature requires a parameter list

    returns: list[tuple[str, str]] = []
    sig_end = toks[i - 1].end if i > 0 else toks[kw_idx].end
    if kind in ("method", "constructor", "lemma"):
        if i < n and toks[i].kind == "id" and toks[i].text == "returns":
            i += 1
            if i < n and toks[i].text == "(":
                end = _skip_balanced(toks, i)
                returns = _parse_param_list(toks[i + 1:end - 1])
                i = end
                sig_end = toks[i - 1].end
    else:  # function-like: optional ": Type" result
        if i < n and toks[i].text == ":":
            i += 1
            i, result_tokens = _scan_type(toks, i)
            if result_tokens:
                sig_end = result_tokens[-1].end
                returns = _parse_named_result(text, result_tokens)

    clauses, i, body_open_idx = _scan_spec_clauses(text, toks, i)

    body_span = None
    unit_end = clauses[-1].span[1] if clauses else sig_end
    if body_open_idx is not None:
        close = _skip_balanced(toks, body_open_idx)
        body_start = toks[body_open_idx].start
        body_end = toks[close - 1].end
        body_span = (body_start, body_end)
        unit_end = body_end
        loop_clauses = _scan_loop_clauses(text, toks, body_open_idx + 1, close - 1)
        clauses = sorted(clauses + loop_clauses, key=lambda c: c.span[0])
        i = close

    qualified = ".".join([s[0] for s in scopes if s[0]] + [name])
    unit = MethodUnit(
        name=name,
        kind=kind,
        qualified_name=qualified,
        span=(toks[start_idx].start, unit_end),
        signature_span=(toks[start_idx].start, sig_end),
        params=tuple(params),
        returns=tuple(returns),
        spec_clauses=tuple(clauses),
        body_span=body_span,
        type_params_text=type_params_text,
    )
    if not _params_unique(unit):
        return None
    return unit, i


def _params_unique(unit: MethodUnit) -> bool:
    names = [p[0] for p in unit.params] + [r[0] for r in unit.returns]
    return len(names) == len(set(names))


def _parse_param_list(toks: list[Token]) -> list[tuple[str, str]]:
    """Split '(a: T, ghost b: seq<int> := d)' tokens into (name, type) pairs."""
    if not toks:
        return []
    groups: list[list[Token]] = [[]]
    level = 0
    for t in toks:
        if t.text in ("(", "[", "{", "<"):
            level += 1
        elif t.text in (")", "]", "}", ">"):
            level -= 1
        if t.text == "," and level == 0:
            groups.append([])
        else:
            groups[-1].append(t)
    out = []
    for g in groups:
        g = [t for t in g if not (t.kind == "id" and t.text in ("ghost", "nameonly", "older", "new"))]
        if not g:
            continue
        colon = None
        level = 0
        for idx, t in enumerate(g):
            if t.text in ("(", "[", "{", "<"):
                level += 1
            elif t.text in (")", "]", "}", ">"):
                level -= 1
            elif t.text == ":" and level == 0:
                colon = idx
                break
        if colon is None or colon == 0:
            continue
        name = g[colon - 1].text
        type_toks = g[colon + 1:]
        stop = len(type_toks)
        for idx, t in enumerate(type_toks):
            if t.text == ":=":
                stop = idx
                break
        if not type_toks[:stop]:
            continue
        type_text = _token_span_text(type_toks[:stop])
        out.append((name, type_text))
    return out


def _token_span_text(toks: list[Token]) -> str:
    if not toks:
        return ""
    parts = [toks[0].text]
    for prev, cur in zip(toks, toks[1:]):
        if cur.start > prev.end:
            parts.append(" ")
        parts.append(cur.text)
    return "".join(parts)


def _scan_type(toks, i):
    """Consume a function result type; stops before clauses or a body."""
    out = []
    level = 0
    n = len(toks)
    while i < n:
        t = toks[i]
        if level == 0:
            if t.kind == "id" and (t.text in CLAUSE_KINDS or t.text in _DECL_STOP):
                break
            if t.text == "{":
                break
            if t.text == "}":
                break
        if t.text in ("(", "[", "<"):
            level += 1
        elif t.text in (")", "]", ">"):
            level -= 1
            if level < 0:
                break
        out.append(t)
        i += 1
    return i, out


def _parse_named_result(text, result_tokens):
    """A result written as '(r: T)' binds a name; plain types bind none."""
    if len(result_tokens) >= 4 and result_tokens[0].text == "(" \
            and result_tokens[-1].text == ")":
        inner = result_tokens[1:-1]
        if inner and inner[0].kind == "id" and len(inner) > 1 and inner[1].text == ":":
            has_top_comma = False
            level = 0
            for t in inner:
                if t.text in ("(", "[", "{", "<"):
                    level += 1
                elif t.text in (")", "]", "}", ">"):
                    level -= 1
                elif t.text == "," and level == 0:
                    has_top_comma = True
            if not has_top_comma:
                return [(inner[0].text, _token_span_text(inner[2:]))]
    return []


def _scan_spec_clauses(text, toks, i, stop_at_semicolon=False):
    """Scan a run of spec clauses; returns (clauses, next_idx, body_open_idx).

    body_open_idx is the index of the '{' opening the body, or None for
    body-less declarations.
    """
    clauses: list[SpecClause] = []
    n = len(toks)
    while i < n:
        t = toks[i]
        if t.kind == "id" and t.text in CLAUSE_KINDS:
            prev = toks[i - 1] if i > 0 else None
            if prev is not None and prev.text == ".":
                return clauses, i, None  # member access, not a clause
            kw_tok = t
            i += 1
            while i < n and toks[i].text == "{" and i + 1 < n and toks[i + 1].text == ":":
                i = _skip_balanced(toks, i)
            expr_start_idx = i
            i, expr_end_idx, body_idx = _scan_clause_expr(toks, i, kw_tok.text)
            if expr_end_idx <= expr_start_idx:
                expr_text = ""
                clause_end = kw_tok.end
            else:
                expr_text = text[toks[expr_start_idx].start:toks[expr_end_idx - 1].end]
                clause_end = toks[expr_end_idx - 1].end
            if expr_text:
                clauses.append(SpecClause(
                    kind=kw_tok.text,
                    expr_text=expr_text,
                    span=(kw_tok.start, clause_end),
                ))
            if body_idx is not None:
                return clauses, body_idx, body_idx
            continue
        if t.text == "{" and _is_body_open(toks, i):
            return clauses, i, i
        if stop_at_semicolon and t.text == ";":
            return clauses, i, None
        return clauses, i, None
    return clauses, i, None


def _scan_clause_expr(toks, i, clause_kind):
    """Consume one clause expression; returns (next_idx, end_idx, body_idx)."""
    n = len(toks)
    level = 0
    bar_parity = 0
    first = i
    while i < n:
        t = toks[i]
        if level == 0:
            if t.kind == "id" and t.text in CLAUSE_KINDS:
                prev = toks[i - 1] if i > 0 else None
                if prev is None or prev.text != ".":
                    return i, i, None
            if t.kind == "id" and t.text in _DECL_STOP:
                return i, i, None
            if t.text == "|":
                bar_parity ^= 1
                i += 1
                continue
            if t.text == "{":
                if _brace_opens_body(toks, i, first, bar_parity):
                    return i, i, i
                level += 1
                i += 1
                continue
            if t.text in ("}", ")", "]", ";"):
                return i, i, None
            if t.text in ("(", "["):
                level += 1
                i += 1
                continue
        else:
            if t.text in ("(", "[", "{"):
                level += 1
            elif t.text in (")", "]", "}"):
                level -= 1
        i += 1
    return i, i, None


def _brace_opens_body(toks, i, expr_first, bar_parity):
    if bar_parity:
        return False
    prev = toks[i - 1] if i > 0 else None
    if prev is None:
        return True
    if prev.text == "*" and i - 1 == expr_first:
        return True  # "decreases *" / "reads *" directly before the body
    if prev.text in _EXPR_CONTINUE:
        return False
    return True


def _is_body_open(toks, i):
    """Judge a '{' seen where a body may start (outside any clause expr)."""
    if i + 1 < len(toks) and toks[i + 1].text == ":":
        return False  # attribute
    prev = toks[i - 1] if i > 0 else None
    return prev is None or prev.text not in _EXPR_CONTINUE


_LOOP_KEYWORDS = {"while", "for"}


def _scan_loop_clauses(text, toks, start, end):
    """Find invariant/decreases/modifies clauses in loop headers of a body.

    toks[start:end] are the tokens strictly inside the body braces.
    """
    clauses: list[SpecClause] = []
    loop_idx = -1
    i = start
    while i < end:
        t = toks[i]
        if t.kind == "id" and t.text in _LOOP_KEYWORDS:
            prev = toks[i - 1] if i > 0 else None
            if prev is not None and prev.text == ".":
                i += 1
                continue
            loop_idx += 1
            i += 1
            # guard expression, then clause list, then '{'
            guard_done = False
            while i < end:
                t = toks[i]
                if t.kind == "id" and t.text in CLAUSE_KINDS and \
                        (i == 0 or toks[i - 1].text != "."):
                    guard_done = True
                    kw_tok = t
                    i += 1
                    while i < end and toks[i].text == "{" and i + 1 < end and toks[i + 1].text == ":":
                        i = _skip_balanced(toks, i)
                    expr_start_idx = i
                    i, expr_end_idx, body_idx = _scan_clause_expr(toks, i, kw_tok.text)
                    if expr_end_idx > expr_start_idx:
                        clauses.append(SpecClause(
                            kind=kw_tok.text,
                            expr_text=text[toks[expr_start_idx].start:toks[expr_end_idx - 1].end],
                            span=(kw_tok.start, toks[expr_end_idx - 1].end),
                            attached_loop=loop_idx,
                        ))
                    if body_idx is not None:
                        i = body_idx
                        break
                    continue
                if t.text == "{":
                    if guard_done or _is_body_open(toks, i):
                        break
                    i = _skip_balanced(toks, i)
                    continue
                if t.text in ("(", "["):
                    i = _skip_balanced(toks, i)
                    continue
                if t.text == ";" or t.text == "}":
                    break
                i += 1
            continue
        if t.text in ("(", "["):
            i = _skip_balanced(toks, i)
            continue
        i += 1
    return clauses


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def strip_specs(file: SourceFile) -> str:
    """Remove every spec clause (method-level and loop-level)."""
    return strip_specs_with_anchors(file)[0]


def strip_specs_with_anchors(file: SourceFile) -> tuple[str, list[tuple[int, str]]]:
    """Strip clauses and record (position, removed text) anchors.

    Re-inserting every anchor into the stripped text reproduces the
    original byte-for-byte; see :func:`reinsert_at_anchors`.
    """
    text = file.text
    regions: list[tuple[int, int]] = []
    for unit in file.units:
        for cl in unit.spec_clauses:
            s, e = cl.span
            ws = s
            while ws > 0 and text[ws - 1] in " \t\r\n":
                ws -= 1
            regions.append((ws, e))
    regions.sort()
    merged: list[list[int]] = []
    for s, e in regions:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    pieces = []
    anchors: list[tuple[int, str]] = []
    pos = 0
    removed = 0
    for s, e in merged:
        pieces.append(text[pos:s])
        anchors.append((s - removed, text[s:e]))
        removed += e - s
        pos = e
    pieces.append(text[pos:])
    return "".join(pieces), anchors


def reinsert_at_anchors(stripped: str, anchors: list[tuple[int, str]]) -> str:
    """Inverse of :func:`strip_specs_with_anchors`."""
    pieces = []
    pos = 0
    for at, chunk in anchors:
        pieces.append(stripped[pos:at])
        pieces.append(chunk)
        pos = at
    pieces.append(stripped[pos:])
    return "".join(pieces)


def extract_clause_sets(unit: MethodUnit) -> ClauseSet:
    """Method-level requires/ensures of one unit, with a heap-construct flag."""
    pre = tuple(unit.clauses_of("requires"))
    post = tuple(unit.clauses_of("ensures"))
    heap = any(c.kind in ("modifies", "reads") for c in unit.method_spec_clauses)
    if not heap:
        heap = any(_HEAP_TOKEN_RE.search(e) for e in pre + post)
    return ClauseSet(pre=pre, post=post, heap_dependent=heap)


def splice(file: SourceFile, unit_name: str, clauses: list[SpecClause]) -> str:
    """Insert clauses between the named unit's signature and its body."""
    unit = file.find_unit(unit_name)  # raises UnknownUnit
    if not clauses:
        return file.text
    text = file.text
    method_clauses = unit.method_spec_clauses
    if method_clauses:
        insert_at = max(c.span[1] for c in method_clauses)
        line_start = text.rfind("\n", 0, method_clauses[0].span[0]) + 1
        indent_end = method_clauses[0].span[0]
    else:
        insert_at = unit.signature_span[1]
        line_start = text.rfind("\n", 0, unit.span[0]) + 1
        indent_end = unit.span[0]
    indent = text[line_start:indent_end]
    if not indent.strip() == "":
        indent = "  "
    elif not method_clauses:
        indent = indent + "  "
    inserted = "".join(f"\n{indent}{c.render()}" for c in clauses)
    return text[:insert_at] + inserted + text[insert_at:]

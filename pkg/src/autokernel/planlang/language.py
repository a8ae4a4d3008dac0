"""Lexer, AST, and parser for the plan language.

The language is a small deterministic imperative language: literals,
arithmetic, comparison, strings, lists, maps, if/elif/else, while, for,
function definitions, calls to registered kernel actions, and a
`parallel { ... }` block. It has no host I/O primitives at all; every
side effect goes through a registered kernel action.

Grammar (EBNF, statements separated by newline or ';'):

    script    = { statement } ;
    statement = assign | ifstmt | whilestmt | forstmt | funcdef
              | returnstmt | parallel | expr ;
    assign    = target "=" expr ;
    target    = NAME { "[" expr "]" } ;
    ifstmt    = "if" expr block { "elif" expr block } [ "else" block ] ;
    whilestmt = "while" expr block ;
    forstmt   = "for" NAME "in" expr block ;
    funcdef   = "def" NAME "(" [ NAME { "," NAME } ] ")" block ;
    returnstmt= "return" [ expr ] ;
    parallel  = "parallel" block ;
    block     = "{" { statement } "}" ;
    expr      = orexpr ;
    orexpr    = andexpr { "or" andexpr } ;
    andexpr   = notexpr { "and" notexpr } ;
    notexpr   = "not" notexpr | cmpexpr ;
    cmpexpr   = addexpr [ ("=="|"!="|"<"|"<="|">"|">=") addexpr ] ;
    addexpr   = mulexpr { ("+"|"-") mulexpr } ;
    mulexpr   = unary { ("*"|"/"|"%") unary } ;
    unary     = "-" unary | postfix ;
    postfix   = primary { "(" [ expr { "," expr } ] ")" | "[" expr "]" } ;
    primary   = NUMBER | STRING | "true" | "false" | "none" | NAME
              | "[" [ expr { "," expr } ] "]"
              | "{" [ STRING ":" expr { "," STRING ":" expr } ] "}"
              | "(" expr ")" ;
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ParseError

KEYWORDS = {
    "if", "elif", "else", "while", "for", "in", "def", "return",
    "parallel", "and", "or", "not", "true", "false", "none",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<ws>[ \t\r]+)
  | (?P<number>\d+\.\d+|\d+)
  | (?P<string>"(?:\\.|[^"\\])*"|'(?:\\.|[^'\\])*')
  | (?P<name>[A-Za-z_]\w*)
  | (?P<op>==|!=|<=|>=|[-+*/%<>=(){}\[\],;:])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # number | string | name | keyword | op | newline | eof
    value: str
    line: int


def lex(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line = 0, 1
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line=line)
        pos = m.end()
        if m.lastgroup in ("ws", "comment"):
            continue
        if m.lastgroup == "newline":
            tokens.append(Token("newline", "\n", line))
            line += 1
            continue
        kind = m.lastgroup
        value = m.group()
        if kind == "name" and value in KEYWORDS:
            kind = "keyword"
        tokens.append(Token(kind, value, line))
    tokens.append(Token("eof", "", line))
    return tokens


# --- AST nodes -------------------------------------------------------------


@dataclass
class Literal:
    value: object


@dataclass
class Name:
    ident: str


@dataclass
class ListExpr:
    items: list


@dataclass
class MapExpr:
    pairs: list  # (key expr, value expr)


@dataclass
class Unary:
    op: str
    operand: object


@dataclass
class Binary:
    op: str
    left: object
    right: object


@dataclass
class Call:
    func: object
    args: list
    line: int = 0


@dataclass
class Index:
    obj: object
    key: object


@dataclass
class Assign:
    target: object  # Name or Index
    value: object


@dataclass
class If:
    branches: list  # (condition expr | None for else, body)


@dataclass
class While:
    cond: object
    body: list


@dataclass
class For:
    var: str
    iterable: object
    body: list


@dataclass
class FuncDef:
    name: str
    params: list
    body: list


@dataclass
class Return:
    value: object | None


@dataclass
class Parallel:
    body: list


@dataclass
class ExprStmt:
    expr: object


@dataclass
class Script:
    statements: list = field(default_factory=list)


# --- Parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def skip_newlines(self):
        while self.peek().kind == "newline" or (
            self.peek().kind == "op" and self.peek().value == ";"
        ):
            self.next()

    def expect(self, kind: str, value: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value or kind
            raise ParseError(f"expected {want!r}, got {tok.value!r}", line=tok.line)
        return self.next()

    def at(self, kind: str, value: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    # statements

    def parse_script(self) -> Script:
        stmts = []
        self.skip_newlines()
        while not self.at("eof"):
            stmts.append(self.statement())
            self.end_of_statement()
        return Script(statements=stmts)

    def end_of_statement(self):
        tok = self.peek()
        if tok.kind in ("newline", "eof") or (tok.kind == "op" and tok.value in (";", "}")):
            self.skip_newlines()
            return
        raise ParseError(f"expected end of statement, got {tok.value!r}", line=tok.line)

    def statement(self):
        tok = self.peek()
        if tok.kind == "keyword":
            if tok.value == "if":
                return self.if_statement()
            if tok.value == "while":
                self.next()
                cond = self.expression()
                return While(cond=cond, body=self.block())
            if tok.value == "for":
                self.next()
                var = self.expect("name").value
                self.expect("keyword", "in")
                iterable = self.expression()
                return For(var=var, iterable=iterable, body=self.block())
            if tok.value == "def":
                return self.func_def()
            if tok.value == "return":
                self.next()
                if self.peek().kind in ("newline", "eof") or self.at("op", "}") or self.at("op", ";"):
                    return Return(value=None)
                return Return(value=self.expression())
            if tok.value == "parallel":
                self.next()
                return Parallel(body=self.block())
        # assignment lookahead: NAME [index]* '='
        snapshot = self.pos
        if tok.kind == "name":
            target = self.try_target()
            if target is not None and self.at("op", "="):
                self.next()
                return Assign(target=target, value=self.expression())
            self.pos = snapshot
        return ExprStmt(expr=self.expression())

    def try_target(self):
        target: object = Name(ident=self.next().value)
        while self.at("op", "["):
            self.next()
            key = self.expression()
            self.expect("op", "]")
            target = Index(obj=target, key=key)
        if self.at("op", "="):
            return target
        return None

    def if_statement(self):
        self.expect("keyword", "if")
        branches = [(self.expression(), self.block())]
        while True:
            snapshot = self.pos
            self.skip_newlines()
            if self.at("keyword", "elif"):
                self.next()
                branches.append((self.expression(), self.block()))
            elif self.at("keyword", "else"):
                self.next()
                branches.append((None, self.block()))
                break
            else:
                self.pos = snapshot
                break
        return If(branches=branches)

    def func_def(self):
        self.expect("keyword", "def")
        name = self.expect("name").value
        self.expect("op", "(")
        params = []
        self.skip_newlines()
        if not self.at("op", ")"):
            params.append(self.expect("name").value)
            while self.at("op", ","):
                self.next()
                self.skip_newlines()
                params.append(self.expect("name").value)
        self.expect("op", ")")
        return FuncDef(name=name, params=params, body=self.block())

    def block(self) -> list:
        self.skip_newlines()
        self.expect("op", "{")
        stmts = []
        self.skip_newlines()
        while not self.at("op", "}"):
            if self.at("eof"):
                raise ParseError("unterminated block", line=self.peek().line)
            stmts.append(self.statement())
            if self.at("op", "}"):
                break
            self.end_of_statement()
        self.expect("op", "}")
        return stmts

    # expressions

    def expression(self):
        return self.or_expr()

    def or_expr(self):
        left = self.and_expr()
        while self.at("keyword", "or"):
            self.next()
            left = Binary(op="or", left=left, right=self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at("keyword", "and"):
            self.next()
            left = Binary(op="and", left=left, right=self.not_expr())
        return left

    def not_expr(self):
        if self.at("keyword", "not"):
            self.next()
            return Unary(op="not", operand=self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self):
        left = self.add_expr()
        if self.at("op") and self.peek().value in ("==", "!=", "<", "<=", ">", ">="):
            op = self.next().value
            return Binary(op=op, left=left, right=self.add_expr())
        return left

    def add_expr(self):
        left = self.mul_expr()
        while self.at("op") and self.peek().value in ("+", "-"):
            op = self.next().value
            left = Binary(op=op, left=left, right=self.mul_expr())
        return left

    def mul_expr(self):
        left = self.unary()
        while self.at("op") and self.peek().value in ("*", "/", "%"):
            op = self.next().value
            left = Binary(op=op, left=left, right=self.unary())
        return left

    def unary(self):
        if self.at("op", "-"):
            self.next()
            return Unary(op="-", operand=self.unary())
        return self.postfix()

    def postfix(self):
        expr = self.primary()
        while True:
            if self.at("op", "("):
                line = self.peek().line
                self.next()
                args = []
                self.skip_newlines()
                if not self.at("op", ")"):
                    args.append(self.expression())
                    while self.at("op", ","):
                        self.next()
                        self.skip_newlines()
                        args.append(self.expression())
                    self.skip_newlines()
                self.expect("op", ")")
                expr = Call(func=expr, args=args, line=line)
            elif self.at("op", "["):
                self.next()
                key = self.expression()
                self.expect("op", "]")
                expr = Index(obj=expr, key=key)
            else:
                return expr

    def primary(self):
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            return Literal(value=float(tok.value) if "." in tok.value else int(tok.value))
        if tok.kind == "string":
            self.next()
            return Literal(value=_unquote(tok.value))
        if tok.kind == "keyword" and tok.value in ("true", "false", "none"):
            self.next()
            return Literal(value={"true": True, "false": False, "none": None}[tok.value])
        if tok.kind == "name":
            self.next()
            return Name(ident=tok.value)
        if tok.kind == "op" and tok.value == "[":
            self.next()
            items = []
            self.skip_newlines()
            if not self.at("op", "]"):
                items.append(self.expression())
                while self.at("op", ","):
                    self.next()
                    self.skip_newlines()
                    items.append(self.expression())
                self.skip_newlines()
            self.expect("op", "]")
            return ListExpr(items=items)
        if tok.kind == "op" and tok.value == "{":
            self.next()
            pairs = []
            self.skip_newlines()
            if not self.at("op", "}"):
                pairs.append(self._map_pair())
                while self.at("op", ","):
                    self.next()
                    self.skip_newlines()
                    pairs.append(self._map_pair())
                self.skip_newlines()
            self.expect("op", "}")
            return MapExpr(pairs=pairs)
        if tok.kind == "op" and tok.value == "(":
            self.next()
            expr = self.expression()
            self.expect("op", ")")
            return expr
        raise ParseError(f"unexpected token {tok.value!r}", line=tok.line)

    def _map_pair(self):
        key = self.expression()
        self.expect("op", ":")
        return (key, self.expression())


def _unquote(raw: str) -> str:
    body = raw[1:-1]
    return re.sub(
        r"\\(.)",
        lambda m: {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'"}.get(m.group(1), m.group(1)),
        body,
    )


def parse_script(source: str) -> Script:
    """Parse a plan script or reject it whole with ParseError."""
    return _Parser(lex(source)).parse_script()

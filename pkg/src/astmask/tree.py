"""Typed syntax trees: a small deterministic parser, JSON ingestion, pruning.

The mini language is a statement language with Java-flavoured node names
(``VariableDeclarator``, ``MethodCallExpr``, ...) so that trees look like the
output of a mainstream Java parser.  Real-language trees enter through
``ingest_ast_json``, which accepts the serialized form any external parser can
emit.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterator

__all__ = [
    "AstNode",
    "AstTree",
    "PrunePolicy",
    "ParseError",
    "EmptyInputError",
    "SchemaError",
    "PruneError",
    "parse_minilang",
    "ingest_ast_json",
    "emit_ast_json",
    "prune",
    "python_prune_policy",
    "minilang_prune_policy",
    "lex_minilang",
    "semantic_token_texts",
    "source_token_texts",
    "structurally_equal",
    "code_leaves",
    "iter_nodes",
    "MINILANG_NODE_TYPES",
]


# ---------------------------------------------------------------------------
# Core data types
# ---------------------------------------------------------------------------


@dataclass
class AstNode:
    """One syntax-tree node.

    Leaves (no children) carry a source token in ``token_text``; interior
    nodes carry structure only.  ``role`` is the field name this node fills in
    its parent ("name", "type", "argument", ...).  Nodes are treated as
    immutable once a tree is built.
    """

    node_type: str
    token_text: str | None = None
    role: str | None = None
    children: list["AstNode"] = field(default_factory=list)
    node_id: int = -1

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def pre_order(self) -> Iterator["AstNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass
class AstTree:
    """A rooted tree plus provenance: which language it came from and whether
    it has been through :func:`prune`."""

    root: AstNode
    source_language: str = "other"
    pruned: bool = False

    def nodes(self) -> Iterator[AstNode]:
        return self.root.pre_order()

    def node_count(self) -> int:
        return sum(1 for _ in self.nodes())


@dataclass(frozen=True)
class PrunePolicy:
    """Which nodes to drop.  A node whose type or role is denied is removed
    with its whole subtree; ``drop_empty_interior`` then removes token-less
    childless nodes (including ones that were already empty) to a fixed
    point."""

    deny_node_types: frozenset[str] = frozenset()
    deny_roles: frozenset[str] = frozenset()
    drop_empty_interior: bool = True

    def __post_init__(self) -> None:
        if "" in self.deny_node_types or "" in self.deny_roles:
            raise ValueError("deny sets must not contain empty strings")


class ParseError(ValueError):
    """Malformed mini-language source; carries 1-based line/column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class EmptyInputError(ParseError):
    def __init__(self) -> None:
        super().__init__("empty input", 1, 1)


class SchemaError(ValueError):
    """AST-JSON document violates the serialization schema."""


class PruneError(ValueError):
    """Pruning would remove the tree root."""


# Location and context attributes that standard-library Python trees attach
# to every node; they say nothing about what the code means.
PYTHON_ATTRIBUTE_ROLES = frozenset(
    {"lineno", "col_offset", "end_lineno", "end_col_offset", "ctx", "type_comment"}
)


def python_prune_policy() -> PrunePolicy:
    return PrunePolicy(deny_roles=PYTHON_ATTRIBUTE_ROLES)


def minilang_prune_policy() -> PrunePolicy:
    """Mini-language trees carry no clutter; pruning only sets the flag."""
    return PrunePolicy()


MINILANG_NODE_TYPES = frozenset(
    {
        "ClassOrInterfaceType",
        "SimpleName",
        "MethodCallExpr",
        "VariableDeclarator",
        "AssignExpr",
        "BinaryExpr",
        "NameExpr",
        "IntegerLiteralExpr",
        "DoubleLiteralExpr",
        "StringLiteralExpr",
        "Parameter",
        "MethodDeclaration",
        "BlockStmt",
        "ReturnStmt",
        "ExpressionStmt",
        "Operator",
    }
)


def assign_node_ids(root: AstNode) -> None:
    """Number nodes 0..n-1 in depth-first pre-order."""
    for i, node in enumerate(root.pre_order()):
        node.node_id = i


def iter_nodes(tree: AstTree) -> Iterator[AstNode]:
    return tree.nodes()


def code_leaves(tree: AstTree) -> list[AstNode]:
    """Leaves that carry a source token, in pre-order."""
    return [n for n in tree.nodes() if n.is_leaf and n.token_text is not None]


def structurally_equal(a: AstNode, b: AstNode) -> bool:
    """Equality on (node_type, role, token_text, child order); ids ignored."""
    if (a.node_type, a.role, a.token_text) != (b.node_type, b.role, b.token_text):
        return False
    if len(a.children) != len(b.children):
        return False
    return all(structurally_equal(x, y) for x, y in zip(a.children, b.children))


# ---------------------------------------------------------------------------
# Mini-language lexer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<FLOAT>\d+\.\d+)
  | (?P<INT>\d+)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<STRING>"[^"\n]*")
  | (?P<OP>[+\-*/])
  | (?P<PUNCT>[=;.,(){}])
    """,
    re.VERBOSE,
)

# Token kinds that become tree leaves; punctuation and keywords are structure.
SEMANTIC_KINDS = frozenset({"IDENT", "INT", "FLOAT", "STRING", "OP"})


def lex_minilang(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            nl = text.count("\n")
            if nl:
                line += nl
                line_start = m.start() + text.rindex("\n") + 1
        else:
            if kind == "IDENT" and text == "return":
                kind = "KEYWORD"
            tokens.append(Token(kind, text, line, m.start() - line_start + 1))
        pos = m.end()
    return tokens


def semantic_token_texts(source: str) -> list[str]:
    """The token stream a parsed tree's leaves must reproduce in pre-order
    (identifiers, literals, operators; punctuation and keywords excluded)."""
    return [t.text for t in lex_minilang(source) if t.kind in SEMANTIC_KINDS]


def source_token_texts(source: str) -> list[str]:
    """Every lexed token, punctuation included; the unit of the refinement
    target side."""
    return [t.text for t in lex_minilang(source)]


# ---------------------------------------------------------------------------
# Mini-language parser
# ---------------------------------------------------------------------------


def _leaf(node_type: str, token: str, role: str | None = None) -> AstNode:
    return AstNode(node_type, token_text=token, role=role)


def _node(node_type: str, children: list[AstNode], role: str | None = None) -> AstNode:
    return AstNode(node_type, role=role, children=children)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1]
            raise ParseError("unexpected end of input", last.line, last.col)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.advance()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def at(self, kind: str, text: str | None = None, offset: int = 0) -> bool:
        tok = self.peek(offset)
        if tok is None or tok.kind != kind:
            return False
        return text is None or tok.text == text

    # -- statements --------------------------------------------------------

    def parse_program(self) -> list[AstNode]:
        stmts = []
        while self.peek() is not None:
            stmts.append(self.parse_stmt())
        return stmts

    def parse_stmt(self) -> AstNode:
        if self.at("KEYWORD", "return"):
            return self.parse_return()
        if self.at("IDENT") and self.at("IDENT", offset=1):
            nxt = self.peek(2)
            if nxt is not None and nxt.text == "(":
                return self.parse_methoddecl()
            return self.parse_decl()
        if self.at("IDENT") and self.at("PUNCT", "=", offset=1):
            return self.parse_assign()
        return self.parse_exprstmt()

    def parse_return(self) -> AstNode:
        self.expect("return")
        value = self.parse_expr(role="expression")
        self.expect(";")
        return _node("ReturnStmt", [value])

    def parse_decl(self) -> AstNode:
        type_tok = self.advance()
        name_tok = self.advance()
        self.expect("=")
        init = self.parse_expr(role="initializer")
        self.expect(";")
        return _node(
            "VariableDeclarator",
            [
                _leaf("ClassOrInterfaceType", type_tok.text, role="type"),
                _leaf("SimpleName", name_tok.text, role="name"),
                init,
            ],
        )

    def parse_assign(self) -> AstNode:
        name_tok = self.advance()
        self.expect("=")
        value = self.parse_expr(role="value")
        self.expect(";")
        assign = _node(
            "AssignExpr",
            [_leaf("NameExpr", name_tok.text, role="target"), value],
            role="expression",
        )
        return _node("ExpressionStmt", [assign])

    def parse_exprstmt(self) -> AstNode:
        expr = self.parse_expr(role="expression")
        self.expect(";")
        return _node("ExpressionStmt", [expr])

    def parse_methoddecl(self) -> AstNode:
        type_tok = self.advance()
        name_tok = self.advance()
        self.expect("(")
        params: list[AstNode] = []
        while not self.at("PUNCT", ")"):
            if params:
                self.expect(",")
            p_type = self.advance()
            p_name = self.advance()
            if p_type.kind != "IDENT" or p_name.kind != "IDENT":
                raise ParseError("expected parameter", p_type.line, p_type.col)
            params.append(
                _node(
                    "Parameter",
                    [
                        _leaf("ClassOrInterfaceType", p_type.text, role="type"),
                        _leaf("SimpleName", p_name.text, role="name"),
                    ],
                    role="parameter",
                )
            )
        self.expect(")")
        self.expect("{")
        body: list[AstNode] = []
        while not self.at("PUNCT", "}"):
            body.append(self.parse_stmt())
        self.expect("}")
        return _node(
            "MethodDeclaration",
            [
                _leaf("ClassOrInterfaceType", type_tok.text, role="type"),
                _leaf("SimpleName", name_tok.text, role="name"),
                *params,
                _node("BlockStmt", body, role="body"),
            ],
        )

    # -- expressions (two precedence levels, left associative) --------------

    def parse_expr(self, role: str | None = None) -> AstNode:
        node = self.parse_term()
        while self.at("OP", "+") or self.at("OP", "-"):
            op = self.advance()
            right = self.parse_term()
            node = self._binary(node, op.text, right)
        node.role = role
        return node

    def parse_term(self) -> AstNode:
        node = self.parse_primary()
        while self.at("OP", "*") or self.at("OP", "/"):
            op = self.advance()
            right = self.parse_primary()
            node = self._binary(node, op.text, right)
        return node

    @staticmethod
    def _binary(left: AstNode, op: str, right: AstNode) -> AstNode:
        left.role = "left"
        right.role = "right"
        return _node(
            "BinaryExpr", [left, _leaf("Operator", op, role="operator"), right]
        )

    def parse_primary(self) -> AstNode:
        tok = self.advance()
        if tok.kind == "INT":
            return _leaf("IntegerLiteralExpr", tok.text)
        if tok.kind == "FLOAT":
            return _leaf("DoubleLiteralExpr", tok.text)
        if tok.kind == "STRING":
            return _leaf("StringLiteralExpr", tok.text)
        if tok.kind != "IDENT":
            raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)
        # scoped call, bare call, or plain name
        if self.at("PUNCT", ".") and self.at("IDENT", offset=1):
            self.advance()
            name_tok = self.advance()
            args = self.parse_args()
            return _node(
                "MethodCallExpr",
                [
                    _leaf("NameExpr", tok.text, role="scope"),
                    _leaf("SimpleName", name_tok.text, role="name"),
                    *args,
                ],
            )
        if self.at("PUNCT", "("):
            args = self.parse_args()
            return _node(
                "MethodCallExpr",
                [_leaf("SimpleName", tok.text, role="name"), *args],
            )
        return _leaf("NameExpr", tok.text)

    def parse_args(self) -> list[AstNode]:
        self.expect("(")
        args: list[AstNode] = []
        while not self.at("PUNCT", ")"):
            if args:
                self.expect(",")
            args.append(self.parse_expr(role="argument"))
        self.expect(")")
        return args


def parse_minilang(source: str) -> AstTree:
    """Parse mini-language source into an unpruned tree.

    A single-statement snippet becomes that statement's node directly; a
    multi-statement program is wrapped in a ``BlockStmt`` root.  The pre-order
    leaf tokens of the result reproduce :func:`semantic_token_texts` of the
    source exactly.
    """
    tokens = lex_minilang(source)
    if not tokens:
        raise EmptyInputError()
    stmts = _Parser(tokens).parse_program()
    root = stmts[0] if len(stmts) == 1 else _node("BlockStmt", stmts)
    assign_node_ids(root)
    return AstTree(root=root, source_language="minilang", pruned=False)


# ---------------------------------------------------------------------------
# AST-JSON ingestion / emission
# ---------------------------------------------------------------------------

_JSON_KEYS = ("type", "role", "token", "children")


def _reject_duplicate_keys(pairs: list[tuple[str, object]]) -> dict:
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise SchemaError(f"duplicate field {key!r}")
        seen.add(key)
    return dict(pairs)


def _node_from_obj(obj: object, path: str) -> AstNode:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: node must be an object, got {type(obj).__name__}")
    unknown = set(obj) - set(_JSON_KEYS)
    if unknown:
        raise SchemaError(f"{path}: unknown field(s) {sorted(unknown)}")
    node_type = obj.get("type")
    if not isinstance(node_type, str) or not node_type:
        raise SchemaError(f"{path}: missing or empty 'type'")
    role = obj.get("role")
    if role is not None and not isinstance(role, str):
        raise SchemaError(f"{path}: 'role' must be a string")
    token = obj.get("token")
    if token is not None and not isinstance(token, str):
        raise SchemaError(f"{path}: 'token' must be a string")
    children_obj = obj.get("children", [])
    if not isinstance(children_obj, list):
        raise SchemaError(f"{path}: 'children' must be a list")
    if token is not None and children_obj:
        raise SchemaError(f"{path}: a token-carrying node must have no children")
    children = [
        _node_from_obj(child, f"{path}.children[{i}]")
        for i, child in enumerate(children_obj)
    ]
    return AstNode(node_type, token_text=token, role=role, children=children)


def ingest_ast_json(document: str, source_language: str = "other") -> AstTree:
    """Load a serialized tree.  Unknown node types pass through verbatim; node
    ids are reassigned in pre-order.  The result is not yet pruned."""
    try:
        obj = json.loads(document, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    root = _node_from_obj(obj, "$")
    assign_node_ids(root)
    return AstTree(root=root, source_language=source_language, pruned=False)


def _node_to_obj(node: AstNode) -> dict:
    obj: dict = {"type": node.node_type}
    if node.role is not None:
        obj["role"] = node.role
    if node.token_text is not None:
        obj["token"] = node.token_text
    obj["children"] = [_node_to_obj(c) for c in node.children]
    return obj


def emit_ast_json(tree: AstTree) -> str:
    """Serialize with fixed key order (type, role, token, children) and
    two-space indentation."""
    return json.dumps(_node_to_obj(tree.root), indent=2)


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------


def _denied(node: AstNode, policy: PrunePolicy) -> bool:
    return node.node_type in policy.deny_node_types or (
        node.role is not None and node.role in policy.deny_roles
    )


def _prune_node(node: AstNode, policy: PrunePolicy) -> AstNode | None:
    kept = []
    for child in node.children:
        if _denied(child, policy):
            continue
        new_child = _prune_node(child, policy)
        if new_child is not None:
            kept.append(new_child)
    if policy.drop_empty_interior and not kept and node.token_text is None:
        return None
    return AstNode(node.node_type, token_text=node.token_text, role=node.role, children=kept)


def prune(tree: AstTree, policy: PrunePolicy) -> AstTree:
    """Return a new tree with denied subtrees removed.  Idempotent; node ids
    are renumbered in pre-order and the result is flagged pruned."""
    if _denied(tree.root, policy):
        raise PruneError(
            f"policy denies the root node ({tree.root.node_type!r}); result would be empty"
        )
    new_root = _prune_node(tree.root, policy)
    if new_root is None:
        # Root survived the deny check but lost everything beneath it; keep
        # the bare root so the caller gets a well-formed (if empty) tree.
        new_root = AstNode(tree.root.node_type, role=tree.root.role)
    assign_node_ids(new_root)
    return AstTree(root=new_root, source_language=tree.source_language, pruned=True)

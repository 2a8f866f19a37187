"""Flatten a pruned tree into an interleaved tag+code token sequence.

Each code leaf is preceded by one tag token per node on its root-to-leaf path
(the leaf's own node included, the tree root excluded) that has not already
been emitted for an earlier leaf.  Tags read ``role(NodeType)`` when the node
has a role, ``(NodeType)`` otherwise.  Every token carries two indices: its
hard position (offset in the full sequence) and its AST position (number of
tag tokens before it), so that a token's pair looks like the (3, 1) of the
tag sitting fourth in the stream with one tag ahead of it.

The visibility matrix marks which token pairs may attend to each other: code
and special tokens see each other freely, while a tag sees only the tokens on
its own branch.  ``brute_force_visibility`` recomputes the same relation by
pairwise root-path intersection and exists as an independent check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tree import AstNode, AstTree

__all__ = [
    "CLS",
    "SEP",
    "PAD",
    "MASK",
    "LinearToken",
    "LinearSequence",
    "VisibilityMatrix",
    "LinearizeError",
    "linearize",
    "tag_text",
    "build_visibility",
    "brute_force_visibility",
    "tokens_to_jsonl",
    "tokens_from_jsonl",
]

CLS = "[CLS]"
SEP = "[SEP]"
PAD = "[PAD]"
MASK = "[MASK]"

KIND_CODE = "code"
KIND_TAG = "tag"
KIND_SPECIAL = "special"


class LinearizeError(ValueError):
    pass


@dataclass
class LinearToken:
    text: str
    kind: str  # code | tag | special
    hard_pos: int
    ast_pos: int
    branch_node_id: int | None = None
    segment: str = "A"


@dataclass
class LinearSequence:
    tokens: list[LinearToken]
    source_tree: AstTree | None = None
    # node_id -> ancestors of that node, inclusive of the node itself
    ancestor_sets: dict[int, frozenset[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tokens)

    def code_texts(self) -> list[str]:
        return [t.text for t in self.tokens if t.kind == KIND_CODE]

    def tag_texts(self) -> list[str]:
        return [t.text for t in self.tokens if t.kind == KIND_TAG]


@dataclass
class VisibilityMatrix:
    n: int
    bits: np.ndarray  # (n, n) uint8, symmetric, unit diagonal

    def to_bitstrings(self) -> list[str]:
        return ["".join("1" if b else "0" for b in row) for row in self.bits]

    @classmethod
    def from_bitstrings(cls, rows: list[str]) -> "VisibilityMatrix":
        bits = np.array([[int(c) for c in row] for row in rows], dtype=np.uint8)
        return cls(n=len(rows), bits=bits)


def tag_text(node: AstNode) -> str:
    return f"{node.role}({node.node_type})" if node.role else f"({node.node_type})"


def _parent_map(tree: AstTree) -> dict[int, int]:
    parents: dict[int, int] = {}
    for node in tree.nodes():
        for child in node.children:
            parents[child.node_id] = node.node_id
    return parents


def ancestor_sets(tree: AstTree) -> dict[int, frozenset[int]]:
    """Self-inclusive ancestor sets for every node, root included."""
    parents = _parent_map(tree)
    sets: dict[int, frozenset[int]] = {}

    def resolve(node_id: int) -> frozenset[int]:
        cached = sets.get(node_id)
        if cached is not None:
            return cached
        parent = parents.get(node_id)
        result = (
            frozenset({node_id})
            if parent is None
            else resolve(parent) | {node_id}
        )
        sets[node_id] = result
        return result

    for node in tree.nodes():
        resolve(node.node_id)
    return sets


def linearize(tree: AstTree, include_tags: bool = True) -> LinearSequence:
    """Turn a pruned tree into ``[CLS] (tags... code)* [SEP]``.

    With ``include_tags=False`` only the code leaves are kept (the input form
    used to measure what the tags themselves contribute).
    """
    if not tree.pruned:
        raise LinearizeError("tree must be pruned before linearization")

    nodes = {n.node_id: n for n in tree.nodes()}
    leaves = [n for n in tree.nodes() if n.is_leaf and n.token_text is not None]
    if not leaves:
        raise LinearizeError("tree has no code leaves")

    anc = ancestor_sets(tree)
    root_id = tree.root.node_id
    single_node = tree.node_count() == 1

    tokens: list[LinearToken] = []
    n_tags = 0

    def append(text: str, kind: str, branch: int | None) -> None:
        nonlocal n_tags
        tokens.append(
            LinearToken(
                text=text,
                kind=kind,
                hard_pos=len(tokens),
                ast_pos=n_tags,
                branch_node_id=branch,
            )
        )
        if kind == KIND_TAG:
            n_tags += 1

    append(CLS, KIND_SPECIAL, None)
    emitted: set[int] = set()
    for leaf in leaves:
        if include_tags:
            path = sorted(anc[leaf.node_id])  # pre-order ids sort root -> leaf
            for node_id in path:
                if node_id == root_id and not single_node:
                    continue
                if node_id in emitted:
                    continue
                emitted.add(node_id)
                append(tag_text(nodes[node_id]), KIND_TAG, node_id)
        append(leaf.token_text, KIND_CODE, leaf.node_id)
    append(SEP, KIND_SPECIAL, None)

    return LinearSequence(tokens=tokens, source_tree=tree, ancestor_sets=dict(anc))


def build_visibility(seq: LinearSequence) -> VisibilityMatrix:
    """Pairwise attention permissions for a linearized sequence.

    A pair is visible when both tokens are code/special, when a tag names a
    node on the other token's branch, or when two tags lie on one root path.
    Special tokens never see tags.
    """
    n = len(seq.tokens)
    anc = seq.ancestor_sets
    kinds = [t.kind for t in seq.tokens]

    # Dense ancestor-membership lookup: member[a, b] == 1 iff b is an
    # ancestor-or-self of a.
    node_ids = sorted(anc)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    member = np.zeros((len(node_ids), len(node_ids)), dtype=np.uint8)
    for node_id, ancestors in anc.items():
        row = index[node_id]
        for a in ancestors:
            member[row, index[a]] = 1

    is_plain = np.array([k != KIND_TAG for k in kinds], dtype=bool)
    bits = np.zeros((n, n), dtype=np.uint8)
    bits[np.ix_(is_plain, is_plain)] = 1

    tag_pos = [i for i in range(n) if kinds[i] == KIND_TAG]
    code_pos = [i for i in range(n) if kinds[i] == KIND_CODE]
    if tag_pos:
        tag_nodes = np.array([index[seq.tokens[i].branch_node_id] for i in tag_pos])
        if code_pos:
            code_nodes = np.array(
                [index[seq.tokens[i].branch_node_id] for i in code_pos]
            )
            # tag t visible to code c iff t's node is an ancestor of c's leaf
            vis = member[np.ix_(code_nodes, tag_nodes)]
            bits[np.ix_(code_pos, tag_pos)] = vis
            bits[np.ix_(tag_pos, code_pos)] = vis.T
        # tag-tag: one node an ancestor of the other
        down = member[np.ix_(tag_nodes, tag_nodes)]
        bits[np.ix_(tag_pos, tag_pos)] = down | down.T
    np.fill_diagonal(bits, 1)
    return VisibilityMatrix(n=n, bits=bits)


def brute_force_visibility(seq: LinearSequence) -> VisibilityMatrix:
    """Same relation as :func:`build_visibility`, recomputed pairwise from
    scratch by walking parent pointers and intersecting root paths.  Test
    oracle; shares no code with the fast path."""
    tree = seq.source_tree
    if tree is None:
        raise LinearizeError("sequence has no source tree")
    parents: dict[int, int] = {}
    for node in tree.nodes():
        for child in node.children:
            parents[child.node_id] = node.node_id

    def root_path(node_id: int) -> frozenset[int]:
        path = [node_id]
        while path[-1] in parents:
            path.append(parents[path[-1]])
        return frozenset(path)

    paths: list[frozenset[int] | None] = []
    for tok in seq.tokens:
        paths.append(None if tok.branch_node_id is None else root_path(tok.branch_node_id))

    n = len(seq.tokens)
    bits = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for j in range(i, n):
            a, b = seq.tokens[i], seq.tokens[j]
            if i == j:
                visible = True
            elif a.kind != KIND_TAG and b.kind != KIND_TAG:
                visible = True
            elif a.kind == KIND_SPECIAL or b.kind == KIND_SPECIAL:
                visible = False
            else:
                pa, pb = paths[i], paths[j]
                shared = pa & pb
                # one node lies on the other's root path
                if a.kind == KIND_TAG and b.kind == KIND_TAG:
                    visible = len(shared) == min(len(pa), len(pb))
                elif a.kind == KIND_TAG:
                    visible = a.branch_node_id in shared
                else:
                    visible = b.branch_node_id in shared
            if visible:
                bits[i, j] = 1
                bits[j, i] = 1
    return VisibilityMatrix(n=n, bits=bits)


# ---------------------------------------------------------------------------
# Serialization (one JSON object per token)
# ---------------------------------------------------------------------------

_KIND_CODES = {KIND_CODE: "code", KIND_TAG: "tag", KIND_SPECIAL: "special"}


def tokens_to_jsonl(seq: LinearSequence) -> str:
    lines = []
    for t in seq.tokens:
        obj = {"t": t.text, "k": t.kind, "h": t.hard_pos, "a": t.ast_pos, "s": t.segment}
        if t.branch_node_id is not None:
            obj["b"] = t.branch_node_id
        lines.append(json.dumps(obj))
    return "\n".join(lines) + "\n"


def tokens_from_jsonl(text: str) -> list[LinearToken]:
    tokens = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        tokens.append(
            LinearToken(
                text=obj["t"],
                kind=obj["k"],
                hard_pos=obj["h"],
                ast_pos=obj["a"],
                branch_node_id=obj.get("b"),
                segment=obj.get("s", "A"),
            )
        )
    return tokens

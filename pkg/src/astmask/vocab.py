"""Vocabulary construction and fixed-length example encoding.

Code tokens are split into lowercase subtokens at camelCase, underscore, and
digit boundaries; tag tokens stay whole.  ``encode`` lays out one or two
spans as ``[CLS] first [SEP] (second [SEP])?``, recomputes positions and the
visibility matrix over the surviving tokens, and pads everything to a fixed
length.  Truncation drops whole leaf units (a code token together with the
tags emitted for it) from the tail of the longer span, so no tag survives
without the code token it describes.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .linearize import CLS, KIND_CODE, KIND_SPECIAL, KIND_TAG, MASK, PAD, SEP, LinearSequence

__all__ = [
    "UNK",
    "PAD_ID",
    "UNK_ID",
    "CLS_ID",
    "SEP_ID",
    "MASK_ID",
    "SPECIAL_TOKENS",
    "Vocabulary",
    "EncodedExample",
    "EncodeError",
    "split_identifier",
    "build_vocab",
    "encode",
    "encode_target",
    "detokenize",
    "save_batch",
    "load_batch",
]

UNK = "[UNK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
N_SPECIALS = len(SPECIAL_TOKENS)


class EncodeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Subtokenization
# ---------------------------------------------------------------------------

_CAMEL1 = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_CAMEL2 = re.compile(r"(?<=[A-Z])(?=[A-Z][a-z])")
_DIGIT = re.compile(r"(?<=[A-Za-z])(?=[0-9])|(?<=[0-9])(?=[A-Za-z])")
_NON_ALNUM = re.compile(r"[^A-Za-z0-9]+")


def split_identifier(name: str) -> list[str]:
    """Lowercase subtokens of an identifier; punctuation-only tokens (e.g. an
    operator) pass through as a single subtoken."""
    if not name:
        raise ValueError("empty token")
    if not any(c.isalnum() for c in name):
        return [name]
    s = _CAMEL1.sub(" ", name)
    s = _CAMEL2.sub(" ", s)
    s = _DIGIT.sub(" ", s)
    return [p.lower() for p in _NON_ALNUM.split(s) if p]


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocabulary:
    tokens: list[str]
    id_of: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if list(self.tokens[:N_SPECIALS]) != list(SPECIAL_TOKENS):
            raise ValueError("vocabulary must start with the special tokens")
        self.id_of = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.id_of) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def id(self, token: str) -> int:
        return self.id_of.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tokens=[line for line in lines if line])


def build_vocab(
    corpus: Iterable[LinearSequence],
    min_freq: int = 1,
    max_size: int | None = None,
    extra_tokens: Sequence[str] = (),
) -> Vocabulary:
    """Frequency-ranked vocabulary (ties broken lexicographically).  Tag
    tokens enter whole; code tokens as subtokens.  ``extra_tokens`` are
    admitted unconditionally, ahead of the ranked tail."""
    counts: Counter[str] = Counter()
    n_sequences = 0
    for seq in corpus:
        n_sequences += 1
        for tok in seq.tokens:
            if tok.kind == KIND_SPECIAL:
                continue
            if tok.kind == KIND_TAG:
                counts[tok.text] += 1
            else:
                counts.update(split_identifier(tok.text))
    if n_sequences == 0:
        raise ValueError("empty corpus")

    tokens = list(SPECIAL_TOKENS)
    seen = set(tokens)
    for tok in extra_tokens:
        if tok not in seen:
            tokens.append(tok)
            seen.add(tok)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for tok, freq in ranked:
        if freq < min_freq or tok in seen:
            continue
        tokens.append(tok)
        seen.add(tok)
    if max_size is not None:
        tokens = tokens[:max_size]
    return Vocabulary(tokens=tokens)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


@dataclass
class EncodedExample:
    """A padded, id-encoded instance ready for the model.

    All 1-D arrays share length L; ``visibility`` is L x L.  Padded positions
    hold ``[PAD]`` ids and see only themselves.
    """

    ids: np.ndarray
    hard_pos: np.ndarray
    ast_pos: np.ndarray
    segment: np.ndarray
    ast_segment: np.ndarray
    visibility: np.ndarray
    attention_pad_mask: np.ndarray
    label: int | None = None
    target_ids: np.ndarray | None = None

    @property
    def max_len(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_real(self) -> int:
        return int(self.attention_pad_mask.sum())


@dataclass
class _Slot:
    text: str
    kind: str
    span: int
    node_id: int | None


@dataclass
class _Unit:
    """One code leaf with the tags emitted for it; the atom of truncation."""

    tag_slots: list[_Slot]
    code_slots: list[_Slot]

    def __len__(self) -> int:
        return len(self.tag_slots) + len(self.code_slots)


def _span_units(item: LinearSequence | str, span: int) -> tuple[list[_Unit], dict]:
    if isinstance(item, str):
        words = item.split()
        if not words:
            raise EncodeError("empty text span")
        units = [
            _Unit([], [_Slot(sub, KIND_CODE, span, None) for sub in split_identifier(w)])
            for w in words
        ]
        return units, {}
    units: list[_Unit] = []
    pending_tags: list[_Slot] = []
    for tok in item.tokens:
        if tok.kind == KIND_SPECIAL:
            continue
        if tok.kind == KIND_TAG:
            pending_tags.append(_Slot(tok.text, KIND_TAG, span, tok.branch_node_id))
        else:
            code = [
                _Slot(sub, KIND_CODE, span, tok.branch_node_id)
                for sub in split_identifier(tok.text)
            ]
            units.append(_Unit(pending_tags, code))
            pending_tags = []
    if not units:
        raise EncodeError("span has no code tokens")
    return units, dict(item.ancestor_sets)


def _slot_visibility(slots: list[_Slot], anc_by_span: dict[int, dict]) -> np.ndarray:
    n = len(slots)
    keys = sorted(
        {(s.span, a) for s in slots if s.node_id is not None
         for a in anc_by_span[s.span][s.node_id]}
    )
    index = {key: i for i, key in enumerate(keys)}
    member = np.zeros((len(keys), len(keys)), dtype=np.uint8)
    for s in slots:
        if s.node_id is None:
            continue
        row = index[(s.span, s.node_id)]
        for a in anc_by_span[s.span][s.node_id]:
            member[row, index[(s.span, a)]] = 1

    is_plain = np.array([s.kind != KIND_TAG for s in slots], dtype=bool)
    bits = np.zeros((n, n), dtype=np.uint8)
    bits[np.ix_(is_plain, is_plain)] = 1

    tag_pos = [i for i, s in enumerate(slots) if s.kind == KIND_TAG]
    code_pos = [
        i for i, s in enumerate(slots) if s.kind == KIND_CODE and s.node_id is not None
    ]
    if tag_pos:
        tag_rows = np.array([index[(slots[i].span, slots[i].node_id)] for i in tag_pos])
        if code_pos:
            code_rows = np.array(
                [index[(slots[i].span, slots[i].node_id)] for i in code_pos]
            )
            vis = member[np.ix_(code_rows, tag_rows)]
            bits[np.ix_(code_pos, tag_pos)] = vis
            bits[np.ix_(tag_pos, code_pos)] = vis.T
        down = member[np.ix_(tag_rows, tag_rows)]
        bits[np.ix_(tag_pos, tag_pos)] = down | down.T
    np.fill_diagonal(bits, 1)
    return bits


def encode(
    first: LinearSequence | str,
    second: LinearSequence | str | None,
    vocab: Vocabulary,
    max_len: int,
    label: int | None = None,
) -> EncodedExample:
    """Encode one span or a pair into fixed-length arrays.

    Natural-language text on either side is plain code tokens: fully visible,
    no tags.  Removing tokens never strands a tag whose code token is gone.
    """
    if max_len < 8:
        raise EncodeError("max_len must be at least 8")

    spans = [_span_units(first, 0)]
    if second is not None:
        spans.append(_span_units(second, 1))
    anc_by_span = {i: anc for i, (_, anc) in enumerate(spans)}
    units_by_span = [units for units, _ in spans]

    n_specials = 1 + len(units_by_span)  # [CLS] plus one [SEP] per span

    def total() -> int:
        return n_specials + sum(sum(len(u) for u in units) for units in units_by_span)

    while total() > max_len:
        lengths = [sum(len(u) for u in units) for units in units_by_span]
        # drop from the tail of the longer span; tie goes to the second span
        victim = int(np.argmax(lengths[::-1]))
        victim = len(lengths) - 1 - victim
        if len(units_by_span[victim]) <= 1:
            other = 1 - victim
            if len(units_by_span) > 1 and len(units_by_span[other]) > 1:
                victim = other
            else:
                raise EncodeError("truncation would leave a span empty")
        units_by_span[victim].pop()

    slots: list[_Slot] = [_Slot(CLS, KIND_SPECIAL, 0, None)]
    segments: list[int] = [0]
    for span, units in enumerate(units_by_span):
        for unit in units:
            for slot in unit.tag_slots + unit.code_slots:
                slots.append(slot)
                segments.append(span)
        slots.append(_Slot(SEP, KIND_SPECIAL, span, None))
        segments.append(span)

    n = len(slots)
    ids = np.full(max_len, PAD_ID, dtype=np.int32)
    hard = np.zeros(max_len, dtype=np.int32)
    ast = np.zeros(max_len, dtype=np.int32)
    seg = np.zeros(max_len, dtype=np.int32)
    ast_seg = np.zeros(max_len, dtype=np.int32)
    pad_mask = np.zeros(max_len, dtype=np.uint8)

    n_tags = 0
    for i, slot in enumerate(slots):
        ids[i] = vocab.id(slot.text)
        hard[i] = i
        ast[i] = n_tags
        seg[i] = segments[i]
        ast_seg[i] = 1 if slot.kind == KIND_TAG else 0
        pad_mask[i] = 1
        if slot.kind == KIND_TAG:
            n_tags += 1

    visibility = np.zeros((max_len, max_len), dtype=np.uint8)
    visibility[:n, :n] = _slot_visibility(slots, anc_by_span)
    np.fill_diagonal(visibility, 1)

    return EncodedExample(
        ids=ids,
        hard_pos=hard,
        ast_pos=ast,
        segment=seg,
        ast_segment=ast_seg,
        visibility=visibility,
        attention_pad_mask=pad_mask,
        label=label,
    )


def encode_target(tokens: Sequence[str], vocab: Vocabulary, max_target_len: int) -> np.ndarray:
    """Whole-token target sequence ``[CLS] t1 .. tk [SEP]`` padded to length.

    Targets keep source tokens intact (no subtoken split) so decoded output
    detokenizes back to parseable text.
    """
    if max_target_len < 3:
        raise EncodeError("max_target_len must be at least 3")
    body = list(tokens)[: max_target_len - 2]
    out = np.full(max_target_len, PAD_ID, dtype=np.int32)
    out[0] = CLS_ID
    for i, tok in enumerate(body):
        out[1 + i] = vocab.id(tok)
    out[1 + len(body)] = SEP_ID
    return out


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    """Vocabulary tokens for the given ids, special tokens dropped."""
    return [vocab.token(int(i)) for i in ids if int(i) >= N_SPECIALS]


# ---------------------------------------------------------------------------
# Batch files: text manifest plus little-endian int32 payload
# ---------------------------------------------------------------------------

_BATCH_MAGIC = "astmask-batch 1"


def _batch_arrays(examples: Sequence[EncodedExample]) -> dict[str, np.ndarray]:
    arrays = {
        "ids": np.stack([e.ids for e in examples]),
        "hard_pos": np.stack([e.hard_pos for e in examples]),
        "ast_pos": np.stack([e.ast_pos for e in examples]),
        "segment": np.stack([e.segment for e in examples]),
        "ast_segment": np.stack([e.ast_segment for e in examples]),
        "visibility": np.stack([e.visibility for e in examples]),
        "attention_pad_mask": np.stack([e.attention_pad_mask for e in examples]),
    }
    if any(e.label is not None for e in examples):
        arrays["labels"] = np.array(
            [-1 if e.label is None else e.label for e in examples]
        )
    if any(e.target_ids is not None for e in examples):
        if not all(e.target_ids is not None for e in examples):
            raise EncodeError("mixed presence of target_ids in one batch")
        arrays["target_ids"] = np.stack([e.target_ids for e in examples])
    return {k: np.ascontiguousarray(v, dtype="<i4") for k, v in arrays.items()}


def save_batch(path: str | Path, examples: Sequence[EncodedExample]) -> None:
    if not examples:
        raise EncodeError("empty batch")
    arrays = _batch_arrays(examples)
    header_lines = [_BATCH_MAGIC]
    offset = 0
    for name, arr in arrays.items():
        shape = ",".join(str(d) for d in arr.shape)
        header_lines.append(f"{name} {shape} {offset}")
        offset += arr.nbytes
    header_lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n").encode("utf-8"))
        for arr in arrays.values():
            fh.write(arr.tobytes())


def load_batch(path: str | Path) -> list[EncodedExample]:
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    if raw[:newline].decode("utf-8") != _BATCH_MAGIC:
        raise EncodeError("not a batch file")
    pos = newline + 1
    manifest: list[tuple[str, tuple[int, ...], int]] = []
    while True:
        newline = raw.index(b"\n", pos)
        line = raw[pos:newline].decode("utf-8")
        pos = newline + 1
        if line == "end":
            break
        name, shape_s, offset_s = line.split(" ")
        shape = tuple(int(d) for d in shape_s.split(","))
        manifest.append((name, shape, int(offset_s)))
    payload = raw[pos:]
    arrays: dict[str, np.ndarray] = {}
    for name, shape, offset in manifest:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<i4", count=count, offset=offset)
        arrays[name] = arr.reshape(shape)

    n = arrays["ids"].shape[0]
    examples = []
    for i in range(n):
        label = None
        if "labels" in arrays:
            val = int(arrays["labels"][i])
            label = None if val < 0 else val
        target = arrays["target_ids"][i].astype(np.int32) if "target_ids" in arrays else None
        examples.append(
            EncodedExample(
                ids=arrays["ids"][i].astype(np.int32),
                hard_pos=arrays["hard_pos"][i].astype(np.int32),
                ast_pos=arrays["ast_pos"][i].astype(np.int32),
                segment=arrays["segment"][i].astype(np.int32),
                ast_segment=arrays["ast_segment"][i].astype(np.int32),
                visibility=arrays["visibility"][i].astype(np.uint8),
                attention_pad_mask=arrays["attention_pad_mask"][i].astype(np.uint8),
                label=label,
                target_ids=target,
            )
        )
    return examples

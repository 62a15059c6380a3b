"""Lowercasing byte-pair-encoding tokenizer for the text encoder.

Follows the public dual-encoder checkpoint convention: byte-to-unicode
base alphabet, word-level splitting, end-of-word ``</w>`` marker, merges
applied lowest-rank-first, sequences wrapped in start/end tokens and
padded with id 0 to a fixed context length.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import regex

from .errors import VocabError

SOT_TOKEN = "<|startoftext|>"
EOT_TOKEN = "<|endoftext|>"
PAD_ID = 0

_WORD_PATTERN = regex.compile(
    r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
    regex.IGNORECASE,
)

_WS = regex.compile(r"\s+")


@functools.lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Map each byte to a printable unicode character (base alphabet)."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    merge_ranks: dict[tuple[str, str], int]
    sot_id: int
    eot_id: int
    context_length: int = 77
    id_to_token: dict[int, str] = field(init=False, repr=False)
    _bpe_cache: dict[str, tuple[str, ...]] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.id_to_token = {v: k for k, v in self.token_to_id.items()}

    @property
    def size(self) -> int:
        return len(self.token_to_id)


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length id sequence: SOT, content, EOT, then pad (id 0).

    ``content_len`` counts the occupied slots including SOT and EOT.
    """

    ids: np.ndarray  # (context_length,) int64
    content_len: int

    def content_ids(self) -> np.ndarray:
        """Ids strictly between SOT and EOT."""
        return self.ids[1:self.content_len - 1]


def load_vocab(vocab_path, merges_path, context_length: int = 77) -> Vocabulary:
    """Load ``vocab.json`` (token -> id) and ``merges.txt`` (rank order)."""
    vocab_path, merges_path = Path(vocab_path), Path(merges_path)
    with open(vocab_path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise VocabError(f"{vocab_path}: invalid JSON: {e}")
    if not isinstance(raw, dict):
        raise VocabError(f"{vocab_path}: expected a token->id object")
    token_to_id: dict[str, int] = {}
    seen_ids: set[int] = set()
    for tok, tid in raw.items():
        if not isinstance(tid, int):
            raise VocabError(f"{vocab_path}: id for {tok!r} is not an integer")
        if tid in seen_ids:
            raise VocabError(f"{vocab_path}: duplicate id {tid}")
        seen_ids.add(tid)
        token_to_id[tok] = tid
    if seen_ids != set(range(len(token_to_id))):
        raise VocabError(f"{vocab_path}: ids are not dense in [0, {len(token_to_id)})")
    for special in (SOT_TOKEN, EOT_TOKEN):
        if special not in token_to_id:
            raise VocabError(f"{vocab_path}: missing special token {special!r}")

    merge_ranks: dict[tuple[str, str], int] = {}
    with open(merges_path, encoding="utf-8") as fh:
        rank = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#version"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise VocabError(f"{merges_path}:{lineno}: malformed merge line {line!r}")
            a, b = parts
            if a + b not in token_to_id:
                raise VocabError(
                    f"{merges_path}:{lineno}: merge {a!r}+{b!r} produces unknown token"
                )
            if (a, b) in merge_ranks:
                raise VocabError(f"{merges_path}:{lineno}: duplicate merge {a!r}+{b!r}")
            merge_ranks[(a, b)] = rank
            rank += 1

    return Vocabulary(
        token_to_id=token_to_id,
        merge_ranks=merge_ranks,
        sot_id=token_to_id[SOT_TOKEN],
        eot_id=token_to_id[EOT_TOKEN],
        context_length=context_length,
    )


def clean_text(text: str) -> str:
    """Lowercase and collapse whitespace runs to single spaces."""
    return _WS.sub(" ", text).strip().lower()


def _bpe(vocab: Vocabulary, token: str) -> tuple[str, ...]:
    cached = vocab._bpe_cache.get(token)
    if cached is not None:
        return cached
    word = tuple(token[:-1]) + (token[-1] + "</w>",)
    while len(word) > 1:
        pairs = {(word[i], word[i + 1]) for i in range(len(word) - 1)}
        best = min(pairs, key=lambda p: vocab.merge_ranks.get(p, float("inf")))
        if best not in vocab.merge_ranks:
            break
        first, second = best
        merged = []
        i = 0
        while i < len(word):
            if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                merged.append(first + second)
                i += 2
            else:
                merged.append(word[i])
                i += 1
        word = tuple(merged)
    vocab._bpe_cache[token] = word
    return word


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Encode any string into a fixed-length TokenSequence.

    Content is truncated so the end token is always the final occupied
    slot: after the start token at most ``context_length - 1`` positions
    are occupied (content plus the end token).
    """
    byte_enc = bytes_to_unicode()
    content: list[int] = []
    limit = vocab.context_length - 2
    for word in _WORD_PATTERN.findall(clean_text(text)):
        mapped = "".join(byte_enc[b] for b in word.encode("utf-8"))
        for piece in _bpe(vocab, mapped):
            try:
                content.append(vocab.token_to_id[piece])
            except KeyError:
                raise VocabError(f"token {piece!r} missing from vocabulary")
        if len(content) >= limit:
            break
    content = content[:limit]

    ids = np.zeros(vocab.context_length, dtype=np.int64)
    ids[0] = vocab.sot_id
    ids[1:1 + len(content)] = content
    ids[1 + len(content)] = vocab.eot_id
    return TokenSequence(ids=ids, content_len=len(content) + 2)


def detokenize(content_ids, vocab: Vocabulary) -> str:
    """Invert tokenization of content ids (SOT/EOT excluded)."""
    byte_dec = {c: b for b, c in bytes_to_unicode().items()}
    parts = []
    for i in content_ids:
        tok = vocab.id_to_token.get(int(i))
        if tok is None:
            raise VocabError(f"id {int(i)} missing from vocabulary")
        parts.append(tok)
    raw = bytes(byte_dec[ch] for ch in "".join(parts))
    return raw.decode("utf-8", errors="replace").replace("</w>", " ").strip()


def build_toy_vocab(n_merges: int = 32) -> tuple[dict[str, int], list[str]]:
    """Small self-contained vocabulary in the bundle file format.

    Base alphabet (512 byte tokens with and without the end-of-word
    marker), a deterministic set of frequent-English merges, and the two
    special tokens last so the end token has the largest id.
    """
    alphabet = [bytes_to_unicode()[b] for b in range(256)]
    tokens = list(alphabet) + [c + "</w>" for c in alphabet]
    seeds = [
        "th", "he", "in", "er", "an", "re", "on", "at", "en", "nd",
        "ti", "es", "or", "te", "of", "ed", "is", "it", "al", "ar",
        "st", "to", "nt", "ng", "se", "ha", "as", "ou", "io", "le",
        "ve", "co",
    ]
    merges = []
    for pair in seeds[:n_merges]:
        a, b = pair[0], pair[1]
        merges.append(f"{a} {b}")
        tokens.append(a + b)
        merges.append(f"{a} {b}</w>")
        tokens.append(a + b + "</w>")
    tokens.append(SOT_TOKEN)
    tokens.append(EOT_TOKEN)
    return {tok: i for i, tok in enumerate(tokens)}, merges

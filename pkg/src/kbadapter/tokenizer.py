"""Word-level tokenizer with per-character digit splitting.

Lowercased alphabetic runs form one token each, every digit is its own token,
and any other non-space character is a single-character token. Special tokens
are protected: if "<mask>" occurs in the input it stays one token. Splitting
digits apart keeps numeric edits local, so changing one digit of a phone
number changes exactly one token of the encoded sequence.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

PAD, BOS, EOS, UNK, MASK = "<pad>", "<s>", "</s>", "<unk>", "<mask>"
SPECIALS = (PAD, BOS, EOS, UNK, MASK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, MASK_ID = range(5)


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Like tokenize, but each token carries its (start, end) source span."""
    tokens: list[tuple[str, int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "<":
            special = next((s for s in SPECIALS if text.startswith(s, i)), None)
            if special is not None:
                tokens.append((special, i, i + len(special)))
                i += len(special)
                continue
        if ch.isdigit():
            tokens.append((ch, i, i + 1))
            i += 1
            continue
        if ch.isalpha():
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            tokens.append((text[i:j].lower(), i, j))
            i = j
            continue
        tokens.append((ch, i, i + 1))
        i += 1
    return tokens


def tokenize(text: str) -> list[str]:
    """Split text into words, digits, and punctuation, protecting specials."""
    return [tok for tok, _, _ in tokenize_with_spans(text)]


class WordTokenizer:
    """Corpus-built vocabulary over the fixed word-level splitting rules."""

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:5]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, texts: list[str], min_count: int = 1) -> "WordTokenizer":
        """Count tokens over texts; order by descending count, then token."""
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(t for t in tokenize(text) if t not in SPECIALS)
        kept = sorted(
            (tok for tok, c in counts.items() if c >= min_count),
            key=lambda tok: (-counts[tok], tok),
        )
        return cls(list(SPECIALS) + kept)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str, bos: bool = False, eos: bool = False) -> list[int]:
        ids = [self.index.get(tok, UNK_ID) for tok in tokenize(text)]
        if bos:
            ids.insert(0, BOS_ID)
        if eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] if 0 <= i < len(self.tokens) else UNK for i in ids]

    def detokenize(self, ids: list[int]) -> str:
        """Space-joined surface form, dropping pad/bos/eos."""
        drop = {PAD_ID, BOS_ID, EOS_ID}
        return " ".join(self.tokens[i] if 0 <= i < len(self.tokens) else UNK
                        for i in ids if i not in drop)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        return cls(tokens)

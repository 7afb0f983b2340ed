"""Character/word hybrid tokenizer and vocabulary.

CJK codepoints become single-character tokens; every other non-space run
(Latin words, digits, ASCII punctuation) is one whitespace-delimited token.
The vocabulary is built from a training split with min frequency 1 and a
fixed block of reserved tokens at the front, so token ids are stable across
runs for the same corpus.
"""

from collections import Counter
from collections.abc import Iterable

PAD = "<pad>"
UNK = "<unk>"
BOS = "<bos>"
EOS = "<eos>"
CLS = "<cls>"
SEP = "<sep>"
SEEKER_TOK = "<seeker>"
RECOMMENDER_TOK = "<recommender>"
TYPE_TOKENS = ("<qa>", "<chitchat>", "<recommendation>", "<task>")

RESERVED = (PAD, UNK, BOS, EOS, CLS, SEP, SEEKER_TOK, RECOMMENDER_TOK) + TYPE_TOKENS

_CJK_RANGES = (
    (0x3000, 0x303F),   # CJK symbols and punctuation
    (0x3400, 0x4DBF),   # ideograph extension A
    (0x4E00, 0x9FFF),   # unified ideographs
    (0xF900, 0xFAFF),   # compatibility ideographs
    (0xFF00, 0xFFEF),   # fullwidth forms
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[str]:
    """Split text into CJK characters and whitespace-delimited runs."""
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if ch.isspace():
            if run:
                tokens.append("".join(run))
                run = []
        elif is_cjk(ch):
            if run:
                tokens.append("".join(run))
                run = []
            tokens.append(ch)
        else:
            run.append(ch)
    if run:
        tokens.append("".join(run))
    return tokens


class Vocab:
    """Token <-> id mapping with a reserved-token prefix."""

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token: list[str] = list(RESERVED)
        seen = set(self.id_to_token)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                self.id_to_token.append(tok)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.unk_id
        return [self.token_to_id.get(t, unk) for t in tokens]

    def encode_text(self, text: str) -> list[int]:
        return self.encode(tokenize(text))

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def to_text(self, ids: Iterable[int]) -> str:
        """Render ids as a string, dropping specials and spacing Latin runs."""
        parts: list[str] = []
        for i in ids:
            tok = self.id_to_token[i]
            if tok in RESERVED:
                continue
            if parts and not is_cjk(tok[0]) and not is_cjk(parts[-1][-1]):
                parts.append(" ")
            parts.append(tok)
        return "".join(parts)

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 1) -> "Vocab":
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(tokenize(text))
        kept = sorted(t for t, c in counts.items() if c >= min_freq and t not in RESERVED)
        return cls(kept)

    def to_json(self) -> dict:
        return {"tokens": self.id_to_token[len(RESERVED):]}

    @classmethod
    def from_json(cls, data: dict) -> "Vocab":
        return cls(data["tokens"])

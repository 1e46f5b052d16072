"""SentencePiece-style BPE tokenizer with byte fallback.

Vocabulary comes from GGUF metadata. Encoding seeds per-character symbols
and greedily merges the adjacent pair whose merged piece has the highest
score; characters with no vocabulary entry fall back to their UTF-8 byte
tokens (<0xHH>).
"""

from __future__ import annotations

import codecs
import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

from .errors import InputError, ValidationError
from .gguf import TokenizerData

SPACE_PIECE = "▁"  # ▁


class TokenType(IntEnum):
    NORMAL = 1
    UNKNOWN = 2
    CONTROL = 3
    BYTE = 6


@dataclass
class Vocabulary:
    tokens: list[str]
    scores: list[float]
    types: list[TokenType]
    bos_id: int
    eos_id: int
    chat_template: Optional[str] = None

    _index: dict[str, int] = field(init=False, repr=False)
    _byte_ids: list[int] = field(init=False, repr=False)
    unk_id: int = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if not (len(self.scores) == len(self.types) == n):
            raise ValidationError("tokens/scores/types lengths differ")
        if not (0 <= self.bos_id < n and 0 <= self.eos_id < n):
            raise ValidationError("bos/eos id out of range")
        self._index = {}
        for i, tok in enumerate(self.tokens):
            self._index.setdefault(tok, i)
        self._byte_ids = [-1] * 256
        for b in range(256):
            tid = self._index.get(f"<0x{b:02X}>")
            if tid is not None and self.types[tid] == TokenType.BYTE:
                self._byte_ids[b] = tid
        unk = [i for i, t in enumerate(self.types) if t == TokenType.UNKNOWN]
        self.unk_id = unk[0] if unk else 0

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_tokenizer_data(cls, data: TokenizerData) -> "Vocabulary":
        return cls(
            tokens=list(data.tokens),
            scores=list(data.scores),
            types=[TokenType(t) for t in data.token_types],
            bos_id=data.bos_id,
            eos_id=data.eos_id,
            chat_template=data.chat_template,
        )

    def to_tokenizer_data(self) -> TokenizerData:
        return TokenizerData(
            model="llama",
            tokens=list(self.tokens),
            scores=list(self.scores),
            token_types=[int(t) for t in self.types],
            bos_id=self.bos_id,
            eos_id=self.eos_id,
            chat_template=self.chat_template,
        )

    def piece_id(self, piece: str) -> Optional[int]:
        return self._index.get(piece)

    def byte_id(self, b: int) -> int:
        return self._byte_ids[b]

    def control_pieces(self) -> dict[str, int]:
        return {
            tok: i for i, tok in enumerate(self.tokens)
            if self.types[i] == TokenType.CONTROL and tok
        }


class Tokenizer:
    def __init__(self, vocab: Vocabulary) -> None:
        self.vocab = vocab

    @property
    def bos_id(self) -> int:
        return self.vocab.bos_id

    @property
    def eos_id(self) -> int:
        return self.vocab.eos_id

    # -- encoding -----------------------------------------------------------

    def encode(self, text: str, add_bos: bool = False) -> list[int]:
        """Plain-text encode; never produces control tokens from text."""
        if not isinstance(text, str):
            raise InputError("encode expects a str")
        ids = [self.vocab.bos_id] if add_bos else []
        if text:
            ids.extend(self._encode_fragment(text, prefix_space=True))
        return ids

    def encode_with_specials(self, text: str, add_bos: bool = False) -> list[int]:
        """Encode text in which control-token strings map to their ids.

        Used by chat templating only; user content goes through encode().
        """
        specials = self.vocab.control_pieces()
        ids = [self.vocab.bos_id] if add_bos else []
        rest = text
        first = True
        while rest:
            hit = None
            for piece, tid in specials.items():
                pos = rest.find(piece)
                if pos != -1 and (hit is None or pos < hit[0]):
                    hit = (pos, piece, tid)
            if hit is None:
                ids.extend(self._encode_fragment(rest, prefix_space=first))
                break
            pos, piece, tid = hit
            if pos > 0:
                ids.extend(self._encode_fragment(rest[:pos], prefix_space=first))
                first = False
            ids.append(tid)
            first = False
            rest = rest[pos + len(piece):]
        return ids

    def _encode_fragment(self, text: str, prefix_space: bool) -> list[int]:
        if prefix_space:
            text = " " + text
        text = text.replace(" ", SPACE_PIECE)
        symbols: list[str] = list(text)
        return self._bpe(symbols)

    def _bpe(self, symbols: list[str]) -> list[int]:
        vocab = self.vocab
        n = len(symbols)
        if n == 0:
            return []
        # doubly linked list of live symbol slots
        prev = list(range(-1, n - 1))
        nxt = list(range(1, n + 1))
        alive = [True] * n

        heap: list[tuple[float, int, str]] = []

        def try_pair(left: int) -> None:
            right = nxt[left]
            if right >= n:
                return
            merged = symbols[left] + symbols[right]
            tid = vocab.piece_id(merged)
            if tid is not None and vocab.types[tid] == TokenType.NORMAL:
                heapq.heappush(heap, (-vocab.scores[tid], left, merged))

        for i in range(n - 1):
            try_pair(i)

        while heap:
            _, left, merged = heapq.heappop(heap)
            right = nxt[left] if left < n else n
            # stale entries: either side merged away since the push
            if left >= n or not alive[left] or right >= n or not alive[right]:
                continue
            if symbols[left] + symbols[right] != merged:
                continue
            symbols[left] = merged
            alive[right] = False
            nxt[left] = nxt[right]
            if nxt[right] < n:
                prev[nxt[right]] = left
            if prev[left] >= 0:
                try_pair(prev[left])
            try_pair(left)

        ids: list[int] = []
        i = 0
        while i != -1 and i < n:
            if alive[i]:
                ids.extend(self._piece_to_ids(symbols[i]))
            i = nxt[i]
        return ids

    def _piece_to_ids(self, piece: str) -> list[int]:
        tid = self.vocab.piece_id(piece)
        if tid is not None and self.vocab.types[tid] != TokenType.CONTROL:
            return [tid]
        # byte fallback
        out = []
        for b in piece.encode("utf-8"):
            bid = self.vocab.byte_id(b)
            out.append(bid if bid >= 0 else self.vocab.unk_id)
        return out

    # -- decoding -----------------------------------------------------------

    def _piece_bytes(self, tid: int, render_special: bool) -> bytes:
        vocab = self.vocab
        if not (0 <= tid < len(vocab)):
            raise InputError(f"token id {tid} out of range (vocab {len(vocab)})")
        ttype = vocab.types[tid]
        if ttype == TokenType.BYTE:
            return bytes([int(vocab.tokens[tid][1:-1], 16)])
        if ttype == TokenType.CONTROL:
            return vocab.tokens[tid].encode("utf-8") if render_special else b""
        if ttype == TokenType.UNKNOWN:
            return b""
        return vocab.tokens[tid].replace(SPACE_PIECE, " ").encode("utf-8")

    def decode(self, ids: Iterable[int], render_special: bool = False) -> str:
        raw = b"".join(self._piece_bytes(t, render_special) for t in ids)
        text = raw.decode("utf-8", errors="replace")
        # strip the single space added by encode normalization
        if text.startswith(" "):
            text = text[1:]
        return text

    def streaming_decoder(self, render_special: bool = False) -> "StreamingDecoder":
        return StreamingDecoder(self, render_special)


class StreamingDecoder:
    """Incremental decode holding back incomplete UTF-8 sequences.

    Concatenation of emitted chunks (plus flush) equals batch decode.
    """

    def __init__(self, tokenizer: Tokenizer, render_special: bool = False) -> None:
        self._tok = tokenizer
        self._render_special = render_special
        self._utf8 = codecs.getincrementaldecoder("utf-8")("replace")
        self._at_start = True

    def _emit(self, text: str) -> str:
        if self._at_start and text:
            if text.startswith(" "):
                text = text[1:]
            self._at_start = False
        return text

    def feed(self, token_id: int) -> str:
        raw = self._tok._piece_bytes(token_id, self._render_special)
        return self._emit(self._utf8.decode(raw, final=False))

    def flush(self) -> str:
        return self._emit(self._utf8.decode(b"", final=True))


def byte_fallback_vocab_entries() -> list[str]:
    """The 256 byte-token strings, <0x00> .. <0xFF>."""
    return [f"<0x{b:02X}>" for b in range(256)]

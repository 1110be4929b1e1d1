"""Character-level vocabulary with reserved single-token concept identifiers.

The base table has N ids: pad/bos/eos, newline, printable ASCII, and unused
reserved ids up to N. Expanding a vocabulary appends one id per concept
identifier; base ids are never remapped.
"""

from .errors import InputError

BASE_VOCAB_SIZE = 512

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2

_CHARS = "\n" + "".join(chr(c) for c in range(32, 127))
_CHAR_TO_ID = {ch: i + 3 for i, ch in enumerate(_CHARS)}
_ID_TO_CHAR = {i: ch for ch, i in _CHAR_TO_ID.items()}


class Vocabulary:
    """Base character vocabulary plus optional concept identifiers.

    Each identifier string (e.g. "<sks1>") tokenizes to exactly one id at
    BASE_VOCAB_SIZE + index.
    """

    def __init__(self, identifiers: tuple[str, ...] = ()):
        if len(set(identifiers)) != len(identifiers):
            raise InputError("identifier strings must be unique")
        for ident in identifiers:
            if not ident:
                raise InputError("identifier strings must be non-empty")
            for ch in ident:
                if ch not in _CHAR_TO_ID:
                    raise InputError(f"identifier {ident!r} uses unsupported character {ch!r}")
        self.identifiers = tuple(identifiers)
        self._ident_to_id = {
            ident: BASE_VOCAB_SIZE + i for i, ident in enumerate(identifiers)
        }

    @property
    def base_size(self) -> int:
        return BASE_VOCAB_SIZE

    @property
    def size(self) -> int:
        return BASE_VOCAB_SIZE + len(self.identifiers)

    def identifier_id(self, ident: str) -> int:
        try:
            return self._ident_to_id[ident]
        except KeyError:
            raise InputError(f"unknown identifier {ident!r}") from None

    def encode(self, text: str) -> list[int]:
        """Tokenize text; identifier substrings become single ids (longest match first)."""
        idents = sorted(self._ident_to_id, key=len, reverse=True)
        ids: list[int] = []
        i = 0
        while i < len(text):
            matched = False
            for ident in idents:
                if text.startswith(ident, i):
                    ids.append(self._ident_to_id[ident])
                    i += len(ident)
                    matched = True
                    break
            if matched:
                continue
            ch = text[i]
            if ch not in _CHAR_TO_ID:
                raise InputError(f"unsupported character {ch!r} in text")
            ids.append(_CHAR_TO_ID[ch])
            i += 1
        return ids

    def decode(self, ids) -> str:
        """Render ids back to text; control and reserved ids render as nothing."""
        parts = []
        for tid in ids:
            tid = int(tid)
            if tid >= BASE_VOCAB_SIZE:
                idx = tid - BASE_VOCAB_SIZE
                if idx < len(self.identifiers):
                    parts.append(self.identifiers[idx])
                continue
            ch = _ID_TO_CHAR.get(tid)
            if ch is not None:
                parts.append(ch)
        return "".join(parts)

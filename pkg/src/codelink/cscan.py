"""Comment-, literal- and preprocessor-aware brace scanner for C function definitions.

Works on raw bytes so that every reported offset is a byte offset. Only the
top-level declaration structure is analysed; function bodies are skipped by
brace matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ScanError

ID, PUNCT, LIT, NUM = 0, 1, 2, 3

_ID_START = frozenset(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_$") | frozenset(range(0x80, 0x100))
_ID_CONT = _ID_START | frozenset(b"0123456789")
_NUM_CONT = _ID_CONT | frozenset(b".")
_SPACE = frozenset(b" \t\r\f\v")

_ATTRIBUTE_WORDS = frozenset({
    b"__attribute__", b"__attribute", b"__declspec", b"__asm__", b"__asm", b"asm",
})
_KEYWORDS = _ATTRIBUTE_WORDS | frozenset(w.encode() for w in """
    if else while for do switch case default return goto break continue sizeof typeof
    __typeof__ __typeof _Alignof alignof _Alignas alignas _Static_assert static_assert
    _Generic void char short int long float double signed unsigned _Bool bool struct union
    enum const volatile static extern inline __inline __inline__ register restrict
    __restrict __restrict__ typedef auto __extension__ _Noreturn _Thread_local _Complex
""".split())


@dataclass(frozen=True)
class Span:
    name: str
    start: int
    end: int


@dataclass
class ScanResult:
    spans: list[Span]
    error: ScanError | None = None
    notes: list[str] = field(default_factory=list)


# -- tokenizer ----------------------------------------------------------------------


def _skip_line(data: bytes, i: int, n: int) -> int:
    """Advance to the newline ending a logical line (honours backslash continuations)."""
    while i < n:
        c = data[i]
        if c == 0x0A:
            return i
        if c == 0x5C and i + 1 < n and data[i + 1] in b"\r\n":
            i += 2
            if data[i - 1] == 0x0D and i < n and data[i] == 0x0A:
                i += 1
            continue
        i += 1
    return n


def _skip_block_comment(data: bytes, i: int, n: int) -> int:
    """``i`` points just after ``/*``; returns the index after ``*/`` or -1."""
    end = data.find(b"*/", i)
    return -1 if end < 0 else end + 2


def _skip_literal(data: bytes, i: int, n: int) -> int:
    """``i`` points at the opening quote. An unescaped newline also ends the literal."""
    quote = data[i]
    i += 1
    while i < n:
        c = data[i]
        if c == 0x5C:
            i += 2
            continue
        if c == quote:
            return i + 1
        if c == 0x0A:
            return i
        i += 1
    return n


def tokenize(data: bytes) -> tuple[list[tuple[int, int, int]], ScanError | None]:
    """Return ``(kind, start, end)`` tokens, skipping comments, whitespace and directives."""
    toks: list[tuple[int, int, int]] = []
    n = len(data)
    i = 0
    bol = True
    while i < n:
        c = data[i]
        if c == 0x0A:
            bol = True
            i += 1
        elif c in _SPACE:
            i += 1
        elif c == 0x2F and i + 1 < n and data[i + 1] == 0x2F:
            i = _skip_line(data, i + 2, n)
        elif c == 0x2F and i + 1 < n and data[i + 1] == 0x2A:
            j = _skip_block_comment(data, i + 2, n)
            if j < 0:
                return toks, ScanError("unterminated block comment", i)
            i = j
        elif c == 0x23 and bol:
            i = _skip_directive(data, i + 1, n)
            if i < 0:
                return toks, ScanError("unterminated block comment in directive", -i - 1)
        elif c == 0x5C and i + 1 < n and data[i + 1] in b"\r\n":
            i += 2
        else:
            bol = False
            if c == 0x22 or c == 0x27:
                j = _skip_literal(data, i, n)
                toks.append((LIT, i, j))
            elif c in _ID_START:
                j = i + 1
                while j < n and data[j] in _ID_CONT:
                    j += 1
                toks.append((ID, i, j))
            elif 0x30 <= c <= 0x39:
                j = i + 1
                while j < n and data[j] in _NUM_CONT:
                    j += 1
                toks.append((NUM, i, j))
            else:
                j = i + 1
                toks.append((PUNCT, i, j))
            i = j
    return toks, None


def _skip_directive(data: bytes, i: int, n: int) -> int:
    while i < n:
        c = data[i]
        if c == 0x0A:
            return i
        if c == 0x5C and i + 1 < n and data[i + 1] in b"\r\n":
            i += 2
        elif c == 0x2F and i + 1 < n and data[i + 1] == 0x2A:
            j = _skip_block_comment(data, i + 2, n)
            if j < 0:
                return -(i + 1)
            i = j
        elif c == 0x2F and i + 1 < n and data[i + 1] == 0x2F:
            return _skip_line(data, i + 2, n)
        elif c == 0x22 or c == 0x27:
            i = _skip_literal(data, i, n)
        else:
            i += 1
    return n


# -- top-level parser ---------------------------------------------------------------


class _Parser:
    def __init__(self, data: bytes, toks: list[tuple[int, int, int]]):
        self.data = data
        self.toks = toks
        self.spans: list[Span] = []
        self.notes: list[str] = []

    def text(self, k: int) -> bytes:
        _, s, e = self.toks[k]
        return self.data[s:e]

    def is_punct(self, k: int, ch: bytes) -> bool:
        kind, s, e = self.toks[k]
        return kind == PUNCT and self.data[s:e] == ch

    def is_name(self, k: int) -> bool:
        return self.toks[k][0] == ID and self.text(k) not in _KEYWORDS

    def match_brace(self, k: int) -> int:
        """Index of the ``}`` closing the ``{`` at ``k``; raises ScanError at EOF."""
        depth = 0
        data, toks = self.data, self.toks
        for j in range(k, len(toks)):
            kind, s, _ = toks[j]
            if kind != PUNCT:
                continue
            ch = data[s]
            if ch == 0x7B:
                depth += 1
            elif ch == 0x7D:
                depth -= 1
                if depth == 0:
                    return j
        raise ScanError("unbalanced braces at EOF", toks[k][1])

    def groups(self, decl: list[int]) -> list[tuple[int, int]]:
        """Depth-0 parenthesis groups within ``decl`` as (open_pos, close_pos) positions."""
        out = []
        depth = 0
        opener = 0
        for pos, k in enumerate(decl):
            if self.is_punct(k, b"("):
                if depth == 0:
                    opener = pos
                depth += 1
            elif self.is_punct(k, b")") and depth:
                depth -= 1
                if depth == 0:
                    out.append((opener, pos))
        return out

    def strip_trailing_attributes(self, decl: list[int]) -> list[int]:
        while decl and self.is_punct(decl[-1], b")"):
            groups = self.groups(decl)
            if not groups or groups[-1][1] != len(decl) - 1:
                break
            o, _ = groups[-1]
            if o > 0 and self.toks[decl[o - 1]][0] == ID and self.text(decl[o - 1]) in _ATTRIBUTE_WORDS:
                decl = decl[:o - 1]
            else:
                break
        return decl

    def kr_group(self, decl: list[int]) -> tuple[int, int] | None:
        """Match ``name ( a , b ) <type> <decl...>`` and return the parameter group."""
        if None in decl:
            return None
        groups = self.groups(decl)
        if not groups:
            return None
        o, c = groups[0]
        if o == 0 or not self.is_name(decl[o - 1]):
            return None
        inner = decl[o + 1:c]
        if not inner:
            return None
        for pos, k in enumerate(inner):
            want_name = pos % 2 == 0
            if want_name and not self.is_name(k):
                return None
            if not want_name and not self.is_punct(k, b","):
                return None
        if len(inner) % 2 == 0:
            return None
        rest = decl[c + 1:]
        if len(rest) < 2 or rest[0] is None or self.toks[rest[0]][0] != ID:
            return None
        if self.text(rest[0]) in _ATTRIBUTE_WORDS:
            return None
        if not self.kr_decl_ok(rest):
            return None
        return o, c

    def kr_decl_ok(self, seq: list[int]) -> bool:
        for k in seq:
            if k is None:
                return False
            kind, s, e = self.toks[k]
            if kind == PUNCT and self.data[s:e] not in (b"*", b",", b"[", b"]", b";"):
                return False
            if kind == LIT:
                return False
        return True

    def function_name(self, decl: list[int], kr: tuple[int, int] | None) -> tuple[str, int] | None:
        """Return (name, position of the name token) for a definition header, or None."""
        if any(k is None for k in decl):
            return None
        if kr is not None:
            if not self.is_punct(decl[-1], b";"):
                return None
            o = kr[0]
            return self.text(decl[o - 1]).decode("latin-1"), o - 1
        decl = self.strip_trailing_attributes(decl)
        if not decl or not self.is_punct(decl[-1], b")"):
            return None
        if self.text(decl[0]) == b"typedef":
            return None
        groups = self.groups(decl)
        depth = 0
        for k in decl:
            if self.is_punct(k, b"("):
                depth += 1
            elif self.is_punct(k, b")"):
                depth -= 1
            elif depth == 0 and self.is_punct(k, b"="):
                return None
        o, _ = groups[-1]
        if o > 0 and self.is_name(decl[o - 1]):
            return self.text(decl[o - 1]).decode("latin-1"), o - 1
        for pos in range(1, len(decl)):
            if self.is_punct(decl[pos], b"(") and self.is_name(decl[pos - 1]):
                return self.text(decl[pos - 1]).decode("latin-1"), pos - 1
        return None

    def header_start(self, decl: list[int], name_pos: int) -> int:
        """Drop a bodiless macro invocation that ends on an earlier line than the header."""
        first = 0
        for o, c in self.groups(decl[:name_pos]):
            if o == 0 or self.text(decl[o - 1]) in _ATTRIBUTE_WORDS:
                continue
            gap = self.data[self.toks[decl[c]][2]:self.toks[decl[c + 1]][1]]
            if b"\n" in gap:
                first = c + 1
        return self.toks[decl[first]][1]

    def run(self) -> ScanResult:
        toks = self.toks
        decl: list[int] = []  # token indices of the current top-level declaration; None marks a skipped {...}
        paren = 0
        linkage = 0
        kr: tuple[int, int] | None = None
        k = 0
        n = len(toks)
        while k < n:
            kind, s, e = toks[k]
            ch = self.data[s:e] if kind == PUNCT else b""
            if ch == b"(":
                paren += 1
            elif ch == b")":
                paren = max(0, paren - 1)
            if ch == b";" and paren == 0:
                decl.append(k)
                if kr is None:
                    kr = self.kr_group(decl)
                    if kr is None:
                        decl = []
                elif not self.kr_decl_ok(decl[kr[1] + 1:]):
                    self.notes.append(f"K&R-style header at byte {self.toks[decl[0]][1]} "
                                      "has no body; skipped")
                    decl, kr = [], None
                k += 1
                continue
            if ch == b"{":
                if paren == 0 and len(decl) == 2 and self.text(decl[0]) == b"extern" \
                        and toks[decl[1]][0] == LIT:
                    linkage += 1
                    decl, kr = [], None
                    k += 1
                    continue
                close = self.match_brace(k)
                named = self.function_name(decl, kr) if paren == 0 and decl else None
                if named is not None:
                    name, name_pos = named
                    start = self.header_start(decl, name_pos) if kr is None else toks[decl[0]][1]
                    self.spans.append(Span(name, start, toks[close][2]))
                    decl, kr, paren = [], None, 0
                else:
                    if kr is not None:
                        self.notes.append(f"K&R-style header at byte {toks[decl[0]][1]} "
                                          "not followed by a body; skipped")
                        kr = None
                    decl.append(None)
                k = close + 1
                continue
            if ch == b"}":
                if linkage and paren == 0:
                    linkage -= 1
                    decl, kr = [], None
                    k += 1
                    continue
                raise ScanError("unbalanced '}'", s)
            decl.append(k)
            k += 1
        return ScanResult(self.spans, None, self.notes)


def scan(data: bytes) -> ScanResult:
    """Find top-level function definitions. Never raises; errors land in ``ScanResult.error``."""
    toks, tok_err = tokenize(data)
    parser = _Parser(data, toks)
    try:
        result = parser.run()
    except ScanError as exc:
        exc.partial = list(parser.spans)
        return ScanResult(list(parser.spans), exc, parser.notes)
    if tok_err is not None:
        tok_err.partial = list(result.spans)
        result.error = tok_err
    return result

"""Read-only, anchor-producing access to raw long documents.

Documents are plain UTF-8 text files registered as-is: no indexing, chunking
or summarization happens up front. Every result points back into the file via
an :class:`Anchor` (document id plus a 1-based inclusive line range), so that
whatever the agent later commits can be re-read verbatim.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from . import tokens
from .errors import (
    AnchorOutOfRange,
    InvalidDocument,
    InvalidPattern,
    NotFound,
    StaleAnchor,
)

DEFAULT_OBSERVATION_BUDGET = 4000
DEFAULT_MAX_LINE_LENGTH = 4000
DEFAULT_GREP_MAX_MATCHES = 20
DEFAULT_SCAN_MAX_MATCHES = 50

_ANCHOR_RE = re.compile(r"^(?:(?P<doc>.+?)(?:@(?P<rev>\d+))?:)?(?P<start>\d+)(?:-(?P<end>\d+))?$")


@dataclass(frozen=True, order=True)
class Anchor:
    doc: str
    start_line: int
    end_line: int
    revision: int = 0

    def __post_init__(self):
        if self.start_line < 1 or self.end_line < self.start_line:
            raise AnchorOutOfRange(f"invalid line range {self.start_line}-{self.end_line}")

    def __str__(self) -> str:
        rev = f"@{self.revision}" if self.revision else ""
        return f"{self.doc}{rev}:{self.start_line}-{self.end_line}"

    @property
    def n_lines(self) -> int:
        return self.end_line - self.start_line + 1

    @classmethod
    def parse(cls, text: str, default_doc: str | None = None) -> "Anchor":
        """Parse ``doc:start-end`` (``doc`` optional when a default is given)."""
        m = _ANCHOR_RE.match(text.strip())
        if not m:
            raise AnchorOutOfRange(f"cannot parse anchor {text!r}")
        doc = m.group("doc") or default_doc
        if doc is None:
            raise AnchorOutOfRange(f"anchor {text!r} names no document")
        start = int(m.group("start"))
        end = int(m.group("end") or start)
        return cls(doc, start, end, int(m.group("rev") or 0))

    def to_dict(self) -> dict:
        return {"doc": self.doc, "start_line": self.start_line, "end_line": self.end_line}


@dataclass(frozen=True)
class DocumentHandle:
    id: str
    path: Path
    byte_size: int
    line_count: int
    estimated_tokens: int
    normalized: bool = False


@dataclass(frozen=True)
class FileInfo:
    byte_size: int
    estimated_tokens: int
    needs_normalization: bool
    line_count: int = 0

    def to_dict(self) -> dict:
        return {
            "file_size": self.byte_size,
            "estimated_tokens": self.estimated_tokens,
            "needs_normalization": self.needs_normalization,
            "line_count": self.line_count,
        }


@dataclass(frozen=True)
class MatchSnippet:
    anchor: Anchor
    matched_text: str
    line: str
    context_before: tuple[str, ...] = ()
    context_after: tuple[str, ...] = ()


@dataclass(frozen=True)
class Observation:
    text: str
    anchor: Anchor
    truncated: bool = False
    reason: str | None = None
    shown_end: int | None = None


class Matches(list):
    """Result list that also records whether a cap or budget cut it short."""

    def __init__(self, items=(), truncated: bool = False):
        super().__init__(items)
        self.truncated = truncated


@dataclass
class _Doc:
    id: str
    path: Path
    lines: list[str]
    trailing_newline: bool
    revision: int = 0
    normalized: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def byte_size(self) -> int:
        n = sum(len(line.encode("utf-8")) for line in self.lines)
        n += max(len(self.lines) - 1, 0) + (1 if self.trailing_newline else 0)
        return n


def split_records(text: str) -> tuple[list[str], bool]:
    """Split text into newline-delimited records; a final newline adds none."""
    if not text:
        return [], False
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
        return lines, True
    return lines, False


def check_regex_dialect(pattern: str) -> None:
    """Reject constructs outside the supported POSIX-ERE-like dialect.

    Accepted: literals, ``.``, ``[...]`` classes, ``^``/``$``, groups, ``|``,
    greedy quantifiers and the usual backslash escapes (``\\d \\w \\s \\b``).
    Rejected: ``(?...)`` extensions, backreferences, lazy quantifiers.
    """
    if not pattern:
        raise InvalidPattern("empty pattern")
    i, n = 0, len(pattern)
    in_class = False
    class_start = -1
    prev_quant = False
    while i < n:
        c = pattern[i]
        if c == "\\":
            if i + 1 >= n:
                raise InvalidPattern("trailing backslash")
            nxt = pattern[i + 1]
            if not in_class and (nxt in "123456789" or nxt in "kgP"):
                raise InvalidPattern(f"backreference \\{nxt} is not supported")
            i += 2
            prev_quant = False
            continue
        if in_class:
            if c == "]" and i > class_start:
                in_class = False
            i += 1
            continue
        if c == "[":
            in_class = True
            class_start = i + 1
            if class_start < n and pattern[class_start] == "^":
                class_start += 1
            # a leading ']' is a literal member
            i += 1
            prev_quant = False
            continue
        if c == "(" and i + 1 < n and pattern[i + 1] == "?":
            raise InvalidPattern("(?...) extensions are not supported")
        if c in "?+" and prev_quant:
            raise InvalidPattern("lazy/possessive quantifiers are not supported")
        if c in "*+?":
            prev_quant = True
        elif c == "}":
            prev_quant = True
        else:
            prev_quant = False
        i += 1
    if in_class:
        raise InvalidPattern("unterminated character class")


def compile_pattern(pattern: str, case_insensitive: bool = False) -> re.Pattern:
    check_regex_dialect(pattern)
    try:
        return re.compile(pattern, re.IGNORECASE if case_insensitive else 0)
    except re.error as exc:
        raise InvalidPattern(f"bad regex {pattern!r}: {exc}") from exc


def _check_glob(pattern: str) -> None:
    if not pattern:
        raise InvalidPattern("empty glob pattern")
    depth = 0
    for c in pattern:
        if c == "[":
            depth += 1
        elif c == "]" and depth:
            depth -= 1
    if depth:
        raise InvalidPattern(f"unbalanced '[' in glob {pattern!r}")


class DocumentEnv:
    """Registry of raw documents plus the foraging primitives over them.

    Content is loaded once at registration and never modified afterwards,
    except by :meth:`normalize_document`, which rewrites the in-memory
    working copy (the file on disk is left alone) and bumps the document
    revision so older anchors stop resolving.
    """

    def __init__(
        self,
        observation_budget: int = DEFAULT_OBSERVATION_BUDGET,
        tokenizer: str | None = None,
        max_line_length: int = DEFAULT_MAX_LINE_LENGTH,
        grep_max_matches: int = DEFAULT_GREP_MAX_MATCHES,
        scan_max_matches: int = DEFAULT_SCAN_MAX_MATCHES,
    ):
        if observation_budget <= 0:
            raise ValueError("observation_budget must be positive")
        self.observation_budget = observation_budget
        self.tokenizer = tokenizer
        tokens.get_tokenizer(tokenizer)
        self.max_line_length = max_line_length
        self.grep_max_matches = grep_max_matches
        self.scan_max_matches = scan_max_matches
        self._docs: dict[str, _Doc] = {}
        self._by_path: dict[Path, str] = {}
        self._lock = threading.Lock()

    # -- registration --------------------------------------------------

    def register_document(self, path) -> DocumentHandle:
        p = Path(path)
        if not p.is_file():
            raise NotFound(f"no such file: {p}")
        resolved = p.resolve()
        with self._lock:
            if resolved in self._by_path:
                return self.handle(self._by_path[resolved])
        raw = p.read_bytes()
        if b"\x00" in raw:
            raise InvalidDocument(f"{p} looks binary (NUL byte)")
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidDocument(f"{p} is not valid UTF-8: {exc}") from exc
        lines, trailing = split_records(text)
        with self._lock:
            if resolved in self._by_path:
                return self.handle(self._by_path[resolved])
            doc_id = p.name
            k = 2
            while doc_id in self._docs:
                doc_id = f"{p.name}~{k}"
                k += 1
            self._docs[doc_id] = _Doc(doc_id, resolved, lines, trailing)
            self._by_path[resolved] = doc_id
        return self.handle(doc_id)

    def _doc(self, doc) -> _Doc:
        key = doc.id if isinstance(doc, DocumentHandle) else doc
        try:
            return self._docs[key]
        except KeyError:
            raise NotFound(f"unknown document {key!r}") from None

    def resolve(self, source) -> str:
        """Map a document id, handle, path or file name to a document id."""
        if isinstance(source, DocumentHandle):
            return self._doc(source.id).id
        source = str(source)
        if source in self._docs:
            return source
        try:
            resolved = Path(source).resolve()
        except OSError:
            resolved = None
        if resolved in self._by_path:
            return self._by_path[resolved]
        named = [d.id for d in self._docs.values() if d.path.name == source]
        if len(named) == 1:
            return named[0]
        raise NotFound(f"unknown document {source!r}")

    @property
    def documents(self) -> list[str]:
        return sorted(self._docs, key=lambda k: str(self._docs[k].path))

    def handle(self, doc) -> DocumentHandle:
        d = self._doc(doc)
        size = d.byte_size
        return DocumentHandle(
            id=d.id,
            path=d.path,
            byte_size=size,
            line_count=len(d.lines),
            estimated_tokens=tokens.estimate_tokens_from_bytes(size),
            normalized=d.normalized,
        )

    def revision(self, doc) -> int:
        return self._doc(doc).revision

    def line_count(self, doc) -> int:
        return len(self._doc(doc).lines)

    def text(self, doc) -> str:
        d = self._doc(doc)
        return "\n".join(d.lines) + ("\n" if d.trailing_newline else "")

    def anchor(self, doc, start_line: int, end_line: int | None = None) -> Anchor:
        d = self._doc(doc)
        return Anchor(d.id, start_line, start_line if end_line is None else end_line, d.revision)

    # -- metadata ------------------------------------------------------

    def get_file_info(self, doc) -> FileInfo:
        d = self._doc(doc)
        size = d.byte_size
        return FileInfo(
            byte_size=size,
            estimated_tokens=tokens.estimate_tokens_from_bytes(size),
            needs_normalization=any(len(line) > self.max_line_length for line in d.lines),
            line_count=len(d.lines),
        )

    def glob(self, pattern: str, scope=None) -> list[str]:
        _check_glob(pattern)
        root = Path(scope).resolve() if scope is not None else None
        hits = []
        for d in self._docs.values():
            if root is not None and root not in d.path.parents:
                continue
            if PurePosixPath(d.path.as_posix()).match(pattern):
                hits.append((str(d.path), d.id))
        return [doc_id for _, doc_id in sorted(hits)]

    # -- lexical search ------------------------------------------------

    def _line_range(self, d: _Doc, scope) -> tuple[int, int]:
        n = len(d.lines)
        if scope is None:
            return 1, n
        if isinstance(scope, Anchor):
            if scope.doc != d.id:
                raise AnchorOutOfRange(f"scope {scope} is not in document {d.id}")
            start, end = scope.start_line, scope.end_line
        elif isinstance(scope, str):
            a = Anchor.parse(scope, default_doc=d.id)
            start, end = a.start_line, a.end_line
        else:
            start, end = scope
        if start < 1 or end < start:
            raise AnchorOutOfRange(f"bad scope {start}-{end}")
        return start, min(end, n)

    def grep(
        self,
        doc,
        pattern: str,
        context: int | None = None,
        case_insensitive: bool = False,
        max_matches: int | None = None,
        scope=None,
    ) -> Matches:
        """Lines matching ``pattern``, in ascending order, one snippet per line.

        ``max_matches=None`` applies the environment default; pass ``0`` for
        no cap. Output is additionally bounded by the observation budget.
        """
        rx = compile_pattern(pattern, case_insensitive)
        d = self._doc(doc)
        ctx = max(context or 0, 0)
        cap = self.grep_max_matches if max_matches is None else max_matches
        start, end = self._line_range(d, scope)
        lines = d.lines
        out = Matches()
        used = 0
        for i in range(start - 1, end):
            m = rx.search(lines[i])
            if m is None:
                continue
            if cap and len(out) >= cap:
                out.truncated = True
                break
            before = tuple(lines[max(0, i - ctx):i])
            after = tuple(lines[i + 1:i + 1 + ctx])
            cost = self._count("\n".join((*before, lines[i], *after)))
            if out and used + cost > self.observation_budget:
                out.truncated = True
                break
            used += cost
            out.append(MatchSnippet(Anchor(d.id, i + 1, i + 1, d.revision), m.group(0), lines[i], before, after))
            if used > self.observation_budget:
                out.truncated = True
                break
        return out

    def scan(
        self,
        doc,
        pattern: str,
        scope=None,
        case_insensitive: bool = False,
        max_matches: int | None = None,
    ) -> Matches:
        """Locations (anchors only, never body text) of structural markers."""
        rx = compile_pattern(pattern, case_insensitive)
        d = self._doc(doc)
        cap = self.scan_max_matches if max_matches is None else max_matches
        start, end = self._line_range(d, scope)
        out = Matches()
        used = 0
        for i in range(start - 1, end):
            if rx.search(d.lines[i]) is None:
                continue
            if cap and len(out) >= cap:
                out.truncated = True
                break
            a = Anchor(d.id, i + 1, i + 1, d.revision)
            cost = self._count(str(a))
            if out and used + cost > self.observation_budget:
                out.truncated = True
                break
            used += cost
            out.append(a)
        return out

    # -- dense reading -------------------------------------------------

    def _check_anchor(self, anchor: Anchor) -> _Doc:
        d = self._doc(anchor.doc)
        if anchor.revision != d.revision:
            raise StaleAnchor(f"anchor {anchor} predates revision {d.revision} of {d.id}")
        if anchor.end_line > len(d.lines):
            raise AnchorOutOfRange(f"anchor {anchor} exceeds {len(d.lines)} lines of {d.id}")
        return d

    def read(self, anchor: Anchor, limit: int | None = None) -> Observation:
        d = self._check_anchor(anchor)
        if limit is not None and limit < 1:
            raise AnchorOutOfRange(f"limit must be >= 1, got {limit}")
        end = anchor.end_line if limit is None else min(anchor.end_line, anchor.start_line + limit - 1)
        reason = "limit" if end < anchor.end_line else None
        kept: list[str] = []
        for line in d.lines[anchor.start_line - 1:end]:
            # joined text costs at least as much as its pieces, so check the join
            candidate = "\n".join((*kept, line))
            cost = self._count(candidate)
            if cost > self.observation_budget:
                if not kept:
                    prefix, _ = tokens.truncate_to_tokens(line, self.observation_budget, self.tokenizer)
                    kept.append(prefix)
                reason = "observation budget"
                break
            kept.append(line)
        text = "\n".join(kept)
        shown = anchor.start_line + len(kept) - 1 if kept else anchor.start_line - 1
        return Observation(text, anchor, truncated=reason is not None, reason=reason, shown_end=shown)

    def read_lines(self, doc, offset: int, limit: int | None = None) -> Observation:
        """``offset``/``limit`` style read; the window is clipped at end of file."""
        d = self._doc(doc)
        n = len(d.lines)
        if offset < 1 or offset > n:
            raise AnchorOutOfRange(f"offset {offset} outside 1..{n} of {d.id}")
        end = n if limit is None else min(n, offset + limit - 1)
        return self.read(Anchor(d.id, offset, end, d.revision))

    def resolves(self, anchor: Anchor) -> bool:
        try:
            self._check_anchor(anchor)
        except (AnchorOutOfRange, NotFound):
            return False
        return True

    # -- utilities -----------------------------------------------------

    def _count(self, text: str) -> int:
        return tokens.count_tokens(text, self.tokenizer)

    def count_tokens(self, text: str, tokenizer: str | None = None) -> int:
        return tokens.count_tokens(text, tokenizer or self.tokenizer)

    def normalize_document(self, doc, max_length: int | None = None) -> FileInfo:
        cap = max_length or self.max_line_length
        if cap < 1:
            raise ValueError("max_length must be >= 1")
        d = self._doc(doc)
        with d.lock:
            if any(len(line) > cap for line in d.lines):
                out = []
                for line in d.lines:
                    if len(line) <= cap:
                        out.append(line)
                    else:
                        out.extend(line[i:i + cap] for i in range(0, len(line), cap))
                d.lines = out
                d.revision += 1
                d.normalized = True
        return self.get_file_info(doc)

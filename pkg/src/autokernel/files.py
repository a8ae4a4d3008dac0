"""File perception: Operate / Navigate / Search / Read over uploaded files.

Files are extracted to plain text, paginated at a character budget snapped to
paragraph boundaries, and every page is ingested into the memory kernel at
load time so Search can run semantic retrieval scoped to the file.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field

from . import memory as memkernel
from .errors import (
    BudgetUnsatisfiable,
    ExtractionFailed,
    RangeOutOfBounds,
    UnsupportedMediaType,
)
from .policy import OBS_OMITTED
from .tokenizer import count_tokens

DEFAULT_PAGE_SIZE = 3000
DEFAULT_READ_BUDGET = 4000
FIND_TERM_CAP = 100


@dataclass
class FileHandle:
    file_id: str
    pages: list[str]
    current_page: int
    meta: dict  # filename, media_type, page_count, char_count, original_pages
    index_ref: list[str]  # memory-kernel doc_ids, one per page


# ---------------------------------------------------------------------------
# Extractors (bytes -> {text, page_map})
# ---------------------------------------------------------------------------


class PlainTextExtractor:
    media_types = ("text/plain", "text/markdown")
    extensions = (".txt", ".md", ".text", ".log")

    def extract(self, data: bytes) -> dict:
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExtractionFailed(f"not valid utf-8: {exc}") from exc
        return {"text": text, "page_map": []}


_PDF_STREAM = re.compile(rb"stream\r?\n(.*?)endstream", re.DOTALL)
_PDF_TEXT_SHOW = re.compile(rb"\((?P<body>(?:\\.|[^()\\])*)\)\s*(?:Tj|')")
_PDF_TEXT_ARRAY = re.compile(rb"\[(?P<body>[^\]]*)\]\s*TJ")
_PDF_ARRAY_STRING = re.compile(rb"\((?:\\.|[^()\\])*\)")
_PDF_ESCAPE = re.compile(rb"\\([nrtbf()\\]|[0-7]{1,3})")


def _pdf_unescape(raw: bytes) -> str:
    def sub(m):
        code = m.group(1)
        simple = {b"n": b"\n", b"r": b"\r", b"t": b"\t", b"b": b"\b",
                  b"f": b"\f", b"(": b"(", b")": b")", b"\\": b"\\"}
        if code in simple:
            return simple[code]
        return bytes([int(code, 8) & 0xFF])

    return _PDF_ESCAPE.sub(sub, raw).decode("latin-1")


def _decode_stream(raw: bytes, zlib) -> bytes:
    """Best-effort content stream decoding: Flate, ASCII85(+Flate), or raw."""
    import base64

    try:
        return zlib.decompress(raw)
    except zlib.error:
        pass
    try:
        decoded = base64.a85decode(raw, adobe=True, ignorechars=b" \t\r\n")
    except ValueError:
        return raw
    try:
        return zlib.decompress(decoded)
    except zlib.error:
        return decoded


class PdfTextExtractor:
    """Minimal text-only PDF extraction: Flate-decoded content streams,
    Tj/TJ show operators, one extracted block per content stream. Handles
    simply-encoded PDFs (the pluggable extractor boundary covers the rest);
    original stream indexes are kept as page numbers for citation."""

    media_types = ("application/pdf",)
    extensions = (".pdf",)

    def extract(self, data: bytes) -> dict:
        import zlib

        if not data.startswith(b"%PDF"):
            raise ExtractionFailed("not a PDF file")
        parts = []
        page_map = []
        offset = 0
        for raw in _PDF_STREAM.findall(data):
            content = _decode_stream(raw.rstrip(b"\r\n"), zlib)
            if b"BT" not in content:
                continue
            pieces = []
            for m in _PDF_TEXT_SHOW.finditer(content):
                pieces.append(_pdf_unescape(m.group("body")))
            for m in _PDF_TEXT_ARRAY.finditer(content):
                for s in _PDF_ARRAY_STRING.findall(m.group("body")):
                    pieces.append(_pdf_unescape(s[1:-1]))
            if not pieces:
                continue
            text = "\n".join(pieces)
            parts.append(text)
            page_map.append({"pdf_page": len(parts), "char_offset": offset})
            offset += len(text) + 2
        if not parts:
            raise ExtractionFailed("no extractable text in PDF")
        return {"text": "\n\n".join(parts), "page_map": page_map}


def paginate(text: str, page_size: int = DEFAULT_PAGE_SIZE) -> list[str]:
    """Character pagination snapped to the last paragraph break in the window.

    Lossless: ''.join(pages) == text.
    """
    pages = []
    start = 0
    while start < len(text):
        end = start + page_size
        if end >= len(text):
            pages.append(text[start:])
            break
        window = text[start:end]
        cut = window.rfind("\n\n")
        if cut > 0:
            end = start + cut + 2  # keep the break with the earlier page
        pages.append(text[start:end])
        start = end
    return pages


# ---------------------------------------------------------------------------
# Manager
# ---------------------------------------------------------------------------


class FileManager:
    """Owns uploaded file handles for one deployment; handles are confined to
    their owning chat session by the gateway layer."""

    def __init__(self, memory_store: memkernel.MemoryStore, extractor=None,
                 embedder=None, page_size: int = DEFAULT_PAGE_SIZE,
                 read_budget: int = DEFAULT_READ_BUDGET):
        self.memory_store = memory_store
        self.prop_extractor = extractor or memkernel.RuleBasedExtractor()
        self.embedder = embedder or memkernel.embed_reference
        self.page_size = page_size
        self.read_budget = read_budget
        self._handles: dict[str, FileHandle] = {}
        self._extractors = [PlainTextExtractor(), PdfTextExtractor()]

    def register_extractor(self, extractor):
        self._extractors.append(extractor)

    def _pick_extractor(self, filename: str, media_type: str | None):
        for extractor in self._extractors:
            if media_type and media_type in extractor.media_types:
                return extractor
            if any(filename.lower().endswith(ext) for ext in extractor.extensions):
                return extractor
        raise UnsupportedMediaType(f"no extractor for {filename!r} ({media_type})")

    # -- operations

    def load(self, data: bytes, filename: str, media_type: str | None = None,
             user_id: str = "") -> FileHandle:
        extractor = self._pick_extractor(filename, media_type)
        extracted = extractor.extract(data)
        text = extracted["text"]
        if not text.strip():
            raise ExtractionFailed(f"{filename!r} contained no extractable text")
        pages = paginate(text, self.page_size)
        file_id = uuid.uuid4().hex
        doc_ids = []
        for page_index, page in enumerate(pages):
            doc_ids.append(memkernel.ingest(
                page,
                {"timestamp": "", "source": "file", "user_id": user_id,
                 "file_id": file_id, "page": page_index},
                self.prop_extractor, self.embedder, self.memory_store,
            ))
        handle = FileHandle(
            file_id=file_id,
            pages=pages,
            current_page=0,
            meta={
                "filename": filename,
                "media_type": media_type or "text/plain",
                "page_count": len(pages),
                "char_count": len(text),
                "original_pages": extracted.get("page_map", []),
                "user_id": user_id,
            },
            index_ref=doc_ids,
        )
        self._handles[file_id] = handle
        return handle

    def get(self, file_id: str) -> FileHandle:
        handle = self._handles.get(file_id)
        if handle is None:
            raise RangeOutOfBounds(f"unknown file {file_id!r}")
        return handle

    def operate(self, handle: FileHandle, op: str, **args):
        if op == "count_occurrences":
            return self.count_occurrences(handle, args["term"])
        if op == "find_term":
            return self.find_term(handle, args["term"])
        if op == "extract_range":
            return self.extract_range(handle, args["start"], args["end"])
        raise ValueError(f"unknown operation {op!r}")

    @staticmethod
    def count_occurrences(handle: FileHandle, term: str) -> int:
        """Case-insensitive non-overlapping substring count over the whole doc."""
        if not term:
            return 0
        return "".join(handle.pages).lower().count(term.lower())

    @staticmethod
    def find_term(handle: FileHandle, term: str) -> list[tuple[int, int]]:
        hits = []
        needle = term.lower()
        for page_index, page in enumerate(handle.pages):
            start = 0
            lowered = page.lower()
            while True:
                offset = lowered.find(needle, start)
                if offset < 0:
                    break
                hits.append((page_index, offset))
                if len(hits) >= FIND_TERM_CAP:
                    return hits
                start = offset + len(needle)
        return hits

    @staticmethod
    def extract_range(handle: FileHandle, start: int, end: int) -> str:
        if start < 0 or end >= len(handle.pages) or start > end:
            raise RangeOutOfBounds(f"pages {start}..{end} of {len(handle.pages)}")
        return "".join(handle.pages[start:end + 1])

    @staticmethod
    def navigate(handle: FileHandle, target) -> str:
        if target == "next":
            wanted = handle.current_page + 1
        elif target == "prev":
            wanted = handle.current_page - 1
        else:
            wanted = int(target)
        if wanted < 0 or wanted >= len(handle.pages):
            raise RangeOutOfBounds(
                f"page {wanted} outside 0..{len(handle.pages) - 1}"
            )
        handle.current_page = wanted
        return handle.pages[wanted]

    def search(self, handle: FileHandle, query: str, k: int = 5):
        """Semantic retrieval scoped to this file's pages."""
        drafts = []
        try:
            drafts = self.prop_extractor.extract(query)
        except Exception:
            pass
        concepts = sorted({c for d in drafts for c in d.mentioned_concepts})
        q = memkernel.RetrievalQuery(
            text=query, query_emb=self.embedder(query), concepts=concepts,
            k=min(k, len(handle.pages)),
        )
        result = memkernel.retrieve(
            q, self.memory_store, user_id=handle.meta.get("user_id", ""),
            doc_ids=set(handle.index_ref),
        )
        out = []
        for entry in result.entries:
            page_index = handle.index_ref.index(entry.doc_id)
            out.append((page_index, entry.score, handle.pages[page_index]))
        return out

    def read(self, handle: FileHandle, request) -> list[str]:
        """Package evidence fragments for the policy, within the read budget.

        `request` is either a (start, end) page range or a question string.
        Understanding and synthesis stay with the policy; this only selects
        and budgets the raw material.
        """
        if isinstance(request, tuple):
            start, end = request
            selected = [
                (i, handle.pages[i]) for i in range(start, end + 1)
            ] if 0 <= start <= end < len(handle.pages) else None
            if selected is None:
                raise RangeOutOfBounds(f"pages {start}..{end}")
        else:
            hits = self.search(handle, str(request), k=3)
            selected = [(page_index, text) for page_index, _, text in hits]

        fragments = [
            f"[{handle.meta['filename']} page {page_index}]\n{text}"
            for page_index, text in selected
        ]

        def total():
            return sum(count_tokens(f) for f in fragments)

        # oldest-first omission, newest fragment always kept
        for i in range(len(fragments) - 1):
            if total() <= self.read_budget:
                break
            page_index = selected[i][0]
            fragments[i] = f"[{handle.meta['filename']} page {page_index}]\n{OBS_OMITTED}"
        if total() > self.read_budget:
            raise BudgetUnsatisfiable(
                f"read needs {total()} tokens; budget {self.read_budget}"
            )
        return fragments

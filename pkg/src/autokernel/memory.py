"""Multi-granularity memory: ingest, four-way matching, max-similarity merge.

Documents are decomposed into propositions and (concept, perspective) pairs at
ingest time and embedded at every granularity. Retrieval runs four matchers
(document-level soft, proposition-level soft, concept+perspective soft, and
mentioned-concept hard matching) and merges per document by maximum score.

Record schema version: mem/v1.
"""

from __future__ import annotations

import json
import re
import sqlite3
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import EmbedderFailure, StorageUnavailable

SCHEMA_VERSION = "mem/v1"

EMBED_DIM = 256

# Provenance labels in tie-break priority order (highest first).
PROVENANCE_PRIORITY = ("doc_soft", "prop_soft", "concept_soft", "concept_hard")


# ---------------------------------------------------------------------------
# Reference embedder
# ---------------------------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TOKEN = re.compile(r"[a-z0-9]+")


def _fnv1a_64(token: str) -> int:
    """FNV-1a 64-bit hash, the published hash for the reference embedder."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def embed_reference(text: str) -> np.ndarray:
    """Deterministic bag-of-words test embedder.

    Lowercase, split on non-alphanumerics, hash each token (FNV-1a 64) to a
    bucket mod 256, accumulate term frequency, L2-normalize. Empty or
    token-free text yields the all-zero vector (unembeddable marker).
    """
    vec = np.zeros(EMBED_DIM, dtype=np.float64)
    for token in _TOKEN.findall(text.lower()):
        vec[_fnv1a_64(token) % EMBED_DIM] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; inputs are unit (or zero) vectors so a plain dot."""
    return float(np.dot(a, b))


def normalize_concept(text: str) -> str:
    """Unicode-lowercase + whitespace collapse; no stemming."""
    return " ".join(text.lower().split())


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class Proposition:
    prop_id: str
    text: str
    concept: str
    perspective: str
    mentioned_concepts: list[str]
    prop_emb: np.ndarray | None = None
    cp_emb: np.ndarray | None = None


@dataclass
class MemoryRecord:
    doc_id: str
    text: str
    doc_emb: np.ndarray
    propositions: list[Proposition]
    meta: dict
    degraded: bool = False

    @property
    def mentioned_concepts(self) -> set[str]:
        out: set[str] = set()
        for prop in self.propositions:
            out.update(prop.mentioned_concepts)
        return out


@dataclass
class RetrievalQuery:
    text: str
    query_emb: np.ndarray
    concepts: list[str] = field(default_factory=list)
    perspective: str | None = None
    k: int = 10


@dataclass
class RankedEntry:
    doc_id: str
    score: float
    provenance: frozenset[str]


@dataclass
class RankedResult:
    entries: list[RankedEntry]


# ---------------------------------------------------------------------------
# Rule-based extractor (deterministic test double)
# ---------------------------------------------------------------------------

_ARTICLES = {"the", "a", "an"}
_PRONOUNS = {"it", "he", "she", "they", "we", "i", "you", "this", "that"}

# Small gazetteer for the "is in <place>" perspective rule.
_COUNTRIES = {
    "china", "france", "germany", "japan", "india", "egypt", "brazil",
    "canada", "australia", "italy", "spain", "russia", "mexico", "kenya",
    "usa", "united states", "uk", "united kingdom", "vietnam", "peru",
}

_CAP_RUN = re.compile(r"(?:[A-Z][\w',.-]*)(?:\s+[A-Z][\w',.-]*)*")


@dataclass
class PropositionDraft:
    text: str
    concept: str
    perspective: str
    mentioned_concepts: list[str]


def _capitalized_phrases(text: str) -> list[str]:
    """Maximal runs of capitalized words, with leading articles stripped."""
    phrases = []
    for match in _CAP_RUN.finditer(text):
        words = match.group(0).split()
        while words and words[0].lower() in _ARTICLES:
            words = words[1:]
        # drop trailing punctuation stuck to the last word
        words = [w.strip("',.") for w in words]
        words = [w for w in words if w]
        if not words:
            continue
        if len(words) == 1 and words[0].lower() in _PRONOUNS:
            continue
        phrases.append(" ".join(words))
    return phrases


def _head_noun(phrase: str) -> str:
    words = [w.strip("',.") for w in phrase.split() if w.strip("',.")]
    return words[-1] if words else phrase.strip()


class RuleBasedExtractor:
    """Deterministic proposition/concept extractor for tests and offline use.

    Sentences split on terminal punctuation, clauses on coordinating "and";
    a clause missing its subject inherits the sentence subject. The concept
    is the longest capitalized noun phrase, the perspective the head word of
    the predicate (with a couple of rewrite rules for common attribute
    patterns).
    """

    def extract(self, text: str) -> list[PropositionDraft]:
        drafts: list[PropositionDraft] = []
        for sentence in re.split(r"(?<=[.!?])\s+", text.strip()):
            sentence = sentence.strip().rstrip(".!?").strip()
            if not sentence:
                continue
            drafts.extend(self._split_sentence(sentence))
        return drafts

    def _split_sentence(self, sentence: str) -> list[PropositionDraft]:
        clauses = [c.strip() for c in re.split(r",?\s+and\s+|;\s*", sentence) if c.strip()]
        subject = self._subject_of(clauses[0]) if clauses else ""
        drafts = []
        for clause in clauses:
            drafts.append(self._clause_to_draft(clause, subject))
        return drafts

    def _subject_of(self, clause: str) -> str:
        phrases = _capitalized_phrases(clause)
        if phrases:
            return max(phrases, key=lambda p: (len(p.split()), len(p)))
        words = clause.split()
        if words and words[0].lower() in _ARTICLES and len(words) > 1:
            return words[1]
        return words[0] if words else ""

    def _clause_to_draft(self, clause: str, carry_subject: str) -> PropositionDraft:
        subject = carry_subject

        # Subject-less clause produced by conjunction splitting, e.g.
        # "has a length of 5,464 km".
        m = re.match(r"^has\s+(?:a|an|the)\s+(\w+)\s+of\s+(.+)$", clause, re.IGNORECASE)
        if m:
            attr, value = m.group(1), m.group(2)
            text = f"The {attr} of {subject} is {value}"
            return self._finish(text, concept=subject, perspective=attr.lower())

        # Explicit "The <attr> of <np> is <value>" form.
        m = re.match(r"^the\s+(\w+)\s+of\s+(.+?)\s+is\s+.+$", clause, re.IGNORECASE)
        if m:
            attr = m.group(1)
            concept = self._subject_of(m.group(2)) or m.group(2)
            return self._finish(clause, concept=concept, perspective=attr.lower())

        # Location predicate: "<subject> is in <place>".
        m = re.match(r"^(.+?)\s+is\s+(?:located\s+)?in\s+(.+)$", clause, re.IGNORECASE)
        if m:
            subject = self._subject_of(m.group(1)) or subject
            place = normalize_concept(m.group(2))
            perspective = "country" if place in _COUNTRIES else "location"
            return self._finish(clause, concept=subject, perspective=perspective)

        # Copula: perspective is the head noun of the complement.
        m = re.match(r"^(.+?)\s+(?:is|are|was|were)\s+(.+)$", clause, re.IGNORECASE)
        if m:
            subject = self._subject_of(m.group(1)) or subject
            return self._finish(clause, concept=subject, perspective=_head_noun(m.group(2)).lower())

        # Fallback: perspective is the first word after the subject.
        words = clause.split()
        subj_words = len(subject.split()) if subject and clause.lower().startswith(
            (subject.lower(), "the " + subject.lower())
        ) else 0
        if subj_words and clause.lower().startswith("the "):
            subj_words += 1
        predicate_head = words[subj_words] if subj_words < len(words) else (words[-1] if words else "")
        concept = self._subject_of(clause) or subject
        return self._finish(clause, concept=concept, perspective=predicate_head.lower())

    def _finish(self, text: str, concept: str, perspective: str) -> PropositionDraft:
        text = text[0].upper() + text[1:] if text else text
        mentioned = []
        seen = set()
        for phrase in _capitalized_phrases(text):
            norm = normalize_concept(phrase)
            if norm not in seen:
                seen.add(norm)
                mentioned.append(norm)
        return PropositionDraft(
            text=text,
            concept=concept,
            perspective=perspective,
            mentioned_concepts=mentioned,
        )


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


class MemoryStore:
    """Record store with exact brute-force matching at desk scale.

    Reads take a consistent snapshot; ingest is serialized per user_id
    partition. When a sqlite path is given, records are mirrored to disk
    (mem/v1 schema) and reloaded on construction.
    """

    def __init__(self, path: str | None = None):
        self._records: dict[str, dict[str, MemoryRecord]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global_lock = threading.Lock()
        self._path = path
        self._db = None
        if path is not None:
            self._db = sqlite3.connect(path, check_same_thread=False)
            self._db.execute(
                "CREATE TABLE IF NOT EXISTS records ("
                " doc_id TEXT PRIMARY KEY, user_id TEXT, schema TEXT, body TEXT)"
            )
            self._db.commit()
            self._load()

    def _user_lock(self, user_id: str) -> threading.Lock:
        with self._global_lock:
            if user_id not in self._locks:
                self._locks[user_id] = threading.Lock()
                self._records.setdefault(user_id, {})
            return self._locks[user_id]

    def _load(self):
        for user_id, body in self._db.execute("SELECT user_id, body FROM records"):
            record = _record_from_json(body)
            self._records.setdefault(user_id, {})[record.doc_id] = record
            self._locks.setdefault(user_id, threading.Lock())

    def add(self, record: MemoryRecord):
        user_id = record.meta.get("user_id", "")
        with self._user_lock(user_id):
            self._records[user_id][record.doc_id] = record
            if self._db is not None:
                try:
                    self._db.execute(
                        "INSERT OR REPLACE INTO records VALUES (?, ?, ?, ?)",
                        (record.doc_id, user_id, SCHEMA_VERSION, _record_to_json(record)),
                    )
                    self._db.commit()
                except sqlite3.Error as exc:  # pragma: no cover
                    raise StorageUnavailable(str(exc)) from exc

    def get(self, doc_id: str, user_id: str = "") -> MemoryRecord | None:
        return self._records.get(user_id, {}).get(doc_id)

    def records(self, user_id: str = "") -> list[MemoryRecord]:
        with self._user_lock(user_id):
            return list(self._records.get(user_id, {}).values())

    def close(self):
        if self._db is not None:
            self._db.close()
            self._db = None


def _record_to_json(record: MemoryRecord) -> str:
    return json.dumps({
        "schema": SCHEMA_VERSION,
        "doc_id": record.doc_id,
        "text": record.text,
        "doc_emb": record.doc_emb.tolist(),
        "degraded": record.degraded,
        "meta": record.meta,
        "propositions": [
            {
                "prop_id": p.prop_id,
                "text": p.text,
                "concept": p.concept,
                "perspective": p.perspective,
                "mentioned_concepts": p.mentioned_concepts,
                "prop_emb": p.prop_emb.tolist() if p.prop_emb is not None else None,
                "cp_emb": p.cp_emb.tolist() if p.cp_emb is not None else None,
            }
            for p in record.propositions
        ],
    })


def _record_from_json(body: str) -> MemoryRecord:
    raw = json.loads(body)
    props = [
        Proposition(
            prop_id=p["prop_id"],
            text=p["text"],
            concept=p["concept"],
            perspective=p["perspective"],
            mentioned_concepts=p["mentioned_concepts"],
            prop_emb=np.array(p["prop_emb"]) if p["prop_emb"] is not None else None,
            cp_emb=np.array(p["cp_emb"]) if p["cp_emb"] is not None else None,
        )
        for p in raw["propositions"]
    ]
    return MemoryRecord(
        doc_id=raw["doc_id"],
        text=raw["text"],
        doc_emb=np.array(raw["doc_emb"]),
        propositions=props,
        meta=raw["meta"],
        degraded=raw["degraded"],
    )


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------


def ingest(text: str, meta: dict, extractor, embedder, store: MemoryStore) -> str:
    """Decompose, embed at all granularities, and persist a document.

    Extractor failures degrade to document-granularity-only storage;
    embedder failures reject the ingest outright.
    """
    if not text:
        raise ValueError("cannot ingest empty text")
    try:
        doc_emb = embedder(text)
    except Exception as exc:
        raise EmbedderFailure(str(exc)) from exc

    doc_id = meta.get("doc_id") or uuid.uuid4().hex
    degraded = False
    propositions: list[Proposition] = []
    try:
        drafts = extractor.extract(text)
    except Exception:
        drafts = []
        degraded = True

    for i, draft in enumerate(drafts):
        try:
            prop_emb = embedder(draft.text)
            cp_emb = embedder(f"{draft.concept} {draft.perspective}")
        except Exception as exc:
            raise EmbedderFailure(str(exc)) from exc
        propositions.append(Proposition(
            prop_id=f"{doc_id}:{i}",
            text=draft.text,
            concept=draft.concept,
            perspective=draft.perspective,
            mentioned_concepts=[normalize_concept(c) for c in draft.mentioned_concepts],
            prop_emb=prop_emb,
            cp_emb=cp_emb,
        ))

    record = MemoryRecord(
        doc_id=doc_id,
        text=text,
        doc_emb=doc_emb,
        propositions=propositions,
        meta={k: v for k, v in meta.items() if k != "doc_id"},
        degraded=degraded,
    )
    store.add(record)
    return doc_id


def store_dialogue(content: str, timestamp: str, user_id: str, extractor, embedder,
                   store: MemoryStore) -> str:
    """Persist a dialogue turn as a content@@timestamp document."""
    if not content:
        raise ValueError("empty dialogue content")
    meta = {"timestamp": timestamp, "source": "dialogue", "user_id": user_id}
    return ingest(f"{content}@@{timestamp}", meta, extractor, embedder, store)


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------


def merge_rankings(lists: list[list[tuple[str, float]]]) -> RankedResult:
    """Merge per-matcher scored doc lists by maximum similarity.

    `lists` is ordered [doc_soft, prop_soft, concept_soft, concept_hard];
    missing matchers may be passed as empty lists. Per doc the final score is
    the max over lists and provenance the set of lists that mentioned it.
    Sort: score desc, then best provenance priority, then doc_id.
    """
    best: dict[str, float] = {}
    provenance: dict[str, set[str]] = {}
    for label, entries in zip(PROVENANCE_PRIORITY, lists):
        for doc_id, score in entries:
            if doc_id not in best or score > best[doc_id]:
                best[doc_id] = score
            provenance.setdefault(doc_id, set()).add(label)

    def priority(doc_id: str) -> int:
        return min(PROVENANCE_PRIORITY.index(p) for p in provenance[doc_id])

    ordered = sorted(best, key=lambda d: (-best[d], priority(d), d))
    return RankedResult(entries=[
        RankedEntry(doc_id=d, score=best[d], provenance=frozenset(provenance[d]))
        for d in ordered
    ])


def retrieve(query: RetrievalQuery, store: MemoryStore, user_id: str = "",
             doc_ids: set[str] | None = None) -> RankedResult:
    """Four-way multi-granularity matching, merged and truncated to k.

    `doc_ids` optionally scopes the search (used by file-local search).
    """
    records = store.records(user_id)
    if doc_ids is not None:
        records = [r for r in records if r.doc_id in doc_ids]
    if not records:
        return RankedResult(entries=[])

    doc_soft: list[tuple[str, float]] = []
    prop_soft: list[tuple[str, float]] = []
    concept_soft: list[tuple[str, float]] = []
    concept_hard: list[tuple[str, float]] = []
    query_concepts = {normalize_concept(c) for c in query.concepts}

    for record in records:
        doc_soft.append((record.doc_id, cosine(query.query_emb, record.doc_emb)))
        best_prop = None
        best_cp = None
        for prop in record.propositions:
            if prop.prop_emb is not None:
                s = cosine(query.query_emb, prop.prop_emb)
                best_prop = s if best_prop is None else max(best_prop, s)
            if prop.cp_emb is not None:
                s = cosine(query.query_emb, prop.cp_emb)
                best_cp = s if best_cp is None else max(best_cp, s)
        if best_prop is not None:
            prop_soft.append((record.doc_id, best_prop))
        if best_cp is not None:
            concept_soft.append((record.doc_id, best_cp))
        if query_concepts:
            shared = record.mentioned_concepts & query_concepts
            if shared:
                concept_hard.append((record.doc_id, len(shared) / len(query_concepts)))

    merged = merge_rankings([doc_soft, prop_soft, concept_soft, concept_hard])
    return RankedResult(entries=merged.entries[: query.k])

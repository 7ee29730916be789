"""Append-only archive of evaluated workflows, queried by task similarity.

Layout on disk:

    <dir>/records.jsonl        one JSON record per stored entry (append-only)
    <dir>/workflows/           serialized workflow files, one per record

Each record carries the task prompt, its embedding, the judge score, and a
pointer to the workflow file. Retrieval scans every record, keeps those whose
embedding cosine-similarity to the query strictly exceeds the threshold, and
returns the highest-scoring one (ties: most recent created_at, then highest
sequence number). Nothing is ever mutated or deleted.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass

from .provider import EmbeddingVector
from .workflow import Workflow, deserialize, serialize

RECORDS_FILE = "records.jsonl"
WORKFLOWS_DIR = "workflows"


class DimMismatch(Exception):
    """Cosine over vectors of different dimension."""


class ZeroVector(Exception):
    """Cosine over a zero-magnitude vector is undefined."""


class StorageError(Exception):
    """Archive directory unusable or a write failed."""


class NotFound(Exception):
    """Lineage requested for a workflow id the archive has never seen."""


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """u·v / (‖u‖‖v‖). Sequential accumulation keeps the arithmetic
    reproducible across callers."""
    if u.dim != v.dim:
        raise DimMismatch(f"dim {u.dim} vs {v.dim}")
    dot = 0.0
    norm_u = 0.0
    norm_v = 0.0
    for a, b in zip(u.values, v.values):
        dot += a * b
        norm_u += a * a
        norm_v += b * b
    if norm_u == 0.0 or norm_v == 0.0:
        raise ZeroVector("cosine undefined for zero vector")
    return dot / (math.sqrt(norm_u) * math.sqrt(norm_v))


@dataclass(frozen=True)
class ArchiveEntry:
    workflow: Workflow
    task_prompt: str
    embedding: EmbeddingVector
    score: float
    run_id: str
    created_at: float


@dataclass(frozen=True)
class StoredEntry:
    """An ArchiveEntry as it exists on disk, with store-assigned metadata."""

    seq: int
    record_id: str
    workflow_id: str
    workflow_path: str
    task_prompt: str
    embedding: EmbeddingVector
    score: float
    run_id: str
    created_at: float


@dataclass(frozen=True)
class RetrievalResult:
    entry: ArchiveEntry | None
    similarity: float
    candidates_considered: int


class Archive:
    """One archive directory. Many readers, one writer; atomic appends."""

    def __init__(self, root: str):
        self.root = root
        try:
            os.makedirs(os.path.join(root, WORKFLOWS_DIR), exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create archive at {root!r}: {exc}") from exc
        self._records_path = os.path.join(root, RECORDS_FILE)
        self._cache: list[StoredEntry] = []
        self._cache_stamp: tuple[int, int] | None = None

    # -- write path -----------------------------------------------------------

    def put(self, entry: ArchiveEntry) -> str:
        """Persist one evaluated workflow. Returns the stored record id."""
        if not 0.0 <= entry.score <= 1.0:
            raise ValueError(f"score {entry.score} outside [0, 1]")
        records = self._load_records()
        if records and records[0].embedding.dim != entry.embedding.dim:
            raise StorageError(
                f"embedding dim {entry.embedding.dim} does not match archive dim {records[0].embedding.dim}"
            )
        seq = records[-1].seq + 1 if records else 1
        record_id = f"rec-{seq:06d}"
        rel_path = os.path.join(WORKFLOWS_DIR, f"{seq:06d}-{entry.workflow.id}.json")
        abs_path = os.path.join(self.root, rel_path)
        try:
            tmp_path = abs_path + ".tmp"
            with open(tmp_path, "wb") as fh:
                fh.write(serialize(entry.workflow))
            os.replace(tmp_path, abs_path)
            line = json.dumps(
                {
                    "seq": seq,
                    "record_id": record_id,
                    "run_id": entry.run_id,
                    "workflow_id": entry.workflow.id,
                    "workflow_path": rel_path,
                    "task_prompt": entry.task_prompt,
                    "embedding": list(entry.embedding.values),
                    "score": entry.score,
                    "created_at": entry.created_at,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
            with open(self._records_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            stat = os.stat(self._records_path)
        except OSError as exc:
            self._cache_stamp = None  # unknown on-disk state; force re-read
            raise StorageError(f"archive write failed: {exc}") from exc
        # Keep the cache coherent instead of discarding it: appending the
        # entry we just wrote makes a long run of puts linear, not quadratic.
        self._cache.append(
            StoredEntry(
                seq=seq,
                record_id=record_id,
                workflow_id=entry.workflow.id,
                workflow_path=rel_path,
                task_prompt=entry.task_prompt,
                embedding=entry.embedding,
                score=entry.score,
                run_id=entry.run_id,
                created_at=entry.created_at,
            )
        )
        self._cache_stamp = (stat.st_mtime_ns, stat.st_size)
        return record_id

    # -- read path ------------------------------------------------------------

    def _load_records(self) -> list[StoredEntry]:
        try:
            stat = os.stat(self._records_path)
            stamp = (stat.st_mtime_ns, stat.st_size)
        except FileNotFoundError:
            self._cache = []
            self._cache_stamp = None
            return self._cache
        if stamp == self._cache_stamp:
            return self._cache
        entries: list[StoredEntry] = []
        with open(self._records_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StorageError(f"corrupt archive record at line {line_no}: {exc.msg}") from exc
                entries.append(
                    StoredEntry(
                        seq=raw["seq"],
                        record_id=raw["record_id"],
                        workflow_id=raw["workflow_id"],
                        workflow_path=raw["workflow_path"],
                        task_prompt=raw["task_prompt"],
                        embedding=EmbeddingVector(tuple(raw["embedding"])),
                        score=raw["score"],
                        run_id=raw["run_id"],
                        created_at=raw["created_at"],
                    )
                )
        self._cache = entries
        self._cache_stamp = stamp
        return entries

    def entries(self) -> list[StoredEntry]:
        return list(self._load_records())

    def load_workflow(self, stored: StoredEntry) -> Workflow:
        path = os.path.join(self.root, stored.workflow_path)
        try:
            with open(path, "rb") as fh:
                return deserialize(fh.read())
        except OSError as exc:
            raise StorageError(f"cannot read workflow file {path!r}: {exc}") from exc

    def retrieve(self, task_embedding: EmbeddingVector, epsilon: float) -> RetrievalResult:
        """Best prior workflow for a similar task.

        Qualifier: cosine similarity strictly greater than epsilon. Winner:
        maximum score; ties broken by most recent created_at, then by highest
        sequence number so the outcome is total and deterministic.
        """
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon {epsilon} outside [0, 1]")
        records = self._load_records()
        best: StoredEntry | None = None
        best_sim = 0.0
        for stored in records:
            sim = cosine(stored.embedding, task_embedding)
            if sim <= epsilon:
                continue
            if best is None or (stored.score, stored.created_at, stored.seq) > (
                best.score,
                best.created_at,
                best.seq,
            ):
                best = stored
                best_sim = sim
        if best is None:
            return RetrievalResult(entry=None, similarity=0.0, candidates_considered=len(records))
        entry = ArchiveEntry(
            workflow=self.load_workflow(best),
            task_prompt=best.task_prompt,
            embedding=best.embedding,
            score=best.score,
            run_id=best.run_id,
            created_at=best.created_at,
        )
        return RetrievalResult(entry=entry, similarity=best_sim, candidates_considered=len(records))

    def lineage(self, workflow_id: str) -> list[str]:
        """Ancestor chain [workflow_id, parent, ..., root], oldest last.

        Follows parent_id links through archived workflows; the chain stops
        at the first ancestor the archive does not hold.
        """
        records = self._load_records()
        by_id: dict[str, StoredEntry] = {}
        for stored in records:
            by_id.setdefault(stored.workflow_id, stored)
        if workflow_id not in by_id:
            raise NotFound(f"workflow {workflow_id!r} not in archive")
        chain: list[str] = []
        current: str | None = workflow_id
        seen: set[str] = set()
        while current is not None and current in by_id and current not in seen:
            chain.append(current)
            seen.add(current)
            current = self.load_workflow(by_id[current]).parent_id
        return chain


def put_entry(
    archive: Archive,
    workflow: Workflow,
    task_prompt: str,
    embedding: EmbeddingVector,
    score: float,
    run_id: str,
    created_at: float | None = None,
) -> str:
    """Convenience constructor-and-put used by the orchestration layer."""
    entry = ArchiveEntry(
        workflow=workflow,
        task_prompt=task_prompt,
        embedding=embedding,
        score=score,
        run_id=run_id,
        created_at=time.time() if created_at is None else created_at,
    )
    return archive.put(entry)

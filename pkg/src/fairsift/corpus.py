"""Data model and line-delimited record I/O for embedding corpora.

File formats (one JSON object per line, blank lines ignored):

- image record:  {"id": str, "vec": [float x d], "label": str?}
- query record:  {"id": str, "text": str, "vec": [float x d], "relevant": [str]?}
- scheme file:   {"name": str, "groups": [str], "allows_neutral": bool} (single object)

The label string must be one of the scheme's group names, or ``"na"`` for the
neutral category when the scheme allows it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    InvalidScheme,
    MalformedRecord,
    UnknownLabel,
    UnknownRelevantId,
)

NEUTRAL_NAME = "na"

UNIT_NORM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class AttributeScheme:
    """A categorical demographic attribute with optional neutral category."""

    name: str
    group_names: tuple[str, ...]
    allows_neutral: bool = False

    def __post_init__(self):
        object.__setattr__(self, "group_names", tuple(self.group_names))
        if len(self.group_names) < 2:
            raise InvalidScheme(f"scheme {self.name!r} needs at least 2 groups")
        if len(set(self.group_names)) != len(self.group_names):
            raise InvalidScheme(f"scheme {self.name!r} has duplicate group names")
        if NEUTRAL_NAME in self.group_names:
            raise InvalidScheme(f"group name {NEUTRAL_NAME!r} is reserved for the neutral category")

    @property
    def m(self) -> int:
        return len(self.group_names)

    def label(self, group: int | None) -> "AttributeLabel":
        return AttributeLabel(group, self)

    def neutral(self) -> "AttributeLabel":
        if not self.allows_neutral:
            raise InvalidScheme(f"scheme {self.name!r} does not allow a neutral category")
        return AttributeLabel(None, self)

    def label_from_name(self, name: str) -> "AttributeLabel":
        if name == NEUTRAL_NAME:
            return self.neutral()
        try:
            return AttributeLabel(self.group_names.index(name), self)
        except ValueError:
            raise UnknownLabel(name) from None


@dataclass(frozen=True)
class AttributeLabel:
    """Group membership under a scheme; ``group is None`` means neutral."""

    group: int | None
    scheme: AttributeScheme

    def __post_init__(self):
        if self.group is None:
            if not self.scheme.allows_neutral:
                raise InvalidScheme(f"scheme {self.scheme.name!r} does not allow a neutral category")
        elif not 0 <= self.group < self.scheme.m:
            raise InvalidScheme(f"group index {self.group} out of range for scheme {self.scheme.name!r}")

    @property
    def is_neutral(self) -> bool:
        return self.group is None

    @property
    def name(self) -> str:
        return NEUTRAL_NAME if self.group is None else self.scheme.group_names[self.group]

    @property
    def signed_weight(self) -> int:
        """+1 for group 0, -1 for group 1, 0 for neutral (two-group schemes only)."""
        if self.group is None:
            return 0
        if self.scheme.m != 2:
            raise InvalidScheme("signed bias weight is defined for two-group schemes only")
        return 1 if self.group == 0 else -1


@dataclass(frozen=True, eq=False)
class ImageRecord:
    id: str
    embedding: np.ndarray
    label: AttributeLabel | None = None


@dataclass(frozen=True, eq=False)
class QueryRecord:
    id: str
    text: str
    embedding: np.ndarray
    relevant_ids: frozenset[str] = frozenset()


@dataclass(frozen=True, eq=False)
class Corpus:
    d: int
    images: tuple[ImageRecord, ...]
    queries: tuple[QueryRecord, ...]
    scheme: AttributeScheme

    def image_index(self) -> dict[str, ImageRecord]:
        return {im.id: im for im in self.images}

    def ground_truth_labels(self) -> dict[str, AttributeLabel]:
        return {im.id: im.label for im in self.images if im.label is not None}


@dataclass
class ValidationReport:
    group_counts: dict[str, int]
    neutral_count: int
    unlabeled_count: int
    alpha: float | None
    relevant_counts: dict[str, int]
    warnings: list[str] = field(default_factory=list)

    def summary_lines(self) -> list[str]:
        lines = [f"images per group: {self.group_counts}"]
        lines.append(f"neutral: {self.neutral_count}  unlabeled: {self.unlabeled_count}")
        lines.append("group-0 ratio alpha: " + ("n/a" if self.alpha is None else f"{self.alpha:.4f}"))
        lines.append(f"queries with relevant sets: {sum(1 for n in self.relevant_counts.values() if n)}"
                     f" / {len(self.relevant_counts)}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return lines


def _iter_lines(stream: IO | Iterable) -> Iterator[tuple[int, str]]:
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if line:
            yield line_no, line


def _parse_vector(obj: dict, line_no: int, d: int | None) -> np.ndarray:
    vec = obj.get("vec")
    if not isinstance(vec, list) or not vec or not all(isinstance(x, (int, float)) for x in vec):
        raise MalformedRecord(line_no, "field 'vec' must be a non-empty array of numbers")
    arr = np.asarray(vec, dtype=np.float64)
    if d is not None and arr.shape[0] != d:
        raise MalformedRecord(line_no, f"embedding has {arr.shape[0]} values, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise MalformedRecord(line_no, "embedding contains non-finite values")
    arr.setflags(write=False)
    return arr


def _parse_object(line: str, line_no: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"invalid record syntax ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record is not an object")
    return obj


def _parse_id(obj: dict, line_no: int) -> str:
    record_id = obj.get("id")
    if not isinstance(record_id, str) or not record_id:
        raise MalformedRecord(line_no, "field 'id' must be a non-empty string")
    return record_id


def parse_image_records(
    stream: IO | Iterable,
    scheme: AttributeScheme,
    d: int | None = None,
) -> list[ImageRecord]:
    """Parse image records; ``d=None`` infers the dimension from the first record."""
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for line_no, line in _iter_lines(stream):
        obj = _parse_object(line, line_no)
        record_id = _parse_id(obj, line_no)
        if record_id in seen:
            raise DuplicateId(record_id)
        seen.add(record_id)
        arr = _parse_vector(obj, line_no, d)
        d = arr.shape[0]
        label = None
        if "label" in obj and obj["label"] is not None:
            raw_label = obj["label"]
            if not isinstance(raw_label, str):
                raise MalformedRecord(line_no, "field 'label' must be a string")
            label = scheme.label_from_name(raw_label)
        records.append(ImageRecord(record_id, arr, label))
    return records


def parse_query_records(stream: IO | Iterable, d: int | None = None) -> list[QueryRecord]:
    records: list[QueryRecord] = []
    seen: set[str] = set()
    for line_no, line in _iter_lines(stream):
        obj = _parse_object(line, line_no)
        record_id = _parse_id(obj, line_no)
        if record_id in seen:
            raise DuplicateId(record_id)
        seen.add(record_id)
        text = obj.get("text", "")
        if not isinstance(text, str):
            raise MalformedRecord(line_no, "field 'text' must be a string")
        arr = _parse_vector(obj, line_no, d)
        d = arr.shape[0]
        relevant = obj.get("relevant", [])
        if not isinstance(relevant, list) or not all(isinstance(x, str) for x in relevant):
            raise MalformedRecord(line_no, "field 'relevant' must be an array of id strings")
        records.append(QueryRecord(record_id, text, arr, frozenset(relevant)))
    return records


def parse_scheme(stream: IO | str) -> AttributeScheme:
    text = stream if isinstance(stream, str) else stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(1, f"invalid scheme file ({exc.msg})") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("name"), str):
        raise MalformedRecord(1, "scheme file must be an object with a 'name' field")
    groups = obj.get("groups")
    if not isinstance(groups, list) or not all(isinstance(g, str) for g in groups):
        raise MalformedRecord(1, "scheme field 'groups' must be an array of strings")
    return AttributeScheme(obj["name"], tuple(groups), bool(obj.get("allows_neutral", False)))


def dump_image_records(records: Iterable[ImageRecord], fh: IO) -> None:
    for rec in records:
        obj = {"id": rec.id, "vec": [float(x) for x in rec.embedding]}
        if rec.label is not None:
            obj["label"] = rec.label.name
        fh.write(json.dumps(obj) + "\n")


def dump_query_records(records: Iterable[QueryRecord], fh: IO) -> None:
    for rec in records:
        obj = {
            "id": rec.id,
            "text": rec.text,
            "vec": [float(x) for x in rec.embedding],
            "relevant": sorted(rec.relevant_ids),
        }
        fh.write(json.dumps(obj) + "\n")


def dump_scheme(scheme: AttributeScheme, fh: IO) -> None:
    fh.write(json.dumps({
        "name": scheme.name,
        "groups": list(scheme.group_names),
        "allows_neutral": scheme.allows_neutral,
    }) + "\n")


def validate_corpus(corpus: Corpus, k: int = 100) -> ValidationReport:
    """Cross-check a parsed corpus; raises on broken references, warns on thin pools."""
    index = corpus.image_index()
    relevant_counts: dict[str, int] = {}
    for query in corpus.queries:
        for image_id in sorted(query.relevant_ids):
            if image_id not in index:
                raise UnknownRelevantId(query.id, image_id)
        relevant_counts[query.id] = len(query.relevant_ids)

    group_counts = {name: 0 for name in corpus.scheme.group_names}
    neutral_count = 0
    unlabeled_count = 0
    off_norm = 0
    for image in corpus.images:
        if image.embedding.shape[0] != corpus.d:
            raise DimensionMismatch(f"image {image.id!r} has dimension {image.embedding.shape[0]}, corpus declares {corpus.d}")
        if abs(float(np.linalg.norm(image.embedding)) - 1.0) > UNIT_NORM_TOLERANCE:
            off_norm += 1
        if image.label is None:
            unlabeled_count += 1
        elif image.label.is_neutral:
            neutral_count += 1
        else:
            group_counts[image.label.name] += 1

    labeled = sum(group_counts.values())
    alpha = group_counts[corpus.scheme.group_names[0]] / labeled if labeled else None

    warnings = []
    threshold = k / 2
    for name, count in group_counts.items():
        if count < threshold:
            warnings.append(f"group {name} has {count} < K/2 = {threshold:g} labeled members (K={k})")
    if off_norm:
        warnings.append(f"{off_norm} embeddings deviate from unit norm by more than {UNIT_NORM_TOLERANCE:g}")

    return ValidationReport(group_counts, neutral_count, unlabeled_count, alpha, relevant_counts, warnings)

"""Attribute prediction for unlabeled images.

Three interchangeable predictors produce a PredictionSet mapping every image
to a group (or neutral) with a confidence:

- nearest class embedding (zero-shot),
- nearest class-prefixed query embedding (zero-shot, per query),
- a small linear softmax classifier trained by full-batch gradient descent.

Prediction files are line-delimited: {"id": str, "label": str, "confidence":
float, "query": str?}. Records carrying a "query" field apply only to that
query's retrieval; records without it apply globally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import AttributeLabel, AttributeScheme, ImageRecord, _iter_lines, _parse_object
from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    InvalidInput,
    InvalidScheme,
    MalformedRecord,
    NonFiniteLoss,
)


class Prediction(NamedTuple):
    label: AttributeLabel
    confidence: float


@dataclass(frozen=True)
class PredictionSet:
    scheme: AttributeScheme
    entries: dict[str, Prediction]

    def get(self, image_id: str) -> Prediction | None:
        return self.entries.get(image_id)

    def labels(self) -> dict[str, AttributeLabel]:
        return {image_id: pred.label for image_id, pred in self.entries.items()}

    def __len__(self) -> int:
        return len(self.entries)


def _class_order(scheme: AttributeScheme, include_neutral: bool) -> list[int | None]:
    order: list[int | None] = list(range(scheme.m))
    if include_neutral:
        order.append(None)
    return order


def _check_class_vectors(scheme: AttributeScheme, vectors: Sequence[tuple[int | None, np.ndarray]]):
    """Exactly one vector per group, at most one neutral, uniform dimension."""
    groups = [g for g, _ in vectors if g is not None]
    neutrals = [g for g, _ in vectors if g is None]
    if sorted(groups) != list(range(scheme.m)):
        raise InvalidScheme(
            f"need exactly one vector per group of scheme {scheme.name!r}, got groups {sorted(groups)}")
    if len(neutrals) > 1:
        raise InvalidScheme("at most one neutral vector allowed")
    dims = {v.shape[0] for _, v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"class vectors have mixed dimensions {sorted(dims)}")


@dataclass(frozen=True)
class ClassEmbeddings:
    """One text-side vector per group, plus an optional neutral vector."""

    scheme: AttributeScheme
    vectors: tuple[tuple[int | None, np.ndarray], ...]

    def __post_init__(self):
        _check_class_vectors(self.scheme, self.vectors)

    @classmethod
    def from_records(cls, records: Sequence[ImageRecord], scheme: AttributeScheme) -> "ClassEmbeddings":
        pairs = []
        for rec in records:
            if rec.label is None:
                raise InvalidScheme(f"class-embedding record {rec.id!r} is missing a label")
            pairs.append((rec.label.group, rec.embedding))
        return cls(scheme, tuple(pairs))

    def ordered(self) -> tuple[list[int | None], np.ndarray]:
        """Class keys in tie-break order (groups ascending, neutral last) and the stacked matrix."""
        by_key = {g: v for g, v in self.vectors}
        keys = _class_order(self.scheme, None in by_key)
        return keys, np.stack([by_key[k] for k in keys])


@dataclass(frozen=True)
class PromptedQueryEmbeddings:
    """Embeddings of a single query with a class adjective prepended per group."""

    query_id: str
    scheme: AttributeScheme
    vectors: tuple[tuple[int | None, np.ndarray], ...]

    def __post_init__(self):
        if not self.vectors:
            raise InvalidScheme(f"no prompted vectors for query {self.query_id!r}")
        _check_class_vectors(self.scheme, self.vectors)

    def ordered(self) -> tuple[list[int | None], np.ndarray]:
        by_key = {g: v for g, v in self.vectors}
        keys = _class_order(self.scheme, None in by_key)
        return keys, np.stack([by_key[k] for k in keys])


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _nearest_class_predict(
    images: Sequence[ImageRecord],
    keys: list[int | None],
    class_matrix: np.ndarray,
    scheme: AttributeScheme,
) -> PredictionSet:
    if not images:
        return PredictionSet(scheme, {})
    matrix = np.stack([im.embedding for im in images])
    if matrix.shape[1] != class_matrix.shape[1]:
        raise DimensionMismatch(
            f"images have dimension {matrix.shape[1]}, class vectors {class_matrix.shape[1]}")
    img_norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    cls_norms = np.sqrt(np.einsum("ij,ij->i", class_matrix, class_matrix))
    if np.any(img_norms == 0.0) or np.any(cls_norms == 0.0):
        raise InvalidInput("zero-norm embedding in zero-shot prediction")
    scores = (matrix @ class_matrix.T) / np.outer(img_norms, cls_norms)
    probs = _softmax_rows(scores)
    picked = np.argmax(scores, axis=1)  # first max: groups by index, neutral last
    entries = {}
    for i, im in enumerate(images):
        key = keys[int(picked[i])]
        entries[im.id] = Prediction(AttributeLabel(key, scheme), float(probs[i, picked[i]]))
    return PredictionSet(scheme, entries)


def zero_shot_embed_predict(images: Sequence[ImageRecord], classes: ClassEmbeddings) -> PredictionSet:
    keys, matrix = classes.ordered()
    return _nearest_class_predict(images, keys, matrix, classes.scheme)


def zero_shot_prompt_predict(
    images: Sequence[ImageRecord], prompted: PromptedQueryEmbeddings
) -> PredictionSet:
    keys, matrix = prompted.ordered()
    return _nearest_class_predict(images, keys, matrix, prompted.scheme)


class TrainingMeta(NamedTuple):
    learning_rate: float
    epochs: int
    final_loss: float


@dataclass(frozen=True)
class SoftmaxClassifier:
    """Linear softmax over image embeddings; class order: groups, then neutral."""

    weights: np.ndarray  # (n_classes, d)
    biases: np.ndarray  # (n_classes,)
    scheme: AttributeScheme
    training_meta: TrainingMeta

    @property
    def class_keys(self) -> list[int | None]:
        return _class_order(self.scheme, self.weights.shape[0] == self.scheme.m + 1)


def _one_hot(indices: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((indices.shape[0], n_classes))
    out[np.arange(indices.shape[0]), indices] = 1.0
    return out


def cross_entropy_and_gradient(
    weights: np.ndarray, biases: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy and its analytic gradient wrt weights and biases."""
    probs = _softmax_rows(x @ weights.T + biases)
    n = x.shape[0]
    with np.errstate(divide="ignore"):  # underflowed probability -> inf loss, caught by caller
        loss = float(-np.log(probs[np.arange(n), y]).mean())
    delta = probs - _one_hot(y, weights.shape[0])
    grad_w = delta.T @ x / n
    grad_b = delta.mean(axis=0)
    return loss, grad_w, grad_b


def train_softmax_classifier(
    train: Sequence[tuple[np.ndarray, AttributeLabel]],
    scheme: AttributeScheme,
    lr: float,
    epochs: int,
    seed: int = 0,
) -> SoftmaxClassifier:
    """Full-batch gradient descent from zero-initialized parameters.

    Deterministic for given inputs; ``seed`` is reserved for optional
    minibatch shuffling and currently unused.
    """
    del seed
    if not train:
        raise EmptyTrainingSet("training set is empty")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    n_classes = scheme.m + (1 if scheme.allows_neutral else 0)
    x = np.stack([np.asarray(e, dtype=np.float64) for e, _ in train])
    y = np.array([scheme.m if lbl.group is None else lbl.group for _, lbl in train])
    if not np.all(np.isfinite(x)):
        raise InvalidInput("training embeddings contain non-finite values")
    weights = np.zeros((n_classes, x.shape[1]))
    biases = np.zeros(n_classes)
    loss = float(np.log(n_classes))
    for _ in range(epochs):
        loss, grad_w, grad_b = cross_entropy_and_gradient(weights, biases, x, y)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"training diverged (loss={loss})")
        weights = weights - lr * grad_w
        biases = biases - lr * grad_b
    final_loss, _, _ = cross_entropy_and_gradient(weights, biases, x, y)
    if not np.isfinite(final_loss):
        raise NonFiniteLoss(f"training diverged (loss={final_loss})")
    return SoftmaxClassifier(weights, biases, scheme, TrainingMeta(lr, epochs, float(final_loss)))


def classifier_predict(clf: SoftmaxClassifier, images: Sequence[ImageRecord]) -> PredictionSet:
    if not images:
        return PredictionSet(clf.scheme, {})
    matrix = np.stack([im.embedding for im in images])
    if matrix.shape[1] != clf.weights.shape[1]:
        raise DimensionMismatch(
            f"images have dimension {matrix.shape[1]}, classifier expects {clf.weights.shape[1]}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInput("image embeddings contain non-finite values")
    probs = _softmax_rows(matrix @ clf.weights.T + clf.biases)
    picked = np.argmax(probs, axis=1)
    keys = clf.class_keys
    entries = {}
    for i, im in enumerate(images):
        entries[im.id] = Prediction(
            AttributeLabel(keys[int(picked[i])], clf.scheme), float(probs[i, picked[i]]))
    return PredictionSet(clf.scheme, entries)


def ground_truth_predictions(images: Sequence[ImageRecord], scheme: AttributeScheme) -> PredictionSet:
    """Wrap annotated labels as a PredictionSet (confidence 1); skips unlabeled images."""
    entries = {im.id: Prediction(im.label, 1.0) for im in images if im.label is not None}
    return PredictionSet(scheme, entries)


def prototype_class_embeddings(
    images: Sequence[ImageRecord], scheme: AttributeScheme
) -> ClassEmbeddings:
    """Class vectors as normalized per-group mean embeddings of labeled images."""
    sums: dict[int | None, np.ndarray] = {}
    counts: dict[int | None, int] = {}
    for im in images:
        if im.label is None:
            continue
        key = im.label.group
        if key not in sums:
            sums[key] = np.zeros_like(im.embedding)
            counts[key] = 0
        sums[key] = sums[key] + im.embedding
        counts[key] += 1
    missing = [g for g in range(scheme.m) if g not in sums]
    if missing:
        raise InvalidScheme(f"no labeled images for groups {missing}; cannot build prototypes")
    pairs = []
    for key, total in sums.items():
        mean = total / counts[key]
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            raise InvalidInput(f"group {key} prototype has zero norm")
        pairs.append((key, mean / norm))
    return ClassEmbeddings(scheme, tuple(pairs))


def load_prediction_file(
    stream: IO | Iterable, scheme: AttributeScheme
) -> dict[str | None, PredictionSet]:
    """Predictions keyed by query scope; key ``None`` holds the global records."""
    scoped: dict[str | None, dict[str, Prediction]] = {}
    for line_no, line in _iter_lines(stream):
        obj = _parse_object(line, line_no)
        image_id = obj.get("id")
        raw_label = obj.get("label")
        if not isinstance(image_id, str) or not image_id or not isinstance(raw_label, str):
            raise MalformedRecord(line_no, "prediction needs string fields 'id' and 'label'")
        confidence = obj.get("confidence", 1.0)
        if not isinstance(confidence, (int, float)) or not 0.0 <= confidence <= 1.0:
            raise MalformedRecord(line_no, "field 'confidence' must be a number in [0, 1]")
        query_id = obj.get("query")
        if query_id is not None and not isinstance(query_id, str):
            raise MalformedRecord(line_no, "field 'query' must be a string when present")
        scope = scoped.setdefault(query_id, {})
        scope[image_id] = Prediction(scheme.label_from_name(raw_label), float(confidence))
    return {scope: PredictionSet(scheme, entries) for scope, entries in scoped.items()}


def dump_predictions(pset: PredictionSet, fh: IO, query_id: str | None = None) -> None:
    for image_id in sorted(pset.entries):
        pred = pset.entries[image_id]
        obj = {"id": image_id, "label": pred.label.name, "confidence": pred.confidence}
        if query_id is not None:
            obj["query"] = query_id
        fh.write(json.dumps(obj) + "\n")

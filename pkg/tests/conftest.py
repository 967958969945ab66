import numpy as np
import pytest

from fairsift.corpus import AttributeScheme, Corpus, ImageRecord, QueryRecord


@pytest.fixture
def gender_scheme():
    return AttributeScheme("gender", ("male", "female"), allows_neutral=True)


@pytest.fixture
def binary_scheme():
    return AttributeScheme("gender", ("male", "female"), allows_neutral=False)


def make_image(image_id, vec, scheme=None, label=None):
    arr = np.asarray(vec, dtype=np.float64)
    arr.setflags(write=False)
    lbl = None
    if label is not None:
        lbl = scheme.label_from_name(label)
    return ImageRecord(image_id, arr, lbl)


def make_query(query_id, vec, text="q", relevant=()):
    arr = np.asarray(vec, dtype=np.float64)
    arr.setflags(write=False)
    return QueryRecord(query_id, text, arr, frozenset(relevant))


def random_labeled_images(rng, n, d, scheme, neutral_fraction=0.0):
    names = list(scheme.group_names) + ([ "na" ] if scheme.allows_neutral else [])
    images = []
    for i in range(n):
        vec = rng.standard_normal(d)
        vec /= np.linalg.norm(vec)
        if scheme.allows_neutral and rng.random() < neutral_fraction:
            label = "na"
        else:
            label = names[int(rng.integers(scheme.m))]
        images.append(make_image(f"img{i:04d}", vec, scheme, label))
    return images


def random_corpus(rng, n, d, scheme, n_queries=3, neutral_fraction=0.0, relevant_size=5):
    images = random_labeled_images(rng, n, d, scheme, neutral_fraction)
    queries = []
    for j in range(n_queries):
        vec = rng.standard_normal(d)
        vec /= np.linalg.norm(vec)
        relevant = rng.choice([im.id for im in images], size=min(relevant_size, n), replace=False)
        queries.append(make_query(f"q{j}", vec, text=f"topic {j}", relevant=relevant))
    return Corpus(d, tuple(images), tuple(queries), scheme)

"""Synthetic multi-view multi-label dataset generators.

Real benchmark collections are not redistributed with this package, so
tests and demos run on generated stand-ins:

* :func:`make_random_dataset` - unstructured random data for property
  tests.
* :func:`make_benchmark_like` - a latent-factor generator shaped like a
  named benchmark (sample count, per-view widths, label count, label
  prevalence profile), with a controllable signal-to-noise level.  Labels
  are thresholded projections of a shared latent state, which yields
  realistic label co-occurrence; a minority of features carry the latent
  signal, the rest are noise, so feature selection has something to find.
* :func:`make_toy_semantic` - a tiny described 3-view dataset with a
  planted synonym feature ("puppy" vs label "dog") that is statistically
  uninformative, for exercising the semantic path.
"""

from __future__ import annotations

import numpy as np

from .dataset import MultiViewDataset, TextCatalog, ViewBlock, pseudo_name

YEAST_PREVALENCE = np.array(
    [0.72, 0.58, 0.46, 0.42, 0.38, 0.33, 0.29, 0.25, 0.22, 0.18, 0.15, 0.12, 0.09, 0.06]
)


def _catalog_for(dataset: MultiViewDataset, label_texts: list[str] | None = None) -> TextCatalog:
    return TextCatalog(
        view_texts=[v.name for v in dataset.views],
        feature_texts=[
            [pseudo_name(v.name, i) for i in range(v.width)] for v in dataset.views
        ],
        label_texts=label_texts
        or [f"label {j + 1}" for j in range(dataset.n_labels)],
    )


def make_random_dataset(
    seed: int,
    n: int = 40,
    view_widths: tuple[int, ...] = (5, 3),
    n_labels: int = 4,
    label_density: float = 0.35,
) -> tuple[MultiViewDataset, TextCatalog]:
    """Unstructured random dataset; every label gets at least one positive."""
    rng = np.random.default_rng(seed)
    views = [
        ViewBlock(view_id=i, name=f"V{i + 1}", matrix=rng.normal(size=(n, w)))
        for i, w in enumerate(view_widths)
    ]
    labels = (rng.random((n, n_labels)) < label_density).astype(np.int8)
    for j in range(n_labels):
        if labels[:, j].sum() == 0:
            labels[rng.integers(n), j] = 1
    dataset = MultiViewDataset(views=views, labels=labels)
    return dataset, _catalog_for(dataset)


def make_benchmark_like(
    seed: int,
    n: int,
    view_widths: tuple[int, ...],
    prevalence: np.ndarray,
    view_names: tuple[str, ...] | None = None,
    informative_per_view: tuple[int, ...] | None = None,
    n_latent: int = 8,
    signal: float = 0.8,
) -> tuple[MultiViewDataset, TextCatalog]:
    """Latent-factor dataset with the given shape and label prevalences.

    Labels are per-column quantile thresholdings of latent projections, so
    prevalences are hit exactly and labels co-occur through the shared
    latent state.  The first `informative_per_view[i]` features of view i
    are noisy projections of the same state (signal-to-noise controlled by
    `signal`); remaining features are pure noise.
    """
    rng = np.random.default_rng(seed)
    c = prevalence.size
    latent = rng.normal(size=(n, n_latent))
    label_proj = rng.normal(size=(n_latent, c))
    label_proj /= np.linalg.norm(label_proj, axis=0, keepdims=True)
    logits = latent @ label_proj
    labels = np.zeros((n, c), dtype=np.int8)
    for j in range(c):
        cutoff = np.quantile(logits[:, j], 1.0 - prevalence[j])
        labels[:, j] = logits[:, j] > cutoff

    if view_names is None:
        view_names = tuple(f"view{i + 1}" for i in range(len(view_widths)))
    if informative_per_view is None:
        informative_per_view = tuple(max(1, w // 6) for w in view_widths)

    views = []
    for i, (width, n_inf) in enumerate(zip(view_widths, informative_per_view)):
        matrix = rng.normal(size=(n, width))
        for col in range(min(n_inf, width)):
            direction = rng.normal(size=n_latent)
            direction /= np.linalg.norm(direction)
            strength = signal * rng.uniform(0.6, 1.4)
            matrix[:, col] += strength * (latent @ direction)
        # scatter informative columns so position carries no information
        order = rng.permutation(width)
        views.append(ViewBlock(view_id=i, name=view_names[i], matrix=matrix[:, order]))
    dataset = MultiViewDataset(views=views, labels=labels)
    return dataset, _catalog_for(dataset)


def make_yeast_like(seed: int = 7, signal: float = 0.45) -> tuple[MultiViewDataset, TextCatalog]:
    """Stand-in with the Yeast benchmark's shape: n=2417, views GE(79) and
    PP(24), 14 labels with mean prevalence about 0.30."""
    dataset, _ = make_benchmark_like(
        seed=seed,
        n=2417,
        view_widths=(79, 24),
        prevalence=YEAST_PREVALENCE,
        view_names=("GE", "PP"),
        informative_per_view=(12, 5),
        signal=signal,
    )
    catalog = _catalog_for(
        dataset, label_texts=[f"functional class {j + 1}" for j in range(14)]
    )
    return dataset, catalog


TOY_SYNONYMS = {"puppy": "dog", "kitten": "cat", "automobile": "car"}


def make_toy_semantic(
    seed: int = 11, n: int = 150
) -> tuple[MultiViewDataset, TextCatalog, dict[str, str]]:
    """Described 3-view toy dataset with a planted synonym feature.

    The text-view feature "puppy" is pure noise, so statistics alone rank
    it last; its description is a synonym of the label "dog", which the
    semantic path can exploit.  Returns (dataset, catalog, synonym table).
    """
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(n, 3))  # dog-ness, cat-ness, car-ness
    labels = np.zeros((n, 3), dtype=np.int8)
    for j in range(3):
        labels[:, j] = latent[:, j] > np.quantile(latent[:, j], 0.6)

    def informative(j, strength=1.6):
        return strength * latent[:, j] + rng.normal(size=n)

    def noise():
        return rng.normal(size=n)

    text = np.column_stack(
        [noise(), informative(0), informative(1), informative(2), noise(), noise()]
    )
    text_names = [
        "puppy furry pet",
        "bone mention count",
        "whiskers mention count",
        "wheel mention count",
        "weather words",
        "sports words",
    ]
    image = np.column_stack(
        [
            informative(0) + 0.8 * latent[:, 1],  # shared dog/cat cue
            informative(0),
            informative(1),
            informative(2),
            noise(),
        ]
    )
    image_names = [
        "eye detector response",
        "fur texture energy",
        "whisker edge density",
        "metal shine area",
        "background brightness",
    ]
    audio = np.column_stack(
        [informative(0), informative(1), informative(2), noise()]
    )
    audio_names = ["bark volume", "meow pitch", "engine hum level", "hiss floor"]

    views = [
        ViewBlock(view_id=0, name="text", matrix=text, feature_names=text_names),
        ViewBlock(view_id=1, name="image", matrix=image, feature_names=image_names),
        ViewBlock(view_id=2, name="audio", matrix=audio, feature_names=audio_names),
    ]
    dataset = MultiViewDataset(views=views, labels=labels)
    catalog = TextCatalog(
        view_texts=[
            "word counts from the caption text",
            "visual detector responses from the image",
            "acoustic features from the audio track",
        ],
        feature_texts=[text_names, image_names, audio_names],
        label_texts=["dog furry pet animal", "cat furry pet animal", "car motor vehicle"],
    )
    return dataset, catalog, dict(TOY_SYNONYMS)

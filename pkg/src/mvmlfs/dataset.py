"""Loading, validation and indexing of multi-view multi-label datasets.

A dataset is described by a JSON manifest that points at per-view matrix
files and a label file, plus optional description texts:

    {
      "views": [{"name": "GE", "matrix": "ge.csv", "feature_texts": "ge.txt"}],
      "labels": "labels.csv",
      "view_texts": "views.txt",
      "label_texts": "label_texts.txt"
    }

Paths are resolved relative to the manifest location.  Matrix files are
UTF-8 comma-delimited text, one row per sample, no header.  Description
files hold one text per line.  Features without a meaningful name get a
deterministic "<view> feature <n>" surrogate so that downstream semantic
scoring always has something to talk about.
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateSplit,
    MissingFile,
    NonBinaryLabel,
    ParseError,
    RowCountMismatch,
)

_BARE_NUMBER = re.compile(r"^[A-Za-z]?[0-9]+$")


@dataclass
class ViewBlock:
    """One feature block (modality) of the dataset."""

    view_id: int
    name: str
    matrix: np.ndarray  # (n, d_i) float64
    feature_names: list[str] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


@dataclass
class MultiViewDataset:
    views: list[ViewBlock]
    labels: np.ndarray  # (n, c) int8 in {0, 1}

    def __post_init__(self):
        # Global feature index: concatenation order of the views.
        offsets = np.cumsum([0] + [v.width for v in self.views])
        self._offsets = offsets
        self.feature_view = np.concatenate(
            [np.full(v.width, v.view_id, dtype=np.int64) for v in self.views]
        )
        self.feature_local = np.concatenate(
            [np.arange(v.width, dtype=np.int64) for v in self.views]
        )

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_features(self) -> int:
        return int(self._offsets[-1])

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    def global_id(self, view_id: int, local_index: int) -> int:
        return int(self._offsets[view_id] + local_index)

    def locate(self, global_id: int) -> tuple[int, int]:
        """Inverse of :meth:`global_id`: global feature id -> (view, local)."""
        return int(self.feature_view[global_id]), int(self.feature_local[global_id])

    def stacked(self) -> np.ndarray:
        """All views concatenated column-wise, columns in global-id order."""
        return np.concatenate([v.matrix for v in self.views], axis=1)

    def digest(self) -> str:
        """Content hash used to key caches; covers matrices, labels, names."""
        h = hashlib.sha256()
        for v in self.views:
            h.update(v.name.encode("utf-8"))
            h.update(np.int64(v.matrix.shape[0]).tobytes())
            h.update(np.int64(v.matrix.shape[1]).tobytes())
            h.update(np.ascontiguousarray(v.matrix, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int8).tobytes())
        h.update(np.int64(self.labels.shape[1]).tobytes())
        return h.hexdigest()


@dataclass
class TextCatalog:
    """Natural-language descriptions of views, features and labels."""

    view_texts: list[str]
    feature_texts: list[list[str]]  # per view, one text per feature
    label_texts: list[str]

    def feature_text(self, dataset: MultiViewDataset, global_id: int) -> str:
        view_id, local = dataset.locate(global_id)
        return self.feature_texts[view_id][local]


@dataclass
class SplitIndices:
    train_ids: np.ndarray
    test_ids: np.ndarray
    seed: int


def pseudo_name(view_name: str, local_index: int) -> str:
    """Deterministic surrogate description for an unnamed feature.

    The surrogate is index-based ("<view> feature <local_index + 1>"), so a
    feature literally named "f17" does not keep its digits: it is renamed
    after its position, not after the digits in the original name.
    """
    if local_index < 0:
        raise ValueError("local_index must be >= 0")
    return f"{view_name} feature {local_index + 1}"


def is_bare_number_name(name: str) -> bool:
    """True when a feature name carries no usable semantics.

    Covers empty strings, pure digit strings, and digits with a single
    alphabetic prefix character such as "f17" or "X3".
    """
    stripped = name.strip()
    return stripped == "" or bool(_BARE_NUMBER.match(stripped))


def split(n: int, train_fraction: float, seed: int) -> SplitIndices:
    """Reproducible uniform shuffle followed by a prefix split.

    |train| = round-half-up(train_fraction * n).  Identical arguments give
    identical index sets.  Raises DegenerateSplit when either side is empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DegenerateSplit(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(np.floor(train_fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"split of n={n} at fraction={train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train_ids=np.sort(perm[:n_train]),
        test_ids=np.sort(perm[n_train:]),
        seed=seed,
    )


def subset_rows(dataset: MultiViewDataset, ids: np.ndarray) -> MultiViewDataset:
    """Row-subsampled copy; the node structure (views, features, labels)
    is unchanged, only per-sample content shrinks."""
    views = [
        ViewBlock(
            view_id=v.view_id,
            name=v.name,
            matrix=v.matrix[ids],
            feature_names=list(v.feature_names),
        )
        for v in dataset.views
    ]
    return MultiViewDataset(views=views, labels=dataset.labels[ids])


def _read_matrix(path: Path, dtype=np.float64) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(str(path))
    rows: list[list[float]] = []
    width = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            if not all(np.isfinite(row)):
                raise ParseError(f"{path}:{lineno}: NaN or Inf value")
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    return np.asarray(rows, dtype=dtype)


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise MissingFile(str(path))
    return path.read_text(encoding="utf-8").splitlines()


def load_dataset(manifest_path: str | Path) -> tuple[MultiViewDataset, TextCatalog]:
    """Load and validate a dataset plus its text catalog from a manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(str(manifest_path))
    base = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}:{exc.lineno}: invalid JSON ({exc.msg})") from None

    if "views" not in manifest or "labels" not in manifest:
        raise ParseError(f"{manifest_path}: manifest requires 'views' and 'labels' keys")

    label_matrix = _read_matrix(base / manifest["labels"])
    if not np.isin(label_matrix, (0.0, 1.0)).all():
        raise NonBinaryLabel(f"{manifest['labels']}: label matrix must contain only 0/1")
    labels = label_matrix.astype(np.int8)
    n = labels.shape[0]

    zero_cols = np.flatnonzero(labels.sum(axis=0) == 0)
    if zero_cols.size:
        warnings.warn(f"label columns {zero_cols.tolist()} have no positive samples", stacklevel=2)

    views: list[ViewBlock] = []
    feature_texts: list[list[str]] = []
    for view_id, spec in enumerate(manifest["views"]):
        name = spec.get("name", "") or f"view {view_id + 1}"
        matrix = _read_matrix(base / spec["matrix"])
        if matrix.shape[0] != n:
            raise RowCountMismatch(
                f"view '{name}' has {matrix.shape[0]} rows but label file has {n}"
            )
        names = _read_lines(base / spec["feature_texts"]) if spec.get("feature_texts") else []
        if names and len(names) != matrix.shape[1]:
            raise DataError(
                f"view '{name}': {len(names)} feature texts for {matrix.shape[1]} features"
            )
        if not names:
            names = [""] * matrix.shape[1]
        texts = [
            pseudo_name(name, i) if is_bare_number_name(t) else t.strip()
            for i, t in enumerate(names)
        ]
        views.append(ViewBlock(view_id=view_id, name=name, matrix=matrix, feature_names=texts))
        feature_texts.append(texts)

    if manifest.get("view_texts"):
        view_texts = [t.strip() for t in _read_lines(base / manifest["view_texts"])]
        if len(view_texts) != len(views):
            raise DataError(f"{len(view_texts)} view texts for {len(views)} views")
        view_texts = [t or v.name for t, v in zip(view_texts, views)]
    else:
        view_texts = [v.name for v in views]

    if manifest.get("label_texts"):
        label_texts = [t.strip() for t in _read_lines(base / manifest["label_texts"])]
        if len(label_texts) != labels.shape[1]:
            raise DataError(f"{len(label_texts)} label texts for {labels.shape[1]} labels")
        label_texts = [t or f"label {j + 1}" for j, t in enumerate(label_texts)]
    else:
        label_texts = [f"label {j + 1}" for j in range(labels.shape[1])]

    dataset = MultiViewDataset(views=views, labels=labels)
    catalog = TextCatalog(
        view_texts=view_texts, feature_texts=feature_texts, label_texts=label_texts
    )
    return dataset, catalog


def write_dataset(
    dataset: MultiViewDataset,
    catalog: TextCatalog,
    out_dir: str | Path,
    name: str = "dataset",
) -> Path:
    """Write a dataset back to disk in manifest form; returns the manifest path.

    Matrices are written with 17 significant digits so float64 values
    round-trip bit-exactly through load_dataset.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"views": [], "labels": "labels.csv"}
    np.savetxt(out_dir / "labels.csv", dataset.labels, fmt="%d", delimiter=",")
    for view, texts in zip(dataset.views, catalog.feature_texts):
        stem = f"view{view.view_id}"
        np.savetxt(out_dir / f"{stem}.csv", view.matrix, fmt="%.17g", delimiter=",")
        (out_dir / f"{stem}_features.txt").write_text(
            "\n".join(texts) + "\n", encoding="utf-8"
        )
        manifest["views"].append(
            {"name": view.name, "matrix": f"{stem}.csv", "feature_texts": f"{stem}_features.txt"}
        )
    (out_dir / "view_texts.txt").write_text("\n".join(catalog.view_texts) + "\n", encoding="utf-8")
    (out_dir / "label_texts.txt").write_text(
        "\n".join(catalog.label_texts) + "\n", encoding="utf-8"
    )
    manifest["view_texts"] = "view_texts.txt"
    manifest["label_texts"] = "label_texts.txt"
    manifest_path = out_dir / f"{name}.manifest"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path

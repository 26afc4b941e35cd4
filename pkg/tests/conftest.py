import json
from pathlib import Path

import pytest

from mvmlfs.dataset import write_dataset
from mvmlfs.synth import make_toy_semantic


@pytest.fixture()
def toy_semantic():
    return make_toy_semantic()


@pytest.fixture()
def toy_manifest(tmp_path, toy_semantic):
    dataset, catalog, synonyms = toy_semantic
    manifest = write_dataset(dataset, catalog, tmp_path / "toy", name="toy")
    synonyms_path = tmp_path / "synonyms.json"
    synonyms_path.write_text(json.dumps(synonyms), encoding="utf-8")
    return manifest, synonyms_path


DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden"

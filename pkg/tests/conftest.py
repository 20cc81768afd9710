from pathlib import Path

import pytest

from unrest.backbone import BackboneHandle

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def tiny_backbone_path() -> Path:
    path = FIXTURES / "tiny_backbone.onnx"
    assert path.exists(), "tiny backbone fixture missing; run tools/make_tiny_backbone.py"
    return path


@pytest.fixture(scope="session")
def backbone32(tiny_backbone_path) -> BackboneHandle:
    return BackboneHandle.load(tiny_backbone_path, input_size=32)


@pytest.fixture(scope="session")
def backbone64(tiny_backbone_path) -> BackboneHandle:
    return BackboneHandle.load(tiny_backbone_path, input_size=64)

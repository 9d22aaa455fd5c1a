import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture
def world_doc():
    return json.loads((SCENARIOS / "world.json").read_text())


@pytest.fixture
def baseline_text():
    return (SCENARIOS / "baseline.bzp").read_text()

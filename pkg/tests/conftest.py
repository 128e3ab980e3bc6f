import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"


@pytest.fixture
def overtake_path():
    return SCENARIO_DIR / "overtake.scn"


@pytest.fixture
def intersection_path():
    return SCENARIO_DIR / "intersection.scn"

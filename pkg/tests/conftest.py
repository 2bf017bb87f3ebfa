import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cliqueslab.group_action import PRESETS  # noqa: E402


@pytest.fixture
def modexp():
    return PRESETS["modexp"]


@pytest.fixture
def elliptic():
    return PRESETS["elliptic"]


@pytest.fixture(params=["modexp", "elliptic"])
def action(request):
    return PRESETS[request.param]

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # test helper modules

from midifusion.skeleton import default_humanoid


@pytest.fixture(scope="session")
def humanoid():
    return default_humanoid()

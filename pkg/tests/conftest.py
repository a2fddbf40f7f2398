import os
import sys

import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
sys.path.insert(0, HERE)

from tvsdac import kernel  # noqa: E402


def scenario_path(name: str) -> str:
    return os.path.join(ROOT, "scenarios", name)


@pytest.fixture(params=kernel.available_backends())
def backend(request):
    return request.param

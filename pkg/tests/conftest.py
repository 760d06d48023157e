import sys
from pathlib import Path

import pytest

from mdiplus import _pykernels, forest, glm, stumps

sys.path.insert(0, str(Path(__file__).parent))

try:
    from mdiplus import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = ["python"] + (["cython"] if _ckernels is not None else [])


@pytest.fixture(params=_BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel implementation."""
    impl = _pykernels if request.param == "python" else _ckernels
    for mod in (forest, stumps, glm):
        monkeypatch.setattr(mod, "kernels", impl)
    return request.param

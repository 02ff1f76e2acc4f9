"""Test related to zrpfluct initialization."""
import sys
from subprocess import run

import pytest


def _run(code: str) -> int:
    # Fixtures already import the numerical stack, so use a separated process.
    return run([sys.executable, "-c", code], check=False).returncode


def test_package_import_is_light() -> None:
    """Safeguard that scipy does not become an implicit import."""
    code = "import zrpfluct, sys; sys.exit(0 if 'scipy' not in sys.modules else 1)"
    assert _run(code) == 0


@pytest.mark.parametrize('module', ("zrpfluct.__main__", "zrpfluct.app"))
def test_import(module: str) -> None:
    assert _run(f"import {module}") == 0

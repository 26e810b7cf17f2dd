import os

import pytest

from . import non_gui_backend

TESTDIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "test")


def run(*args: str) -> int:
    """Runs the test suite, passing ``args`` on to pytest."""
    with non_gui_backend():
        return pytest.main([TESTDIR, *args])


if __name__ == "__main__":
    run()

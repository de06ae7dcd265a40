import numpy as np
import pytest

from disentangle3d.geometry import Box2D, BoxContext, Intrinsics

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kitti_ctx():
    K = Intrinsics(721.5377, 721.5377, 609.5593, 172.854)
    return BoxContext(Box2D(580.0, 150.0, 640.0, 200.0), K)


@pytest.fixture
def criterion_log():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, name, passed, detail=""):
        _ACCEPTANCE.append((number, name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE):
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{mark}] {number:>2}. {name}: {detail}")

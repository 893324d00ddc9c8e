from __future__ import annotations

import pytest

from higgsbal.core.model import HiggsInstance


@pytest.fixture
def polystable() -> HiggsInstance:
    """O + O with a constant diagonalizable field, m = 0."""
    return HiggsInstance.build(0, [0, 0], [[0, 2], [1, 0]], label="polystable")


@pytest.fixture
def unstable() -> HiggsInstance:
    """O(1) + O(-1) with phi_12 = 1, m = 2: O(1) is invariant and destabilizing."""
    return HiggsInstance.build(2, [1, -1], [[0, [1]], [0, 0]], label="unstable")


@pytest.fixture
def split() -> HiggsInstance:
    """O(2) + O with zero field."""
    return HiggsInstance.build(0, [2, 0], label="split")


@pytest.fixture
def trivial_line() -> HiggsInstance:
    """The trivial line bundle with zero field."""
    return HiggsInstance.build(0, [0], label="trivial")

import math
import os
import sys

import numpy as np
import pytest

# Add current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from modals.field import Grid, GridField


@pytest.fixture
def small_grid() -> Grid:
    """64×64 at 16 points per wavelength (L ≈ 25)."""
    return Grid(n=64, h=2.0 * math.pi / 16.0)


@pytest.fixture
def resolvent_grid() -> Grid:
    """256×256 at 16 points per wavelength (L ≈ 100)."""
    return Grid(n=256, h=2.0 * math.pi / 16.0)


@pytest.fixture
def gaussian():
    def build(grid: Grid, scale: float = 0.5) -> GridField:
        return GridField.from_function(grid, lambda x1, x2: np.exp(-scale * (x1 * x1 + x2 * x2)))
    return build

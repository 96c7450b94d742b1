import numpy as np
import pytest

from nanocnn.data import write_ppm


@pytest.fixture
def class_tree(tmp_path):
    """Factory: build a PPM class tree under tmp_path/data."""

    def build(counts, size=16, seed=0):
        rng = np.random.default_rng(seed)
        root = tmp_path / "data"
        for cls, n in counts.items():
            d = root / cls
            d.mkdir(parents=True, exist_ok=True)
            for i in range(n):
                write_ppm(d / f"im_{i:03d}.ppm", rng.random((size, size, 3)))
        return root

    return build

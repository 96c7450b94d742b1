"""Global element-precision switch.

Training runs use float32; gradient-check suites switch to float64 where
finite differences need the headroom. The switch controls what the data
pipeline and parameter initializers produce; operators themselves follow
the dtype of their inputs.
"""

from contextlib import contextmanager

import numpy as np

_DTYPES = {"float32": np.float32, "float64": np.float64}

_current = "float32"


def get_dtype() -> np.dtype:
    """Return the numpy dtype newly created tensors should use."""
    return np.dtype(_DTYPES[_current])


def get_precision() -> str:
    return _current


def set_precision(name: str) -> None:
    """Set the global precision to "float32" or "float64"."""
    global _current
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}, expected one of {sorted(_DTYPES)}")
    _current = name


@contextmanager
def precision(name: str):
    """Temporarily run under a different element precision."""
    previous = _current
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)

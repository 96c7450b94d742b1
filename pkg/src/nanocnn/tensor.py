"""Dense tensor storage and the ".nct" raw tensor file format.

Tensors are plain numpy arrays in row-major (C) order; the batch layout
used throughout the package is N x C x H x W. The ".nct" container is the
package's raw interchange format:

    magic "NCT1" | u32 LE rank | rank x u32 LE extents | payload

where the payload is product(extents) little-endian IEEE-754 float32
values in row-major order. All extents must be >= 1.
"""

import struct

import numpy as np

from .errors import DataFormatError, InvalidArgumentError

NCT_MAGIC = b"NCT1"


def check_shape(shape) -> tuple:
    """Validate that every extent is a positive integer; return as tuple."""
    shape = tuple(int(s) for s in shape)
    for i, s in enumerate(shape):
        if s < 1:
            raise InvalidArgumentError(f"extent {i} must be >= 1, got {s}")
    return shape


def save_nct(path, array: np.ndarray) -> None:
    """Write an array to ``path`` in the ".nct" format (float32 payload)."""
    # not ascontiguousarray: that would promote rank-0 arrays to rank 1
    arr = np.asarray(array, dtype="<f4", order="C")
    shape = check_shape(arr.shape)
    with open(path, "wb") as fh:
        fh.write(NCT_MAGIC)
        fh.write(struct.pack("<I", len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(arr.tobytes())


def load_nct(path) -> np.ndarray:
    """Read a ".nct" file back into a float32 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != NCT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {data[:4]!r}, expected {NCT_MAGIC!r}")
    if len(data) < 8:
        raise DataFormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", data, 4)
    header_end = 8 + 4 * rank
    if len(data) < header_end:
        raise DataFormatError(f"{path}: truncated extent list (rank {rank})")
    shape = struct.unpack_from(f"<{rank}I", data, 8)
    for i, s in enumerate(shape):
        if s < 1:
            raise DataFormatError(f"{path}: extent {i} is {s}, extents must be >= 1")
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    expected = header_end + 4 * count
    if len(data) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(data) - header_end} bytes, expected {4 * count}"
        )
    values = np.frombuffer(data, dtype="<f4", count=count, offset=header_end)
    return values.reshape(shape).copy()

"""Raw binary array persistence.

Every array the package writes to disk uses one convention: little-endian
64-bit IEEE floats, row-major element order, no header.  Shapes and all
other metadata live in JSON sidecar files next to the payloads.
"""

import json
import os

import numpy as np

from .errors import FormatError

_DTYPE = np.dtype("<f8")


def write_array(path, arr):
    """Write ``arr`` to ``path`` as headerless little-endian float64."""
    data = np.ascontiguousarray(arr, dtype=_DTYPE)
    with open(path, "wb") as fh:
        fh.write(data.tobytes())


def read_array(path, shape):
    """Read an array of the given shape, validating the payload size."""
    expected = int(np.prod(shape)) * _DTYPE.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for shape {tuple(shape)}, "
            f"found {actual}"
        )
    with open(path, "rb") as fh:
        flat = np.frombuffer(fh.read(), dtype=_DTYPE)
    return flat.reshape(shape).copy()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    if not os.path.exists(path):
        raise FormatError(f"missing metadata file {path}")
    with open(path) as fh:
        return json.load(fh)

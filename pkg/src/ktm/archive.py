"""Byte-reproducible zip archives of JSON, CSV and ``.npy`` members."""

import io
import zipfile

import numpy as np

from .errors import ParseError

# Fixed timestamp so identical contents give identical archive bytes.
_EPOCH = (1980, 1, 1, 0, 0, 0)


def array_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def array_from_bytes(data):
    return np.lib.format.read_array(io.BytesIO(data), allow_pickle=False)


def write_zip(path, members):
    """Write ``{name: bytes}`` in insertion order."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, data in members.items():
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)


def read_zip(path):
    try:
        with zipfile.ZipFile(path) as zf:
            return {name: zf.read(name) for name in zf.namelist()}
    except (zipfile.BadZipFile, OSError) as exc:
        raise ParseError(f"{path}: cannot read archive ({exc})") from exc

"""Parameter checkpoint files.

Layout: a UTF-8 JSON header line (terminated by a newline) followed by the
raw payload. The header records entry names in payload order, their shapes,
and the dtype, which is always little-endian float64. Extra header fields
under "meta" round-trip untouched so models can stash normalization
constants and config next to their weights.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import IoError

_DTYPE = "<f8"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    names = sorted(arrays)
    header = {
        "format": "daft-ckpt-v1",
        "dtype": _DTYPE,
        "entries": [{"name": n, "shape": list(np.asarray(arrays[n]).shape)} for n in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype=_DTYPE).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    p = Path(path)
    if not p.exists():
        raise IoError(f"checkpoint not found: {p}")
    with open(p, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IoError(f"bad checkpoint header in {p}: {exc}") from exc
        if header.get("format") != "daft-ckpt-v1":
            raise IoError(f"unrecognized checkpoint format in {p}")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise IoError(f"truncated checkpoint payload in {p}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype=_DTYPE).reshape(shape).copy()
    return arrays, header.get("meta", {})

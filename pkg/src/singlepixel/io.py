"""File formats: grid text files, profile and history CSVs, atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .phantom import RadialMap

__all__ = [
    "atomic_write_text",
    "file_digest",
    "grid_to_text",
    "write_grid",
    "read_grid",
    "profile_to_csv",
    "write_profile",
    "read_profile",
    "history_to_csv",
    "write_history",
    "write_json",
]


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def grid_to_text(grid) -> str:
    """``n=<int>`` header, then the n^3 values with ``i`` varying fastest."""
    grid = np.asarray(grid, dtype=float)
    n = grid.shape[0]
    if grid.shape != (n, n, n):
        raise ValueError(f"grid must be cubic, got shape {grid.shape}")
    flat = grid.ravel(order="F")
    lines = [f"n={n}"]
    # one line per (j, k) column keeps the file readable
    for start in range(0, flat.size, n):
        lines.append(" ".join(f"{v:.17g}" for v in flat[start:start + n]))
    return "\n".join(lines) + "\n"


def write_grid(path, grid) -> None:
    atomic_write_text(path, grid_to_text(grid))


def read_grid(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("n="):
            raise ValueError(f"{path}: first line must be 'n=<int>', got {header!r}")
        try:
            n = int(header[2:])
        except ValueError:
            raise ValueError(f"{path}: bad grid size in header {header!r}") from None
        values = np.array(fh.read().split(), dtype=float)
    if n < 1 or values.size != n**3:
        raise ValueError(f"{path}: expected {n**3} values for n={n}, found {values.size}")
    return values.reshape((n, n, n), order="F")


def profile_to_csv(profile, rmap: RadialMap) -> str:
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (rmap.n_classes,):
        raise ValueError(f"profile has shape {profile.shape}, expected ({rmap.n_classes},)")
    rows = ["class_index,sq_dist_key,radius,value"]
    for c, (key, r, v) in enumerate(zip(rmap.class_key, rmap.radii, profile)):
        rows.append(f"{c},{int(key)},{r:.17g},{v:.17g}")
    return "\n".join(rows) + "\n"


def write_profile(path, profile, rmap: RadialMap) -> None:
    atomic_write_text(path, profile_to_csv(profile, rmap))


def read_profile(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sq_dist_keys, values)`` from a profile CSV."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    data = np.atleast_1d(data)
    return data["sq_dist_key"].astype(np.int64), data["value"].astype(float)


def history_to_csv(history: Iterable) -> str:
    rows = ["iter,J,F,G,step_norm"]
    for h in history:
        rows.append(f"{h.iter},{h.J:.17g},{h.F:.17g},{h.G:.17g},{h.step_norm:.17g}")
    return "\n".join(rows) + "\n"


def write_history(path, history) -> None:
    atomic_write_text(path, history_to_csv(history))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")

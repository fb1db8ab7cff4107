"""Two-column text format for tabulated Lévy measures.

Example::

    # levy-measure v1
    # tail_low = 2.5
    # tail_high = 2.5
    # drift = 0.0
    # rtol = 1e-9
    0.001  13380.9
    0.0012 10180.2
    ...

Header lines start with ``#`` and hold ``key = value`` pairs. ``tail_low``
and ``tail_high`` are the power-law exponents used to extend the density
below the first and above the last grid point (density ~ l**-exponent).
``drift`` (default 0) and ``rtol`` (default 1e-9) are optional. Data lines
hold ``l density`` with ``l`` strictly increasing.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .exponent import General, LevyMeasureSpec

FORMAT_TAG = "levy-measure v1"


def load_measure(path) -> General:
    meta: dict[str, str] = {}
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        rows.append((float(parts[0]), float(parts[1])))
    for key in ("tail_low", "tail_high"):
        if key not in meta:
            raise ValueError(f"{path}: missing header '{key} = ...'")
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    arr = np.array(rows)
    spec = LevyMeasureSpec(arr[:, 0], arr[:, 1], float(meta["tail_low"]),
                           float(meta["tail_high"]), float(meta.get("rtol", 1e-9)))
    return General(float(meta.get("drift", 0.0)), spec)


def save_measure(path, mech: General) -> None:
    m = mech.measure
    lines = [f"# {FORMAT_TAG}", f"# tail_low = {m.tail_low!r}", f"# tail_high = {m.tail_high!r}",
             f"# drift = {mech.drift!r}", f"# rtol = {m.rtol!r}"]
    lines += [f"{x!r} {d!r}" for x, d in zip(m.ell.tolist(), m.density.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")

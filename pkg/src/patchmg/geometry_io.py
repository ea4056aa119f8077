"""Line-oriented text format for multi-patch spline geometries.

::

    patchmg-geometry 1
    patches 2
    patch
    degree 1 1
    knots_u 4
    0 0 1 1
    knots_v 4
    0 0 1 1
    control 2 2
    0 0
    1 0
    0 1
    1 1
    end
    patch
    ...
    end
    boundary 6
    0 0
    ...

Control points are listed row by row (``v`` index outer, ``u`` index inner),
one ``x y`` pair per line. Blank lines and ``#`` comments are ignored. The
optional ``boundary`` block lists ``patch side`` pairs (sides 0..3 = west,
east, south, north) and is checked against the detected topology.
"""
from __future__ import annotations

import numpy as np

from .geometry import GeometryError, GeometryMap

MAGIC = "patchmg-geometry"


class GeometryFileError(ValueError):
    """Malformed geometry document; the message names the offending line."""


class _Lines:
    def __init__(self, text):
        self.items = []
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.items.append((no, line.split()))
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            raise GeometryFileError(f"unexpected end of document while reading {what}")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def keyword(self, word, nargs):
        no, toks = self.next(word)
        if toks[0] != word or len(toks) != nargs + 1:
            raise GeometryFileError(f"line {no}: expected '{word}' with {nargs} value(s), got {' '.join(toks)!r}")
        return no, toks[1:]

    def numbers(self, count, what):
        no, toks = self.next(what)
        if len(toks) != count:
            raise GeometryFileError(f"line {no}: expected {count} number(s) for {what}, got {len(toks)}")
        try:
            return no, [float(t) for t in toks]
        except ValueError:
            raise GeometryFileError(f"line {no}: non-numeric value in {what}: {' '.join(toks)!r}") from None

    def done(self):
        return self.pos >= len(self.items)


def _int(no, tok, what):
    try:
        v = int(tok)
    except ValueError:
        raise GeometryFileError(f"line {no}: {what} must be an integer, got {tok!r}") from None
    if v < 0:
        raise GeometryFileError(f"line {no}: {what} must be non-negative")
    return v


def parse_geometry(text):
    """Parse a geometry document.

    Returns
    -------
    patches : list of GeometryMap
    boundary : list of (patch, side) or None
    """
    lines = _Lines(text)
    no, args = lines.keyword(MAGIC, 1)
    if args[0] != "1":
        raise GeometryFileError(f"line {no}: unsupported format version {args[0]!r}")
    no, args = lines.keyword("patches", 1)
    npatch = _int(no, args[0], "patch count")
    patches = []
    for k in range(npatch):
        lines.keyword("patch", 0)
        no, args = lines.keyword("degree", 2)
        deg = (_int(no, args[0], "degree"), _int(no, args[1], "degree"))
        knots = []
        for name in ("knots_u", "knots_v"):
            no, args = lines.keyword(name, 1)
            cnt = _int(no, args[0], f"{name} count")
            knots.append(lines.numbers(cnt, name)[1])
        no, args = lines.keyword("control", 2)
        nv, nu = _int(no, args[0], "control rows"), _int(no, args[1], "control columns")
        pts = [lines.numbers(2, f"control point of patch {k}")[1] for _ in range(nv * nu)]
        lines.keyword("end", 0)
        try:
            G = GeometryMap(deg, knots[0], knots[1], np.array(pts).reshape(nv, nu, 2))
            _check_regular(G)
        except GeometryError as exc:
            raise GeometryFileError(f"patch {k} (ending line {lines.items[lines.pos - 1][0]}): {exc}") from None
        patches.append(G)
    boundary = None
    if not lines.done():
        no, args = lines.keyword("boundary", 1)
        cnt = _int(no, args[0], "boundary count")
        boundary = []
        for _ in range(cnt):
            no, vals = lines.numbers(2, "boundary side")
            k, s = int(vals[0]), int(vals[1])
            if not (0 <= k < npatch and 0 <= s < 4):
                raise GeometryFileError(f"line {no}: boundary side ({k}, {s}) out of range")
            boundary.append((k, s))
    if not lines.done():
        no, toks = lines.items[lines.pos]
        raise GeometryFileError(f"line {no}: unexpected content {' '.join(toks)!r}")
    return patches, boundary


def _check_regular(G, samples=9):
    t = (np.arange(samples) + 0.5) / samples
    G.check_jacobian(t, t)


def _fmt(x):
    return repr(float(x))


def write_geometry(patches, boundary=None):
    """Serialize patches (and an optional boundary list) to the text format."""
    out = [f"{MAGIC} 1", f"patches {len(patches)}"]
    for G in patches:
        nv, nu, _ = G.control.shape
        out += ["patch", f"degree {G.degree[0]} {G.degree[1]}"]
        out += [f"knots_u {len(G.knots_u)}", " ".join(_fmt(t) for t in G.knots_u)]
        out += [f"knots_v {len(G.knots_v)}", " ".join(_fmt(t) for t in G.knots_v)]
        out.append(f"control {nv} {nu}")
        out += [f"{_fmt(x)} {_fmt(y)}" for x, y in G.control.reshape(-1, 2)]
        out.append("end")
    if boundary is not None:
        out.append(f"boundary {len(boundary)}")
        out += [f"{k} {s}" for k, s in boundary]
    return "\n".join(out) + "\n"


def read_geometry(path):
    with open(path, encoding="utf-8") as fh:
        return parse_geometry(fh.read())


def save_geometry(path, patches, boundary=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_geometry(patches, boundary))

"""Readers and writers for the on-disk formats.

* Portable float map (``Pf``/``PF``): depth maps.
* Portable gray/pix map (``P2``/``P5``/``P3``/``P6``): input images.
* Camera text files in the MVSNet layout.
* ``pair.txt`` view-selection lists.
* Binary little-endian PLY point clouds.
"""

import re

import numpy as np

from .errors import ParseError, StructuralError

MAX_DIM = 1 << 16


# -- PFM ----------------------------------------------------------------------

def write_pfm(path, grid, scale=1.0):
    """Write a float grid ``(H, W)`` or ``(H, W, 3)``; rows go bottom to top.

    The scale token is written negative (little-endian payload).
    """
    a = np.asarray(grid, dtype=np.float32)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM holds (H, W) or (H, W, 3) grids, got {a.shape}")
    h, w = a.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("refusing to write an empty grid")
    with open(path, "wb") as f:
        f.write(tag + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(f"{-abs(scale):g}\n".encode("ascii"))
        f.write(np.ascontiguousarray(a[::-1], dtype="<f4").tobytes())


def read_pfm(path):
    """Return the grid as float32, top row first."""
    with open(path, "rb") as f:
        tag = f.readline().rstrip()
        if tag not in (b"Pf", b"PF"):
            raise ParseError(f"not a PFM file (tag {tag!r})", path, 1)
        dims = f.readline().split()
        try:
            w, h = (int(v) for v in dims)
        except ValueError as exc:
            raise ParseError("malformed dimension line", path, 2) from exc
        if not (0 < w <= MAX_DIM and 0 < h <= MAX_DIM):
            raise ParseError(f"dimensions {w}x{h} out of range", path, 2)
        try:
            scale = float(f.readline())
        except ValueError as exc:
            raise ParseError("malformed scale line", path, 3) from exc
        if scale == 0:
            raise ParseError("scale token must be non-zero", path, 3)
        payload = f.read()
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * channels
    if len(payload) != 4 * n:
        raise ParseError(f"expected {4 * n} payload bytes, found {len(payload)}", path)
    a = np.frombuffer(payload, dtype=dtype).reshape((h, w, channels) if channels == 3 else (h, w))
    return a[::-1].astype(np.float32)


# -- PNM ----------------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")


def read_pnm(path):
    """Read a PGM/PPM image as float64 in ``[0, 1]``; color comes back ``(3, H, W)``."""
    with open(path, "rb") as f:
        data = f.read()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PNM_TOKEN.match(data, pos)
        if m is None:
            raise ParseError("truncated PNM header", path)
        tokens.append(m.group(2))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ParseError(f"unsupported PNM magic {magic!r}", path, 1)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ParseError("malformed PNM header", path) from exc
    if not (0 < w <= MAX_DIM and 0 < h <= MAX_DIM and 0 < maxval < 65536):
        raise ParseError("PNM header values out of range", path)
    channels = 3 if magic in (b"P3", b"P6") else 1
    n = w * h * channels
    if magic in (b"P5", b"P6"):
        body = data[pos + 1:]
        dtype = ">u2" if maxval > 255 else "u1"
        size = np.dtype(dtype).itemsize
        if len(body) < n * size:
            raise ParseError("truncated PNM payload", path)
        vals = np.frombuffer(body, dtype=dtype, count=n)
    else:
        vals = np.array(data[pos:].split()[:n], dtype=np.int64)
        if vals.size != n:
            raise ParseError("truncated PNM payload", path)
    img = vals.astype(np.float64).reshape(h, w, channels) / maxval
    return img[..., 0] if channels == 1 else img.transpose(2, 0, 1)


def write_pnm(path, image, maxval=255):
    """Write ``(H, W)`` grayscale or ``(3, H, W)`` color in ``[0, 1]`` as binary PNM."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 3:
        a = a.transpose(1, 2, 0)
        magic = b"P6"
    else:
        magic = b"P5"
    q = np.clip(np.rint(a * maxval), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + f"\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(q.astype(dtype).tobytes())


# -- cameras ------------------------------------------------------------------

def _floats(line, path, lineno, count, what):
    parts = line.split()
    if len(parts) != count:
        raise ParseError(f"{what}: expected {count} numbers, got {len(parts)}", path, lineno)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"{what}: non-numeric entry", path, lineno) from exc


def parse_camera(text, path=None):
    """Parse the MVSNet camera layout.

    Returns ``(extrinsics 4x4, intrinsics 3x3, (d_min, interval, n_planes, d_max))``.
    ``n_planes`` and ``d_max`` may be absent; ``d_max`` then follows from the
    interval and plane count when given, else is ``None``.
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]
    idx = 0

    def expect(word):
        nonlocal idx
        if idx >= len(lines) or lines[idx][1].lower() != word:
            where = lines[idx][0] if idx < len(lines) else (lines[-1][0] + 1 if lines else 1)
            raise ParseError(f"missing {word} block", path, where)
        idx += 1

    def rows(n, width, what):
        nonlocal idx
        out = []
        for r in range(n):
            if idx >= len(lines):
                last = lines[-1][0] + 1 if lines else 1
                raise ParseError(f"{what} block truncated at row {r + 1}", path, last)
            lineno, ln = lines[idx]
            out.append(_floats(ln, path, lineno, width, f"{what} row {r + 1}"))
            idx += 1
        return np.array(out)

    expect("extrinsic")
    T = rows(4, 4, "extrinsic")
    expect("intrinsic")
    K = rows(3, 3, "intrinsic")
    if idx >= len(lines):
        last = lines[-1][0] + 1 if lines else 1
        raise ParseError("missing depth range line", path, last)
    lineno, ln = lines[idx]
    parts = ln.split()
    if not 2 <= len(parts) <= 4:
        raise ParseError("depth line must hold 2 to 4 numbers", path, lineno)
    try:
        nums = [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError("depth line: non-numeric entry", path, lineno) from exc
    d_min, interval = nums[0], nums[1]
    n_planes = nums[2] if len(nums) > 2 else None
    if len(nums) == 4:
        d_max = nums[3]
    elif n_planes is not None:
        d_max = d_min + interval * (n_planes - 1)
    else:
        d_max = None
    return T, K, (d_min, interval, n_planes, d_max)


def read_camera(path):
    with open(path) as f:
        return parse_camera(f.read(), path)


def format_camera(T, K, d_min, d_max, n_planes=48):
    def fmt(row):
        return " ".join(repr(float(v)) for v in row)

    interval = (d_max - d_min) / max(n_planes - 1, 1)
    out = ["extrinsic", *(fmt(r) for r in T), "", "intrinsic", *(fmt(r) for r in K), "",
           f"{d_min!r} {interval!r} {n_planes} {d_max!r}"]
    return "\n".join(out) + "\n"


def write_camera(path, T, K, d_min, d_max, n_planes=48):
    with open(path, "w") as f:
        f.write(format_camera(T, K, d_min, d_max, n_planes))


# -- pair lists ---------------------------------------------------------------

def parse_pairs(text, n_views=None, path=None):
    """Return ``{ref_id: [(src_id, score), ...]}`` in file order."""
    tokens = []
    for lineno, ln in enumerate(text.splitlines(), start=1):
        tokens.extend((tok, lineno) for tok in ln.split())
    pos = 0

    def take(kind, what):
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError(f"pair list truncated while reading {what}", path)
        tok, lineno = tokens[pos]
        pos += 1
        try:
            return kind(tok), lineno
        except ValueError as exc:
            raise ParseError(f"bad {what} {tok!r}", path, lineno) from exc

    total, _ = take(int, "view count")
    if n_views is not None and total != n_views:
        raise StructuralError(f"pair list declares {total} views, scene has {n_views}")
    pairs = {}
    for _ in range(total):
        ref, lineno = take(int, "reference id")
        if not 0 <= ref < total:
            raise StructuralError(f"{path or 'pair list'}:{lineno}: reference id {ref} out of range 0..{total - 1}")
        count, _ = take(int, "source count")
        srcs = []
        for _ in range(count):
            sid, lineno = take(int, "source id")
            score, _ = take(float, "score")
            if not 0 <= sid < total:
                raise StructuralError(f"{path or 'pair list'}:{lineno}: source id {sid} out of range 0..{total - 1}")
            srcs.append((sid, score))
        pairs[ref] = srcs
    return pairs


def format_pairs(pairs):
    lines = [str(len(pairs))]
    for ref, srcs in pairs.items():
        lines.append(str(ref))
        lines.append(" ".join([str(len(srcs))] + [f"{s} {float(sc)!r}" for s, sc in srcs]))
    return "\n".join(lines) + "\n"


# -- PLY ----------------------------------------------------------------------

PLY_VERTEX = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                       ("red", "u1"), ("green", "u1"), ("blue", "u1")])


def write_ply(path, xyz, rgb=None):
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    n = len(xyz)
    if rgb is None:
        rgb = np.full((n, 3), 255, dtype=np.uint8)
    rgb = np.asarray(rgb).reshape(-1, 3)
    verts = np.empty(n, dtype=PLY_VERTEX)
    verts["x"], verts["y"], verts["z"] = xyz.T
    verts["red"], verts["green"], verts["blue"] = rgb.astype(np.uint8).T
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(verts.tobytes())


def read_ply(path):
    """Read a file written by :func:`write_ply`; returns ``(xyz float32, rgb uint8)``."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise ParseError("not a PLY file", path, 1)
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ParseError("only binary little-endian PLY is supported", path)
    count = None
    for ln in header:
        if ln.startswith("element vertex"):
            count = int(ln.split()[2])
    if count is None:
        raise ParseError("no vertex element", path)
    body = data[end + len(b"end_header\n"):]
    if len(body) != count * PLY_VERTEX.itemsize:
        raise ParseError("vertex payload size mismatch", path)
    verts = np.frombuffer(body, dtype=PLY_VERTEX)
    xyz = np.stack([verts["x"], verts["y"], verts["z"]], axis=1)
    rgb = np.stack([verts["red"], verts["green"], verts["blue"]], axis=1)
    return xyz, rgb


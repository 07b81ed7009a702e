"""Dense image tensors: norms, projections, resampling, seeded randomness and file I/O.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Images are laid
out as ``(height, width, channels)``; pixel values live on the [0, 255] scale.
Every function here returns a new array and never mutates its input.
"""

import hashlib
import struct
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ParseError

PIXEL_MIN = 0.0
PIXEL_MAX = 255.0

TNSR_MAGIC = b"TNSR"
# version byte doubles as payload dtype tag
_TNSR_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def as_tensor(x):
    t = np.array(x, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise InvalidArgument("tensor contains non-finite values")
    return t


def as_image(x):
    """Promote an (H, W) array to (H, W, 1); pass (H, W, C) through."""
    t = as_tensor(x)
    if t.ndim == 2:
        t = t[:, :, None]
    if t.ndim != 3 or min(t.shape) < 1:
        raise InvalidArgument(f"expected an image tensor (H, W, C), got shape {t.shape}")
    return t


def l2_norm(t):
    return float(np.sqrt(np.sum(np.square(np.asarray(t, dtype=np.float64)))))


def l2_project(t, eps):
    """Radially shrink ``t`` onto the L2 ball of radius ``eps`` if it lies outside."""
    if not eps > 0:
        raise InvalidArgument(f"eps must be positive, got {eps}")
    t = np.asarray(t, dtype=np.float64)
    norm = l2_norm(t)
    if norm <= eps:
        return t.copy()
    factor = eps / norm
    out = t * factor
    # rounding can leave the norm an ulp above eps; shrink the factor until it holds
    while l2_norm(out) > eps:
        factor = np.nextafter(factor, 0.0)
        out = t * factor
    return out


def clip_values(x, lo=PIXEL_MIN, hi=PIXEL_MAX):
    if lo > hi:
        raise InvalidArgument(f"empty interval [{lo}, {hi}]")
    return np.clip(np.asarray(x, dtype=np.float64), lo, hi)


def quantize(x):
    """Round half away from zero, then clamp to the pixel range."""
    x = np.asarray(x, dtype=np.float64)
    rounded = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(rounded, PIXEL_MIN, PIXEL_MAX) + 0.0


@lru_cache(maxsize=256)
def _resize_matrix_cached(n_in, n_out):
    m = np.zeros((n_out, n_in))
    if n_in == 1 or n_out == 1:
        m[:, 0] = 1.0
        return m
    scale = (n_in - 1) / (n_out - 1)
    for i in range(n_out):
        src = i * scale
        lo = min(int(np.floor(src)), n_in - 1)
        frac = src - lo
        if lo == n_in - 1 or frac == 0.0:
            m[i, lo] = 1.0
        else:
            m[i, lo] = 1.0 - frac
            m[i, lo + 1] = frac
    m.setflags(write=False)
    return m


def resize_matrix(n_in, n_out):
    """1-D align-corners linear interpolation matrix of shape (n_out, n_in)."""
    if n_in < 1 or n_out < 1:
        raise InvalidArgument(f"extents must be positive, got {n_in} -> {n_out}")
    return _resize_matrix_cached(int(n_in), int(n_out))


def separable_apply(x, rows, cols):
    """Apply ``rows`` along the height axis and ``cols`` along the width axis."""
    out = rows @ np.moveaxis(x, 2, 0) @ cols.T
    return np.moveaxis(out, 0, 2)


def separable_adjoint(y, rows, cols):
    out = rows.T @ np.moveaxis(y, 2, 0) @ cols
    return np.moveaxis(out, 0, 2)


def resize_bilinear(x, out_h, out_w):
    x = as_image(x)
    if out_h < 1 or out_w < 1:
        raise InvalidArgument(f"output extents must be positive, got {out_h}x{out_w}")
    h, w, _ = x.shape
    if (h, w) == (out_h, out_w):
        return x.copy()
    return separable_apply(x, resize_matrix(h, out_h), resize_matrix(w, out_w))


class SeededRng:
    """Deterministic random stream keyed by a 64-bit seed.

    Child streams depend only on ``(seed, index)``, never on how many draws
    the parent has already made.
    """

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, index):
        return SeededRng(mix_seed(self.seed, index))

    def integers(self, lo, hi):
        """Uniform integer in the closed interval [lo, hi]."""
        return int(self._gen.integers(lo, hi, endpoint=True))

    def choice(self, options):
        return options[self.integers(0, len(options) - 1)]

    def normal(self, shape, scale=1.0):
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, lo, hi, shape=None):
        return self._gen.uniform(lo, hi, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def random(self, shape=None):
        return self._gen.random(shape)


def token_hash(token):
    return int.from_bytes(hashlib.blake2b(str(token).encode(), digest_size=8).digest(), "little")


def mix_seed(*parts):
    """Collapse integers and/or string tokens into one 64-bit seed."""
    words = [token_hash(p) if isinstance(p, str) else int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


# -- file I/O ---------------------------------------------------------------


def _pgm_token(buf, pos):
    """Return (token, next_pos), skipping whitespace and '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", start)
    return buf[start:pos], pos


def parse_pgm(buf):
    if buf[:2] != b"P5":
        raise ParseError(f"unsupported magic {buf[:2]!r}; only binary PGM (P5) is read", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, end = _pgm_token(buf, pos)
        at, pos = end - len(tok), end
        if not tok.isdigit():
            raise ParseError(f"bad {name} field {tok!r}", at)
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ParseError("zero image extent", 2)
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}", at)
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ParseError("missing whitespace after header", pos)
    pos += 1
    need = width * height
    data = buf[pos : pos + need]
    if len(data) < need:
        raise ParseError(f"truncated pixel data: need {need} bytes, have {len(data)}", pos + len(data))
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 1).astype(np.float64)


def read_image(path):
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path, x):
    """Write channel 0 of an image, quantized, as binary PGM."""
    img = quantize(as_image(x))[:, :, 0].astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def encode_tensor(t, dtype=None):
    t = np.asarray(t, dtype=np.float64)
    if dtype is None:
        exact32 = np.array_equal(t.astype(np.float32).astype(np.float64), t)
        version = 1 if exact32 else 2
    else:
        version = {"float32": 1, "float64": 2}[dtype]
    header = TNSR_MAGIC + bytes([version]) + struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape)
    return header + np.ascontiguousarray(t, dtype=_TNSR_DTYPES[version]).tobytes()


def decode_tensor(buf, offset=0):
    """Decode one tensor starting at ``offset``; returns (tensor, end_offset)."""
    pos = offset
    if buf[pos : pos + 4] != TNSR_MAGIC:
        raise ParseError("bad magic, expected TNSR", pos)
    pos += 4
    if pos >= len(buf):
        raise ParseError("missing version byte", pos)
    version = buf[pos]
    if version not in _TNSR_DTYPES:
        raise ParseError(f"unsupported version {version}", pos)
    pos += 1
    if len(buf) < pos + 4:
        raise ParseError("truncated rank", pos)
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if len(buf) < pos + 4 * rank:
        raise ParseError("truncated extents", pos)
    shape = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    dt = _TNSR_DTYPES[version]
    count = int(np.prod(shape, dtype=np.int64))
    nbytes = count * dt.itemsize
    if len(buf) < pos + nbytes:
        raise ParseError(f"truncated payload: need {nbytes} bytes", len(buf))
    data = np.frombuffer(buf, dtype=dt, count=count, offset=pos).astype(np.float64).reshape(shape)
    return data, pos + nbytes


def write_tensor(path, t, dtype=None):
    """Write the TNSR container; float32 payload when lossless, float64 otherwise."""
    Path(path).write_bytes(encode_tensor(t, dtype))


def read_tensor(path):
    buf = Path(path).read_bytes()
    t, end = decode_tensor(buf)
    if end != len(buf):
        raise ParseError("trailing bytes after tensor payload", end)
    return t

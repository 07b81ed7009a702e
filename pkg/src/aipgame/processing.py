"""Recogniser-side image processing: Proc, translate, noise, blur, crop, TNBC and ensembling.

Every spatial transform used here is separable and linear once its random
parameters are drawn, so a drawn transform is represented as an ``Op`` that
knows both its forward map and its adjoint. The adjoints are what the
vaccination attacks pull gradients back through.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .classifier import scores, softmax
from .errors import InvalidArgument
from .tensor import (
    PIXEL_MAX,
    PIXEL_MIN,
    as_image,
    mix_seed,
    quantize,
    resize_bilinear,
    resize_matrix,
    separable_adjoint,
    separable_apply,
    SeededRng,
)

STRATEGY_TOKENS = ("none", "proc", "t", "n", "b", "c", "tnbc")
STOCHASTIC = ("t", "n", "b", "c")


@dataclass(frozen=True)
class ProcessingConfig:
    offset_fraction: float = 0.10
    noise_sigma: float = 10.0
    blur_widths: tuple = (1, 3, 5, 7, 9)
    ensemble_samples: int = 5
    eye_bar_gray: float = 128.0

    def __post_init__(self):
        if not 0 <= self.offset_fraction < 1:
            raise InvalidArgument("offset_fraction must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise InvalidArgument("noise_sigma must be nonnegative")
        if not self.blur_widths or any(k < 1 or k % 2 == 0 for k in self.blur_widths):
            raise InvalidArgument("blur widths must be odd and positive")
        if self.ensemble_samples < 1:
            raise InvalidArgument("ensemble_samples must be at least 1")


DEFAULT_CONFIG = ProcessingConfig()


# -- 1-D operator matrices ------------------------------------------------------


@lru_cache(maxsize=512)
def translate_matrix(n, offset):
    """out[i] = in[clip(i - offset)]: shift by ``offset`` with edge replication."""
    m = np.zeros((n, n))
    m[np.arange(n), np.clip(np.arange(n) - offset, 0, n - 1)] = 1.0
    m.setflags(write=False)
    return m


def gaussian_kernel(k):
    """Normalised taps of a size-``k`` Gaussian with sigma = k / 3."""
    if k < 1 or k % 2 == 0:
        raise InvalidArgument(f"kernel size must be odd and positive, got {k}")
    if k == 1:
        return np.ones(1)
    r = np.arange(k) - (k - 1) // 2
    w = np.exp(-(r**2) / (2.0 * (k / 3.0) ** 2))
    return w / w.sum()


@lru_cache(maxsize=512)
def blur_matrix(n, k):
    w = gaussian_kernel(k)
    half = (k - 1) // 2
    m = np.zeros((n, n))
    for i in range(n):
        for tap, o in zip(w, range(-half, half + 1)):
            m[i, min(max(i + o, 0), n - 1)] += tap
    m.setflags(write=False)
    return m


@lru_cache(maxsize=512)
def crop_matrix(n, offset):
    """Drop ``|offset|`` leading (offset > 0) or trailing (offset < 0) samples, resize back to n."""
    keep = n - abs(offset)
    if keep < 1:
        raise RuntimeError(f"empty crop window: n={n}, offset={offset}")
    select = np.zeros((keep, n))
    start = max(offset, 0)
    select[np.arange(keep), start + np.arange(keep)] = 1.0
    m = resize_matrix(keep, n) @ select
    m.setflags(write=False)
    return m


def max_offset(n, fraction):
    return int(np.floor(fraction * n))


# -- drawn operators ---------------------------------------------------------------


class Op:
    """A drawn processing map together with its vector-Jacobian product."""

    def apply(self, x):
        raise NotImplementedError

    def vjp(self, g):
        raise NotImplementedError


class IdentityOp(Op):
    def apply(self, x):
        return np.array(x, dtype=np.float64)

    def vjp(self, g):
        return g


class SeparableOp(Op):
    def __init__(self, rows, cols):
        self.rows, self.cols = rows, cols

    def apply(self, x):
        return separable_apply(x, self.rows, self.cols)

    def vjp(self, g):
        return separable_adjoint(g, self.rows, self.cols)


class NoiseOp(Op):
    """Additive noise followed by clipping; the Jacobian is taken as the identity."""

    def __init__(self, noise):
        self.noise = noise

    def apply(self, x):
        return np.clip(x + self.noise, PIXEL_MIN, PIXEL_MAX)

    def vjp(self, g):
        return g


class ProcOp(Op):
    """Resize to ``shape`` then quantize; quantization uses a straight-through gradient."""

    def __init__(self, in_shape, out_shape):
        self.resize = SeparableOp(resize_matrix(in_shape[0], out_shape[0]), resize_matrix(in_shape[1], out_shape[1]))
        self.same = tuple(in_shape[:2]) == tuple(out_shape[:2])

    def apply(self, x):
        return quantize(x if self.same else self.resize.apply(x))

    def vjp(self, g):
        return g if self.same else self.resize.vjp(g)


class ComposeOp(Op):
    """ops[-1] after ... after ops[0]."""

    def __init__(self, *ops):
        self.ops = ops

    def apply(self, x):
        for op in self.ops:
            x = op.apply(x)
        return x

    def vjp(self, g):
        for op in reversed(self.ops):
            g = op.vjp(g)
        return g


def translate_op(shape, dy, dx):
    return SeparableOp(translate_matrix(shape[0], dy), translate_matrix(shape[1], dx))


def blur_op(shape, k):
    return SeparableOp(blur_matrix(shape[0], k), blur_matrix(shape[1], k))


def crop_op(shape, dy, dx):
    return SeparableOp(crop_matrix(shape[0], dy), crop_matrix(shape[1], dx))


def draw_op(variant, shape, rng, cfg=DEFAULT_CONFIG):
    """Draw the random parameters of one single-type transform."""
    h, w = shape[0], shape[1]
    if variant in ("t", "c"):
        my, mx = max_offset(h, cfg.offset_fraction), max_offset(w, cfg.offset_fraction)
        dy, dx = rng.integers(-my, my), rng.integers(-mx, mx)
        return translate_op(shape, dy, dx) if variant == "t" else crop_op(shape, dy, dx)
    if variant == "b":
        return blur_op(shape, rng.choice(cfg.blur_widths))
    if variant == "n":
        return NoiseOp(rng.normal(tuple(shape), cfg.noise_sigma))
    if variant == "none":
        return IdentityOp()
    raise InvalidArgument(f"no single-draw operator for strategy {variant!r}")


# -- public transforms --------------------------------------------------------------


def apply_proc(x, original_shape):
    x = as_image(x)
    if len(original_shape) < 2 or min(original_shape[:2]) < 1:
        raise InvalidArgument(f"invalid original shape {original_shape}")
    return quantize(resize_bilinear(x, original_shape[0], original_shape[1]))


def translate(x, rng, cfg=DEFAULT_CONFIG):
    x = as_image(x)
    return draw_op("t", x.shape, rng, cfg).apply(x)


def add_noise(x, rng, cfg=DEFAULT_CONFIG):
    x = as_image(x)
    return draw_op("n", x.shape, rng, cfg).apply(x)


def gaussian_blur(x, rng, cfg=DEFAULT_CONFIG):
    x = as_image(x)
    return draw_op("b", x.shape, rng, cfg).apply(x)


def crop_resize(x, rng, cfg=DEFAULT_CONFIG):
    x = as_image(x)
    return draw_op("c", x.shape, rng, cfg).apply(x)


def eye_bar(x, thickness, gray=DEFAULT_CONFIG.eye_bar_gray):
    x = as_image(x)
    if thickness < 0:
        raise InvalidArgument("thickness must be nonnegative")
    out = x.copy()
    h = x.shape[0]
    lo = max(h // 3 - thickness // 2, 0)
    hi = min(h // 3 + -(-thickness // 2), h)
    out[lo:hi] = gray
    return out


@dataclass(frozen=True)
class ProcessingStrategy:
    variant: str
    config: ProcessingConfig = DEFAULT_CONFIG

    def __post_init__(self):
        if self.variant not in STRATEGY_TOKENS:
            raise InvalidArgument(f"unknown processing strategy {self.variant!r}")

    @property
    def token(self):
        return self.variant

    @property
    def stochastic(self):
        return self.variant in STOCHASTIC or self.variant == "tnbc"

    def draw(self, shape, rng, through_proc=True):
        """One realised processing map (Proc first, unless the strategy is ``none``)."""
        if self.variant == "none":
            return IdentityOp()
        proc = ProcOp(shape, shape)
        if self.variant == "proc":
            return proc
        if self.variant == "tnbc":
            raise InvalidArgument("tnbc is a mixture; draw its components individually")
        op = draw_op(self.variant, shape, rng, self.config)
        return ComposeOp(proc, op) if through_proc else op

    def apply(self, x, rng):
        x = as_image(x)
        return self.draw(x.shape, rng).apply(x)


def strategy(token, config=DEFAULT_CONFIG):
    return ProcessingStrategy(token.lower(), config)


def ensemble_scores(model, x, strat, rng):
    """Averaged softmax outputs of the model over the strategy's processed copies."""
    x = as_image(x)
    if strat.variant == "none":
        return softmax(scores(model, x))
    base = apply_proc(x, x.shape)
    if strat.variant == "proc":
        return softmax(scores(model, base))
    cfg = strat.config
    if strat.variant == "tnbc":
        views = [draw_op(v, x.shape, rng, cfg).apply(base) for v in STOCHASTIC] + [base]
    else:
        views = [draw_op(strat.variant, x.shape, rng, cfg).apply(base) for _ in range(cfg.ensemble_samples)]
    probs = np.mean([softmax(scores(model, v)) for v in views], axis=0)
    return probs / probs.sum()


def baseline_obfuscate(x, kind, strength, seed=0, gray=DEFAULT_CONFIG.eye_bar_gray):
    """User-side comparison obfuscations: Gaussian noise, blur of odd size, or eye bar."""
    x = as_image(x)
    if strength < 0:
        raise InvalidArgument("strength must be nonnegative")
    if kind == "noise":
        noise = SeededRng(mix_seed(seed, "obfuscate-noise")).normal(x.shape)
        return np.clip(x + strength * noise, PIXEL_MIN, PIXEL_MAX)
    if kind == "blur":
        k = int(strength)
        if k == 0:
            return x.copy()
        if k != strength or k % 2 == 0:
            raise InvalidArgument(f"blur strength must be an odd integer, got {strength}")
        return blur_op(x.shape, k).apply(x)
    if kind == "eyebar":
        return eye_bar(x, int(strength), gray)
    raise InvalidArgument(f"unknown obfuscation {kind!r}")

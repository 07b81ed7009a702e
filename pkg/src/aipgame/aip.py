"""Adversarial image perturbations (AIPs).

All attacks maximise a loss of the classifier scores under an L2 budget
``||t|| <= eps`` and the pixel box ``x + t in [0, 255]``. After every update
the perturbation is radially projected onto the L2 ball and ``x + t`` is then
clipped to the pixel range.

Method tokens::

    fgv fgs fgv-s fgs-s fgman      single step
    ga bi ga-s bi-s gaman          K fixed-size steps
    df                             DeepFool, stops once fooled

A vaccination suffix (``gaman/b``, ``ga/tnbc``...) crafts against the loss of
the processed image instead of the raw one.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import (
    DEEPFOOL,
    MARGIN,
    SCORE,
    SOFTMAX_LOG,
    LossSpec,
    input_grad,
    nearest_boundary_label,
    predict,
    score_jacobian,
    scores,
)
from .errors import DegenerateGeometry, InvalidArgument, UnsupportedStrategy
from .processing import (
    DEFAULT_CONFIG,
    STOCHASTIC,
    STRATEGY_TOKENS,
    ProcessingConfig,
    ProcessingStrategy,
    baseline_obfuscate,
)
from .tensor import PIXEL_MAX, PIXEL_MIN, SeededRng, l2_norm, l2_project

REFERENCE_EPS = 1000.0
REFERENCE_INPUT_SIZE = 224 * 224 * 3


@dataclass(frozen=True)
class VaccinationSpec:
    strategies: tuple
    samples_per_iter: int = 5
    combine_mode: str = "per-strategy-samples"
    through_proc: bool = True
    config: ProcessingConfig = DEFAULT_CONFIG

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.strategies:
            raise InvalidArgument("vaccination needs at least one strategy")
        for s in self.strategies:
            if s not in STRATEGY_TOKENS:
                raise UnsupportedStrategy(f"no differentiable surrogate for strategy {s!r}")
        if self.combine_mode not in ("per-strategy-samples", "tnbc-mix"):
            raise InvalidArgument(f"unknown combine mode {self.combine_mode!r}")
        if self.samples_per_iter < 1:
            raise InvalidArgument("samples_per_iter must be positive")


@dataclass(frozen=True)
class AttackConfig:
    eps: float = REFERENCE_EPS
    gamma: float = 1e4
    max_iters: int = 100
    use_sign: bool = False
    loss: LossSpec = SOFTMAX_LOG
    single_step: bool = False
    vaccination: VaccinationSpec = None
    overshoot: float = 0.02
    method: str = "ga"
    grayscale_source: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.eps > 0 or not self.gamma > 0 or self.max_iters < 0:
            raise InvalidArgument(f"invalid attack configuration: eps={self.eps}, gamma={self.gamma}, K={self.max_iters}")


@dataclass(frozen=True)
class SelectiveConfig:
    malicious: tuple
    benign: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "malicious", tuple(self.malicious))
        object.__setattr__(self, "benign", tuple(self.benign))
        if not self.malicious:
            raise InvalidArgument("selective attack needs at least one malicious model")


# token -> (single_step, use_sign, loss)
METHODS = {
    "fgv": (True, False, SOFTMAX_LOG),
    "fgs": (True, True, SOFTMAX_LOG),
    "fgv-s": (True, False, SCORE),
    "fgs-s": (True, True, SCORE),
    "fgman": (True, False, MARGIN),
    "ga": (False, False, SOFTMAX_LOG),
    "bi": (False, True, SOFTMAX_LOG),
    "ga-s": (False, False, SCORE),
    "bi-s": (False, True, SCORE),
    "gaman": (False, False, MARGIN),
    "df": (False, False, DEEPFOOL),
}
VACCINATION_SUFFIXES = ("t", "n", "b", "c", "tnbc")


def scaled_eps(image_shape, eps=REFERENCE_EPS):
    """Budget giving the same per-pixel RMS perturbation as ``eps`` on a 224x224x3 input."""
    return eps * np.sqrt(np.prod(image_shape) / REFERENCE_INPUT_SIZE)


def vaccination_for(suffix, samples_per_iter=5, config=DEFAULT_CONFIG):
    if suffix not in VACCINATION_SUFFIXES:
        raise UnsupportedStrategy(f"unknown vaccination suffix /{suffix}")
    if suffix == "tnbc":
        return VaccinationSpec(STOCHASTIC, samples_per_iter, "tnbc-mix", config=config)
    return VaccinationSpec((suffix,), samples_per_iter, config=config)


def attack_config(token, **overrides):
    """Build the configuration for a token such as ``gaman``, ``fgs-s`` or ``gaman/b``.

    A bare suffix (``/b``) means vaccinated GAMAN.
    """
    token = token.strip().lower()
    name, _, suffix = token.partition("/")
    name = name or "gaman"
    if name not in METHODS:
        raise InvalidArgument(f"unknown attack {name!r}")
    single, sign, loss = METHODS[name]
    base = dict(single_step=single, use_sign=sign, loss=loss, method=name)
    if name == "gaman":
        base["gamma"] = 5e3
    if suffix:
        if name == "df":
            raise InvalidArgument("DeepFool has no vaccinated variant")
        base["vaccination"] = vaccination_for(suffix)
    base.update(overrides)
    return AttackConfig(**base)


# -- gradients ---------------------------------------------------------------------


def vaccinated_grad(model, x, y, loss, vacc, rng, grayscale_source=False):
    """Gradient of the loss of the processed image, averaged over processing draws."""
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape

    def through(op):
        return op.vjp(input_grad(model, op.apply(x), loss, y, grayscale_source))

    if vacc.combine_mode == "tnbc-mix" or vacc.strategies == ("tnbc",):
        terms = [through(_draw(v, shape, rng, vacc)) for v in STOCHASTIC]
        terms.append(input_grad(model, x, loss, y, grayscale_source))
        return np.mean(terms, axis=0)
    per_strategy = []
    for token in vacc.strategies:
        if token == "tnbc":
            sub = replace(vacc, strategies=("tnbc",))
            per_strategy.append(vaccinated_grad(model, x, y, loss, sub, rng, grayscale_source))
            continue
        draws = vacc.samples_per_iter if token in STOCHASTIC else 1
        grads = [through(_draw(token, shape, rng, vacc)) for _ in range(draws)]
        per_strategy.append(grads[0] if draws == 1 else np.mean(grads, axis=0))
    return per_strategy[0] if len(per_strategy) == 1 else np.mean(per_strategy, axis=0)


def _draw(token, shape, rng, vacc):
    return ProcessingStrategy(token, vacc.config).draw(shape, rng, through_proc=vacc.through_proc)


def _attack_grad(model, x, y, cfg, rng):
    if cfg.vaccination is None:
        return input_grad(model, x, cfg.loss, y, cfg.grayscale_source)
    return vaccinated_grad(model, x, y, cfg.loss, cfg.vaccination, rng, cfg.grayscale_source)


# -- projection ----------------------------------------------------------------------


def project_and_clip(x, t, eps):
    """L2-project ``t`` then clip ``x + t`` to the pixel box; returns the new perturbation."""
    t = l2_project(t, eps)
    t = np.clip(x + t, PIXEL_MIN, PIXEL_MAX) - x
    # rounding in (clip(x + t) - x) can land x + t one ulp outside the box
    for bound, direction in ((PIXEL_MAX, -np.inf), (PIXEL_MIN, np.inf)):
        bad = (x + t > bound) if direction < 0 else (x + t < bound)
        while np.any(bad):
            t[bad] = np.nextafter(t[bad], direction)
            bad = (x + t > bound) if direction < 0 else (x + t < bound)
    return t


def _ascend(x, grad_fn, cfg, iters, trace):
    t = np.zeros_like(x)
    for _ in range(iters):
        g = grad_fn(x + t)
        step = np.sign(g) if cfg.use_sign else g
        t = project_and_clip(x, t + cfg.gamma * step, cfg.eps)
        if trace is not None:
            trace.append(t)
    return t


def _rng_for(cfg, rng):
    return rng if rng is not None else SeededRng(cfg.seed)


# -- attacks -----------------------------------------------------------------------------


def craft_single_step(model, x, y, cfg, rng=None, trace=None):
    """One fixed-size ascent step (FGV, FGS, their score-loss variants, FGMAN)."""
    x = np.asarray(x, dtype=np.float64)
    rng = _rng_for(cfg, rng)
    return _ascend(x, lambda z: _attack_grad(model, z, y, cfg, rng), cfg, 1, trace)


def craft_iterative(model, x, y, cfg, rng=None, trace=None):
    """K fixed-size ascent steps (GA, BI, their score-loss variants, GAMAN)."""
    x = np.asarray(x, dtype=np.float64)
    rng = _rng_for(cfg, rng)
    return _ascend(x, lambda z: _attack_grad(model, z, y, cfg, rng), cfg, cfg.max_iters, trace)


def craft_deepfool(model, x, y, cfg, trace=None):
    """Step to the nearest linearised boundary until the prediction flips or K steps ran."""
    x = np.asarray(x, dtype=np.float64)
    t = np.zeros_like(x)
    if predict(model, x) != y:
        return t
    total = np.zeros(x.size)
    for _ in range(cfg.max_iters):
        xi = x + t
        f = scores(model, xi)
        jac = score_jacobian(model, xi)
        c = nearest_boundary_label(f, jac, y)
        w = jac[c] - jac[y]
        w_sq = float(w @ w)
        if w_sq == 0.0:
            raise DegenerateGeometry(f"classes {c} and {y} have identical gradients")
        total += abs(f[c] - f[y]) / w_sq * w
        t = project_and_clip(x, (1.0 + cfg.overshoot) * total.reshape(x.shape), cfg.eps)
        if trace is not None:
            trace.append(t)
        if predict(model, x + t) != y:
            break
    return t


def craft(model, x, y, cfg, rng=None, trace=None):
    if cfg.method == "df" or cfg.loss.variant == "deepfool" and not cfg.single_step:
        return craft_deepfool(model, x, y, cfg, trace)
    if cfg.single_step:
        return craft_single_step(model, x, y, cfg, rng, trace)
    return craft_iterative(model, x, y, cfg, rng, trace)


def craft_selective(sel, x, y, cfg, rng=None, trace=None):
    """Ascend on sum(lambda_k L_k, malicious) - sum(lambda_k L_k, benign)."""
    x = np.asarray(x, dtype=np.float64)
    dims = {m.input_dim for m, _ in sel.malicious + sel.benign}
    if dims != {x.size}:
        raise InvalidArgument("all models must share the input dimension of x")
    rng = _rng_for(cfg, rng)

    def grad(z):
        g = None
        for sign, group in ((1.0, sel.malicious), (-1.0, sel.benign)):
            for model, lam in group:
                term = _attack_grad(model, z, y, cfg, rng)
                term = term if lam == 1.0 and sign == 1.0 else sign * lam * term
                g = term if g is None else g + term
        return g

    iters = 1 if cfg.single_step else cfg.max_iters
    return _ascend(x, grad, cfg, iters, trace)


def perturbation_norm(t):
    return l2_norm(t)

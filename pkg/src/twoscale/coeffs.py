"""Two-scale coefficient fields ``(A, B, C, k)(x, y)`` and named presets.

All callables are vectorized: they take ``x`` and ``y`` arrays of shape
``(..., 2)`` and return ``A`` with shape ``(..., 2, 2)``, ``B`` and ``C``
with shape ``(..., 2)`` and ``k`` with shape ``(...)``.  The micro variable
``y`` lives in the unit cell and every preset is 1-periodic in it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, DiagnosticFailure

TWO_PI = 2.0 * np.pi

#: distance below which singular presets are evaluated at this radius
SINGULAR_CLAMP = 1e-8


class CoefficientValues(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    k: np.ndarray


def _zero_vec(x, y):
    return np.zeros(np.broadcast_shapes(x.shape, y.shape))


def _zero_scalar(x, y):
    return np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])


def _identity(x, y):
    shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
    return np.broadcast_to(np.eye(2), shape + (2, 2)).copy()


@dataclass(frozen=True, eq=False)
class TwoScaleCoefficient:
    """Coefficient data with declared bounds.

    ``alpha``/``beta`` bound the symmetric part of ``A`` from below/above,
    ``p0`` is the integrability exponent of the drifts (``inf`` when they
    are bounded).  ``b_sup``/``c_sup``/``k_sup`` are the exact sup norms
    ``max_i ||b_i||_inf`` etc. when finite, ``None`` otherwise.  When set,
    ``div_C(x, y)`` returns ``(div_x C, div_y C)``.
    """

    name: str
    A: Callable = _identity
    B: Callable = _zero_vec
    C: Callable = _zero_vec
    k: Callable = _zero_scalar
    alpha: float = 1.0
    beta: float = 1.0
    p0: float = math.inf
    is_periodic_only: bool = True
    is_separable: bool = False
    satisfies_A3: bool = False
    b_sup: Optional[float] = 0.0
    c_sup: Optional[float] = 0.0
    k_sup: Optional[float] = 0.0
    div_C: Optional[Callable] = None
    A1: Optional[Callable] = None
    A2: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def has_drift(self):
        return self.b_sup != 0.0 or self.c_sup != 0.0 or self.k_sup != 0.0


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return p


def evaluate(coeff, x, y):
    """Evaluate ``(A, B, C, k)`` at macro points ``x`` and cell points ``y``."""
    x = _as_points(x)
    y = _as_points(y)
    shape = np.broadcast_shapes(x.shape, y.shape)
    x = np.broadcast_to(x, shape)
    y = np.broadcast_to(y, shape)
    return CoefficientValues(
        np.asarray(coeff.A(x, y), dtype=float),
        np.asarray(coeff.B(x, y), dtype=float),
        np.asarray(coeff.C(x, y), dtype=float),
        np.asarray(coeff.k(x, y), dtype=float),
    )


def fractional_part(z):
    """Componentwise ``{z} = z - floor(z)`` in ``[0, 1)``."""
    z = np.asarray(z, dtype=float)
    f = z - np.floor(z)
    return np.where(f >= 1.0, 0.0, f)


def evaluate_delta(coeff, delta, x):
    """Oscillating coefficients ``A^delta(x) = A(x, {x / delta})`` etc."""
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive, got {delta!r}")
    x = _as_points(x)
    return evaluate(coeff, x, fractional_part(x / delta))


# ---------------------------------------------------------------------------
# presets

def _sym_bounds(A):
    A = np.asarray(A, dtype=float)
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    return float(ev[0]), float(ev[-1])


def constant(A=((1.0, 0.0), (0.0, 1.0)), B=(0.0, 0.0), C=(0.0, 0.0), k=0.0):
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    C = np.array(C, dtype=float)
    alpha, beta = _sym_bounds(A)
    if alpha <= 0:
        raise ConfigurationError("constant A must have positive definite symmetric part")

    def fA(x, y):
        return np.broadcast_to(A, x.shape[:-1] + (2, 2)).copy()

    def fB(x, y):
        return np.broadcast_to(B, x.shape).copy()

    def fC(x, y):
        return np.broadcast_to(C, x.shape).copy()

    def fk(x, y):
        return np.full(x.shape[:-1], float(k))

    return TwoScaleCoefficient(
        "constant", fA, fB, fC, fk, alpha=alpha, beta=beta,
        satisfies_A3=bool(k >= 0),
        b_sup=float(np.abs(B).max()), c_sup=float(np.abs(C).max()), k_sup=abs(float(k)),
        div_C=lambda x, y: (_zero_scalar(x, y), _zero_scalar(x, y)),
        params={"A": A.tolist(), "B": B.tolist(), "C": C.tolist(), "k": float(k)},
    )


def layered(c0=2.0, c1=1.0, axis=0):
    """``A = a(y) I`` with ``a(y) = c0 + c1 sin(2 pi y_axis)``."""
    if not c0 > abs(c1):
        raise ConfigurationError("layered preset needs c0 > |c1|")
    if axis not in (0, 1):
        raise ConfigurationError("axis must be 0 or 1")

    def fA(x, y):
        a = c0 + c1 * np.sin(TWO_PI * y[..., axis])
        return a[..., None, None] * np.eye(2)

    return TwoScaleCoefficient(
        "layered", fA, alpha=c0 - abs(c1), beta=c0 + abs(c1), satisfies_A3=True,
        div_C=lambda x, y: (_zero_scalar(x, y), _zero_scalar(x, y)),
        params={"c0": c0, "c1": c1, "axis": axis},
    )


def checkerboard(a_lo=1.0, a_hi=4.0):
    """Scalar two-phase checkerboard with phase boundaries on ``y_i = 1/2``."""
    if not 0 < a_lo <= a_hi:
        raise ConfigurationError("checkerboard needs 0 < a_lo <= a_hi")

    def fA(x, y):
        odd = (y[..., 0] < 0.5) != (y[..., 1] < 0.5)
        a = np.where(odd, a_hi, a_lo)
        return a[..., None, None] * np.eye(2)

    return TwoScaleCoefficient(
        "checkerboard", fA, alpha=a_lo, beta=a_hi, satisfies_A3=True,
        div_C=lambda x, y: (_zero_scalar(x, y), _zero_scalar(x, y)),
        params={"a_lo": a_lo, "a_hi": a_hi},
    )


def separable(a1_amp=0.5, c0=2.0, c1=1.0, c_amp=0.5):
    """``A = a1(x) A2(y)`` and ``C = c1(x) C2(y)``.

    ``a1(x) = 1 + a1_amp sin(pi x1) sin(pi x2)``, ``A2`` is the layered
    tensor, ``c1(x) = x1`` and ``C2(y) = c_amp (sin 2 pi y1, 0)``.
    """
    if not 0 <= a1_amp:
        raise ConfigurationError("a1_amp must be nonnegative")
    if not c0 > abs(c1):
        raise ConfigurationError("separable preset needs c0 > |c1|")

    def a1(x, y=None):
        return 1.0 + a1_amp * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    def A2(x, y):
        a = c0 + c1 * np.sin(TWO_PI * y[..., 0])
        return a[..., None, None] * np.eye(2)

    def A1(x, y):
        return a1(x)[..., None, None] * np.eye(2)

    def fA(x, y):
        return a1(x)[..., None, None] * A2(x, y)

    def fC(x, y):
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        out[..., 0] = x[..., 0] * c_amp * np.sin(TWO_PI * y[..., 0])
        return out

    return TwoScaleCoefficient(
        "separable", fA, C=fC, alpha=c0 - abs(c1), beta=(1.0 + a1_amp) * (c0 + abs(c1)),
        is_periodic_only=False, is_separable=True, satisfies_A3=(c_amp == 0),
        c_sup=abs(c_amp), A1=A1, A2=A2,
        params={"a1_amp": a1_amp, "c0": c0, "c1": c1, "c_amp": c_amp},
    )


def gradient_drift(psi_amp=1.0, B=(1.0, 0.5), a0=1.0):
    """``A = a0 I``, constant ``B`` and ``C = psi_amp grad_y cos(2 pi y1)``.

    A periodic gradient field cannot have a sign-definite divergence unless
    it vanishes, so this preset does not declare the contraction condition.
    """
    if not a0 > 0:
        raise ConfigurationError("a0 must be positive")
    B = np.array(B, dtype=float)

    def fA(x, y):
        return np.broadcast_to(a0 * np.eye(2), np.broadcast_shapes(x.shape, y.shape)[:-1] + (2, 2)).copy()

    def fB(x, y):
        return np.broadcast_to(B, np.broadcast_shapes(x.shape, y.shape)).copy()

    def fC(x, y):
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        out[..., 0] = -TWO_PI * psi_amp * np.sin(TWO_PI * y[..., 0])
        return out

    def div_C(x, y):
        d = -TWO_PI**2 * psi_amp * np.cos(TWO_PI * y[..., 0])
        return _zero_scalar(x, y), d

    return TwoScaleCoefficient(
        "gradient-drift", fA, fB, fC, alpha=a0, beta=a0, satisfies_A3=(psi_amp == 0),
        b_sup=float(np.abs(B).max()), c_sup=TWO_PI * abs(psi_amp), div_C=div_C,
        params={"psi_amp": psi_amp, "B": B.tolist(), "a0": a0},
    )


def bounded_drift(c0=2.0, c1=1.0, b_amp=1.0, c_amp=1.0, k_amp=1.0):
    """Layered diffusion with oscillating bounded drifts and potential.

    ``B = b_amp (sin 2 pi y1, cos 2 pi y2)`` (nonzero divergence),
    ``C = c_amp (cos 2 pi y2, sin 2 pi y1)`` (divergence free) and
    ``k = k_amp (1 + cos 2 pi y1 cos 2 pi y2)``.
    """
    if not c0 > abs(c1):
        raise ConfigurationError("bounded-drift preset needs c0 > |c1|")
    if k_amp < 0:
        raise ConfigurationError("k_amp must be nonnegative")

    def fA(x, y):
        a = c0 + c1 * np.sin(TWO_PI * y[..., 0])
        return a[..., None, None] * np.eye(2)

    def fB(x, y):
        return b_amp * np.stack([np.sin(TWO_PI * y[..., 0]), np.cos(TWO_PI * y[..., 1])], axis=-1)

    def fC(x, y):
        return c_amp * np.stack([np.cos(TWO_PI * y[..., 1]), np.sin(TWO_PI * y[..., 0])], axis=-1)

    def fk(x, y):
        return k_amp * (1.0 + np.cos(TWO_PI * y[..., 0]) * np.cos(TWO_PI * y[..., 1]))

    return TwoScaleCoefficient(
        "bounded-drift", fA, fB, fC, fk, alpha=c0 - abs(c1), beta=c0 + abs(c1),
        satisfies_A3=True, b_sup=abs(b_amp), c_sup=abs(c_amp), k_sup=2.0 * k_amp,
        div_C=lambda x, y: (_zero_scalar(x, y), _zero_scalar(x, y)),
        params={"c0": c0, "c1": c1, "b_amp": b_amp, "c_amp": c_amp, "k_amp": k_amp},
    )


def _torus_offset(y, center):
    d = y - np.asarray(center, dtype=float)
    d = d - np.round(d)
    r = np.linalg.norm(d, axis=-1)
    rc = np.maximum(r, SINGULAR_CLAMP)
    unit = np.where(r[..., None] > 0, d / np.where(r > 0, r, 1.0)[..., None],
                    np.array([1.0, 0.0]))
    return unit, rc


def singular_drift(s=0.4, p0=4.0, center=(0.5, 0.5), b_amp=1.0, c_amp=1.0, k_amp=1.0):
    """Drifts blowing up like ``|y - y0|^{-s}`` at the cell point ``y0``.

    Distances are periodic (minimum image).  ``B`` is radial, ``C`` is
    tangential and ``k = k_amp |y - y0|^{-2 s}``; ``s * p0 < 2`` keeps
    ``B, C`` in ``L^p0`` and ``k`` in ``L^(p0/2)``.
    """
    if not p0 > 2:
        raise ConfigurationError("p0 must exceed the dimension 2")
    if not 0 <= s or not s * p0 < 2:
        raise ConfigurationError(f"need 0 <= s and s*p0 < 2, got s={s}, p0={p0}")
    if k_amp < 0:
        raise ConfigurationError("k_amp must be nonnegative")

    def fB(x, y):
        unit, r = _torus_offset(y, center)
        return b_amp * unit * r[..., None] ** (-s)

    def fC(x, y):
        unit, r = _torus_offset(y, center)
        tang = np.stack([-unit[..., 1], unit[..., 0]], axis=-1)
        return c_amp * tang * r[..., None] ** (-s)

    def fk(x, y):
        _, r = _torus_offset(y, center)
        return k_amp * r ** (-2.0 * s)

    return TwoScaleCoefficient(
        "singular-drift", _identity, fB, fC, fk, alpha=1.0, beta=1.0, p0=float(p0),
        b_sup=None if b_amp else 0.0, c_sup=None if c_amp else 0.0,
        k_sup=None if k_amp else 0.0,
        params={"s": s, "p0": p0, "center": list(center), "b_amp": b_amp,
                "c_amp": c_amp, "k_amp": k_amp},
    )


def concave_drift(gamma=1.0, center=(0.5, 0.5), eta=0.0, b_amp=1.0, k_amp=1.0):
    """Markovian preset: ``C = grad psi`` with concave ``psi``.

    ``psi(x) = -gamma |x - center|^2 / 2`` so ``-div C = 2 gamma >= 0``;
    ``eta`` adds the divergence-free cell field
    ``(-cos 2 pi y1 sin 2 pi y2, sin 2 pi y1 cos 2 pi y2)``.
    ``B = b_amp (sin 2 pi y1, cos 2 pi y2)`` and
    ``k = k_amp (1 + sin^2 2 pi y2)``.
    """
    if gamma < 0 or k_amp < 0:
        raise ConfigurationError("gamma and k_amp must be nonnegative")
    center = np.asarray(center, dtype=float)

    def fB(x, y):
        return b_amp * np.stack([np.sin(TWO_PI * y[..., 0]), np.cos(TWO_PI * y[..., 1])], axis=-1)

    def fC(x, y):
        slow = -gamma * (x - center)
        y1 = TWO_PI * y[..., 0]
        y2 = TWO_PI * y[..., 1]
        fast = np.stack([-np.cos(y1) * np.sin(y2), np.sin(y1) * np.cos(y2)], axis=-1)
        return slow + eta * fast

    def fk(x, y):
        return k_amp * (1.0 + np.sin(TWO_PI * y[..., 1]) ** 2)

    def div_C(x, y):
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        return np.full(shape, -2.0 * gamma), np.zeros(shape)

    return TwoScaleCoefficient(
        "concave-drift", _identity, fB, fC, fk, alpha=1.0, beta=1.0,
        is_periodic_only=(gamma == 0), satisfies_A3=True,
        b_sup=abs(b_amp), c_sup=None, k_sup=2.0 * k_amp, div_C=div_C,
        params={"gamma": gamma, "center": center.tolist(), "eta": eta,
                "b_amp": b_amp, "k_amp": k_amp},
    )


PRESETS = {
    "constant": constant,
    "layered": layered,
    "checkerboard": checkerboard,
    "separable": separable,
    "gradient-drift": gradient_drift,
    "bounded-drift": bounded_drift,
    "singular-drift": singular_drift,
    "concave-drift": concave_drift,
}


def make_preset(name, **params):
    """Instantiate a registered preset by name."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown coefficient preset {name!r}; choose from {sorted(PRESETS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for preset {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# bound verification

@dataclass(frozen=True)
class BoundsReport:
    alpha_hat: float
    beta_hat: float
    min_k: float
    worst_divC: float
    worst_divC_witness: Optional[tuple]
    seed: int


def verify_bounds(coeff, sample_count=2000, seed=0, y_cells=16, x_samples=4, tol=1e-10):
    """Sample the declared bounds of ``coeff``.

    ``alpha_hat``/``beta_hat`` are the extreme eigenvalues (extreme Rayleigh
    quotients) of ``sym(A)`` over random ``(x, y)``.  The divergence
    condition is spot-checked weakly on a periodic cell grid: for every
    nonnegative hat function ``phi`` the cell integral of ``C . grad phi``
    must be ``>= -tol``.

    Raises
    ------
    DiagnosticFailure
        a declared bound is violated; the witness point is attached.
    """
    from .grid import PERIODIC, build_grid

    if sample_count < 1:
        raise ConfigurationError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.random((sample_count, 2))
    y = rng.random((sample_count, 2))
    vals = evaluate(coeff, x, y)
    sym = 0.5 * (vals.A + np.swapaxes(vals.A, -1, -2))
    ev = np.linalg.eigvalsh(sym)
    lo = int(np.argmin(ev[:, 0]))
    hi = int(np.argmax(ev[:, -1]))
    alpha_hat = float(ev[lo, 0])
    beta_hat = float(ev[hi, -1])
    min_k = float(vals.k.min())

    if alpha_hat < coeff.alpha - 1e-12:
        raise DiagnosticFailure(
            f"ellipticity bound alpha={coeff.alpha} violated: {alpha_hat} at x={x[lo]}, y={y[lo]}",
            witness=(x[lo].tolist(), y[lo].tolist()))
    if beta_hat > coeff.beta + 1e-12:
        raise DiagnosticFailure(
            f"upper bound beta={coeff.beta} violated: {beta_hat} at x={x[hi]}, y={y[hi]}",
            witness=(x[hi].tolist(), y[hi].tolist()))
    if coeff.satisfies_A3 and min_k < 0:
        i = int(np.argmin(vals.k))
        raise DiagnosticFailure(
            f"declared k >= 0 but k={min_k} at x={x[i]}, y={y[i]}",
            witness=(x[i].tolist(), y[i].tolist()))

    ygrid = build_grid(PERIODIC, y_cells, quad_order=3)
    yq = ygrid.quad_points.reshape(-1, 2)
    worst = math.inf
    witness = None
    for xs in rng.random((x_samples, 2)):
        C = evaluate(coeff, np.broadcast_to(xs, yq.shape), yq).C
        C = C.reshape(ygrid.n_elements, -1, 2)
        local = np.einsum("q,eqd,qad->ea", ygrid.weights, C, ygrid.dN)
        tested = np.bincount(ygrid.element_dofs.ravel(), local.ravel(), minlength=ygrid.n_dofs)
        j = int(np.argmin(tested))
        if tested[j] < worst:
            worst = float(tested[j])
            witness = (xs.tolist(), ygrid.dof_coords[j].tolist())
    if coeff.satisfies_A3 and worst < -tol:
        raise DiagnosticFailure(
            f"declared -div C >= 0 but weak test gives {worst} at (x, bump centre)={witness}",
            witness=witness)
    return BoundsReport(alpha_hat, beta_hat, min_k, worst, witness, seed)

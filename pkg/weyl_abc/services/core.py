"""Complex scalar helpers, potential evaluation and the WaveField container."""

from dataclasses import dataclass
import logging
from typing import Union

import numpy as np
from scipy import special

from weyl_abc.errors import DomainError
from weyl_abc.models import (
    BargmannPotential,
    ConstantPotential,
    CoulombLikePotential,
    FreePotential,
    GaussianBarrierPotential,
    HarmonicPotential,
    TabulatedPotential,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, complex, np.ndarray]


def principal_sqrt_neg(lam: ArrayLike) -> ArrayLike:
    """k = sqrt(-lambda) on the principal branch, so Re k >= 0.

    For lambda in the upper half plane Re k > 0 and Im k < 0, which makes the
    Weyl solution e^{-kx} decay and -k a Herglotz function.
    """
    return np.sqrt(-np.asarray(lam, dtype=complex))


def bargmann_q(beta: float, gamma: float) -> float:
    return (beta - gamma) / (beta + gamma)


def _bargmann(beta: float, gamma: float, x: np.ndarray) -> np.ndarray:
    q = bargmann_q(beta, gamma)
    if q == 0.0:
        return np.zeros_like(x)
    # -8 b^2 y/(1+y)^2 with y = q e^{-2 b x}, rewritten through cosh so large |x|
    # neither overflows nor loses digits
    s = np.sign(q)
    z = np.log(abs(q)) - 2.0 * beta * x
    with np.errstate(over="ignore", divide="ignore"):
        return -4.0 * beta**2 * s / (np.cosh(z) + s)


def eval_potential(p, x: ArrayLike) -> ArrayLike:
    """V(x) for any potential variant; accepts scalars or arrays."""
    xs = np.asarray(x, dtype=float)

    if isinstance(p, FreePotential):
        out = np.zeros_like(xs)
    elif isinstance(p, ConstantPotential):
        out = np.full_like(xs, p.V0)
    elif isinstance(p, HarmonicPotential):
        out = xs**2
    elif isinstance(p, BargmannPotential):
        out = _bargmann(p.beta, p.gamma, xs)
    elif isinstance(p, CoulombLikePotential):
        out = 1.0 / np.sqrt(1.0 + xs**2)
    elif isinstance(p, GaussianBarrierPotential):
        out = p.height * np.exp(-p.width_coeff * (xs - p.center) ** 2)
    elif isinstance(p, TabulatedPotential):
        # np.interp holds the end values outside the table
        out = np.interp(xs, p.x_nodes, p.values)
    else:
        raise DomainError(f"Unsupported potential: {type(p).__name__}")

    return float(out) if out.ndim == 0 else out


def complex_gamma(z: ArrayLike) -> ArrayLike:
    """Gamma function for complex arguments; poles raise DomainError."""
    zs = np.asarray(z, dtype=complex)
    on_pole = (zs.imag == 0) & (zs.real <= 0) & (zs.real == np.round(zs.real))
    if np.any(on_pole):
        bad = zs[on_pole].ravel()[0]
        raise DomainError(
            "Gamma function pole at a non-positive integer",
            {"z": [float(bad.real), float(bad.imag)]},
        )
    out = special.gamma(zs)
    return complex(out) if out.ndim == 0 else out


def complex_loggamma(z: ArrayLike) -> ArrayLike:
    zs = np.asarray(z, dtype=complex)
    on_pole = (zs.imag == 0) & (zs.real <= 0) & (zs.real == np.round(zs.real))
    if np.any(on_pole):
        raise DomainError("log-Gamma pole at a non-positive integer")
    return special.loggamma(zs)


@dataclass(frozen=True)
class WaveField:
    """Complex nodal values of u on a mesh at one time."""

    time: float
    values: np.ndarray

    def __post_init__(self):
        if self.time < 0:
            raise DomainError("WaveField time must be non-negative", {"time": self.time})
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    def __len__(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: complex) -> "WaveField":
        return WaveField(self.time, factor * self.values)

"""Titchmarsh-Weyl m-functions: closed forms, Riccati integration, diagnostics."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np

from weyl_abc.errors import DomainError, IntegrationError
from weyl_abc.models import (
    BargmannPotential,
    ConstantPotential,
    FreePotential,
    HarmonicPotential,
    MDiagnosticsReport,
    RiccatiConfig,
    RiccatiInit,
    Side,
)
from weyl_abc.services.core import (
    bargmann_q,
    complex_loggamma,
    eval_potential,
    principal_sqrt_neg,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContourSample:
    lam: complex
    k: complex
    m: complex
    side: Side
    f: float = 0.0


def contour_frequencies(f_cutoff: float, n_points: int) -> np.ndarray:
    """Uniform grid over [-f_c, f_c]."""
    if n_points < 1:
        return np.empty(0)
    if n_points == 1:
        return np.zeros(1)
    return np.linspace(-f_cutoff, f_cutoff, n_points)


def contour_lambdas(sigma: float, f_grid) -> np.ndarray:
    """lambda = i s with s = sigma + i f, i.e. lambda = -f + i sigma."""
    return -np.asarray(f_grid, dtype=float) + 1j * sigma


def _require_upper(lam) -> None:
    if np.any(np.asarray(lam).imag <= 0):
        raise DomainError("m-functions are evaluated for Im lambda > 0")


def m_constant(V0: float, lam, side: Side = Side.RIGHT):
    """-sqrt+(V0 - lambda) on the right, the mirror image on the left."""
    _require_upper(lam)
    return side.sign * principal_sqrt_neg(np.asarray(lam) - V0)


def _bargmann_m(beta: float, gamma: float, lam):
    k = principal_sqrt_neg(lam)
    return -k - (gamma**2 - beta**2) / (k + gamma)


def m_bargmann(beta: float, gamma: float, lam):
    """Right m-function at x = 0 of the Bargmann potential."""
    if beta <= 0 or gamma < 0:
        raise DomainError("Bargmann parameters need beta > 0 and gamma >= 0", {"beta": beta, "gamma": gamma})
    _require_upper(lam)
    return _bargmann_m(beta, gamma, lam)


def m_harmonic(lam):
    """Right m-function at x = 0 of V = x^2 as a ratio of gamma functions."""
    lam = np.asarray(lam, dtype=complex)
    out = -2.0 * np.exp(complex_loggamma(0.75 - lam / 4.0) - complex_loggamma(0.25 - lam / 4.0))
    return complex(out) if out.ndim == 0 else out


def closed_form_m(p, x_b: float, side: Side, lam) -> Optional[np.ndarray]:
    """Exact m when the potential has one at this boundary, else None."""
    lam = np.asarray(lam, dtype=complex)

    if isinstance(p, FreePotential):
        return side.sign * principal_sqrt_neg(lam)
    if isinstance(p, ConstantPotential):
        return side.sign * principal_sqrt_neg(lam - p.V0)
    if isinstance(p, HarmonicPotential):
        if x_b != 0.0:
            return None
        # V is even, so m_-(0) = -m_+(0)
        return -side.sign * m_harmonic(lam)
    if isinstance(p, BargmannPotential):
        q = bargmann_q(p.beta, p.gamma)
        if q == 0.0:
            return side.sign * principal_sqrt_neg(lam)
        # V depends on y = q e^{-2 beta x} through y/(1+y)^2, which is symmetric
        # under y -> 1/y; shifting to x_b (and reflecting for the left side)
        # gives another Bargmann profile with parameter q_eff
        if side is Side.RIGHT:
            q_eff = q * math.exp(-2.0 * p.beta * x_b)
        else:
            q_eff = math.exp(2.0 * p.beta * x_b) / q
        if not math.isfinite(q_eff) or q_eff <= -1.0:
            return None
        gamma_eff = p.beta * (1.0 - q_eff) / (1.0 + q_eff)
        return -side.sign * _bargmann_m(p.beta, gamma_eff, lam)
    return None


def riccati_m(p, x_b: float, side: Side, lam, cfg: RiccatiConfig, check_half_plane: bool = True):
    """Integrate m' = -m^2 + V(x) - lambda by classical RK4 from the far field to x_b.

    Accepts a scalar or an array of lambda; all are advanced in one sweep.
    The right side runs in decreasing x from +|x_far|, the left side in
    increasing x from -|x_far|, which is the contracting direction for the
    decaying branch on each side.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    if check_half_plane:
        _require_upper(lam_arr)

    x_start = abs(cfg.x_far) if side is Side.RIGHT else -abs(cfg.x_far)
    if (side is Side.RIGHT and x_start <= x_b) or (side is Side.LEFT and x_start >= x_b):
        raise DomainError(
            "x_far must lie beyond the boundary point",
            {"x_far": x_start, "x_b": x_b, "side": side.value},
        )

    n_steps = max(1, math.ceil(abs(x_b - x_start) / cfg.step))
    h = (x_b - x_start) / n_steps
    v_half = np.asarray(
        eval_potential(p, x_start + 0.5 * h * np.arange(2 * n_steps + 1)), dtype=float
    )

    if cfg.init is RiccatiInit.FROZEN_COEFFICIENT:
        m = side.sign * principal_sqrt_neg(lam_arr - v_half[0])
    else:
        m = side.sign * principal_sqrt_neg(lam_arr)

    for j in range(n_steps):
        v0, v1, v2 = v_half[2 * j], v_half[2 * j + 1], v_half[2 * j + 2]
        k1 = -m * m + v0 - lam_arr
        mt = m + 0.5 * h * k1
        k2 = -mt * mt + v1 - lam_arr
        mt = m + 0.5 * h * k2
        k3 = -mt * mt + v1 - lam_arr
        mt = m + h * k3
        k4 = -mt * mt + v2 - lam_arr
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if not np.isfinite(m).all():
            bad = np.flatnonzero(~np.isfinite(m))
            x_here = x_start + (j + 1) * h
            raise IntegrationError(
                f"Riccati integration blew up at x = {x_here:.6g}",
                {"x": x_here, "side": side.value, "indices": bad.tolist()},
            )

    return complex(m[0]) if np.ndim(lam) == 0 else m


def _evaluate_m(p, x_b, side, lam, cfg: RiccatiConfig, check_half_plane: bool = True):
    if cfg.prefer_closed_form:
        exact = closed_form_m(p, x_b, side, lam)
        if exact is not None:
            return np.asarray(exact, dtype=complex)
    return np.asarray(riccati_m(p, x_b, side, lam, cfg, check_half_plane), dtype=complex)


def m_contour(
    p,
    x_b: float,
    side: Side,
    sigma: float,
    f_grid: Sequence[float],
    cfg: RiccatiConfig,
    threads: int = 1,
) -> List[ContourSample]:
    """m at lambda_j = -f_j + i sigma for every f_j, in grid order."""
    if sigma <= 0:
        raise DomainError("sigma must be positive", {"sigma": sigma})
    f_arr = np.asarray(f_grid, dtype=float).ravel()
    if f_arr.size == 0:
        return []

    lam = contour_lambdas(sigma, f_arr)
    chunks = np.array_split(np.arange(f_arr.size), max(1, min(threads, f_arr.size)))

    def work(idx: np.ndarray) -> np.ndarray:
        try:
            return np.atleast_1d(_evaluate_m(p, x_b, side, lam[idx], cfg))
        except IntegrationError as e:
            bad = [float(f_arr[idx][i]) for i in e.details.get("indices", [])]
            raise IntegrationError(e.message, {**e.details, "f": bad}) from e

    if len(chunks) == 1:
        m = work(chunks[0])
    else:
        m = np.empty(f_arr.size, dtype=complex)
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            for idx, vals in zip(chunks, pool.map(work, chunks)):
                m[idx] = vals

    k = principal_sqrt_neg(lam)
    logger.debug("Computed %d %s m-function samples at x_b=%g", f_arr.size, side.value, x_b)
    return [
        ContourSample(lam=complex(lam[j]), k=complex(k[j]), m=complex(m[j]), side=side, f=float(f_arr[j]))
        for j in range(f_arr.size)
    ]


def m_evaluator(p, x_b: float, side: Side, cfg: RiccatiConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluator usable anywhere off the real axis, for the symmetry check."""
    return lambda lam: _evaluate_m(p, x_b, side, lam, cfg, check_half_plane=False)


def m_diagnostics(
    samples: Sequence[ContourSample],
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> MDiagnosticsReport:
    """Herglotz count and symmetry residual of a set of m samples.

    m_+ maps the upper half plane into itself, m_- into the lower one, so the
    Herglotz test is side aware. The symmetry residual max |conj m(lam) - m(conj lam)|
    is only reported when an evaluator for conj(lam) is supplied.
    """
    if not samples:
        raise DomainError("m_diagnostics needs at least one sample")

    side_sign = np.array([1.0 if s.side is Side.RIGHT else -1.0 for s in samples])
    m = np.array([s.m for s in samples])
    signed_im = side_sign * m.imag
    violations = int(np.count_nonzero(signed_im <= 0))

    symmetry = None
    if evaluator is not None:
        lam = np.array([s.lam for s in samples])
        m_conj = np.asarray(evaluator(np.conj(lam)), dtype=complex)
        symmetry = float(np.max(np.abs(np.conj(m) - m_conj)))

    if violations:
        logger.warning("%d of %d m samples violate the Herglotz property", violations, len(samples))
    return MDiagnosticsReport(
        herglotz_violations=violations,
        symmetry_residual=symmetry,
        min_im=float(np.min(signed_im)),
    )


def samples_to_arrays(samples: Sequence[ContourSample]):
    """(f, lambda, k, m) arrays from a sample list."""
    f = np.array([s.f for s in samples], dtype=float)
    lam = np.array([s.lam for s in samples], dtype=complex)
    k = np.array([s.k for s in samples], dtype=complex)
    m = np.array([s.m for s in samples], dtype=complex)
    return f, lam, k, m

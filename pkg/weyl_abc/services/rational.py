"""Pole-residue fits of the DtN remainder g = m -/+ k in the variable k = sqrt+(-lambda).

The approximant is g(k) ~ sum_n alpha_n / (k + beta_n), i.e. P/Q with
deg P + 1 = deg Q = d. Poles are located by Sanathanan-Koerner iteration on an
Arnoldi-orthogonalized polynomial basis, residues are refitted linearly with the
poles fixed, and the result is optionally polished by Levenberg-Marquardt on the
true nonlinear residual.
"""

from dataclasses import dataclass, field, replace
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import optimize

from weyl_abc.errors import DomainError, FitError
from weyl_abc.models import ComplexValue, RationalReport, Side, WeightMode
from weyl_abc.services.core import principal_sqrt_neg
from weyl_abc.services.mfunction import ContourSample

logger = logging.getLogger(__name__)

PAIR_TOL = 1e-6
ROOT_SEPARATION = 1e-10
ILL_CONDITIONED = 1e12


@dataclass(frozen=True)
class FitPoints:
    """Contour data of one boundary side ready for least squares."""

    k: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    side: Side = Side.RIGHT
    sigma: float = 1.0
    f_cutoff: float = 0.0

    def __len__(self) -> int:
        return self.k.shape[0]


@dataclass(frozen=True)
class RationalDtN:
    side: Side
    residues: np.ndarray
    poles: np.ndarray
    fit_error: float
    tolerance: float
    contour_sigma: float
    f_cutoff: float
    converged: bool = True
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def degree(self) -> int:
        return int(self.poles.shape[0])

    def remainder(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=complex)
        if self.degree == 0:
            return np.zeros_like(k)
        return np.sum(self.residues / (k[..., None] + self.poles), axis=-1)


def empty_rational(side: Side, tolerance: float = 0.0, sigma: float = 1.0, f_cutoff: float = 0.0) -> RationalDtN:
    """The d = 0 approximant, i.e. the free-space condition m = -/+ k."""
    return RationalDtN(side, np.empty(0, complex), np.empty(0, complex), 0.0, tolerance, sigma, f_cutoff)


def g_values(samples: Sequence[ContourSample]) -> Tuple[np.ndarray, np.ndarray]:
    """(k_j, g_j) with g = m + k on the right and g = m - k on the left."""
    if not samples:
        return np.empty(0, complex), np.empty(0, complex)
    sides = {s.side for s in samples}
    if len(sides) != 1:
        raise DomainError("g_values needs samples from a single boundary side")
    side = sides.pop()
    k = np.array([s.k for s in samples], dtype=complex)
    m = np.array([s.m for s in samples], dtype=complex)
    return k, m - side.sign * k


def contour_weights(samples: Sequence[ContourSample], mode: WeightMode = WeightMode.DK) -> np.ndarray:
    """Trapezoid weights of |dk| (or |dlambda|) along the sampled contour."""
    n = len(samples)
    if n == 0:
        return np.empty(0)
    if n == 1:
        return np.ones(1)
    if mode is WeightMode.DK:
        pts = np.array([s.k for s in samples], dtype=complex)
    else:
        pts = np.array([s.lam for s in samples], dtype=complex)
    seg = np.abs(np.diff(pts))
    w = np.zeros(n)
    w[:-1] += 0.5 * seg
    w[1:] += 0.5 * seg
    return w


def fit_points(
    samples: Sequence[ContourSample],
    mode: WeightMode = WeightMode.DK,
    sigma: float = 1.0,
    f_cutoff: float = 0.0,
) -> FitPoints:
    k, g = g_values(samples)
    side = samples[0].side if samples else Side.RIGHT
    return FitPoints(k, g, contour_weights(samples, mode), side, sigma, f_cutoff)


@dataclass
class RationalFit:
    poles: np.ndarray
    residues: np.ndarray
    eps: float
    converged: bool = True
    condition: float = 1.0
    warnings: List[str] = field(default_factory=list)

    @property
    def degree(self) -> int:
        return int(self.poles.shape[0])


def _residual_norm(z, g, w, poles, residues) -> float:
    if poles.size == 0:
        r = -g
    else:
        r = np.sum(residues / (z[:, None] + poles[None, :]), axis=1) - g
    return float(np.sqrt(np.sum(w * np.abs(r) ** 2)))


def _arnoldi(z: np.ndarray, s: np.ndarray, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal columns s * pi_i(z), i = 0..d, and the Hessenberg recurrence."""
    n = z.shape[0]
    basis = np.zeros((n, d + 1), dtype=complex)
    hess = np.zeros((d + 1, d), dtype=complex)
    basis[:, 0] = s / np.linalg.norm(s)
    for i in range(d):
        v = z * basis[:, i]
        # classical Gram-Schmidt applied twice
        for _ in range(2):
            h = basis[:, : i + 1].conj().T @ v
            v = v - basis[:, : i + 1] @ h
            hess[: i + 1, i] += h
        hess[i + 1, i] = np.linalg.norm(v)
        if hess[i + 1, i] == 0:
            raise FitError("Arnoldi breakdown: fewer distinct points than the degree", {"degree": d})
        basis[:, i + 1] = v / hess[i + 1, i]
    return basis, hess


def _augment(points: FitPoints, real: bool):
    if not real:
        return points.k, points.g, points.weights
    return (
        np.concatenate([points.k, points.k.conj()]),
        np.concatenate([points.g, points.g.conj()]),
        np.concatenate([points.weights, points.weights]),
    )


def _fit_residues(z, g, w, poles) -> np.ndarray:
    """Linear least squares for residues with the poles held fixed."""
    if poles.size == 0:
        return np.empty(0, complex)
    sw = np.sqrt(w)
    cauchy = sw[:, None] / (z[:, None] + poles[None, :])
    residues, *_ = np.linalg.lstsq(cauchy, sw * g, rcond=None)
    return residues


def _pair_up(poles: np.ndarray, residues: np.ndarray, tol: float):
    """Symmetrize conjugate pairs; returns (poles, residues, unpaired count)."""
    poles = poles.astype(complex).copy()
    residues = residues.astype(complex).copy()
    n = poles.shape[0]
    used = np.zeros(n, dtype=bool)
    unpaired = 0

    for i in range(n):
        if used[i]:
            continue
        if abs(poles[i].imag) <= tol:
            poles[i] = poles[i].real
            residues[i] = residues[i].real
            used[i] = True
            continue
        candidates = [j for j in range(n) if j != i and not used[j]]
        if candidates:
            dist = [abs(poles[j] - np.conj(poles[i])) for j in candidates]
            j = candidates[int(np.argmin(dist))]
            if min(dist) <= tol:
                beta = 0.5 * (poles[i] + np.conj(poles[j]))
                alpha = 0.5 * (residues[i] + np.conj(residues[j]))
                poles[i], poles[j] = beta, np.conj(beta)
                residues[i], residues[j] = alpha, np.conj(alpha)
                used[i] = used[j] = True
                continue
        used[i] = True
        unpaired += 1

    order = np.lexsort((poles.imag, np.abs(poles.imag), poles.real))
    return poles[order], residues[order], unpaired


def _sk_iteration(points: FitPoints, d: int, real: bool, max_iter: int, init_poles=None) -> RationalFit:
    z, g, w = _augment(points, real)
    sw = np.sqrt(w)
    if init_poles is not None and len(init_poles):
        log_q = np.sum(np.log(np.abs(z[:, None] + np.asarray(init_poles)[None, :])), axis=1)
    else:
        log_q = np.zeros(z.shape[0])

    best: Optional[RationalFit] = None
    prev = None
    converged = False
    cond = 1.0
    for it in range(max_iter):
        s = sw * np.exp(-(log_q - log_q.min()))
        basis, hess = _arnoldi(z, s, d)
        if real:
            hess = hess.real.astype(complex)

        a = np.hstack([basis[:, :d], -g[:, None] * basis[:, :d]])
        rhs = g * basis[:, d]
        if real:
            a = np.vstack([a.real, a.imag])
            rhs = np.concatenate([rhs.real, rhs.imag])

        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(rhs))):
            raise FitError("Non-finite values in the linearized fit", {"degree": d, "iteration": it})

        sol, _, rank, sv = np.linalg.lstsq(a, rhs, rcond=None)
        cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else float("inf")
        if rank < 2 * d:
            raise FitError(
                "Rank-deficient linearized system",
                {"degree": d, "rank": int(rank), "condition": cond},
            )

        c = sol[d:]
        comp = hess[:d, :d].copy()
        comp[:, d - 1] -= hess[d, d - 1] * c
        if real:
            comp = comp.real
        roots = np.linalg.eigvals(comp)
        poles = -roots.astype(complex)

        residues = _fit_residues(z, g, w, poles)
        eps = _residual_norm(points.k, points.g, points.weights, poles, residues)
        logger.debug("SK degree %d iteration %d: eps=%.3e cond=%.2e", d, it, eps, cond)

        if best is None or eps < best.eps:
            best = RationalFit(poles, residues, eps, condition=cond)

        if prev is not None:
            scale = max(1.0, float(np.max(np.abs(poles))))
            change = np.max(np.abs(np.sort_complex(poles) - np.sort_complex(prev)))
            if change <= 1e-12 * scale:
                converged = True
                break
        prev = poles
        log_q = np.sum(np.log(np.abs(z[:, None] - roots[None, :]) + 1e-300), axis=1)

    best.converged = converged
    if cond > ILL_CONDITIONED:
        best.warnings.append(f"ill-conditioned linearized system (cond={cond:.2e})")
    return best


def _groups(poles: np.ndarray, real: bool, tol: float):
    """Parameter layout for the nonlinear polish: ('real', i), ('pair', i, j) or ('complex', i)."""
    groups = []
    seen = set()
    for i, b in enumerate(poles):
        if i in seen:
            continue
        if real and abs(b.imag) <= tol:
            groups.append(("real", i))
            seen.add(i)
            continue
        if real:
            partner = [j for j in range(len(poles)) if j not in seen and j != i and abs(poles[j] - np.conj(b)) <= tol]
            if partner:
                groups.append(("pair", i, partner[0]))
                seen.update((i, partner[0]))
                continue
        groups.append(("complex", i))
        seen.add(i)
    return groups


def _pack(groups, poles, residues) -> np.ndarray:
    params = []
    for g in groups:
        i = g[1]
        if g[0] == "real":
            params += [residues[i].real, poles[i].real]
        else:
            params += [residues[i].real, residues[i].imag, poles[i].real, poles[i].imag]
    return np.asarray(params, dtype=float)


def _unpack(groups, params, d):
    poles = np.zeros(d, dtype=complex)
    residues = np.zeros(d, dtype=complex)
    pos = 0
    for g in groups:
        if g[0] == "real":
            residues[g[1]], poles[g[1]] = params[pos], params[pos + 1]
            pos += 2
            continue
        alpha = params[pos] + 1j * params[pos + 1]
        beta = params[pos + 2] + 1j * params[pos + 3]
        pos += 4
        residues[g[1]], poles[g[1]] = alpha, beta
        if g[0] == "pair":
            residues[g[2]], poles[g[2]] = np.conj(alpha), np.conj(beta)
    return poles, residues


def _polish(points: FitPoints, fit: RationalFit, real: bool) -> RationalFit:
    """Levenberg-Marquardt on the weighted nonlinear residual, accepted only if it improves eps."""
    d = fit.degree
    if d == 0:
        return fit
    z, g = points.k, points.g
    sw = np.sqrt(points.weights)
    scale = max(1.0, float(np.max(np.abs(fit.poles))))
    groups = _groups(fit.poles, real, PAIR_TOL * scale)

    def fun(params):
        poles, residues = _unpack(groups, params, d)
        r = sw * (np.sum(residues / (z[:, None] + poles[None, :]), axis=1) - g)
        return np.concatenate([r.real, r.imag])

    def jac(params):
        poles, residues = _unpack(groups, params, d)
        inv = 1.0 / (z[:, None] + poles[None, :])
        cols = []
        for grp in groups:
            i = grp[1]
            if grp[0] == "real":
                cols += [inv[:, i], -residues[i] * inv[:, i] ** 2]
            elif grp[0] == "complex":
                d_alpha = inv[:, i]
                d_beta = -residues[i] * inv[:, i] ** 2
                cols += [d_alpha, 1j * d_alpha, d_beta, 1j * d_beta]
            else:
                j = grp[2]
                cols += [
                    inv[:, i] + inv[:, j],
                    1j * inv[:, i] - 1j * inv[:, j],
                    -residues[i] * inv[:, i] ** 2 - residues[j] * inv[:, j] ** 2,
                    -1j * residues[i] * inv[:, i] ** 2 + 1j * residues[j] * inv[:, j] ** 2,
                ]
        jc = sw[:, None] * np.stack(cols, axis=1)
        return np.vstack([jc.real, jc.imag])

    x0 = _pack(groups, fit.poles, fit.residues)
    if 2 * z.shape[0] < x0.size:
        return fit
    try:
        res = optimize.least_squares(fun, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.warning("Nonlinear polish failed at degree %d: %s", d, e)
        return fit

    poles, residues = _unpack(groups, res.x, d)
    eps = _residual_norm(z, g, points.weights, poles, residues)
    if np.isfinite(eps) and eps < fit.eps:
        logger.debug("Polish at degree %d: eps %.3e -> %.3e", d, fit.eps, eps)
        return RationalFit(poles, residues, eps, fit.converged, fit.condition, list(fit.warnings))
    return fit


def fit_rational(
    points: FitPoints,
    d: int,
    weights: Optional[np.ndarray] = None,
    real_coefficients: bool = True,
    max_iter: int = 20,
    polish: bool = True,
    warm_start: Optional[RationalFit] = None,
) -> RationalFit:
    """Weighted least-squares rational fit of degree d.

    eps = (sum_j w_j |P/Q(k_j) - g_j|^2)^(1/2) over the given points. With
    real_coefficients the data are mirrored (k, g) -> (conj k, conj g) so the
    fit respects the conjugate symmetry of the m-function and the poles come
    out real or in conjugate pairs. A warm start (typically the degree d-1 fit)
    is extended by a zero-residue real pole and competes with the cold fit, so
    eps never exceeds the warm start's.
    """
    if d < 0:
        raise DomainError("Degree must be non-negative", {"d": d})
    if weights is not None:
        points = replace(points, weights=np.asarray(weights, dtype=float))
    if len(points) < 2 * d + 2:
        raise DomainError(
            "Not enough points for the requested degree",
            {"points": len(points), "degree": d},
        )

    if d == 0:
        return RationalFit(np.empty(0, complex), np.empty(0, complex), _residual_norm(points.k, points.g, points.weights, np.empty(0), np.empty(0)))

    candidates = []
    try:
        candidates.append(_sk_iteration(points, d, real_coefficients, max_iter))
    except FitError as e:
        if warm_start is None:
            raise
        logger.warning("Cold fit at degree %d failed (%s); using the warm start", d, e.message)

    if warm_start is not None and warm_start.degree == d - 1:
        z, g, w = _augment(points, real_coefficients)
        scale = max(1.0, float(np.median(np.abs(points.k.real))))
        extra = scale
        while warm_start.degree and np.min(np.abs(warm_start.poles - extra)) < 1e-3 * scale:
            extra *= 1.37
        poles = np.concatenate([warm_start.poles, [extra]]).astype(complex)
        residues = np.concatenate([warm_start.residues, [0.0]]).astype(complex)
        eps = _residual_norm(points.k, points.g, points.weights, poles, residues)
        refit = _fit_residues(z, g, w, poles)
        eps_refit = _residual_norm(points.k, points.g, points.weights, poles, refit)
        if eps_refit < eps:
            residues, eps = refit, eps_refit
        candidates.append(RationalFit(poles, residues, eps, warm_start.converged, warm_start.condition))

    if polish:
        candidates = [_polish(points, c, real_coefficients) for c in candidates]

    best = min(candidates, key=lambda c: c.eps)
    if not best.converged:
        msg = f"Sanathanan-Koerner iteration did not converge in {max_iter} iterations at degree {d}"
        logger.warning(msg)
        best.warnings.append(msg)
    return best


def pole_residue(P: Sequence[complex], Q: Sequence[complex]) -> Tuple[np.ndarray, np.ndarray]:
    """Partial fractions P/Q = sum alpha_n/(k + beta_n).

    P and Q are coefficient sequences in ascending powers of k.
    """
    q = np.trim_zeros(np.asarray(Q, dtype=complex), "b")
    if q.size <= 1:
        return np.empty(0, complex), np.empty(0, complex)

    roots = npoly.polyroots(q)
    scale = max(1.0, float(np.max(np.abs(roots))))
    if roots.size > 1:
        gaps = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.min(gaps) < ROOT_SEPARATION * scale:
            raise FitError(
                "Denominator has (nearly) multiple roots; reduce the degree",
                {"min_separation": float(np.min(gaps))},
            )
    dq = npoly.polyder(q)
    residues = npoly.polyval(roots, np.asarray(P, dtype=complex)) / npoly.polyval(roots, dq)
    return residues, -roots


def enforce_conjugate_pairs(r: RationalDtN) -> RationalDtN:
    if r.degree == 0:
        return r
    scale = max(1.0, float(np.max(np.abs(r.poles))))
    poles, residues, unpaired = _pair_up(r.poles, r.residues, PAIR_TOL * scale)
    warnings = list(r.warnings)
    if unpaired:
        msg = f"{unpaired} non-real pole(s) without a conjugate partner on the {r.side.value} side"
        logger.warning(msg)
        warnings.append(msg)
    return replace(r, poles=poles, residues=residues, warnings=tuple(warnings))


def _finalize(points: FitPoints, fit: RationalFit, eps0: float, converged: bool) -> RationalDtN:
    warnings = list(fit.warnings)
    unstable = fit.poles[fit.poles.real < 0]
    if unstable.size:
        msg = f"{unstable.size} pole(s) with Re beta < 0 on the {points.side.value} side"
        logger.warning(msg)
        warnings.append(msg)
    r = RationalDtN(
        side=points.side,
        residues=fit.residues,
        poles=fit.poles,
        fit_error=fit.eps,
        tolerance=eps0,
        contour_sigma=points.sigma,
        f_cutoff=points.f_cutoff,
        converged=converged,
        warnings=tuple(warnings),
    )
    paired = enforce_conjugate_pairs(r)
    if paired.degree == 0:
        return paired

    # fit_error always describes the returned poles and residues
    eps = _residual_norm(points.k, points.g, points.weights, paired.poles, paired.residues)
    if eps <= max(fit.eps, eps0):
        return replace(paired, fit_error=eps)
    msg = (
        f"conjugate pairing raised eps from {fit.eps:.3e} to {eps:.3e} on the "
        f"{points.side.value} side; keeping the unpaired fit"
    )
    logger.warning(msg)
    return replace(r, warnings=r.warnings + (msg,))


def auto_degree(
    points: FitPoints,
    eps0: float,
    d_max: int = 40,
    real_coefficients: bool = True,
    max_iter: int = 20,
    polish: bool = True,
) -> RationalDtN:
    """Smallest degree d <= d_max whose fit reaches eps <= eps0."""
    if eps0 <= 0:
        raise DomainError("eps0 must be positive", {"eps0": eps0})

    d_cap = min(d_max, (len(points) - 2) // 2)
    best = fit_rational(points, 0)
    previous = best
    logger.info("%s side degree 0: eps=%.3e", points.side.value, best.eps)
    if best.eps <= eps0:
        return _finalize(points, best, eps0, True)

    for d in range(1, d_cap + 1):
        try:
            fit = fit_rational(
                points,
                d,
                real_coefficients=real_coefficients,
                max_iter=max_iter,
                polish=polish,
                warm_start=previous,
            )
        except FitError as e:
            logger.warning("Fit at degree %d failed: %s", d, e.message)
            continue
        logger.info("%s side degree %d: eps=%.3e", points.side.value, d, fit.eps)
        previous = fit
        if fit.eps < best.eps:
            best = fit
        if fit.eps <= eps0:
            return _finalize(points, fit, eps0, True)

    msg = f"no degree <= {d_cap} reached eps0={eps0:.1e}; best eps={best.eps:.3e} at d={best.degree}"
    logger.warning(msg)
    best.warnings.append(msg)
    return _finalize(points, best, eps0, False)


def eval_approx_m(r: RationalDtN, lam):
    """-/+ sqrt+(-lambda) + sum alpha_n / (sqrt+(-lambda) + beta_n)."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam.imag <= 0):
        raise DomainError("eval_approx_m needs Im lambda > 0")
    k = principal_sqrt_neg(lam)
    if r.degree:
        gap = np.abs(k[..., None] + r.poles)
        if np.any(gap <= 1e-14 * (1.0 + np.abs(r.poles))):
            raise DomainError("lambda hits a pole of the rational approximant")
    out = r.side.sign * k + r.remainder(k)
    return complex(out) if out.ndim == 0 else out


def herglotz_min_im(r: RationalDtN, lambdas) -> float:
    """min over lambdas of Im m (right) or -Im m (left); positive means Herglotz on the sample."""
    vals = np.atleast_1d(eval_approx_m(r, lambdas))
    return float(np.min(-r.side.sign * vals.imag))


def to_report(r: RationalDtN, herglotz: Optional[float] = None) -> RationalReport:
    return RationalReport(
        side=r.side,
        degree=r.degree,
        eps=r.fit_error,
        eps0=r.tolerance,
        sigma=r.contour_sigma,
        f_cutoff=r.f_cutoff,
        poles=[ComplexValue.from_complex(b) for b in r.poles],
        residues=[ComplexValue.from_complex(a) for a in r.residues],
        herglotz_min_im=herglotz,
        converged=r.converged,
        warnings=list(r.warnings),
    )


def from_report(report: RationalReport) -> RationalDtN:
    return RationalDtN(
        side=report.side,
        residues=np.array([complex(a.re, a.im) for a in report.residues], dtype=complex),
        poles=np.array([complex(b.re, b.im) for b in report.poles], dtype=complex),
        fit_error=report.eps,
        tolerance=report.eps0,
        contour_sigma=report.sigma,
        f_cutoff=report.f_cutoff,
        converged=report.converged,
        warnings=tuple(report.warnings),
    )

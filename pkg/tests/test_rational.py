import numpy as np
import pytest

from weyl_abc.errors import DomainError, FitError
from weyl_abc.models import BargmannPotential, CoulombLikePotential, FreePotential, RiccatiConfig, Side, WeightMode
from weyl_abc.services.core import principal_sqrt_neg
from weyl_abc.services.mfunction import contour_frequencies, contour_lambdas, m_contour
from weyl_abc.services.rational import (
    FitPoints,
    RationalDtN,
    RationalFit,
    _finalize,
    _residual_norm,
    auto_degree,
    contour_weights,
    enforce_conjugate_pairs,
    eval_approx_m,
    fit_points,
    fit_rational,
    from_report,
    g_values,
    herglotz_min_im,
    pole_residue,
    to_report,
)

F_GRID = contour_frequencies(256.0, 201)


def _bargmann_points(gamma, beta=1.0, side=Side.RIGHT):
    samples = m_contour(BargmannPotential(beta=beta, gamma=gamma), 0.0, side, 1.0, F_GRID, RiccatiConfig())
    return fit_points(samples, WeightMode.DK, 1.0, 256.0)


def _synthetic_points(poles, residues):
    k = principal_sqrt_neg(contour_lambdas(1.0, F_GRID))
    g = np.sum(residues / (k[:, None] + poles[None, :]), axis=1)
    w = np.full(k.size, 1.0 / k.size)
    return FitPoints(k, g, w)


def test_fit_points_remainder_sign():
    pts = _bargmann_points(2.0)
    # right side: g = m + k = -(gamma^2 - beta^2)/(k + gamma)
    np.testing.assert_allclose(pts.g, -3.0 / (pts.k + 2.0), rtol=1e-12)
    left = _bargmann_points(1.0, side=Side.LEFT)
    np.testing.assert_allclose(left.g, 0.0, atol=1e-12)
    samples = m_contour(BargmannPotential(beta=1.0, gamma=2.0), 0.0, Side.RIGHT, 1.0, F_GRID, RiccatiConfig())
    k, g = g_values(samples)
    np.testing.assert_allclose(g, pts.g, rtol=1e-14)
    np.testing.assert_array_equal(k, pts.k)


@pytest.mark.parametrize("gamma", [0.0, 2.0, 3.5])
def test_bargmann_remainder_recovered_exactly(gamma):
    fit = fit_rational(_bargmann_points(gamma), 1)
    assert fit.poles[0] == pytest.approx(gamma, abs=1e-8)
    assert fit.residues[0] == pytest.approx(-(gamma**2 - 1.0), abs=1e-8)
    assert fit.eps < 1e-10


def test_synthetic_three_pole_recovery(rng):
    for _ in range(25):
        poles = np.sort(np.array([rng.uniform(0.5, 1.5), rng.uniform(2.5, 4.0), rng.uniform(6.0, 9.0)]))
        residues = rng.choice([-1.0, 1.0], 3) * rng.uniform(0.5, 2.0, 3)
        fit = fit_rational(_synthetic_points(poles, residues), 3)
        order = np.argsort(fit.poles.real)
        np.testing.assert_allclose(fit.poles[order], poles, atol=1e-6)
        np.testing.assert_allclose(fit.residues[order], residues, atol=1e-6)


def test_conjugate_pair_recovery():
    poles = np.array([1.0 + 2.0j, 1.0 - 2.0j, 3.0])
    residues = np.array([0.5 - 0.25j, 0.5 + 0.25j, -1.0])
    fit = fit_rational(_synthetic_points(poles, residues), 3)
    assert fit.eps < 1e-9
    assert np.sum(np.abs(fit.poles.imag) > 1.0) == 2
    np.testing.assert_allclose(np.sort_complex(fit.poles), np.sort_complex(poles), atol=1e-7)


def test_fit_rational_argument_checks():
    pts = _synthetic_points(np.array([1.0]), np.array([1.0]))
    with pytest.raises(DomainError):
        fit_rational(pts, -1)
    tiny = FitPoints(pts.k[:3], pts.g[:3], pts.weights[:3])
    with pytest.raises(DomainError):
        fit_rational(tiny, 2)


def test_auto_degree_free_is_zero():
    samples = m_contour(FreePotential(), 5.0, Side.RIGHT, 1.0, F_GRID, RiccatiConfig())
    r = auto_degree(fit_points(samples), 1e-8)
    assert r.degree == 0
    assert r.fit_error == 0.0
    assert r.converged


def test_auto_degree_bargmann_picks_one_pole():
    r = auto_degree(_bargmann_points(2.0), 1e-8)
    assert r.degree == 1
    assert r.fit_error <= 1e-8
    assert r.poles[0].real > 0
    assert not r.warnings


def test_auto_degree_error_is_non_increasing():
    poles = np.array([0.7, 2.0, 5.0, 11.0])
    residues = np.array([1.0, -0.5, 2.0, -3.0])
    pts = _synthetic_points(poles, residues)
    previous = None
    eps = []
    for d in range(0, 5):
        fit = fit_rational(pts, d, warm_start=previous)
        eps.append(fit.eps)
        previous = fit
    assert all(b <= a * (1 + 1e-12) for a, b in zip(eps, eps[1:]))
    assert eps[-1] < 1e-8


def test_auto_degree_reports_unreached_tolerance():
    poles = np.array([0.5, 1.5, 4.0])
    residues = np.array([1.0, 1.0, 1.0])
    r = auto_degree(_synthetic_points(poles, residues), 1e-14, d_max=1)
    assert r.degree <= 1
    assert not r.converged
    assert any("eps0" in w for w in r.warnings)


def test_pole_residue_partial_fractions():
    # P/Q = (3k + 5)/((k + 1)(k + 2)) = 2/(k + 1) + 1/(k + 2)
    residues, poles = pole_residue([5.0, 3.0], [2.0, 3.0, 1.0])
    order = np.argsort(poles.real)
    np.testing.assert_allclose(poles[order], [1.0, 2.0])
    np.testing.assert_allclose(residues[order], [2.0, 1.0])


def test_enforce_conjugate_pairs_symmetrizes():
    r = RationalDtN(
        Side.RIGHT,
        residues=np.array([1 + 1j, 1 - 1.0000000001j, 2.0 + 1e-12j]),
        poles=np.array([1 + 2j, 1 - 2.0000000001j, 3.0 + 1e-12j]),
        fit_error=0.0, tolerance=1e-8, contour_sigma=1.0, f_cutoff=256.0,
    )
    out = enforce_conjugate_pairs(r)
    assert np.sum(out.poles.imag == 0) == 1
    pair = out.poles[np.abs(out.poles.imag) > 1]
    assert pair[0] == np.conj(pair[1])
    assert not out.warnings


def test_eval_approx_m_free_and_herglotz():
    lam = contour_lambdas(1.0, F_GRID)
    right = RationalDtN(Side.RIGHT, np.empty(0, complex), np.empty(0, complex), 0.0, 1e-8, 1.0, 256.0)
    np.testing.assert_allclose(eval_approx_m(right, lam), -principal_sqrt_neg(lam))
    assert herglotz_min_im(right, lam) > 0
    with pytest.raises(DomainError):
        eval_approx_m(right, 1.0 + 0j)


def test_eval_approx_m_hits_pole():
    # k = sqrt(-lambda) = -beta is unreachable for Re beta > 0, so use a negative pole
    r = RationalDtN(Side.RIGHT, np.array([1.0 + 0j]), np.array([-1.0 + 1.0j]), 0.0, 1e-8, 1.0, 0.0)
    lam = -((1.0 - 1.0j) ** 2)
    with pytest.raises(DomainError):
        eval_approx_m(r, lam)


def test_report_roundtrip():
    r = auto_degree(_bargmann_points(2.0), 1e-8)
    report = to_report(r, herglotz=0.5)
    assert report.degree == 1 and report.side is Side.RIGHT
    assert report.herglotz_min_im == 0.5
    back = from_report(report)
    np.testing.assert_array_equal(back.poles, r.poles)
    np.testing.assert_array_equal(back.residues, r.residues)


def test_contour_weights_modes():
    samples = m_contour(FreePotential(), 0.0, Side.RIGHT, 1.0, contour_frequencies(4.0, 5), RiccatiConfig())
    w_lam = contour_weights(samples, WeightMode.DLAMBDA)
    np.testing.assert_allclose(w_lam, [1.0, 2.0, 2.0, 2.0, 1.0])
    assert np.all(contour_weights(samples, WeightMode.DK) > 0)


@pytest.mark.slow
def test_coulomb_like_pole_count():
    cfg = RiccatiConfig(x_far=200.0, step=1e-3)
    samples = m_contour(CoulombLikePotential(), 5.0, Side.RIGHT, 1.0, contour_frequencies(256.0, 513), cfg)
    r = auto_degree(fit_points(samples), 1e-8)
    assert 2 <= r.degree <= 6
    assert r.fit_error <= 1e-8


def test_pole_residue_rejects_double_root():
    # Q = (k + 1)^2
    with pytest.raises(FitError):
        pole_residue([1.0], [1.0, 2.0, 1.0])


def test_rank_deficient_system_raises():
    pts = _synthetic_points(np.array([1.0]), np.array([1.0]))
    zero = FitPoints(pts.k, np.zeros_like(pts.g), pts.weights)
    with pytest.raises(FitError, match="Rank-deficient"):
        fit_rational(zero, 2)


def _fit_of(points, poles, residues):
    eps = _residual_norm(points.k, points.g, points.weights, poles, residues)
    return RationalFit(poles.astype(complex), residues.astype(complex), eps)


def test_pairing_recomputes_fit_error():
    poles = np.array([1 + 2j, 1 - 2j + 1e-9j])
    residues = np.array([0.5 - 0.25j, 0.5 + 0.25j + 1e-10])
    pts = _synthetic_points(poles, residues)
    r = _finalize(pts, _fit_of(pts, poles, residues), 1e-8, True)
    pair = r.poles[np.argsort(r.poles.imag)]
    assert pair[0] == np.conj(pair[1])
    assert r.fit_error == _residual_norm(pts.k, pts.g, pts.weights, r.poles, r.residues)
    assert r.fit_error <= 1e-8


def test_pairing_that_breaks_the_fit_is_dropped():
    # close enough to pair, but the residues are far from conjugate
    poles = np.array([1 + 2j, 1 - 2j + 5e-7])
    residues = np.array([1.0 + 0j, 2.0 + 0j])
    pts = _synthetic_points(poles, residues)
    fit = _fit_of(pts, poles, residues)
    r = _finalize(pts, fit, 1e-8, True)
    np.testing.assert_array_equal(r.poles, poles)
    np.testing.assert_array_equal(r.residues, residues)
    assert r.fit_error == fit.eps <= 1e-8
    assert any("pairing" in w for w in r.warnings)


def test_polished_fit_is_a_local_minimum(rng):
    pts = _synthetic_points(np.array([0.7, 2.0, 5.0, 11.0]), np.array([1.0, -0.5, 2.0, -3.0]))
    fit = fit_rational(pts, 2, real_coefficients=False)
    base = _residual_norm(pts.k, pts.g, pts.weights, fit.poles, fit.residues)
    assert base == pytest.approx(fit.eps, rel=1e-12)

    for _ in range(20):
        poles, residues = fit.poles.copy(), fit.residues.copy()
        n = rng.integers(fit.degree)
        target = poles if rng.random() < 0.5 else residues
        target[n] *= 1.0 + 0.01 * np.exp(2j * np.pi * rng.random())
        assert _residual_norm(pts.k, pts.g, pts.weights, poles, residues) >= base * (1 - 1e-9)

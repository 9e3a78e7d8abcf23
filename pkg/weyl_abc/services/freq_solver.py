"""Frequency-domain method: per-frequency Robin BVPs and a filtered inverse Laplace transform."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from weyl_abc.config import get_settings
from weyl_abc.errors import DomainError, QuadratureError, SolverError
from weyl_abc.models import FreqConfig, RiccatiConfig, Side
from weyl_abc.services.core import WaveField
from weyl_abc.services.fem import FemOperators, banded_matvec, to_banded
from weyl_abc.services.mfunction import closed_form_m, contour_lambdas, riccati_m
from weyl_abc.services.rational import RationalDtN, eval_approx_m

logger = logging.getLogger(__name__)

# (s values) -> (m_left, m_right), each an array over s
MProvider = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class BvpSystem:
    ab: np.ndarray
    rhs: np.ndarray
    bandwidth: int
    s: complex


@dataclass
class FreqSolution:
    f_grid: np.ndarray
    u_hat: np.ndarray  # (nodes, frequencies)
    sigma: float

    def __post_init__(self):
        if self.u_hat.shape[1] != self.f_grid.shape[0]:
            raise DomainError("u_hat needs one column per frequency")


@dataclass
class FreqRunResult:
    snapshots: Dict[float, WaveField]
    sigma: float
    f_grid: np.ndarray
    failures: List[float] = field(default_factory=list)


def _bvp_matrix(h_band: np.ndarray, m_band: np.ndarray, s: complex, m_left: complex, m_right: complex, p: int) -> np.ndarray:
    ab = h_band - 1j * s * m_band
    # diagonal sits in row p of the band storage
    ab[p, 0] += m_left
    ab[p, -1] -= m_right
    return ab


def assemble_bvp(ops: FemOperators, s: complex, u0: WaveField, m_left: complex, m_right: complex) -> BvpSystem:
    """Weak form of -u'' + V u - i s u = -i u0 with u'(x_pm) = m_pm u(x_pm)."""
    if s.real <= 0:
        raise DomainError("Laplace variable needs Re s > 0", {"s": [s.real, s.imag]})
    p = ops.mesh.order
    ab = _bvp_matrix(to_banded(ops.hamiltonian(), p), to_banded(ops.mass, p), s, m_left, m_right, p)
    rhs = -1j * (ops.mass @ u0.values)
    return BvpSystem(ab, rhs, p, complex(s))


def solve_bvp(system: BvpSystem) -> np.ndarray:
    """Banded LU with partial pivoting."""
    p = system.bandwidth
    try:
        x = linalg.solve_banded((p, p), system.ab, system.rhs, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise SolverError(
            f"BVP solve failed at s = {system.s:.6g}: {e}",
            {"s": [system.s.real, system.s.imag], "f": system.s.imag},
        ) from e

    b_norm = np.linalg.norm(system.rhs)
    if b_norm > 0:
        resid = np.linalg.norm(banded_matvec(system.ab, x, p) - system.rhs)
        if resid > 1e-8 * b_norm:
            logger.warning("BVP residual %.2e relative at f=%.6g", resid / b_norm, system.s.imag)
    return x


def filter_chi(f, f_c: float, scale: float = 1.2, power: int = 20):
    """exp(-(scale f / f_c)^power)."""
    if f_c <= 0:
        raise DomainError("f_c must be positive", {"f_c": f_c})
    out = np.exp(-((scale * np.asarray(f, dtype=float) / f_c) ** power))
    return float(out) if np.ndim(out) == 0 else out


def frequency_grid(f_cutoff: float, n_quad: int) -> np.ndarray:
    if n_quad < 3 or n_quad % 2 == 0:
        raise QuadratureError("Simpson quadrature needs an odd point count >= 3", {"n_quad": n_quad})
    return np.linspace(-f_cutoff, f_cutoff, n_quad)


def simpson_weights(f_grid: np.ndarray) -> np.ndarray:
    n = f_grid.shape[0]
    if n < 3 or n % 2 == 0:
        raise QuadratureError("Simpson quadrature needs an odd point count >= 3", {"n": n})
    df = np.diff(f_grid)
    if np.max(np.abs(df - df[0])) > 1e-9 * abs(df[0]):
        raise QuadratureError("Frequency grid is not uniform")
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * df[0] / 3.0


def laplace_weights(f_grid: np.ndarray, times: Sequence[float], sigma: float, cfg: FreqConfig) -> np.ndarray:
    """Row k holds the coefficients of u(t_k) in terms of u_hat(sigma + i f_j)."""
    f_grid = np.asarray(f_grid, dtype=float)
    times = np.asarray(times, dtype=float)
    w = simpson_weights(f_grid)
    if cfg.filter_enabled:
        f_c = float(np.max(np.abs(f_grid)))
        w = w * filter_chi(f_grid, f_c, cfg.filter_scale, cfg.filter_power)
    phase = np.exp(1j * np.outer(times, f_grid))
    return (np.exp(sigma * times)[:, None] / (2.0 * math.pi)) * phase * w[None, :]


def asymptotic_terms(ops: FemOperators, u0: WaveField, n_terms: int) -> List[np.ndarray]:
    """Nodal coefficients c_n of u_hat(s) = sum_n c_n / s^n for large |s|.

    From (s M + i H) u_hat = M u0: c_1 = u0 and c_2 = -i M^{-1} H u0. The
    Robin rows add O(s^{-3/2}) times u0(x_pm), which is left to the quadrature.
    """
    terms: List[np.ndarray] = []
    if n_terms >= 1:
        terms.append(u0.values)
    if n_terms >= 2:
        p = ops.mesh.order
        hu = ops.hamiltonian() @ u0.values
        terms.append(-1j * linalg.solve_banded((p, p), to_banded(ops.mass, p), hu))
    return terms


def asymptotic_correction(weights: np.ndarray, s: np.ndarray, times: Sequence[float], terms: Sequence[np.ndarray]) -> np.ndarray:
    """(exact inverse transform - quadrature) of sum_n c_n / s^n, one row per time.

    Adding this to the quadrature of u_hat equals applying the quadrature to
    u_hat - sum_n c_n / s^n and restoring the terms exactly (c_n t^{n-1}/(n-1)!).
    """
    times = np.asarray(times, dtype=float)
    out = np.zeros((times.size, terms[0].size if terms else 0), dtype=complex)
    for n, c in enumerate(terms, start=1):
        exact = times ** (n - 1) / math.factorial(n - 1)
        quad = weights @ s ** (-n)
        out += np.outer(exact - quad, c)
    return out


def inverse_laplace(sol: FreqSolution, t: float, cfg: FreqConfig) -> WaveField:
    if t <= 0:
        raise DomainError("Inverse transform needs t > 0", {"t": t})
    weights = laplace_weights(sol.f_grid, [t], sol.sigma, cfg)[0]
    return WaveField(float(t), sol.u_hat @ weights)


def exact_m_provider(potential, x_minus: float, x_plus: float, cfg: RiccatiConfig, threads: int = 1) -> MProvider:
    """Exact m-functions at both ends; Riccati for potentials without a closed form."""

    def side_values(side: Side, x_b: float, lam: np.ndarray) -> np.ndarray:
        if cfg.prefer_closed_form:
            exact = closed_form_m(potential, x_b, side, lam)
            if exact is not None:
                return np.asarray(exact, dtype=complex)
        chunks = np.array_split(np.arange(lam.size), max(1, min(threads, lam.size)))
        if len(chunks) == 1:
            return np.atleast_1d(riccati_m(potential, x_b, side, lam, cfg))
        out = np.empty(lam.size, dtype=complex)
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            for idx, vals in zip(chunks, pool.map(lambda i: riccati_m(potential, x_b, side, lam[i], cfg), chunks)):
                out[idx] = vals
        return out

    def provider(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lam = 1j * np.asarray(s, dtype=complex)
        return side_values(Side.LEFT, x_minus, lam), side_values(Side.RIGHT, x_plus, lam)

    return provider


def rational_m_provider(r_left: RationalDtN, r_right: RationalDtN) -> MProvider:
    def provider(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lam = 1j * np.asarray(s, dtype=complex)
        return (
            np.atleast_1d(eval_approx_m(r_left, lam)),
            np.atleast_1d(eval_approx_m(r_right, lam)),
        )

    return provider


def solve_frequencies(ops: FemOperators, u0: WaveField, f_grid, sigma: float, m_provider: MProvider) -> FreqSolution:
    """All BVP solutions as one matrix; fine for small grids and tests."""
    f_grid = np.asarray(f_grid, dtype=float)
    s = sigma + 1j * f_grid
    m_left, m_right = m_provider(s)
    p = ops.mesh.order
    h_band, m_band = to_banded(ops.hamiltonian(), p), to_banded(ops.mass, p)
    rhs = -1j * (ops.mass @ u0.values)
    u_hat = np.empty((ops.mesh.n_nodes, f_grid.size), dtype=complex)
    for j in range(f_grid.size):
        ab = _bvp_matrix(h_band, m_band, s[j], m_left[j], m_right[j], p)
        u_hat[:, j] = solve_bvp(BvpSystem(ab, rhs, p, complex(s[j])))
    return FreqSolution(f_grid, u_hat, sigma)


def run_frequency_method(
    cfg: FreqConfig,
    T: float,
    ops: FemOperators,
    u0: WaveField,
    m_provider: MProvider,
    threads: Optional[int] = None,
) -> FreqRunResult:
    """Solve one BVP per Simpson node and reduce straight into the output snapshots.

    Frequencies are processed in fixed blocks in ascending order; blocks may be
    solved concurrently but are reduced in order, so snapshots do not depend on
    the thread count.
    With cfg.asymptotic_terms > 0 the slowly decaying u0/s and c_2/s^2 parts of
    u_hat are transformed exactly instead of by the filtered quadrature.
    """
    settings = get_settings()
    threads = threads or settings.threads
    sigma = cfg.resolved_sigma(T)
    times = sorted(cfg.output_times)
    if any(t > T for t in times):
        raise DomainError("Output times must lie in (0, T]", {"T": T, "times": times})

    f_grid = frequency_grid(cfg.f_cutoff, cfg.n_quad)
    weights = laplace_weights(f_grid, times, sigma, cfg)
    s_all = sigma + 1j * f_grid

    logger.info(
        "Frequency method: %d frequencies, f_c=%g, sigma=%g, %d nodes, %d thread(s)",
        f_grid.size, cfg.f_cutoff, sigma, ops.mesh.n_nodes, threads,
    )
    m_left, m_right = m_provider(s_all)

    p = ops.mesh.order
    h_band, m_band = to_banded(ops.hamiltonian(), p), to_banded(ops.mass, p)
    rhs = -1j * (ops.mass @ u0.values)
    terms = asymptotic_terms(ops, u0, cfg.asymptotic_terms)

    def solve_block(idx: np.ndarray):
        block = np.zeros((ops.mesh.n_nodes, idx.size), dtype=complex)
        failed = []
        for col, j in enumerate(idx):
            ab = _bvp_matrix(h_band, m_band, s_all[j], m_left[j], m_right[j], p)
            try:
                block[:, col] = solve_bvp(BvpSystem(ab, rhs, p, complex(s_all[j])))
            except SolverError as e:
                logger.warning("Skipping frequency f=%.6g: %s", f_grid[j], e.message)
                # a skipped frequency contributes only the large-s terms
                for n, c in enumerate(terms, start=1):
                    block[:, col] += c / s_all[j] ** n
                failed.append(float(f_grid[j]))
        return idx, block, failed

    blocks = [np.arange(i, min(i + settings.freq_chunk_size, f_grid.size)) for i in range(0, f_grid.size, settings.freq_chunk_size)]
    acc = np.zeros((len(times), ops.mesh.n_nodes), dtype=complex)
    failures: List[float] = []

    def reduce(results):
        for idx, block, failed in results:
            acc[:] += weights[:, idx] @ block.T
            failures.extend(failed)

    if threads <= 1:
        reduce(solve_block(b) for b in blocks)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # bounded batches keep at most `threads` blocks in memory
            for start in range(0, len(blocks), threads):
                reduce(pool.map(solve_block, blocks[start : start + threads]))

    if len(failures) > settings.max_failure_ratio * f_grid.size:
        raise SolverError(
            f"{len(failures)} of {f_grid.size} frequency solves failed",
            {"failed_f": failures[:20], "count": len(failures)},
        )

    if terms:
        acc += asymptotic_correction(weights, s_all, times, terms)

    snapshots = {float(t): WaveField(float(t), acc[k]) for k, t in enumerate(times)}
    return FreqRunResult(snapshots, sigma, f_grid, failures)

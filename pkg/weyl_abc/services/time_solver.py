"""Time-domain method: Crank-Nicolson FEM with pole-residue absorbing boundaries.

On each side the boundary condition

    u_x(x_b) = sgn e^{-i pi/4} D^{1/2} u + sum_n alpha_n w_n,
    e^{-i pi/4} D^{1/2} w_n + beta_n w_n = u(x_b),

(sgn = -1 on the right, +1 on the left) is discretized with the convolution
weights alpha_m of sqrt((1-z)/(1+z)), whose long history is compressed into a
sum of exponentials and updated recursively in O(L) per step.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy.sparse.linalg import splu

from weyl_abc.errors import DomainError, SolverError
from weyl_abc.models import BoundaryTimeLevel, ConvolutionMode, Side, TimeConfig
from weyl_abc.services.core import WaveField
from weyl_abc.services.fem import FemOperators, l2_norm
from weyl_abc.services.rational import RationalDtN, empty_rational

logger = logging.getLogger(__name__)

ROT = np.exp(-0.25j * np.pi)
MAX_SOE_TERMS = 200
INCOMPATIBLE_DATA = 1e-4
NORM_GROWTH = 1.01


def beta_coeffs(K: int) -> np.ndarray:
    """beta_k = (2k)!/(4^k (k!)^2), k = 0..K, by the recurrence beta_k = beta_{k-1}(2k-1)/(2k)."""
    if K < 0:
        raise DomainError("K must be non-negative", {"K": K})
    k = np.arange(1, K + 1, dtype=float)
    return np.concatenate(([1.0], np.cumprod((2.0 * k - 1.0) / (2.0 * k))))


def alpha_coeffs(M: int) -> np.ndarray:
    """alpha_m, m = 0..M: alpha_{2k} = beta_k, alpha_{2k+1} = -beta_k."""
    beta = beta_coeffs(M // 2)
    alpha = np.empty(M + 1)
    alpha[0::2] = beta[: (M // 2) + 1]
    alpha[1::2] = -beta[: (M + 1) // 2]
    return alpha


def half_derivative_direct(history: Sequence[complex], dt: float) -> complex:
    """sqrt(2/dt) sum_{m=0}^n alpha_m v_{n-m} for the stream v_0..v_n."""
    v = np.asarray(history, dtype=complex)
    if v.size == 0:
        raise DomainError("half_derivative_direct needs a non-empty history")
    if dt <= 0:
        raise DomainError("dt must be positive", {"dt": dt})
    alpha = alpha_coeffs(v.size - 1)
    return complex(math.sqrt(2.0 / dt) * np.dot(alpha, v[::-1]))


@dataclass(frozen=True)
class SumOfExponentials:
    weights: np.ndarray
    rates: np.ndarray
    max_k: int
    certified_error: float
    target_eps: float

    @property
    def n_terms(self) -> int:
        return int(self.weights.shape[0])

    @property
    def certified(self) -> bool:
        return self.certified_error <= self.target_eps

    def evaluate(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return np.exp(-np.multiply.outer(k, self.rates)) @ self.weights


def _kernel_density(u: np.ndarray) -> np.ndarray:
    # beta_k = int_0^inf e^{-u^2 k} g(u) du, from cos^2(theta) = e^{-u^2}
    return 2.0 * u / (math.pi * np.sqrt(np.expm1(u * u)))


def _soe_candidate(K: int, eps: float, ratio: float, q: int) -> Tuple[np.ndarray, np.ndarray]:
    u0 = 1.0 / math.sqrt(K)
    u_max = math.sqrt(2.0 * math.log(20.0 / (math.pi * eps)))
    edges = [0.0, u0]
    while edges[-1] < u_max:
        edges.append(edges[-1] * ratio)
    xg, wg = legendre.leggauss(q)
    a, b = np.array(edges[:-1]), np.array(edges[1:])
    u = (0.5 * (b - a))[:, None] * xg[None, :] + (0.5 * (a + b))[:, None]
    c = (0.5 * (b - a))[:, None] * wg[None, :]
    w = (c * _kernel_density(u)).ravel()
    s = (u * u).ravel()
    keep = w > 1e-3 * eps
    return w[keep], s[keep]


def _soe_error(beta: np.ndarray, w: np.ndarray, s: np.ndarray, ks: np.ndarray, chunk: int = 8192) -> float:
    err = 0.0
    for start in range(0, ks.size, chunk):
        kk = ks[start : start + chunk]
        approx = np.exp(-np.multiply.outer(kk, s)) @ w
        err = max(err, float(np.max(np.abs(beta[kk] - approx))))
    return err


@lru_cache(maxsize=16)
def soe_fit(K: int, target_eps: float) -> SumOfExponentials:
    """Certified sum-of-exponentials fit of beta_k for 0 <= k <= K.

    Candidates come from composite Gauss-Legendre quadrature of the integral
    representation on geometrically growing panels; they are tried in order of
    size and the first one whose error over every k in 0..K is within
    target_eps is returned.
    """
    if K < 1:
        raise DomainError("soe_fit needs K >= 1", {"K": K})
    if target_eps <= 0:
        raise DomainError("target_eps must be positive", {"target_eps": target_eps})

    beta = beta_coeffs(K)
    if K == 1:
        # exact: w = beta_0, w e^{-s} = beta_1
        return SumOfExponentials(np.array([1.0]), np.array([math.log(2.0)]), 1, 0.0, target_eps)

    candidates = []
    for ratio in (4.0, 3.0, 2.0, 1.5):
        for q in range(4, 41, 2):
            w, s = _soe_candidate(K, target_eps, ratio, q)
            if 0 < w.size <= MAX_SOE_TERMS:
                candidates.append((w.size, ratio, q, w, s))
    candidates.sort(key=lambda c: (c[0], c[1]))

    all_k = np.arange(K + 1)
    checks = np.unique(np.concatenate([np.arange(min(K, 2048) + 1), np.geomspace(1, K, 512).astype(int)]))
    best: Optional[SumOfExponentials] = None
    for n_terms, ratio, q, w, s in candidates:
        if _soe_error(beta, w, s, checks) > target_eps:
            continue
        err = _soe_error(beta, w, s, all_k)
        if best is None or err < best.certified_error:
            best = SumOfExponentials(w, s, K, err, target_eps)
        if err <= target_eps:
            logger.info("SOE for K=%d: %d terms (ratio %g, %d nodes/panel), error %.2e", K, n_terms, ratio, q, err)
            return best

    if best is None:
        n_terms, ratio, q, w, s = candidates[-1]
        best = SumOfExponentials(w, s, K, _soe_error(beta, w, s, all_k), target_eps)
    logger.warning(
        "SOE budget exhausted for K=%d: best certified error %.2e > %.2e",
        K, best.certified_error, target_eps,
    )
    return best


@dataclass
class ConvolutionState:
    """Recursive half-derivative history for a batch of streams.

    f_even / f_odd hold, per stream and per exponential, the compressed
    sum over past samples of even / odd index; v_last and v_prev are the two
    most recent samples and n the number of samples pushed so far.
    """

    weights: np.ndarray
    decay: np.ndarray
    f_even: np.ndarray
    f_odd: np.ndarray
    v_last: np.ndarray
    v_prev: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, n_streams: int, soe: SumOfExponentials) -> "ConvolutionState":
        shape = (n_streams, soe.n_terms)
        return cls(
            weights=soe.weights.astype(complex),
            decay=np.exp(-soe.rates),
            f_even=np.zeros(shape, dtype=complex),
            f_odd=np.zeros(shape, dtype=complex),
            v_last=np.zeros(n_streams, dtype=complex),
            v_prev=np.zeros(n_streams, dtype=complex),
        )

    def copy(self) -> "ConvolutionState":
        return ConvolutionState(
            self.weights, self.decay, self.f_even.copy(), self.f_odd.copy(),
            self.v_last.copy(), self.v_prev.copy(), self.n,
        )

    def history(self, c0: float) -> np.ndarray:
        """c0 sum_{m>=1} alpha_m v_{N-m} for the upcoming index N = n; advances the accumulators."""
        N = self.n
        if N == 0:
            return np.zeros_like(self.v_last)
        total = np.zeros_like(self.v_last)
        if N >= 2:
            acc_new = self.f_even if N % 2 == 0 else self.f_odd
            acc_new[:] = self.decay * (self.weights * self.v_prev[:, None] + acc_new)
            acc_old = self.f_odd if N % 2 == 0 else self.f_even
            total = np.sum(acc_new - acc_old, axis=1)
        return c0 * (total - self.v_last)

    def push(self, v_new: np.ndarray) -> None:
        self.v_prev = self.v_last
        self.v_last = np.asarray(v_new, dtype=complex).copy()
        self.n += 1


@dataclass
class DirectHistory:
    """Exact convolution with the full alpha weights, O(n) per step."""

    samples: np.ndarray  # (streams, capacity)
    alpha: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, n_streams: int, capacity: int) -> "DirectHistory":
        return cls(np.zeros((n_streams, capacity), dtype=complex), alpha_coeffs(capacity))

    def history(self, c0: float) -> np.ndarray:
        N = self.n
        if N == 0:
            return np.zeros(self.samples.shape[0], dtype=complex)
        past = self.samples[:, N - 1 :: -1]
        return c0 * (past @ self.alpha[1 : N + 1])

    def push(self, v_new: np.ndarray) -> None:
        if self.n >= self.samples.shape[1]:
            grown = np.zeros((self.samples.shape[0], 2 * self.samples.shape[1]), dtype=complex)
            grown[:, : self.n] = self.samples
            self.samples = grown
            self.alpha = alpha_coeffs(grown.shape[1])
        self.samples[:, self.n] = v_new
        self.n += 1


def fast_half_derivative(
    state: Optional[ConvolutionState], v_new: complex, dt: float, soe: Optional[SumOfExponentials] = None
) -> Tuple[complex, ConvolutionState]:
    """One step of the recursive half derivative of a single stream.

    Returns sqrt(2/dt)(v_n - v_{n-1}) plus the compressed m >= 2 history, and
    the advanced state; the input state is left untouched.
    """
    if state is None:
        if soe is None:
            raise DomainError("fast_half_derivative needs a state or a sum of exponentials")
        state = ConvolutionState.zeros(1, soe)
    c0 = math.sqrt(2.0 / dt)
    nxt = state.copy()
    hist = nxt.history(c0)
    nxt.push(np.atleast_1d(v_new))
    return complex(c0 * nxt.v_last[0] + hist[0]), nxt


@dataclass
class AbcState:
    side: Side
    rational: RationalDtN
    conv: object  # ConvolutionState or DirectHistory, streams [u, w_1..w_d]
    w: np.ndarray
    flux: complex = 0.0
    denom: np.ndarray = field(default=None)
    robin: complex = 0.0

    @property
    def node(self) -> int:
        return -1 if self.side is Side.RIGHT else 0


def _init_abc(side: Side, r: RationalDtN, u_b: complex, c0: float, cfg: TimeConfig, capacity: int, soe) -> AbcState:
    d = r.degree
    denom = ROT * c0 + r.poles
    robin = side.sign * ROT * c0 + np.sum(r.residues / denom)
    if cfg.convolution is ConvolutionMode.FAST:
        conv = ConvolutionState.zeros(d + 1, soe)
    else:
        conv = DirectHistory.zeros(d + 1, capacity)
    w = np.zeros(d, dtype=complex)
    conv.push(np.concatenate(([u_b], w)))
    # D^{1/2} u at t_0 reduces to c0 u_0; all w start at zero
    flux = side.sign * ROT * c0 * u_b
    return AbcState(side, r, conv, w, complex(flux), denom, complex(robin))


class TimeStepper:
    """Crank-Nicolson on i M u' = A u - b with A = K + M_V and b the boundary flux vector.

    The step matrix iM/dt - A/2 + theta (boundary Robin terms) is constant in
    time and factorized once; theta = 1/2 averages the boundary flux between
    time levels, theta = 1 imposes it at the new level.
    """

    def __init__(
        self,
        ops: FemOperators,
        dt: float,
        cfg: TimeConfig,
        r_left: Optional[RationalDtN] = None,
        r_right: Optional[RationalDtN] = None,
        dirichlet: bool = False,
        capacity: int = 1024,
    ):
        if dt <= 0:
            raise DomainError("dt must be positive", {"dt": dt})
        self.ops = ops
        self.dt = dt
        self.cfg = cfg
        self.dirichlet = dirichlet
        self.c0 = math.sqrt(2.0 / dt)
        self.theta = 0.5 if cfg.boundary_time_level is BoundaryTimeLevel.AVERAGED else 1.0
        self.r_left = r_left or empty_rational(Side.LEFT)
        self.r_right = r_right or empty_rational(Side.RIGHT)
        if self.r_left.side is not Side.LEFT or self.r_right.side is not Side.RIGHT:
            raise DomainError("Rational boundary data attached to the wrong side")
        self.capacity = capacity
        self.soe = None
        self.abc: List[AbcState] = []
        self.n = 0

        n = ops.mesh.n_nodes
        a = ops.hamiltonian()
        mass = ops.mass
        self.rhs_matrix = (1j / dt * mass + 0.5 * a).tocsr()
        lhs = (1j / dt * mass - 0.5 * a).tolil()

        if dirichlet:
            self.interior = slice(1, n - 1)
            lhs = lhs.tocsr()[1 : n - 1, 1 : n - 1]
        else:
            self.interior = slice(0, n)
            for r, node in ((self.r_left, 0), (self.r_right, n - 1)):
                robin = _robin_coefficient(r, self.c0)
                # b = e_last flux_right - e_0 flux_left
                lhs[node, node] += self.theta * (robin if node == n - 1 else -robin)
            lhs = lhs.tocsr()

        try:
            self.lu = splu(lhs.tocsc())
        except RuntimeError as e:
            raise SolverError(f"Crank-Nicolson step matrix is singular: {e}", {"step": 0}) from e

    def start(self, u0: WaveField) -> WaveField:
        values = u0.values.astype(complex).copy()
        if self.dirichlet:
            values[0] = values[-1] = 0.0
            return WaveField(u0.time, values)

        for side, x_b in ((Side.LEFT, values[0]), (Side.RIGHT, values[-1])):
            if abs(x_b) > INCOMPATIBLE_DATA:
                logger.warning(
                    "Initial data is %.2e at the %s boundary; the half-derivative discretization assumes it vanishes",
                    abs(x_b), side.value,
                )

        if self.cfg.convolution is ConvolutionMode.FAST:
            K = self.capacity // 2 + 1
            self.soe = soe_fit(max(K, 1), self.cfg.soe_eps)
        self.abc = [
            _init_abc(Side.LEFT, self.r_left, values[0], self.c0, self.cfg, self.capacity, self.soe),
            _init_abc(Side.RIGHT, self.r_right, values[-1], self.c0, self.cfg, self.capacity, self.soe),
        ]
        self.n = 0
        return WaveField(u0.time, values)

    def step(self, field: WaveField) -> WaveField:
        u = field.values
        n = u.shape[0]
        rhs = self.rhs_matrix @ u

        if self.dirichlet:
            try:
                inner = self.lu.solve(rhs[self.interior])
            except RuntimeError as e:
                raise SolverError(f"Step {self.n + 1} failed: {e}", {"step": self.n + 1}) from e
            new = np.zeros(n, dtype=complex)
            new[self.interior] = inner
            self.n += 1
            return WaveField(field.time + self.dt, new)

        left, right = self.abc
        forcing = {}
        for st in (left, right):
            hist = st.conv.history(self.c0)
            h_u, h_w = hist[0], hist[1:]
            g = st.side.sign * ROT * h_u - np.sum(st.rational.residues * ROT * h_w / st.denom)
            forcing[st.side] = (g, h_w)

        # previous flux enters with weight 1 - theta
        rhs[-1] -= (1.0 - self.theta) * right.flux + self.theta * forcing[Side.RIGHT][0]
        rhs[0] += (1.0 - self.theta) * left.flux + self.theta * forcing[Side.LEFT][0]

        try:
            new = self.lu.solve(rhs)
        except RuntimeError as e:
            raise SolverError(f"Step {self.n + 1} failed: {e}", {"step": self.n + 1}) from e
        if not np.all(np.isfinite(new)):
            raise SolverError("Non-finite solution", {"step": self.n + 1})

        for st in (left, right):
            g, h_w = forcing[st.side]
            u_b = new[st.node]
            st.w = (u_b - ROT * h_w) / st.denom
            st.flux = complex(st.robin * u_b + g)
            st.conv.push(np.concatenate(([u_b], st.w)))

        self.n += 1
        return WaveField(field.time + self.dt, new)


def _robin_coefficient(r: RationalDtN, c0: float) -> complex:
    denom = ROT * c0 + r.poles
    return complex(r.side.sign * ROT * c0 + np.sum(r.residues / denom))


def cn_step(stepper: TimeStepper, field: WaveField) -> WaveField:
    return stepper.step(field)


@dataclass
class TimeRunResult:
    snapshots: Dict[float, WaveField]
    error_times: List[float] = field(default_factory=list)
    errors: List[float] = field(default_factory=list)
    trace_t: np.ndarray = None
    trace_left: np.ndarray = None
    trace_right: np.ndarray = None
    norms: np.ndarray = None
    norm_growth: bool = False
    soe_terms: int = 0


def run_time_method(
    cfg: TimeConfig,
    ops: FemOperators,
    u0: WaveField,
    r_left: Optional[RationalDtN] = None,
    r_right: Optional[RationalDtN] = None,
    reference: Optional[Callable[[float], Optional[WaveField]]] = None,
    dirichlet: bool = False,
    error_times: Optional[Sequence[float]] = None,
) -> TimeRunResult:
    """Step from 0 to T, collecting snapshots, errors, boundary traces and norms.

    reference(t) returns the comparison field on the same mesh (or None to skip).
    """
    from weyl_abc.services.reference import relative_l2_error

    n_steps = int(round(cfg.T / cfg.dt))
    if n_steps < 1:
        raise DomainError("T/dt must give at least one step", {"T": cfg.T, "dt": cfg.dt})

    stepper = TimeStepper(ops, cfg.dt, cfg, r_left, r_right, dirichlet=dirichlet, capacity=n_steps + 1)
    field_n = stepper.start(u0)

    snap_steps = {int(round(t / cfg.dt)): float(t) for t in cfg.snapshot_times}
    if error_times is None:
        err_steps = {k: k * cfg.dt for k in range(cfg.error_stride, n_steps + 1, cfg.error_stride)}
        err_steps.update(snap_steps)
    else:
        err_steps = {int(round(t / cfg.dt)): float(t) for t in error_times}

    norms = np.empty(n_steps + 1)
    trace = np.empty((2, n_steps + 1), dtype=complex)
    norms[0] = l2_norm(ops.mesh, field_n.values)
    trace[:, 0] = field_n.values[0], field_n.values[-1]

    result = TimeRunResult(snapshots={})
    logger.info(
        "Time method: %d steps of dt=%g, degrees left=%d right=%d, %s boundary level%s",
        n_steps, cfg.dt, stepper.r_left.degree, stepper.r_right.degree,
        cfg.boundary_time_level.value, " (Dirichlet)" if dirichlet else "",
    )

    for k in range(1, n_steps + 1):
        field_n = stepper.step(field_n)
        t = k * cfg.dt
        field_n = WaveField(t, field_n.values)
        norms[k] = l2_norm(ops.mesh, field_n.values)
        trace[:, k] = field_n.values[0], field_n.values[-1]

        if k in snap_steps:
            result.snapshots[snap_steps[k]] = field_n
        if reference is not None and k in err_steps:
            ref = reference(err_steps[k])
            if ref is not None:
                result.error_times.append(err_steps[k])
                result.errors.append(relative_l2_error(field_n, ref, ops.mesh))

    result.trace_t = cfg.dt * np.arange(n_steps + 1)
    result.trace_left, result.trace_right = trace[0], trace[1]
    result.norms = norms
    result.soe_terms = stepper.soe.n_terms if stepper.soe is not None else 0
    if norms[0] > 0 and np.max(norms) > NORM_GROWTH * norms[0]:
        result.norm_growth = True
        logger.warning("L2 norm grew to %.4f of its initial value", np.max(norms) / norms[0])
    return result

"""Experiment orchestration shared by the CLI and the HTTP app."""

from functools import cached_property
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from weyl_abc.config import get_settings
from weyl_abc.models import (
    ErrorReference,
    ErrorSeries,
    FreePotential,
    MDiagnosticsReport,
    RunConfig,
    Side,
)
from weyl_abc.services.core import WaveField
from weyl_abc.services.fem import FemOperators, Mesh, assemble_operators, build_mesh, sample_initial
from weyl_abc.services.freq_solver import (
    FreqRunResult,
    exact_m_provider,
    rational_m_provider,
    run_frequency_method,
)
from weyl_abc.services.mfunction import (
    ContourSample,
    contour_frequencies,
    m_contour,
    m_diagnostics,
    m_evaluator,
)
from weyl_abc.services.rational import RationalDtN, auto_degree, fit_points, herglotz_min_im
from weyl_abc.services.reference import (
    ReferenceResult,
    error_series,
    exact_free_field,
    reference_solution,
)
from weyl_abc.services.time_solver import TimeRunResult, run_time_method

logger = logging.getLogger(__name__)


class ExperimentService:
    """Runs the configured experiment pieces on one RunConfig."""

    def __init__(self, config: RunConfig, threads: Optional[int] = None):
        self.config = config
        self.threads = threads or get_settings().threads

    @cached_property
    def mesh(self) -> Mesh:
        c = self.config
        return build_mesh(c.domain.x_minus, c.domain.x_plus, c.mesh.elements, c.mesh.order)

    @cached_property
    def operators(self) -> FemOperators:
        return assemble_operators(self.mesh, self.config.potential)

    @cached_property
    def initial(self) -> WaveField:
        return sample_initial(self.mesh, self.config.initial)

    def boundary(self, side: Side) -> float:
        return self.config.domain.x_plus if side is Side.RIGHT else self.config.domain.x_minus

    # m-functions and fits

    def mfunc(self) -> Dict[Side, List[ContourSample]]:
        abc = self.config.abc
        f_grid = contour_frequencies(abc.f_cutoff, abc.contour_points)
        return {
            side: m_contour(
                self.config.potential, self.boundary(side), side, abc.sigma, f_grid, abc.riccati(), self.threads
            )
            for side in (Side.LEFT, Side.RIGHT)
        }

    def diagnostics(self, samples: Dict[Side, List[ContourSample]], symmetry: bool = False) -> Dict[Side, MDiagnosticsReport]:
        cfg = self.config.abc.riccati()
        out = {}
        for side, s in samples.items():
            evaluator = m_evaluator(self.config.potential, self.boundary(side), side, cfg) if symmetry else None
            out[side] = m_diagnostics(s, evaluator)
        return out

    def fit(self, samples: Optional[Dict[Side, List[ContourSample]]] = None) -> Dict[Side, RationalDtN]:
        abc = self.config.abc
        samples = samples or self.mfunc()
        fits = {}
        for side, s in samples.items():
            pts = fit_points(s, abc.weight, abc.sigma, abc.f_cutoff)
            fits[side] = auto_degree(
                pts,
                abc.eps0,
                abc.d_max,
                real_coefficients=abc.real_coefficients,
                max_iter=abc.max_iter,
                polish=abc.polish,
            )
            logger.info(
                "%s boundary: %d pole(s), eps=%.3e (eps0=%.1e)",
                side.value, fits[side].degree, fits[side].fit_error, abc.eps0,
            )
        return fits

    def herglotz(self, r: RationalDtN) -> float:
        abc = self.config.abc
        lam = -contour_frequencies(abc.f_cutoff, abc.contour_points) + 1j * abc.sigma
        return herglotz_min_im(r, lam)

    # comparison fields

    def error_mode(self) -> ErrorReference:
        mode = self.config.time.error_reference
        if mode is not ErrorReference.AUTO:
            return mode
        init = self.config.initial
        standard_beam = init.center == 0.0 and init.wavenumber == 4.0 and init.width == 1.0
        if isinstance(self.config.potential, FreePotential) and standard_beam:
            return ErrorReference.EXACT
        return ErrorReference.REFERENCE

    def reference(self, times: Sequence[float]) -> ReferenceResult:
        c = self.config
        return reference_solution(c.potential, self.mesh, c.reference, c.time, c.initial, times)

    def error_times(self) -> List[float]:
        t = self.config.time
        n_steps = int(round(t.T / t.dt))
        steps = set(range(t.error_stride, n_steps + 1, t.error_stride))
        steps.update(int(round(s / t.dt)) for s in t.snapshot_times)
        return [k * t.dt for k in sorted(steps)]

    def comparison(self, times: Sequence[float]) -> Tuple[Optional[Callable[[float], Optional[WaveField]]], bool]:
        """Reference lookup for the given times and whether it is trusted."""
        mode = self.error_mode()
        if mode is ErrorReference.NONE:
            return None, True
        if mode is ErrorReference.EXACT:
            return (lambda t: exact_free_field(self.mesh, t)), True
        ref = self.reference(times)
        return ref.snapshots.get, ref.trusted

    # solvers

    def solve_freq(self, use_rational: bool = False) -> Tuple[FreqRunResult, Optional[ErrorSeries], List[str]]:
        c = self.config
        flags: List[str] = []
        if use_rational:
            fits = self.fit()
            provider = rational_m_provider(fits[Side.LEFT], fits[Side.RIGHT])
        else:
            provider = exact_m_provider(c.potential, c.domain.x_minus, c.domain.x_plus, c.abc.riccati(), self.threads)

        run = run_frequency_method(c.freq, c.time.T, self.operators, self.initial, provider, self.threads)
        if run.failures:
            flags.append("frequency_failures")

        lookup, trusted = self.comparison(sorted(run.snapshots))
        series = None
        if lookup is not None:
            refs = {t: lookup(t) for t in run.snapshots}
            series = error_series(run.snapshots, {t: r for t, r in refs.items() if r is not None}, self.mesh)
        if not trusted:
            flags.append("reference_untrusted")
        return run, series, flags

    def solve_time(self, fits: Optional[Dict[Side, RationalDtN]] = None) -> Tuple[TimeRunResult, Dict[Side, RationalDtN], List[str]]:
        c = self.config
        fits = fits or self.fit()
        flags: List[str] = []
        for r in fits.values():
            if not r.converged:
                flags.append(f"fit_not_converged_{r.side.value}")

        times = self.error_times()
        lookup, trusted = self.comparison(times)
        if not trusted:
            flags.append("reference_untrusted")

        run = run_time_method(
            c.time,
            self.operators,
            self.initial,
            fits[Side.LEFT],
            fits[Side.RIGHT],
            reference=lookup,
            error_times=times,
        )
        if run.norm_growth:
            flags.append("norm_growth")
        return run, fits, flags

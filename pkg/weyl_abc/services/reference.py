"""Comparison fields: the closed-form free particle, a large-domain Dirichlet run, error metrics."""

from dataclasses import dataclass, field
import logging
from typing import Dict, List, Sequence

import numpy as np

from weyl_abc.errors import DomainError
from weyl_abc.models import ErrorSeries, ReferenceConfig, TimeConfig
from weyl_abc.services.core import WaveField
from weyl_abc.services.fem import Mesh, assemble_operators, build_mesh, interpolate, l2_norm, sample_initial
from weyl_abc.services.time_solver import run_time_method

logger = logging.getLogger(__name__)


def exact_free(x, t: float):
    """Free evolution of the beam e^{-x^2 + 4ix}."""
    if t < 0:
        raise DomainError("exact_free needs t >= 0", {"t": t})
    x = np.asarray(x, dtype=float)
    den = -4.0 * t + 1j
    out = np.sqrt(1j / den) * np.exp((-1j * x**2 - 4.0 * x + 16.0 * t) / den)
    return complex(out) if out.ndim == 0 else out


def exact_free_field(mesh: Mesh, t: float) -> WaveField:
    return WaveField(float(t), exact_free(mesh.nodes, t))


def relative_l2_error(u: WaveField, u_ref: WaveField, mesh: Mesh) -> float:
    """||u - u_ref|| / ||u_ref|| on the mesh, element-wise Gauss quadrature."""
    if len(u) != mesh.n_nodes or len(u_ref) != mesh.n_nodes:
        raise DomainError("Fields must live on the given mesh")
    ref_norm = l2_norm(mesh, u_ref.values)
    if ref_norm == 0:
        raise DomainError("Reference field has zero norm")
    return l2_norm(mesh, u.values - u_ref.values) / ref_norm


@dataclass
class ReferenceResult:
    snapshots: Dict[float, WaveField]
    mesh: Mesh
    trusted: bool = True
    containment: Dict[float, float] = field(default_factory=dict)
    norms: np.ndarray = None


def reference_solution(
    potential,
    interior: Mesh,
    ref_cfg: ReferenceConfig,
    time_cfg: TimeConfig,
    initial,
    times: Sequence[float],
) -> ReferenceResult:
    """Crank-Nicolson on [-L, L] with homogeneous Dirichlet ends, sampled on the interior mesh.

    The large mesh is `refinement` times finer than the interior one. The run
    is flagged untrusted when |u(+-0.9 L)| reaches containment_tol at any
    requested time.
    """
    L = ref_cfg.half_width
    if 0.9 * L <= max(abs(interior.x_minus), abs(interior.x_plus)):
        raise DomainError("Reference half-width must exceed the interior domain", {"L": L})

    h_int = (interior.x_plus - interior.x_minus) / interior.n_elements
    n_elem = int(np.ceil(2.0 * L / h_int)) * ref_cfg.refinement
    big = build_mesh(-L, L, n_elem, interior.order)
    ops = assemble_operators(big, potential)
    u0 = sample_initial(big, initial)

    times = sorted({float(t) for t in times})
    if times and (times[0] <= 0 or times[-1] > time_cfg.T):
        raise DomainError("Reference times must lie in (0, T]", {"T": time_cfg.T, "times": times})
    cfg = time_cfg.model_copy(update={"snapshot_times": times})
    logger.info("Reference run on [-%g, %g] with %d elements", L, L, n_elem)
    run = run_time_method(cfg, ops, u0, dirichlet=True)

    result = ReferenceResult(snapshots={}, mesh=big, norms=run.norms)
    for t in times:
        fld = run.snapshots[t]
        edge = np.abs(interpolate(big, fld.values, [-0.9 * L, 0.9 * L]))
        result.containment[t] = float(np.max(edge))
        if result.containment[t] >= ref_cfg.containment_tol:
            result.trusted = False
        result.snapshots[t] = WaveField(t, interpolate(big, fld.values, interior.nodes))

    if not result.trusted:
        logger.warning(
            "Reference solution not contained: max |u(+-0.9L)| = %.2e", max(result.containment.values())
        )
    return result


def error_series(snapshots: Dict[float, WaveField], references: Dict[float, WaveField], mesh: Mesh) -> ErrorSeries:
    times = sorted(t for t in snapshots if t in references)
    return ErrorSeries(
        times=times,
        rel_l2=[relative_l2_error(snapshots[t], references[t], mesh) for t in times],
    )


def table_text(series: ErrorSeries) -> str:
    """Two-row text table: time points and relative L2 errors."""
    head = ["t".ljust(12)] + [f"{t:>10.4g}" for t in series.times]
    body = ["rel. L2 err".ljust(12)] + [f"{e:>10.2e}" for e in series.rel_l2]
    return " ".join(head) + "\n" + " ".join(body) + "\n"

import pytest

from weyl_abc.cli import config_from_documents
from weyl_abc.config import get_settings
from weyl_abc.models import ErrorReference, Side
from weyl_abc.services.experiments import ExperimentService

SMALL = {
    "mesh": {"order": 3, "elements": 32},
    "time": {"dt": 1e-2, "T": 0.35, "snapshot_times": [0.25], "error_stride": 10},
    "freq": {"f_cutoff": 32.0, "n_quad": 129, "output_times": [0.25]},
    "abc": {"contour_points": 17, "f_cutoff": 32.0},
}


def _service(preset=None, **override):
    return ExperimentService(config_from_documents(preset, {**SMALL, **override}))


def test_error_mode_auto():
    assert _service().error_mode() is ErrorReference.EXACT
    assert _service(initial={"center": 1.0}).error_mode() is ErrorReference.REFERENCE
    assert _service("coulomb_like_desk").error_mode() is ErrorReference.REFERENCE
    explicit = _service(time={**SMALL["time"], "error_reference": "none"})
    assert explicit.error_mode() is ErrorReference.NONE
    assert explicit.comparison([0.1]) == (None, True)


def test_error_times_merge_stride_and_snapshots():
    # stride steps 10, 20, 30 and the snapshot step 25, each once
    assert _service().error_times() == pytest.approx([0.1, 0.2, 0.25, 0.3])


def test_threads_default_from_settings(monkeypatch):
    monkeypatch.setenv("WEYL_ABC_THREADS", "3")
    get_settings.cache_clear()
    assert _service().threads == 3
    assert ExperimentService(config_from_documents(None, SMALL), threads=2).threads == 2


def test_boundaries_follow_the_domain():
    service = _service(domain={"x_minus": -4.0, "x_plus": 6.0})
    assert service.boundary(Side.LEFT) == -4.0
    assert service.boundary(Side.RIGHT) == 6.0
    assert service.mesh.nodes[0] == -4.0 and service.mesh.nodes[-1] == 6.0


def test_solve_time_free_particle():
    run, fits, flags = _service().solve_time()
    assert {r.degree for r in fits.values()} == {0}
    assert flags == []
    assert run.error_times == pytest.approx([0.1, 0.2, 0.25, 0.3])
    assert 0.25 in run.snapshots


@pytest.mark.slow
def test_free_particle_desk_time_method():
    service = ExperimentService(config_from_documents("free_particle_desk"))
    run, _, flags = service.solve_time()
    assert "norm_growth" not in flags
    assert max(run.errors) <= 5e-4


@pytest.mark.slow
def test_free_particle_desk_frequency_method():
    service = ExperimentService(config_from_documents("free_particle_desk", {"freq": {"output_times": [0.5, 0.7, 0.9]}}))
    run, series, flags = service.solve_freq()
    assert flags == []
    assert series.times == [0.5, 0.7, 0.9]
    assert series.max_error <= 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("preset,bound", [("coulomb_like_desk", 1e-4), ("gaussian_barrier_desk", 1e-3)])
def test_desk_presets_against_reference(preset, bound):
    service = ExperimentService(config_from_documents(preset))
    run, fits, flags = service.solve_time()
    assert "reference_untrusted" not in flags
    assert all(r.fit_error <= r.tolerance for r in fits.values())
    assert max(run.errors) <= bound


@pytest.mark.slow
def test_gaussian_barrier_fit_reaches_tolerance():
    # the pole count is soft; the certified error is the hard requirement
    fits = ExperimentService(config_from_documents("gaussian_barrier_desk")).fit()
    right = fits[Side.RIGHT]
    assert right.converged
    assert right.fit_error <= right.tolerance == 1e-4

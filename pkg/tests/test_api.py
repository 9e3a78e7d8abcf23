from fastapi.testclient import TestClient
import pytest

from weyl_abc.main import app
from weyl_abc.models import ErrorSeries
from weyl_abc.services.experiments import ExperimentService

SMALL = {
    "mesh": {"order": 3, "elements": 32},
    "time": {"dt": 1e-2, "T": 0.3, "snapshot_times": [0.2, 0.3]},
    "freq": {"f_cutoff": 32.0, "n_quad": 129, "output_times": [0.2]},
    "abc": {"contour_points": 17, "f_cutoff": 32.0},
}


@pytest.fixture
def client():
    return TestClient(app)


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_presets(client):
    names = client.get("/api/presets").json()["presets"]
    assert "free_particle" in names and names == sorted(names)
    detail = client.get("/api/presets/coulomb_like_desk").json()
    assert detail["potential"] == {"type": "coulomb_like"}
    assert client.get("/api/presets/unknown").status_code == 404


def test_fit_free_particle(client):
    response = client.post("/api/fit", json=SMALL)
    assert response.status_code == 200
    body = response.json()
    assert set(body) == {"left", "right"}
    assert body["right"]["degree"] == 0
    assert body["right"]["poles"] == []
    assert body["left"]["herglotz_min_im"] > 0


def test_mfunc_samples(client):
    body = client.post("/api/mfunc", json=SMALL).json()
    right = body["right"]
    assert len(right["samples"]) == 17
    assert set(right["samples"][0]) == {"f", "side", "lambda", "m"}
    assert right["diagnostics"]["herglotzViolations"] == 0


def test_solve_freq_reports_errors(client):
    body = client.post("/api/solve/freq", json=SMALL).json()
    assert body["sigma"] == 1.0
    assert body["failures"] == []
    assert body["errors"]["times"] == [0.2]
    assert body["summary"]["subcommand"] == "solve-freq"


def test_invalid_body_is_reported(client):
    response = client.post("/api/fit", json={"mesh": {"elements": -3}})
    assert response.status_code == 422
    payload = response.json()
    assert "error" in payload
    assert payload["details"]["key"] == "mesh.elements"


def test_unknown_preset_is_reported(client):
    response = client.post("/api/fit", params={"preset": "nope"})
    assert response.status_code == 404
    assert "nope" in response.json()["detail"]


def test_value_errors_inside_a_run_are_reported(client, monkeypatch):
    def mismatched(self):
        return ErrorSeries(times=[0.1], rel_l2=[])

    monkeypatch.setattr(ExperimentService, "fit", mismatched)
    response = client.post("/api/fit", json=SMALL)
    assert response.status_code == 422
    assert response.json()["details"]["kind"] == "config"

import json

import numpy as np
import pytest

from weyl_abc.errors import ConfigError
from weyl_abc.services.core import WaveField
from weyl_abc.services.fem import build_mesh
from weyl_abc.services.io import (
    list_snapshots,
    read_csv,
    read_snapshot,
    snapshot_name,
    write_csv,
    write_error_series,
    write_json,
    write_snapshot,
)


def test_csv_header_and_values(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "y"], np.array([[0.1, 1.0 / 3.0], [2.0, -1e-300]]), {"sigma": 1.0, "side": "right", "d": 3})
    text = path.read_text()
    assert text.startswith("# d=3\n# side=right\n# sigma=1\n# x,y\n")
    assert "\r" not in text

    meta, columns, data = read_csv(path)
    assert meta == {"d": 3, "side": "right", "sigma": 1}
    assert columns == ["x", "y"]
    assert data[0, 1] == 1.0 / 3.0
    assert data[1, 1] == -1e-300


def test_single_row_csv_stays_two_dimensional(tmp_path):
    write_csv(tmp_path / "one.csv", ["a", "b", "c"], [1.0, 2.0, 3.0])
    _, _, data = read_csv(tmp_path / "one.csv")
    assert data.shape == (1, 3)


@pytest.mark.parametrize("t,name", [(0.5, "u_t0.5.csv"), (1.0, "u_t1.csv"), (0.125, "u_t0.125.csv")])
def test_snapshot_name(t, name):
    assert snapshot_name(t) == name


def test_snapshot_roundtrip(tmp_path, rng):
    mesh = build_mesh(-5.0, 5.0, 8, 3)
    fld = WaveField(0.7, rng.standard_normal(mesh.n_nodes) + 1j * rng.standard_normal(mesh.n_nodes))
    path = write_snapshot(tmp_path, mesh, fld, {"method": "time"})
    assert path.name == "u_t0.7.csv"

    meta, back_mesh, back = read_snapshot(path)
    assert meta["method"] == "time"
    assert back.time == 0.7
    np.testing.assert_array_equal(back_mesh.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.values, fld.values)
    assert list_snapshots(tmp_path) == [path]


def test_read_snapshot_needs_mesh_header(tmp_path):
    write_csv(tmp_path / "u_t0.5.csv", ["x", "re_u", "im_u"], np.zeros((3, 3)), {"t": 0.5})
    with pytest.raises(ConfigError):
        read_snapshot(tmp_path / "u_t0.5.csv")


def test_read_snapshot_checks_row_count(tmp_path):
    meta = {"t": 0.5, "x_minus": -1.0, "x_plus": 1.0, "elements": 2, "order": 2}
    write_csv(tmp_path / "u_t0.5.csv", ["x", "re_u", "im_u"], np.zeros((4, 3)), meta)
    with pytest.raises(ConfigError):
        read_snapshot(tmp_path / "u_t0.5.csv")


def test_write_json_sorts_keys(tmp_path):
    path = write_json(tmp_path / "out" / "p.json", {"b": 1, "a": {"d": 2, "c": 3}})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert text.index('"c"') < text.index('"d"')
    assert text.endswith("}\n")
    assert json.loads(text) == {"a": {"c": 3, "d": 2}, "b": 1}


def test_write_error_series(tmp_path):
    path = write_error_series(tmp_path, [0.5, 0.6], [1e-4, 2e-4])
    meta, columns, data = read_csv(path)
    assert path.name == "errors.csv"
    assert columns == ["t", "rel_l2_error"]
    np.testing.assert_array_equal(data, [[0.5, 1e-4], [0.6, 2e-4]])

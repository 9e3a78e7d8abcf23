"""Result files: fixed-format CSV with `# key=value` headers, and sorted-key JSON."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from weyl_abc.errors import ConfigError
from weyl_abc.services.core import WaveField
from weyl_abc.services.fem import Mesh, build_mesh

logger = logging.getLogger(__name__)

FMT = "%.17g"


def _header(meta: Dict[str, Any], columns: Sequence[str]) -> str:
    lines = [f"{k}={_fmt_value(v)}" for k, v in sorted(meta.items())]
    lines.append(",".join(columns))
    return "\n".join(lines)


def _fmt_value(v: Any) -> str:
    if isinstance(v, float):
        return FMT % v
    return str(v)


def _parse_value(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_csv(path: Path, columns: Sequence[str], data: np.ndarray, meta: Dict[str, Any] = None) -> Path:
    """Columns of real numbers, 17 significant digits, '\\n' line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(data, dtype=float).reshape(-1, len(columns))
    np.savetxt(
        path,
        data,
        fmt=FMT,
        delimiter=",",
        newline="\n",
        header=_header(meta or {}, columns),
        comments="# ",
    )
    return path


def read_csv(path: Path) -> Tuple[Dict[str, Any], List[str], np.ndarray]:
    path = Path(path)
    meta: Dict[str, Any] = {}
    columns: List[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key] = _parse_value(value)
            else:
                columns = body.split(",")
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return meta, columns, data


def mesh_meta(mesh: Mesh) -> Dict[str, Any]:
    return {
        "x_minus": mesh.x_minus,
        "x_plus": mesh.x_plus,
        "elements": mesh.n_elements,
        "order": mesh.order,
    }


def snapshot_name(t: float) -> str:
    return f"u_t{t:.6f}".rstrip("0").rstrip(".") + ".csv"


def write_snapshot(directory: Path, mesh: Mesh, fld: WaveField, meta: Dict[str, Any] = None) -> Path:
    data = np.column_stack([mesh.nodes, fld.values.real, fld.values.imag])
    header = {"t": float(fld.time), **mesh_meta(mesh), **(meta or {})}
    return write_csv(Path(directory) / snapshot_name(fld.time), ["x", "re_u", "im_u"], data, header)


def read_snapshot(path: Path) -> Tuple[Dict[str, Any], Mesh, WaveField]:
    """Snapshot file -> (metadata, rebuilt mesh, field)."""
    meta, _, data = read_csv(path)
    try:
        mesh = build_mesh(float(meta["x_minus"]), float(meta["x_plus"]), int(meta["elements"]), int(meta["order"]))
        t = float(meta["t"])
    except KeyError as e:
        raise ConfigError(f"Snapshot {path} lacks header key {e}", {"path": str(path)}) from e
    if data.shape[0] != mesh.n_nodes:
        raise ConfigError("Snapshot row count does not match its mesh header", {"path": str(path)})
    return meta, mesh, WaveField(t, data[:, 1] + 1j * data[:, 2])


def list_snapshots(directory: Path) -> List[Path]:
    return sorted(Path(directory).glob("u_t*.csv"))


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n")
    return path


def write_error_series(directory: Path, times: Iterable[float], errors: Iterable[float]) -> Path:
    data = np.column_stack([np.asarray(list(times), float), np.asarray(list(errors), float)])
    return write_csv(Path(directory) / "errors.csv", ["t", "rel_l2_error"], data)

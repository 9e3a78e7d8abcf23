"""Named run configurations for the three standard experiments.

`*_paper` variants run at full resolution (8th-order elements, 1024
elements, dt = 1e-4); `*_desk` variants are sized to finish in minutes.
"""

import copy
from typing import Any, Dict, List

from weyl_abc.errors import ConfigError

_SNAPSHOTS = [0.5, 0.6, 0.7, 0.8, 0.9]

_FULL_MESH = {"order": 8, "elements": 1024}
_DESK_MESH = {"order": 4, "elements": 256}

# reference meshes match the interior element size so the comparison isolates
# the boundary error
_REFERENCE = {"half_width": 50.0, "refinement": 1}

PRESETS: Dict[str, Dict[str, Any]] = {
    "free_particle": {
        "potential": {"type": "free"},
        "mesh": _FULL_MESH,
        "time": {"dt": 1e-4, "T": 1.0, "snapshot_times": _SNAPSHOTS},
        "freq": {"sigma": 1.0, "f_cutoff": 256.0, "n_quad": 8097, "output_times": _SNAPSHOTS},
        "abc": {"eps0": 1e-8, "sigma": 1.0, "f_cutoff": 256.0},
    },
    "free_particle_desk": {
        "potential": {"type": "free"},
        "mesh": _DESK_MESH,
        "time": {"dt": 1e-3, "T": 1.0, "snapshot_times": _SNAPSHOTS, "error_stride": 10},
        "freq": {"sigma": 1.0, "f_cutoff": 128.0, "n_quad": 2049, "output_times": _SNAPSHOTS},
        "abc": {"eps0": 1e-8, "sigma": 1.0, "f_cutoff": 128.0},
    },
    "coulomb_like_paper": {
        "potential": {"type": "coulomb_like"},
        "mesh": _FULL_MESH,
        "time": {"dt": 1e-4, "T": 1.0, "snapshot_times": _SNAPSHOTS},
        "freq": {"sigma": 1.0, "f_cutoff": 256.0, "n_quad": 8097, "output_times": _SNAPSHOTS},
        "abc": {"eps0": 1e-8, "sigma": 1.0, "f_cutoff": 256.0, "contour_points": 513},
        "reference": _REFERENCE,
    },
    "coulomb_like_desk": {
        "potential": {"type": "coulomb_like"},
        "mesh": _DESK_MESH,
        "time": {"dt": 1e-3, "T": 1.0, "snapshot_times": _SNAPSHOTS, "error_stride": 10},
        "freq": {"sigma": 1.0, "f_cutoff": 128.0, "n_quad": 2049, "output_times": _SNAPSHOTS},
        "abc": {"eps0": 1e-8, "sigma": 1.0, "f_cutoff": 256.0, "contour_points": 513},
        "reference": _REFERENCE,
    },
    "gaussian_barrier_paper": {
        "potential": {"type": "gaussian_barrier", "height": 30.0, "width_coeff": 36.0, "center": 8.0},
        "mesh": _FULL_MESH,
        "time": {"dt": 1e-4, "T": 1.0, "snapshot_times": _SNAPSHOTS},
        "freq": {"sigma": 1.0, "f_cutoff": 256.0, "n_quad": 8097, "output_times": _SNAPSHOTS},
        "abc": {"eps0": 1e-4, "sigma": 1.0, "f_cutoff": 256.0, "contour_points": 513},
        "reference": _REFERENCE,
    },
    "gaussian_barrier_desk": {
        "potential": {"type": "gaussian_barrier", "height": 30.0, "width_coeff": 36.0, "center": 8.0},
        "mesh": _DESK_MESH,
        "time": {"dt": 1e-3, "T": 1.0, "snapshot_times": _SNAPSHOTS, "error_stride": 10},
        "freq": {"sigma": 1.0, "f_cutoff": 128.0, "n_quad": 2049, "output_times": _SNAPSHOTS},
        "abc": {"eps0": 1e-4, "sigma": 1.0, "f_cutoff": 256.0, "contour_points": 513},
        "reference": _REFERENCE,
    },
}


def list_presets() -> List[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> Dict[str, Any]:
    """A deep copy of the raw preset document."""
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}'", {"preset": name, "available": list_presets()})
    return copy.deepcopy(PRESETS[name])

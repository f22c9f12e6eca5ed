"""
Named scenes and the scene JSON format.

The presets are stand-ins for the urban receiver grids of a street-level
measurement campaign: a LOS street canyon (990 users), an NLOS grid behind a
blocking structure (540 users) and a small LOS patch for the channel-response
approach (185 users). Each comes at 28 GHz / 500 MHz; the grids also have
5 GHz / 100 MHz twins.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Union

from .errors import ConfigError, DataIOError
from .scene import GridSpec, Point2D, Scene, validate_scene

# ==============================================================================
# GEOMETRY
# ==============================================================================

BS_POSITION = (0.0, 0.0)

# Street canyon: two long blocks facing each other across a 24 m street
CANYON_SOUTH = [(-20.0, -32.0), (100.0, -32.0), (100.0, -12.0), (-20.0, -12.0)]
CANYON_NORTH = [(-20.0, 12.0), (100.0, 12.0), (100.0, 32.0), (-20.0, 32.0)]

# Wider plaza with a thin kiosk right in front of the BS
PLAZA_SOUTH = [(-20.0, -40.0), (100.0, -40.0), (100.0, -20.0), (-20.0, -20.0)]
PLAZA_NORTH = [(-20.0, 20.0), (100.0, 20.0), (100.0, 40.0), (-20.0, 40.0)]
PLAZA_BLOCKER = [(10.0, -3.0), (11.0, -3.0), (11.0, 3.0), (10.0, 3.0)]

BANDS = {
    "28ghz": (28e9, 500e6),
    "5ghz": (5e9, 100e6),
}


def _preset(name: str, obstacles: List, origin, rows: int, cols: int, band: str) -> Dict[str, Any]:
    freq, bw = BANDS[band]
    return {
        "name": name,
        "base_stations": [list(BS_POSITION)],
        "obstacles": [[list(v) for v in poly] for poly in obstacles],
        "ue_grid": {"origin": list(origin), "rows": rows, "cols": cols, "spacing": 1.0},
        "carrier_frequency_hz": freq,
        "bandwidth_hz": bw,
        "tx_power_dbm": 0.0,
        "max_reflection_order": 2,
        "reflection_loss_db": 6.0,
    }


PRESETS: Dict[str, Dict[str, Any]] = {
    "los-grid": _preset("los-grid", [CANYON_SOUTH, CANYON_NORTH], (20.0, -10.5), 22, 45, "28ghz"),
    "los-grid-5ghz": _preset("los-grid-5ghz", [CANYON_SOUTH, CANYON_NORTH], (20.0, -10.5), 22, 45, "5ghz"),
    "nlos-grid": _preset("nlos-grid", [PLAZA_SOUTH, PLAZA_NORTH, PLAZA_BLOCKER], (40.0, -8.5), 18, 30, "28ghz"),
    "nlos-grid-5ghz": _preset("nlos-grid-5ghz", [PLAZA_SOUTH, PLAZA_NORTH, PLAZA_BLOCKER], (40.0, -8.5), 18, 30, "5ghz"),
    "response-grid": _preset("response-grid", [CANYON_SOUTH, CANYON_NORTH], (20.0, -2.0), 5, 37, "28ghz"),
}


# ==============================================================================
# JSON <-> SCENE
# ==============================================================================

REQUIRED_KEYS = ("base_stations", "obstacles", "ue_grid", "carrier_frequency_hz", "bandwidth_hz")


def scene_from_dict(data: Dict[str, Any]) -> Scene:
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise ConfigError(f"scene is missing keys: {', '.join(missing)}")
    try:
        grid = data["ue_grid"]
        scene = Scene(
            base_stations=tuple(Point2D(float(p[0]), float(p[1])) for p in data["base_stations"]),
            obstacles=tuple(tuple(Point2D(float(v[0]), float(v[1])) for v in poly)
                            for poly in data["obstacles"]),
            ue_grid=GridSpec(
                origin=Point2D(float(grid["origin"][0]), float(grid["origin"][1])),
                rows=int(grid["rows"]),
                cols=int(grid["cols"]),
                spacing=float(grid["spacing"]),
            ),
            carrier_frequency_hz=float(data["carrier_frequency_hz"]),
            bandwidth_hz=float(data["bandwidth_hz"]),
            tx_power_dbm=float(data.get("tx_power_dbm", 0.0)),
            max_reflection_order=int(data.get("max_reflection_order", 2)),
            reflection_loss_db=float(data.get("reflection_loss_db", 6.0)),
            name=str(data.get("name", "")),
        )
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed scene: {e}")
    return validate_scene(scene)


def scene_to_dict(scene: Scene) -> Dict[str, Any]:
    g = scene.ue_grid
    return {
        "name": scene.name,
        "base_stations": [[p.x, p.y] for p in scene.base_stations],
        "obstacles": [[[v.x, v.y] for v in poly] for poly in scene.obstacles],
        "ue_grid": {"origin": [g.origin.x, g.origin.y], "rows": g.rows, "cols": g.cols,
                    "spacing": g.spacing},
        "carrier_frequency_hz": scene.carrier_frequency_hz,
        "bandwidth_hz": scene.bandwidth_hz,
        "tx_power_dbm": scene.tx_power_dbm,
        "max_reflection_order": scene.max_reflection_order,
        "reflection_loss_db": scene.reflection_loss_db,
    }


def scene_json(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2, sort_keys=True) + "\n"


def load_scene(name_or_path: Union[str, Path]) -> Scene:
    """Preset name or path to a scene JSON file."""
    key = str(name_or_path)
    if key in PRESETS:
        return scene_from_dict(PRESETS[key])
    path = Path(name_or_path)
    if not path.is_file():
        raise ConfigError(f"unknown preset or missing scene file: {key} "
                          f"(presets: {', '.join(sorted(PRESETS))})")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"scene file {path} is not valid JSON: {e}")
    except OSError as e:
        raise DataIOError(f"cannot read scene file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"scene file {path} must hold a JSON object")
    return scene_from_dict(data)

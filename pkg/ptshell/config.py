"""config module."""

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from ptshell.bie import MaterialParams
from ptshell.exceptions import PtshellIOError, PtshellValueError
from ptshell.sphharm import RadialSurface, SphericalGrid, build_grid

MIN_N_THETA = 4
MAX_N_THETA = 48

DEFAULTS: Dict[str, Any] = {
    "sigma": [1.0, 2.0, 1.4],
    "r_i": 1.0,
    "r_e": 1.0,
    "n_theta": 24,
    "polar_factor": 2,
    "near_field": "polar",
    "tol": 1e-8,
    "max_iter": 30,
    "continuation_steps": 0,
    "fd_step": 1e-4,
    "swap_roles": False,
    "out": "ptshell-out",
    "core": None,
    "shell": None,
    "shell_coeffs": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    "pt": {"r_e": None},
    "budget": {"kernel": 0.2, "admission": 0.05},
    "far_field": {"radii": [5.0, 50.0, 10]},
    "sweep": {"epsilons": [0.002, 0.005, 0.01, 0.015, 0.02], "shape": None},
    "verify": {"lambda_shift": 0.0, "seed": 0, "include_solves": True},
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``; sections merge key by key."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class RunConfig:
    """Effective run configuration: defaults, then a JSON file, then command-line overrides.

    Keys are addressed with dotted paths, e.g. ``budget.kernel``. Sections given in the
    file only replace the keys they name.
    """

    def __init__(self, data: Optional[Dict[str, Any]] = None) -> None:
        """Initialize the instance.

        Args:
            data (Optional[Dict[str, Any]], optional): Values overriding DEFAULTS.

        Raises:
            PtshellValueError: if the merged configuration is invalid.
        """
        self._data = _merge(DEFAULTS, data or {})
        self.validate()

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "RunConfig":
        """Read a JSON config file; None gives the defaults.

        Args:
            path (Optional[Path], optional): File to load.

        Raises:
            PtshellValueError: if parsing the file fails or it is not a JSON object.
            PtshellIOError: if unable to open the file.

        Returns:
            RunConfig: the configuration.
        """
        if path is None:
            return cls()
        try:
            with path.open(encoding="utf8") as f:
                try:
                    data = json.load(f)
                except json.JSONDecodeError as e:
                    raise PtshellValueError(f"Invalid JSON in config file {path}: {e}") from None
        except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
            raise PtshellIOError(e) from None
        if not isinstance(data, dict):
            raise PtshellValueError(f"Config file {path} must contain a JSON object")
        return cls(data)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with top-level keys replaced; None values are ignored."""
        data = copy.deepcopy(self._data)
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return RunConfig(data)

    @property
    def data(self) -> Dict[str, Any]:
        return copy.deepcopy(self._data)

    def _get(self, key: str) -> Tuple[Any, bool]:
        """Look up a dotted key.

        Args:
            key (str): key to find.

        Returns:
            Tuple[Any, bool]: key value, key found.
        """
        node: Any = self._data
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return None, False
            node = node[part]
        return node, True

    def _require(self, key: str) -> Any:
        val, ok = self._get(key)
        if not ok:
            raise PtshellValueError(f"Config key {key} is missing")
        return val

    def get(self, key: str) -> Any:
        """Raw value of key, None if unset."""
        val, _ = self._get(key)
        return copy.deepcopy(val)

    def get_float(self, key: str) -> float:
        """Get float value of key.

        Raises:
            PtshellValueError: if the value is missing or not a number.
        """
        val = self._require(key)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise PtshellValueError(f'Config value {key} has non-float value: "{val}"')
        return float(val)

    def get_int(self, key: str) -> int:
        """Get int value of key.

        Raises:
            PtshellValueError: if the value is missing or not an integer.
        """
        val = self._require(key)
        if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val:
            raise PtshellValueError(f'Config value {key} has non-integer value: "{val}"')
        return int(val)

    def get_bool(self, key: str) -> bool:
        """Get bool value of key.

        Raises:
            PtshellValueError: if the value is missing or not boolean.
        """
        val = self._require(key)
        if not isinstance(val, bool):
            raise PtshellValueError(f'Config value {key} has non-boolean value: "{val}"')
        return val

    def get_str(self, key: str) -> str:
        val = self._require(key)
        if not isinstance(val, str):
            raise PtshellValueError(f'Config value {key} has non-string value: "{val}"')
        return val

    def get_float_list(self, key: str, length: Optional[int] = None) -> List[float]:
        """Get a list of floats, optionally of a fixed length.

        Raises:
            PtshellValueError: if the value is missing, not a list of numbers, or of the
                wrong length.
        """
        val = self._require(key)
        if not isinstance(val, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in val
        ):
            raise PtshellValueError(f'Config value {key} is not a list of numbers: "{val}"')
        if length is not None and len(val) != length:
            raise PtshellValueError(f"Config value {key} needs {length} entries, got {len(val)}")
        return [float(v) for v in val]

    def get_section(self, key: str) -> Dict[str, Any]:
        val = self._require(key)
        if not isinstance(val, dict):
            raise PtshellValueError(f'Config value {key} is not a section: "{val}"')
        return copy.deepcopy(val)

    def validate(self) -> None:
        """Check physical parameters and grid size.

        Raises:
            PtshellValueError: naming the first offending key.
        """
        for value in self.get_float_list("sigma", 3):
            if not value > 0:
                raise PtshellValueError(f"Config value sigma must be positive, got {value}")
        for key in ("r_i", "r_e", "tol", "fd_step", "budget.kernel", "budget.admission"):
            if not self.get_float(key) > 0:
                raise PtshellValueError(f"Config value {key} must be positive")
        n_theta = self.get_int("n_theta")
        if not MIN_N_THETA <= n_theta <= MAX_N_THETA:
            raise PtshellValueError(
                f"Config value n_theta must be in {MIN_N_THETA}..{MAX_N_THETA}, got {n_theta}"
            )
        if self.get_int("polar_factor") < 1:
            raise PtshellValueError("Config value polar_factor must be >= 1")
        if self.get_int("max_iter") < 0 or self.get_int("continuation_steps") < 0:
            raise PtshellValueError("Config values max_iter and continuation_steps must be >= 0")
        if self.get_str("near_field") not in ("polar", "plain"):
            raise PtshellValueError('Config value near_field must be "polar" or "plain"')
        self.get_bool("swap_roles")
        self.get_str("out")
        self.get_float_list("shell_coeffs", 6)
        radii = self.get_float_list("far_field.radii", 3)
        if not (0 < radii[0] < radii[1] and radii[2] >= 2):
            raise PtshellValueError(f"Config value far_field.radii is invalid: {radii}")
        self.get_float_list("sweep.epsilons")

    def material(self) -> MaterialParams:
        sigma = self.get_float_list("sigma", 3)
        return MaterialParams(sigma[0], sigma[1], sigma[2])

    def grid(self) -> SphericalGrid:
        return build_grid(self.get_int("n_theta"))

    def surface(self, key: str, base_radius: float) -> RadialSurface:
        """Surface from a config entry on the given base radius.

        The entry is null (sphere), a surface document ``{"coeffs": [...]}`` or
        ``{"random": {"max_degree": .., "amplitude": .., "seed": ..}}`` with the amplitude
        relative to the base radius.

        Raises:
            PtshellValueError: if the entry is malformed.
        """
        doc = self.get(key)
        if doc is None:
            return RadialSurface.sphere(base_radius)
        if not isinstance(doc, dict):
            raise PtshellValueError(f"Config value {key} must be null or an object")
        if "random" in doc:
            params = self.get_section(f"{key}.random")
            try:
                return RadialSurface.random(
                    base_radius,
                    int(params["max_degree"]),
                    float(params["amplitude"]) * base_radius,
                    int(params.get("seed", 0)),
                )
            except (KeyError, TypeError, ValueError) as e:
                raise PtshellValueError(f"Malformed random surface in {key}: {e}") from None
        return RadialSurface.from_json({**doc, "base_radius": base_radius})

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of the effective configuration."""
        canonical = json.dumps(self._data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf8")).hexdigest()

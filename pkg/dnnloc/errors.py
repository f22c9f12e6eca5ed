"""Exception hierarchy. Every class knows the exit code the CLI reports for it."""

from typing import Optional


class DnnLocError(Exception):
    exit_code = 1


class ConfigError(DnnLocError):
    """Invalid scene, flag or environment value."""
    exit_code = 2


class GeometryError(ConfigError):
    """Degenerate geometry: coincident points, zero-length paths, flat polygons."""


class ShapeError(ConfigError):
    """Matrix dimensions that do not line up."""


class DivergenceError(DnnLocError):
    """Training produced a non-finite loss."""
    exit_code = 3

    def __init__(self, epoch: int, detail: Optional[str] = None):
        self.epoch = epoch
        self.detail = detail
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DataIOError(DnnLocError):
    """Missing or unreadable dataset, model or table file."""
    exit_code = 4

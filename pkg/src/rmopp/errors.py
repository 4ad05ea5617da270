"""Exception hierarchy shared across the package."""

from __future__ import annotations

from typing import Hashable


class RmoppError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RmoppError, ValueError):
    """A record violates a data invariant.

    ``image_id`` and ``index`` locate the offending record when known.
    """

    def __init__(self, message: str, image_id: Hashable | None = None, index: int | None = None):
        self.image_id = image_id
        self.index = index
        where = []
        if image_id is not None:
            where.append(f"image {image_id!r}")
        if index is not None:
            where.append(f"record {index}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DataFormatError(ValidationError):
    """An input file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        RmoppError.__init__(self, loc + message)
        self.image_id = None
        self.index = None


class ConfigError(RmoppError, ValueError):
    """A configuration object holds inconsistent values."""


class InfeasibleSelectionError(RmoppError):
    """No evaluated grid cell satisfies the minimum F1 constraint."""

    def __init__(self, min_f1: float, best_f1: float | None):
        self.min_f1 = min_f1
        self.best_f1 = best_f1
        best = "no evaluated cells" if best_f1 is None else f"best achievable F1 is {best_f1:.6f}"
        super().__init__(f"no cell reaches F1 >= {min_f1}; {best}")

"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class VisualWordsError(Exception):
    pass


class ConfigError(VisualWordsError):
    """Bad or inconsistent run configuration."""


class DataError(VisualWordsError):
    """Unreadable, malformed or contract-violating input data."""


class NumericalError(VisualWordsError):
    """Degenerate numerical situation (e.g. clustering fewer distinct
    points than requested centers)."""


class PipelineError(VisualWordsError):
    """A pipeline stage failed; carries the stage name and, when known,
    the image the failure occurred on."""

    def __init__(self, stage: str, message: str, image_id: str | None = None):
        self.stage = stage
        self.image_id = image_id
        where = f"stage '{stage}'" + (f", image '{image_id}'" if image_id else "")
        super().__init__(f"{where}: {message}")

"""Exception hierarchy shared across the engine."""


class VoxcorrError(Exception):
    """Base class for all engine errors."""


class ConfigError(VoxcorrError):
    """Invalid run configuration; collects every problem, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


class MemoryBudgetError(VoxcorrError):
    """Materialization would exceed the configured memory cap."""


class EmptyRegionError(VoxcorrError):
    """A search region clipped to the volume bounds is empty."""


class MdfError(VoxcorrError):
    """Base class for feature-container format errors."""


class MdfMagicError(MdfError):
    """File does not start with the MDF magic."""


class MdfHeaderError(MdfError):
    """A header field is invalid (version, level ids, sizes)."""


class MdfTruncatedError(MdfError):
    """File is shorter than the headers require."""


class KeypointFormatError(VoxcorrError):
    """A keypoint file line failed to parse."""


class VolumeFormatError(VoxcorrError):
    """Raw volume payload does not match its sidecar descriptor."""


class ScheduleFormatError(VoxcorrError):
    """A noise-schedule table file failed to parse or validate."""

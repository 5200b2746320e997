"""Exception types shared across the package."""


class UsageError(Exception):
    """Bad flag combination or missing prerequisite input (CLI exit code 1)."""


class TrainingDivergedError(Exception):
    """Non-finite loss encountered during training (CLI exit code 2)."""


class SamplingError(Exception):
    """Internal inconsistency during reverse sampling (CLI exit code 2)."""


class DegenerateInputError(ValueError):
    """Conditioning on a zero-probability event (e.g. an impossible
    (x_t, x_0) pair in the exact posterior)."""


class CheckpointFormatError(Exception):
    """Malformed checkpoint or container file (CLI exit code 3)."""

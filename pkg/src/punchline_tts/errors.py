"""Exception types shared across the package."""


class PunchlineError(Exception):
    """Base class for all package errors."""


class InputError(PunchlineError):
    """A caller-supplied value was rejected (bad label, bad shape, bad request)."""


class ConfigError(PunchlineError):
    """An inconsistent configuration: bad registry, mismatched dimensions, bad flags."""


class ManifestError(PunchlineError):
    """A corpus file failed to parse or violated a manifest invariant."""


class TrainingError(PunchlineError):
    """Training could not proceed (non-finite loss, incompatible checkpoint)."""

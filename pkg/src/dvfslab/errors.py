class DvfsLabError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(DvfsLabError):
    pass


class GovernorProtocolError(DvfsLabError):
    """A governor returned a level that is not in the frequency table."""


class SimulationError(DvfsLabError):
    pass


class TrainingDiverged(DvfsLabError):
    pass


class QuantizationError(DvfsLabError):
    pass


class TraceFormatError(DvfsLabError):
    pass

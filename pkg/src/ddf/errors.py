"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto
0 (success), 1 (config), 2 (data) and 3 (numerical).
"""


class DDFError(Exception):
    exit_code = 2


class ConfigError(DDFError):
    exit_code = 1


class DataError(DDFError):
    exit_code = 2


class NumericalError(DDFError):
    exit_code = 3


# signal_core
class ZeroSignalEnergy(DataError):
    pass


class ZeroNoiseEnergy(NumericalError):
    pass


class SignalTooShort(DataError):
    pass


class InvalidCutoff(ConfigError):
    pass


class EvenTapCount(ConfigError):
    pass


class UpsampleRequested(ConfigError):
    pass


class IrrationalRatio(ConfigError):
    pass


class SegmentTooLong(DataError):
    pass


# tfr
class DegenerateLength(DataError):
    pass


class InvalidParams(ConfigError):
    pass


class FactorTooSmall(ConfigError):
    pass


# classifiers / fusion
class MissingClass(DataError):
    pass


class NonFiniteFeatures(DataError):
    pass


class DivergedLoss(NumericalError):
    pass


class ShapeMismatch(DataError):
    pass


class DegenerateColumn(NumericalError):
    pass


# ssl / harness
class EmptyLabeledPool(DataError):
    pass


class InvalidSpec(ConfigError):
    pass


class TooFewSegments(DataError):
    pass


class LengthMismatch(DataError):
    pass


class IoFailure(DataError):
    pass

# -*- coding: utf-8 -*-


class JCRNetException(Exception):
    pass


class DimensionError(JCRNetException):
    pass


class ConfigurationError(JCRNetException):
    pass


class UsageError(JCRNetException):
    pass


class NumericalError(JCRNetException):
    pass


class DeterminismError(NumericalError):
    pass


class TrainingError(JCRNetException):
    pass


class FormatError(JCRNetException):
    pass

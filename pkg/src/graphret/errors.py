"""Exception hierarchy; ``exit_code`` is what the CLI returns."""


class GraphretError(Exception):
    exit_code = 3


class ParameterError(GraphretError, ValueError):
    exit_code = 2


class FormatError(GraphretError):
    exit_code = 3


class EmptyDatasetError(FormatError):
    pass


class ParseError(FormatError):
    pass


class DimensionError(GraphretError, ValueError):
    exit_code = 3


class StratificationError(GraphretError):
    exit_code = 3


class NumericError(GraphretError, ArithmeticError):
    exit_code = 4

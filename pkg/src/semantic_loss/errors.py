"""Exception hierarchy shared by all modules and mapped to CLI exit codes."""

from __future__ import annotations


class SemanticLossError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(SemanticLossError):
    """Bad input: malformed files, wrong dimensions, out-of-range values."""

    exit_code = 3


class ComputeError(SemanticLossError):
    """A well-formed request that could not be computed."""

    exit_code = 4


class ParseError(InputError):
    """Raised by the text-format parsers; carries the offending line and, when known, column."""

    def __init__(self, line: int, message: str, column: int | None = None) -> None:
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class DimacsError(ParseError):
    """Malformed DIMACS CNF input."""


class FormulaSyntaxError(ParseError):
    """Malformed S-expression constraint."""


class PrefLibFormatError(ParseError):
    """Malformed PrefLib SOC input."""


class EncodingError(InputError):
    """Input bytes that are not valid UTF-8."""


class CircuitFormatError(InputError):
    """A circuit JSON document that violates the schema or the DAG ordering."""


class DimensionError(InputError):
    """Vector or matrix length does not match the variable universe."""


class ProbabilityError(InputError):
    """A probability outside [0, 1] or a non-finite value."""


class StateError(InputError):
    """A state that is not total over the universe or not binary."""


class UniverseTooLargeError(InputError):
    """Brute-force enumeration requested over too many variables."""


class GridSpecError(InputError):
    """A grid outside the sizes the path encoder supports."""


class DatasetSchemaError(InputError):
    """Dataset CSV header does not follow the f*/y*/split schema."""


class PrefLibDownloadError(InputError):
    """Raised when the PrefLib download fails or its checksum does not match."""

    def __init__(self, status_code: int, message: str) -> None:
        self.status_code = status_code
        super().__init__(f"PrefLib download error {status_code}: {message}")


class CompilationBlowup(ComputeError):
    """The BDD node table exceeded its configured capacity."""


class UnsatisfiableError(ComputeError):
    """WMC is exactly zero, so the loss gradient is undefined."""


class DivergenceError(ComputeError):
    """Training produced a non-finite loss or parameter."""


class GenerationError(ComputeError):
    """A dataset generator could not reach its target count."""


class ConfigError(InputError):
    """A config file that cannot be read or fails validation."""


class AxiomCheckError(SemanticLossError):
    """At least one property check of the axiom suite failed."""

    exit_code = 5

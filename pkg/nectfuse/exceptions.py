import typing

from nectfuse import status


class NectfuseError(Exception):
    def __init__(self, exit_code: int, detail: str = None) -> None:
        if detail is None:
            detail = status.phrase(exit_code)

        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


class SchemaError(NectfuseError):
    def __init__(self, detail: str = None, column: str = None) -> None:
        if detail is None and column is not None:
            detail = f"missing required column `{column}`"
        super().__init__(status.EXIT_3_SCHEMA_ERROR, detail)
        self.column = column


class ParseError(NectfuseError):
    def __init__(self, detail: str = None, line: int = None) -> None:
        if line is not None:
            detail = f"line {line}: {detail or status.phrase(status.EXIT_4_PARSE_ERROR)}"
        super().__init__(status.EXIT_4_PARSE_ERROR, detail)
        self.line = line


class ConsistencyError(NectfuseError):
    def __init__(self, detail: str = None, subject_id: str = None) -> None:
        if subject_id is not None:
            detail = f"subject `{subject_id}`: {detail or 'inconsistent rows'}"
        super().__init__(status.EXIT_5_CONSISTENCY_ERROR, detail)
        self.subject_id = subject_id


class DomainError(NectfuseError, ValueError):
    def __init__(self, detail: str = None) -> None:
        super().__init__(status.EXIT_6_DOMAIN_ERROR, detail)


class InitializationError(NectfuseError):
    def __init__(self, detail: str = None) -> None:
        super().__init__(status.EXIT_7_INIT_ERROR, detail)


class AdaptationError(NectfuseError):
    def __init__(self, detail: str = None) -> None:
        super().__init__(status.EXIT_8_ADAPTATION_ERROR, detail)


class ConvergenceFailure(NectfuseError):
    def __init__(
        self, detail: str = None, failures: typing.Sequence[str] = ()
    ) -> None:
        super().__init__(status.EXIT_9_CONVERGENCE_FAILURE, detail)
        self.failures = list(failures)


class TransformError(NectfuseError, ValueError):
    def __init__(self, detail: str = None, block: str = None) -> None:
        if block is not None:
            detail = f"block `{block}`: {detail or 'constraint violated'}"
        super().__init__(status.EXIT_10_TRANSFORM_ERROR, detail)
        self.block = block


class ConfigError(NectfuseError, ValueError):
    def __init__(self, detail: str = None, key: str = None) -> None:
        super().__init__(status.EXIT_11_CONFIG_ERROR, detail)
        self.key = key

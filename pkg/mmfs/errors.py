class MMFSError(Exception):
    exit_code = 1


class ConfigError(MMFSError):
    pass


class StateError(MMFSError):
    pass


class DomainError(MMFSError, ValueError):
    pass


class ShapeError(MMFSError, ValueError):
    pass


class FeatureIndexError(MMFSError, IndexError):
    pass


class InfeasibleError(MMFSError):
    pass


class ParseError(MMFSError):
    exit_code = 2

    def __init__(self, message: str, line: int = None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class NotConvergedError(MMFSError):
    """ Raised after results were written, when the solver hit max_sweeps.
    """
    exit_code = 3


class CapacityError(MMFSError):
    exit_code = 4

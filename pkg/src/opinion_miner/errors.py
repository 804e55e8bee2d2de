"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class OpinionMinerError(Exception):
    exit_code = 2


class InputError(OpinionMinerError, ValueError):
    """Malformed input data, arguments or configuration."""

    exit_code = 2


class XMLFormatError(InputError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class AlignmentError(InputError):
    """Annotator tokens could not be mapped onto words."""

    def __init__(self, offsets, message="annotator tokens do not align with words"):
        self.offsets = list(offsets)
        super().__init__(f"{message}: offending offsets {self.offsets}")


class SequenceTooLongError(InputError):
    def __init__(self, length, limit):
        self.length = length
        self.limit = limit
        super().__init__(f"input has {length} subtokens, encoder limit is {limit}")


class NotRowStochasticError(InputError):
    """An attention matrix row does not sum to one."""

    def __init__(self, layer, head, row, total):
        self.layer, self.head, self.row, self.total = layer, head, row, total
        super().__init__(
            f"attention row does not sum to 1: layer={layer} head={head} "
            f"row={row} sum={total:.6f}"
        )


class CapabilityError(OpinionMinerError):
    """The backend or annotator cannot perform the requested operation."""

    exit_code = 3

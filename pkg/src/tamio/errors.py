""" Exceptions raised by the tamio package. """


class TamError(Exception):
    """Base class for every error raised by tamio."""


class ConfigError(TamError):
    """
    Invalid topology, aggregator selection or run configuration.

    Parameters
    ----------
    message : str
              Human readable description.
    field   : str, optional
              Name of the offending configuration field.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = '{}: {}'.format(field, message)
        super().__init__(message)


class WorkloadError(TamError):
    """Bad generator parameters or a malformed decomposition file."""


class UnsortedInputError(TamError):
    """A list handed to the merge kernel is not sorted by offset."""

    def __init__(self, list_index, position):
        self.list_index = list_index
        self.position = position
        super().__init__('Input list {} is not sorted at position {}.'.format(list_index, position))


class OverlapError(TamError):
    """
    Two extents cover a common byte under the strict overlap policy.

    `first` and `second` are (rank, seq) pairs naming the two origin extents.
    """

    def __init__(self, first, second, offset):
        self.first = tuple(first)
        self.second = tuple(second)
        self.offset = offset
        super().__init__('Extent of rank {} (seq {}) overlaps extent of rank {} (seq {}) at offset {}.'.format(
            self.first[0], self.first[1], self.second[0], self.second[1], offset))


class UnwrittenReadError(TamError):
    """A read touched a byte of the simulated file that was never written."""

    def __init__(self, offset):
        self.offset = offset
        super().__init__('Offset {} of the simulated file was never written.'.format(offset))


class StripeDisciplineError(TamError):
    """An aggregator wrote outside its stripes or exceeded its per-round budget."""

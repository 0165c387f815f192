"""
Error classes specific to the MODETR toolkit.
"""
from __future__ import annotations

import re
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from modetr.fileloc import FileLoc

__all__ = [
    'ModetrBaseException',
    'ModetrShapeError', 'ModetrContractError', 'ModetrConfigError',
    'ModetrFormatError', 'ModetrDataError',
]

_PLACEHOLDER = re.compile(r"%\((\w+)\)s")


class ModetrBaseException(Exception):
    """
    Base exception specific to the MODETR toolkit.
    Keyword location parameters map a placeholder name
    to a position inside some file on disk.
    """
    #: Error message
    message: str
    #: A mapping from position name to :class:`FileLoc` position data
    positions: dict[str, FileLoc]

    def __init__(self, message: str, **positions: FileLoc):
        self.positions = positions
        self.message = self.render(message, self.positions)
        self.args = (self.message,)  # this will make error stack more readable

    @staticmethod
    def render(message: str, positions: dict[str, FileLoc]) -> str:
        """
        Substitutes the ``%(name)s`` position placeholders within the message
        with the provided positions data. Any other ``%`` is kept verbatim,
        so interpolated file content cannot break the message.
        """
        if not positions:
            return message

        def substitute(match: re.Match) -> str:
            loc = positions.get(match.group(1))
            return match.group(0) if loc is None else loc.rendered

        return _PLACEHOLDER.sub(substitute, message)


class ModetrShapeError(ModetrBaseException):
    """
    Exception for tensor operands whose dimensions do not agree.
    """
    pass


class ModetrContractError(ModetrBaseException):
    """
    Exception for violated preconditions of an operation,
    such as a non-scalar loss or an out-of-range index.
    """
    pass


class ModetrConfigError(ModetrBaseException):
    """
    Exception for invalid configuration or scene specification.
    The offending field name is kept for command-line reporting.
    """
    #: Name of the offending field (if known)
    field: str

    def __init__(self, message: str, field: str = '', **positions: FileLoc):
        super().__init__(message, **positions)
        self.field = field


class ModetrFormatError(ModetrBaseException):
    """
    Exception for corrupt or truncated dataset and checkpoint files.
    """
    pass


class ModetrDataError(ModetrBaseException):
    """
    Exception for data that cannot be produced or cannot be used,
    e.g. an infeasible scene or a dataset that lacks what a variant needs.
    """
    pass

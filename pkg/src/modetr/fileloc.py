"""
Utility class which pins a byte offset inside a binary file
so that format errors can say exactly where decoding went wrong.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Union

__all__ = ['FileLoc']


@dataclass(frozen=True)
class FileLoc:
    """
    Represents a position inside a file on disk
    as the file path plus a 0-indexed byte offset.
    """
    #: Path of the file being decoded
    path: str

    #: 0-indexed byte offset where the problem was detected
    offset: int

    @classmethod
    def of(cls, path: Union[str, os.PathLike], offset: int) -> FileLoc:
        return cls(os.fspath(path), int(offset))

    @property
    def rendered(self) -> str:
        """
        Rendered string containing the file name and the byte offset.
        """
        return f"{self.path!r} byte {self.offset}"

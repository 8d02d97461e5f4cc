"""Shared error base class.

Module-specific exceptions live next to the code that raises them; they all
derive from :class:`CodeMemError` so callers can catch runtime failures in
one clause without swallowing programming errors.
"""


class CodeMemError(Exception):
    """Base class for every error raised by the codemem runtime."""

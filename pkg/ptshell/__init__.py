from importlib import metadata

try:
    # Must be the same used as 'name' in setup.py
    __version__ = metadata.version("ptshell")
    """:py:class:`str`: the version of the current ptshell module."""
except metadata.PackageNotFoundError:  # pragma: no cover - this should never happen during tests
    __version__ = "0.0.0"  # package is not installed

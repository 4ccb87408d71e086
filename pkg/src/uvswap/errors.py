"""Shared exception base.

Every package error derives from UvswapError and carries a short
machine-readable ``code`` used by the CLI and the HTTP service.
"""


class UvswapError(Exception):
    code = "error"

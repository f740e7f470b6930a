"""
Exception Hierarchy Module.

Every module of the package raises its own exception type; all of them
derive from HybridDDPError so callers can catch package failures in one
place.
"""


class HybridDDPError(Exception):
    """Base exception for all hybrid_ddp errors."""

    pass

"""Exception hierarchy shared across the package."""

from __future__ import annotations


class NocError(Exception):
    """Base class for all errors raised by hetnoc."""


class ConfigError(NocError):
    """A configuration or descriptor file could not be accepted.

    The message always names the source (file or section), the offending
    element and the reason, e.g. ``network.xml: connection 3: port count 1``.
    """

    def __init__(self, source: str, element: str, reason: str):
        self.source = source
        self.element = element
        self.reason = reason
        super().__init__(f"{source}: {element}: {reason}")


class ConfigWarning(UserWarning):
    """Non-fatal configuration issue such as an unknown key."""


class TopologyError(NocError):
    """Structural query on the network graph failed."""


class RoutingError(NocError):
    """Unknown routing algorithm or unreachable destination."""


class SimulationError(NocError):
    """A runtime invariant was violated during simulation."""

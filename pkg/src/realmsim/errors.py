"""Exception hierarchy shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class NotFoundError(SimError):
    """Referenced granule or realm does not exist."""


class LifecycleError(SimError):
    """Operation not valid in the current lifecycle state."""


class OwnershipError(SimError):
    """Granule is not in the ownership state the operation requires."""


class AccessViolation(SimError):
    """Memory access denied by the inter-world access matrix."""

    def __init__(self, actor, state, kind):
        super().__init__(f"{actor.name} denied {kind.name} on granule in state {state.name}")
        self.actor = actor
        self.state = state
        self.kind = kind


class BoundsError(SimError):
    """Offset, length, or index out of range."""


class InterfaceError(SimError):
    """Command issued from the wrong world."""


class IntegrityError(SimError):
    """Content digest does not match the expected value."""


class StateError(SimError):
    """Runtime operation invoked before its preconditions were set up."""


class PolicyExhausted(SimError):
    """Usage policy forbids further inferences."""


class ExchangeFull(SimError):
    """No free slot in the input/output exchange region."""


class ImageVerificationError(SimError):
    """Realm image bundle failed signature or measurement consistency checks."""


class DecodeError(SimError):
    """Malformed canonical encoding."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class MeasurementError(SimError):
    """Inconsistent instruction-count arithmetic (idle exceeds total)."""


class ConfigError(SimError):
    """Unknown event type or invalid profile/configuration value."""


class ProtocolError(SimError):
    """Provider protocol violated (unexpected message, bad handshake)."""

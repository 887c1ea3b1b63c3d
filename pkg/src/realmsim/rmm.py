"""Realm management: lifecycle state machine, RMI commands, RSI services.

The hypervisor (normal world) drives realms through RMI commands; the
realm requests services through RSI calls. Every command is validated
against the realm lifecycle New -> Active -> Destroyed and either
succeeds or raises a typed error; descriptors survive destruction so a
realm's final measurements stay inspectable.

Switch accounting follows the architecture's control paths: a plain RMI
command costs one monitor round trip (2 world switches); entering a
realm costs 4 world switches (normal -> root -> realm-world monitor ->
realm and back) on top of the hypervisor's ordinary VM-entry work,
which a normal-world VM entry also pays (2 vm-enter events). RSI calls
stay inside the realm world and cost no switches.
"""

import enum
import itertools
from dataclasses import dataclass, field

from . import attestation
from .errors import BoundsError, InterfaceError, LifecycleError, NotFoundError, OwnershipError
from .granules import GRANULE_SIZE, AccessKind, GranuleSpace, StateKind, World
from .measure import (
    CHALLENGE_SIZE,
    DIGEST_SIZE,
    PERSONALIZATION_SIZE,
    REM_SLOTS,
    ZERO_DIGEST,
    extend,
    initial_measurement,
    measure_content,
)

MAX_HOST_CALL_PAYLOAD = 256
TERMINATE_PREFIX = b"terminate"


class RealmState(enum.Enum):
    NEW = "new"
    ACTIVE = "active"
    DESTROYED = "destroyed"


class ExitKind(enum.Enum):
    HOST_CALL = "host_call"
    YIELD = "yield"
    TERMINATION_REQUEST = "termination_request"


@dataclass(frozen=True)
class ExitReason:
    kind: ExitKind
    payload: bytes = b""

    @property
    def termination_reason(self) -> str:
        _, _, reason = self.payload.partition(b":")
        return reason.decode("ascii", "replace")


@dataclass
class RealmDescriptor:
    realm_id: str
    state: RealmState
    rim: bytes
    rem: list
    granules: set = field(default_factory=set)
    entry_point: tuple = (0, 0)
    personalization: bytes = bytes(PERSONALIZATION_SIZE)
    inference_count: int = 0
    created_at: int = 0


class SimClock:
    def __init__(self, ledger=None):
        self.tick = 0
        self._ledger = ledger

    def advance(self) -> int:
        self.tick += 1
        if self._ledger is not None:
            self._ledger.set_tick(self.tick)
            self._ledger.idle_tick()
        return self.tick


class RsiHandle:
    """RSI surface handed to a realm's runtime for the duration of one entry."""

    def __init__(self, rmm: "Rmm", realm_id: str):
        self._rmm = rmm
        self.realm_id = realm_id

    def attestation_token(self, challenge: bytes) -> attestation.AttestationReport:
        return self._rmm.rsi_attestation_token(self.realm_id, challenge, caller=World.REALM)

    def measurement_extend(self, index: int, digest: bytes) -> None:
        self._rmm.rsi_measurement_extend(self.realm_id, index, digest, caller=World.REALM)

    def host_call(self, payload: bytes) -> ExitReason:
        return self._rmm.rsi_host_call(self.realm_id, payload, caller=World.REALM)


class Rmm:
    def __init__(self, space: GranuleSpace, platform: attestation.PlatformState, ledger=None, clock: SimClock | None = None):
        self._space = space
        self._platform = platform
        self._ledger = ledger
        self.clock = clock if clock is not None else SimClock(ledger)
        self._realms: dict[str, RealmDescriptor] = {}
        self._runtimes: dict[str, object] = {}
        self._mailboxes: dict[str, int] = {}
        self._ids = itertools.count(1)

    # -- bookkeeping ------------------------------------------------------

    def descriptor(self, realm_id: str) -> RealmDescriptor:
        try:
            return self._realms[realm_id]
        except KeyError:
            raise NotFoundError(f"realm {realm_id} does not exist") from None

    def attach_runtime(self, realm_id: str, runtime) -> None:
        self.descriptor(realm_id)
        self._runtimes[realm_id] = runtime

    def set_mailbox(self, realm_id: str, granule_id: int) -> None:
        self.descriptor(realm_id)
        if self._space.granule(granule_id).kind is not StateKind.NORMAL_WORLD:
            raise OwnershipError("mailbox must be a normal-world granule")
        self._mailboxes[realm_id] = granule_id

    def _rmi_round_trip(self) -> None:
        if self._ledger is not None:
            self._ledger.world_switches(2)

    def _require_world(self, caller: World, expected: World, what: str) -> None:
        if caller is not expected:
            raise InterfaceError(f"{what} must be issued from the {expected.value} world")

    # -- RMI commands (hypervisor -> monitor) -----------------------------

    def rmi_realm_create(self, personalization: bytes, entry_point, caller: World = World.NORMAL) -> str:
        self._require_world(caller, World.NORMAL, "RMI realm create")
        if len(personalization) != PERSONALIZATION_SIZE:
            raise BoundsError("personalization must be 64 bytes")
        self.clock.advance()
        self._rmi_round_trip()
        realm_id = f"realm-{next(self._ids)}"
        entry_point = (int(entry_point[0]), int(entry_point[1]))
        descriptor = RealmDescriptor(
            realm_id=realm_id,
            state=RealmState.NEW,
            rim=initial_measurement(personalization, entry_point),
            rem=[ZERO_DIGEST] * REM_SLOTS,
            entry_point=entry_point,
            personalization=bytes(personalization),
            created_at=self.clock.tick,
        )
        self._realms[realm_id] = descriptor
        return realm_id

    def rmi_data_create(self, realm_id: str, granule_id: int, content: bytes, target_addr: int, caller: World = World.NORMAL) -> None:
        self._require_world(caller, World.NORMAL, "RMI data create")
        d = self.descriptor(realm_id)
        if d.state is not RealmState.NEW:
            raise LifecycleError("populate after activation")
        if len(content) != GRANULE_SIZE:
            raise BoundsError(f"population content must be {GRANULE_SIZE} bytes")
        g = self._space.granule(granule_id)
        if g.kind is not StateKind.DELEGATED_REALM:
            raise OwnershipError(f"granule {granule_id} is not delegated to the realm world")
        self.clock.advance()
        self._rmi_round_trip()
        self._space.claim_for_realm(granule_id, realm_id)
        self._space.access(World.REALM, granule_id, AccessKind.WRITE, 0, data=content)
        d.rim = extend(d.rim, measure_content(content, target_addr).to_bytes())
        d.granules.add(granule_id)
        if self._ledger is not None:
            self._ledger.record("populate", actor="realm", size=len(content))

    def rmi_realm_activate(self, realm_id: str, caller: World = World.NORMAL) -> None:
        self._require_world(caller, World.NORMAL, "RMI realm activate")
        d = self.descriptor(realm_id)
        if d.state is not RealmState.NEW:
            raise LifecycleError(f"cannot activate realm in state {d.state.value}")
        self.clock.advance()
        self._rmi_round_trip()
        d.state = RealmState.ACTIVE

    def rmi_rec_enter(self, realm_id: str, caller: World = World.NORMAL) -> ExitReason:
        self._require_world(caller, World.NORMAL, "RMI rec enter")
        d = self.descriptor(realm_id)
        if d.state is not RealmState.ACTIVE:
            raise LifecycleError(f"cannot enter realm in state {d.state.value}")
        runtime = self._runtimes.get(realm_id)
        if runtime is None:
            raise LifecycleError("realm has no attached runtime")
        self.clock.advance()
        if self._ledger is not None:
            self._ledger.rec_enter_round_trip()
        return runtime.step(RsiHandle(self, realm_id), now=self.clock.tick)

    def rmi_realm_destroy(self, realm_id: str, caller: World = World.NORMAL) -> None:
        self._require_world(caller, World.NORMAL, "RMI realm destroy")
        d = self.descriptor(realm_id)
        if d.state is RealmState.DESTROYED:
            raise LifecycleError("realm already destroyed")
        self.clock.advance()
        self._rmi_round_trip()
        for granule_id in sorted(d.granules):
            self._space.release_from_realm(granule_id)
        d.granules.clear()
        d.state = RealmState.DESTROYED

    # -- RSI services (realm -> monitor) ----------------------------------

    def rsi_attestation_token(self, realm_id: str, challenge: bytes, caller: World) -> attestation.AttestationReport:
        self._require_world(caller, World.REALM, "RSI attestation token")
        d = self.descriptor(realm_id)
        if d.state is not RealmState.ACTIVE:
            raise LifecycleError("attestation token requires an active realm")
        if len(challenge) != CHALLENGE_SIZE:
            raise BoundsError("challenge must be 64 bytes")
        self.clock.advance()
        return attestation.assemble_report(d, challenge, self._platform)

    def rsi_measurement_extend(self, realm_id: str, index: int, digest: bytes, caller: World) -> None:
        self._require_world(caller, World.REALM, "RSI measurement extend")
        d = self.descriptor(realm_id)
        if d.state is not RealmState.ACTIVE:
            raise LifecycleError("measurement extend requires an active realm")
        if not 0 <= index < REM_SLOTS:
            raise BoundsError(f"measurement slot {index} out of range")
        if len(digest) != DIGEST_SIZE:
            raise BoundsError("extension digest must be 32 bytes")
        self.clock.advance()
        d.rem[index] = extend(d.rem[index], digest)

    def rsi_host_call(self, realm_id: str, payload: bytes, caller: World) -> ExitReason:
        self._require_world(caller, World.REALM, "RSI host call")
        d = self.descriptor(realm_id)
        if d.state is not RealmState.ACTIVE:
            raise LifecycleError("host call requires an active realm")
        if len(payload) > MAX_HOST_CALL_PAYLOAD:
            raise BoundsError(f"host call payload exceeds {MAX_HOST_CALL_PAYLOAD} bytes")
        self.clock.advance()
        mailbox = self._mailboxes.get(realm_id)
        if mailbox is not None:
            record = len(payload).to_bytes(2, "little") + payload
            self._space.access(World.REALM, mailbox, AccessKind.WRITE, 0, data=record)
        if payload.split(b":")[0] == TERMINATE_PREFIX:
            return ExitReason(ExitKind.TERMINATION_REQUEST, payload)
        return ExitReason(ExitKind.HOST_CALL, payload)

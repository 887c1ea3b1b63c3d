"""Simulated physical memory: granules owned by one of four address spaces.

Every byte of simulated RAM lives in a 4096-byte granule whose state
records which world owns it. All reads and writes funnel through
``GranuleSpace.access``, which enforces the inter-world access matrix:

    Root   -> everything
    Realm  -> normal-world, delegated, and realm-owned granules
    Secure -> normal-world and secure granules
    Normal -> normal-world granules only

Granules are scrubbed to zero whenever they enter the NormalWorld or
DelegatedRealm states, so no content survives a change of ownership.
"""

import enum
from dataclasses import dataclass

from .errors import AccessViolation, BoundsError, InterfaceError, LifecycleError, NotFoundError

GRANULE_SIZE = 4096
ZERO_PAGE = bytes(GRANULE_SIZE)


class World(enum.Enum):
    NORMAL = "normal"
    REALM = "realm"
    SECURE = "secure"
    ROOT = "root"


class StateKind(enum.Enum):
    NORMAL_WORLD = "normal_world"
    DELEGATED_REALM = "delegated_realm"
    REALM_OWNED = "realm_owned"
    ROOT = "root"
    SECURE = "secure"


class AccessKind(enum.Enum):
    READ = "read"
    WRITE = "write"


@dataclass
class Granule:
    index: int
    kind: StateKind
    realm_id: str | None
    contents: bytes


def access_allowed(actor: World, state: StateKind) -> bool:
    """The 4x5 access matrix; identical for reads and writes."""
    if actor is World.ROOT:
        return True
    if actor is World.REALM:
        return state in (StateKind.NORMAL_WORLD, StateKind.DELEGATED_REALM, StateKind.REALM_OWNED)
    if actor is World.SECURE:
        return state in (StateKind.NORMAL_WORLD, StateKind.SECURE)
    return state is StateKind.NORMAL_WORLD


class GranuleSpace:
    def __init__(self, count: int, ledger=None, root_granules=()):
        self._granules = {}
        for i in range(count):
            kind = StateKind.ROOT if i in set(root_granules) else StateKind.NORMAL_WORLD
            self._granules[i] = Granule(i, kind, None, ZERO_PAGE)
        self._ledger = ledger

    def __len__(self) -> int:
        return len(self._granules)

    def granule(self, granule_id: int) -> Granule:
        try:
            return self._granules[granule_id]
        except KeyError:
            raise NotFoundError(f"granule {granule_id} does not exist") from None

    def indices(self):
        return self._granules.keys()

    def check_access(self, actor: World, granule_id: int, kind: AccessKind) -> bool:
        """Pure matrix lookup. Unknown granule ids raise NotFoundError, not Deny."""
        g = self.granule(granule_id)
        del kind  # reads and writes share one matrix
        return access_allowed(actor, g.kind)

    def access(self, actor: World, granule_id: int, kind: AccessKind, offset: int, data: bytes | None = None, length: int = 0):
        """Mediated read or write; the only operation that touches contents."""
        g = self.granule(granule_id)
        if not access_allowed(actor, g.kind):
            raise AccessViolation(actor, g.kind, kind)
        if kind is AccessKind.WRITE:
            if data is None:
                raise BoundsError("write requires data")
            span = len(data)
        else:
            span = length
        if offset < 0 or span < 0 or offset + span > GRANULE_SIZE:
            raise BoundsError(f"range [{offset}, {offset + span}) outside granule")
        if self._ledger is not None:
            self._ledger.memory_access(actor)
        if kind is AccessKind.READ:
            return g.contents[offset : offset + span]
        g.contents = g.contents[:offset] + bytes(data) + g.contents[offset + span :]
        return None

    def delegate(self, granule_id: int, caller: World = World.NORMAL) -> None:
        """NormalWorld -> DelegatedRealm, scrubbed. Hypervisor command."""
        if caller is not World.NORMAL:
            raise InterfaceError("delegate is a hypervisor (normal world) command")
        g = self.granule(granule_id)
        if g.kind is not StateKind.NORMAL_WORLD:
            raise LifecycleError(f"cannot delegate granule in state {g.kind.name}")
        g.kind = StateKind.DELEGATED_REALM
        g.realm_id = None
        g.contents = ZERO_PAGE
        if self._ledger is not None:
            self._ledger.world_switches(2)

    def undelegate(self, granule_id: int, caller: World = World.NORMAL) -> None:
        """DelegatedRealm -> NormalWorld, scrubbed. Fails while a realm owns it."""
        if caller is not World.NORMAL:
            raise InterfaceError("undelegate is a hypervisor (normal world) command")
        g = self.granule(granule_id)
        if g.kind is StateKind.REALM_OWNED:
            raise LifecycleError("granule is owned by a realm; destroy the realm first")
        if g.kind is not StateKind.DELEGATED_REALM:
            raise LifecycleError(f"cannot undelegate granule in state {g.kind.name}")
        g.kind = StateKind.NORMAL_WORLD
        g.realm_id = None
        g.contents = ZERO_PAGE
        if self._ledger is not None:
            self._ledger.world_switches(2)

    def claim_for_realm(self, granule_id: int, realm_id: str) -> None:
        """DelegatedRealm -> RealmOwned; internal to realm management."""
        g = self.granule(granule_id)
        if g.kind is not StateKind.DELEGATED_REALM:
            raise LifecycleError(f"cannot claim granule in state {g.kind.name}")
        g.kind = StateKind.REALM_OWNED
        g.realm_id = realm_id

    def release_from_realm(self, granule_id: int) -> None:
        """RealmOwned -> DelegatedRealm, scrubbed; internal to realm teardown."""
        g = self.granule(granule_id)
        if g.kind is not StateKind.REALM_OWNED:
            raise LifecycleError(f"cannot release granule in state {g.kind.name}")
        g.kind = StateKind.DELEGATED_REALM
        g.realm_id = None
        g.contents = ZERO_PAGE

    def counts(self) -> dict:
        result = {kind: 0 for kind in StateKind}
        for g in self._granules.values():
            result[g.kind] += 1
        return result

    def normal_world_ids(self):
        return [g.index for g in self._granules.values() if g.kind is StateKind.NORMAL_WORLD]

    def realm_owned_ids(self, realm_id: str):
        return [
            g.index
            for g in self._granules.values()
            if g.kind is StateKind.REALM_OWNED and g.realm_id == realm_id
        ]


class NormalMemoryView:
    """Normal-world software's window onto memory."""

    def __init__(self, space: GranuleSpace):
        self._space = space

    def read(self, granule_id: int, offset: int, length: int) -> bytes:
        return self._space.access(World.NORMAL, granule_id, AccessKind.READ, offset, length=length)

    def write(self, granule_id: int, offset: int, data: bytes) -> None:
        self._space.access(World.NORMAL, granule_id, AccessKind.WRITE, offset, data=data)


class RealmMemoryView:
    """A realm's window onto memory.

    The matrix grants the realm world access to every realm-state granule;
    per-realm isolation is enforced here by refusing granules owned by a
    different realm.
    """

    def __init__(self, space: GranuleSpace, realm_id: str):
        self._space = space
        self._realm_id = realm_id

    def _check_isolation(self, granule_id: int, kind: AccessKind) -> None:
        g = self._space.granule(granule_id)
        if g.kind in (StateKind.REALM_OWNED, StateKind.DELEGATED_REALM) and g.realm_id != self._realm_id:
            raise AccessViolation(World.REALM, g.kind, kind)

    def read(self, granule_id: int, offset: int, length: int) -> bytes:
        self._check_isolation(granule_id, AccessKind.READ)
        return self._space.access(World.REALM, granule_id, AccessKind.READ, offset, length=length)

    def write(self, granule_id: int, offset: int, data: bytes) -> None:
        self._check_isolation(granule_id, AccessKind.WRITE)
        self._space.access(World.REALM, granule_id, AccessKind.WRITE, offset, data=data)

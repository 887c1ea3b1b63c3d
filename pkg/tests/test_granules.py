"""Granule space: access matrix, delegation lifecycle, scrubbing, conservation."""

import pytest
from hypothesis import given, settings, strategies as st

from realmsim.errors import AccessViolation, BoundsError, InterfaceError, LifecycleError, NotFoundError
from realmsim.granules import (
    GRANULE_SIZE,
    AccessKind,
    GranuleSpace,
    RealmMemoryView,
    StateKind,
    World,
    access_allowed,
)


def space_with_states():
    """One granule per state, id order: normal, delegated, realm-owned, root, secure."""
    space = GranuleSpace(5)
    space.delegate(1)
    space.delegate(2)
    space.claim_for_realm(2, "realm-1")
    space.granule(3).kind = StateKind.ROOT
    space.granule(4).kind = StateKind.SECURE
    return space


EXPECTED_ALLOW = {
    World.ROOT: set(StateKind),
    World.REALM: {StateKind.NORMAL_WORLD, StateKind.DELEGATED_REALM, StateKind.REALM_OWNED},
    World.SECURE: {StateKind.NORMAL_WORLD, StateKind.SECURE},
    World.NORMAL: {StateKind.NORMAL_WORLD},
}

STATE_OF_ID = {
    0: StateKind.NORMAL_WORLD,
    1: StateKind.DELEGATED_REALM,
    2: StateKind.REALM_OWNED,
    3: StateKind.ROOT,
    4: StateKind.SECURE,
}


def test_access_matrix_all_40_cases():
    space = space_with_states()
    for actor in World:
        for granule_id, state in STATE_OF_ID.items():
            for kind in AccessKind:
                allowed = space.check_access(actor, granule_id, kind)
                assert allowed == (state in EXPECTED_ALLOW[actor]), (actor, state, kind)


def test_matrix_examples_from_both_directions():
    space = space_with_states()
    assert not space.check_access(World.NORMAL, 2, AccessKind.READ)  # realm-owned hidden
    assert space.check_access(World.ROOT, 2, AccessKind.WRITE)
    assert space.check_access(World.REALM, 0, AccessKind.READ)  # normal memory visible
    assert not space.check_access(World.SECURE, 2, AccessKind.READ)  # worlds disjoint


def test_unknown_granule_is_an_error_not_deny():
    space = GranuleSpace(2)
    with pytest.raises(NotFoundError):
        space.check_access(World.ROOT, 99, AccessKind.READ)
    with pytest.raises(NotFoundError):
        space.access(World.ROOT, 99, AccessKind.READ, 0, length=1)


def test_delegate_only_from_normal_world_state():
    # Brute-force over all five source states: only NormalWorld succeeds.
    for granule_id, state in STATE_OF_ID.items():
        space = space_with_states()
        if state is StateKind.NORMAL_WORLD:
            space.delegate(granule_id)
            assert space.granule(granule_id).kind is StateKind.DELEGATED_REALM
        else:
            with pytest.raises(LifecycleError):
                space.delegate(granule_id)
            assert space.granule(granule_id).kind is state


def test_delegate_scrubs_and_rejects_repeat():
    space = GranuleSpace(2)
    space.access(World.NORMAL, 1, AccessKind.WRITE, 0, data=b"\xaa" * 16)
    space.delegate(1)
    g = space.granule(1)
    assert g.kind is StateKind.DELEGATED_REALM
    assert g.contents == bytes(GRANULE_SIZE)
    with pytest.raises(LifecycleError):
        space.delegate(1)


def test_undelegate_requires_unowned():
    space = GranuleSpace(2)
    space.delegate(1)
    space.claim_for_realm(1, "realm-1")
    with pytest.raises(LifecycleError):
        space.undelegate(1)
    space.release_from_realm(1)
    space.undelegate(1)
    assert space.granule(1).kind is StateKind.NORMAL_WORLD
    assert space.granule(1).contents == bytes(GRANULE_SIZE)


def test_delegate_requires_hypervisor_role():
    space = GranuleSpace(1)
    with pytest.raises(InterfaceError):
        space.delegate(0, caller=World.REALM)


def test_access_round_trip_and_violation():
    space = space_with_states()
    space.access(World.NORMAL, 0, AccessKind.WRITE, 7, data=b"hello")
    assert space.access(World.NORMAL, 0, AccessKind.READ, 7, length=5) == b"hello"
    with pytest.raises(AccessViolation) as info:
        space.access(World.NORMAL, 2, AccessKind.READ, 0, length=4)
    assert info.value.actor is World.NORMAL
    assert info.value.state is StateKind.REALM_OWNED


def test_realm_writes_inference_output_to_normal_memory():
    space = space_with_states()
    space.access(World.REALM, 0, AccessKind.WRITE, 0, data=b"\x02\x00\x00\x00")
    assert space.access(World.NORMAL, 0, AccessKind.READ, 0, length=4) == b"\x02\x00\x00\x00"


def test_access_bounds():
    space = GranuleSpace(1)
    with pytest.raises(BoundsError):
        space.access(World.NORMAL, 0, AccessKind.READ, GRANULE_SIZE - 1, length=2)
    with pytest.raises(BoundsError):
        space.access(World.NORMAL, 0, AccessKind.WRITE, -1, data=b"x")


def test_realm_view_blocks_other_realms_granules():
    space = space_with_states()
    view = RealmMemoryView(space, "realm-2")
    with pytest.raises(AccessViolation):
        view.read(2, 0, 4)  # owned by realm-1
    assert view.read(0, 0, 4) == bytes(4)  # normal world is fair game


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(["delegate", "undelegate", "claim", "release"]), st.integers(0, 7)),
        max_size=40,
    )
)
def test_conservation_under_random_command_sequences(commands):
    space = GranuleSpace(8)
    for op, granule_id in commands:
        try:
            if op == "delegate":
                space.delegate(granule_id)
            elif op == "undelegate":
                space.undelegate(granule_id)
            elif op == "claim":
                space.claim_for_realm(granule_id, "realm-1")
            else:
                space.release_from_realm(granule_id)
        except LifecycleError:
            pass
        # granule ids never change; only states do
        assert sorted(space.indices()) == list(range(8))
        assert sum(space.counts().values()) == 8
        # anything in normal/delegated state is scrubbed
        for g in (space.granule(i) for i in range(8)):
            if g.kind in (StateKind.NORMAL_WORLD, StateKind.DELEGATED_REALM):
                assert g.contents == bytes(GRANULE_SIZE)


def test_access_allowed_is_pure_function():
    # exercising the raw matrix keeps the table honest if states are added
    assert access_allowed(World.ROOT, StateKind.SECURE)
    assert not access_allowed(World.REALM, StateKind.SECURE)
    assert not access_allowed(World.SECURE, StateKind.DELEGATED_REALM)

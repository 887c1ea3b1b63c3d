"""Realm lifecycle: command validation, measurement freezing, host calls."""

import hashlib
import struct

import pytest

from realmsim import measure
from realmsim.errors import BoundsError, InterfaceError, LifecycleError, NotFoundError, OwnershipError
from realmsim.granules import GRANULE_SIZE, AccessKind, StateKind, World
from realmsim.rmm import ExitKind, RsiHandle

PERS = bytes(64)


def create_realm(machine, personalization=PERS, entry=(0, 0)):
    return machine.rmm.rmi_realm_create(personalization, entry)


def populate(machine, realm_id, granule_id, content, addr):
    machine.space.delegate(granule_id)
    machine.rmm.rmi_data_create(realm_id, granule_id, content, addr)


class ScriptedRuntime:
    """Minimal runtime standing in for the realm program."""

    def __init__(self, actions):
        self.actions = list(actions)

    def step(self, rsi, now):
        action = self.actions.pop(0)
        return action(rsi)


def test_create_post_state(machine):
    realm_id = create_realm(machine)
    d = machine.rmm.descriptor(realm_id)
    assert d.state.value == "new"
    assert d.inference_count == 0
    assert d.rem == [bytes(32)] * 4
    assert create_realm(machine) != realm_id  # fresh identifiers


def test_create_rim_matches_independent_digest(machine):
    personalization = b"\x55" * 64
    realm_id = create_realm(machine, personalization, entry=(2, 64))
    params = hashlib.sha256(personalization + struct.pack("<QQ", 2, 64)).digest()
    expected = hashlib.sha256(bytes(32) + params).digest()
    assert machine.rmm.descriptor(realm_id).rim == expected


def test_populate_extends_rim_and_claims_granule(machine):
    realm_id = create_realm(machine)
    rim_before = machine.rmm.descriptor(realm_id).rim
    populate(machine, realm_id, 5, b"\x01" * GRANULE_SIZE, 0)
    d = machine.rmm.descriptor(realm_id)
    assert d.rim != rim_before
    assert machine.space.granule(5).kind is StateKind.REALM_OWNED
    assert 5 in d.granules


def test_populate_order_changes_rim(machine):
    content_a, content_b = b"\x0a" * GRANULE_SIZE, b"\x0b" * GRANULE_SIZE
    r1 = create_realm(machine)
    populate(machine, r1, 5, content_a, 0)
    populate(machine, r1, 6, content_b, 4096)
    r2 = create_realm(machine)
    populate(machine, r2, 7, content_b, 4096)
    populate(machine, r2, 8, content_a, 0)
    rim_ab = machine.rmm.descriptor(r1).rim
    rim_ba = machine.rmm.descriptor(r2).rim
    assert rim_ab != rim_ba
    # oracle: recompute both chains directly
    chain = measure.initial_measurement(PERS, (0, 0))
    chain = measure.extend(chain, measure.measure_content(content_a, 0).to_bytes())
    chain = measure.extend(chain, measure.measure_content(content_b, 4096).to_bytes())
    assert rim_ab == chain


def test_populate_after_activation_rejected(machine):
    realm_id = create_realm(machine)
    machine.rmm.rmi_realm_activate(realm_id)
    machine.space.delegate(5)
    with pytest.raises(LifecycleError, match="populate after activation"):
        machine.rmm.rmi_data_create(realm_id, 5, bytes(GRANULE_SIZE), 0)


def test_populate_requires_delegated_granule(machine):
    realm_id = create_realm(machine)
    with pytest.raises(OwnershipError):
        machine.rmm.rmi_data_create(realm_id, 5, bytes(GRANULE_SIZE), 0)


def test_activate_freezes_rim_and_rejects_repeat(machine):
    realm_id = create_realm(machine)
    populate(machine, realm_id, 5, b"\x01" * GRANULE_SIZE, 0)
    rim = machine.rmm.descriptor(realm_id).rim
    machine.rmm.rmi_realm_activate(realm_id)
    assert machine.rmm.descriptor(realm_id).rim == rim
    with pytest.raises(LifecycleError):
        machine.rmm.rmi_realm_activate(realm_id)


def test_rec_enter_requires_active_realm(machine):
    realm_id = create_realm(machine)
    with pytest.raises(LifecycleError):
        machine.rmm.rmi_rec_enter(realm_id)


def test_rec_enter_surfaces_host_call(machine):
    realm_id = create_realm(machine)
    machine.rmm.rmi_realm_activate(realm_id)
    machine.rmm.attach_runtime(realm_id, ScriptedRuntime([lambda rsi: rsi.host_call(b"ready")]))
    exit_reason = machine.rmm.rmi_rec_enter(realm_id)
    assert exit_reason.kind is ExitKind.HOST_CALL
    assert exit_reason.payload == b"ready"


def test_terminate_host_call_becomes_termination_request(machine):
    realm_id = create_realm(machine)
    machine.rmm.rmi_realm_activate(realm_id)
    machine.rmm.attach_runtime(
        realm_id, ScriptedRuntime([lambda rsi: rsi.host_call(b"terminate:InferenceLimit")])
    )
    exit_reason = machine.rmm.rmi_rec_enter(realm_id)
    assert exit_reason.kind is ExitKind.TERMINATION_REQUEST
    assert exit_reason.termination_reason == "InferenceLimit"


def test_host_call_payload_limit_and_mailbox(machine):
    realm_id = create_realm(machine)
    machine.rmm.rmi_realm_activate(realm_id)
    machine.rmm.set_mailbox(realm_id, 9)
    handle = RsiHandle(machine.rmm, realm_id)
    with pytest.raises(BoundsError):
        handle.host_call(b"x" * 257)
    result = handle.host_call(b"")
    assert result.kind is ExitKind.HOST_CALL and result.payload == b""
    handle.host_call(b"hello")
    raw = machine.space.access(World.NORMAL, 9, AccessKind.READ, 0, length=7)
    assert raw == b"\x05\x00hello"


def test_destroy_releases_granules_and_retains_descriptor(machine):
    realm_id = create_realm(machine)
    for granule_id in (5, 6, 7):
        populate(machine, realm_id, granule_id, b"\x33" * GRANULE_SIZE, granule_id * 4096)
    machine.rmm.rmi_realm_activate(realm_id)
    rim = machine.rmm.descriptor(realm_id).rim
    machine.rmm.rmi_realm_destroy(realm_id)
    d = machine.rmm.descriptor(realm_id)
    assert d.state.value == "destroyed"
    assert d.rim == rim  # audit record survives
    for granule_id in (5, 6, 7):
        g = machine.space.granule(granule_id)
        assert g.kind is StateKind.DELEGATED_REALM
        assert g.contents == bytes(GRANULE_SIZE)
        machine.space.undelegate(granule_id)
    assert machine.space.counts()[StateKind.REALM_OWNED] == 0
    with pytest.raises(LifecycleError):
        machine.rmm.rmi_realm_destroy(realm_id)
    with pytest.raises(LifecycleError):
        machine.rmm.rmi_rec_enter(realm_id)


def test_rsi_calls_validate_world_and_state(machine, platform):
    realm_id = create_realm(machine)
    with pytest.raises(InterfaceError):
        machine.rmm.rsi_attestation_token(realm_id, bytes(64), caller=World.NORMAL)
    with pytest.raises(LifecycleError):
        machine.rmm.rsi_attestation_token(realm_id, bytes(64), caller=World.REALM)
    machine.rmm.rmi_realm_activate(realm_id)
    report = machine.rmm.rsi_attestation_token(realm_id, b"\x01" * 64, caller=World.REALM)
    assert report.realm_token.challenge == b"\x01" * 64


def test_attestation_token_echoes_challenge_and_differs_only_there(machine):
    realm_id = create_realm(machine)
    machine.rmm.rmi_realm_activate(realm_id)
    a = machine.rmm.rsi_attestation_token(realm_id, b"\x01" * 64, caller=World.REALM)
    b = machine.rmm.rsi_attestation_token(realm_id, b"\x02" * 64, caller=World.REALM)
    assert a.realm_token.rim == b.realm_token.rim
    assert a.realm_token.rem == b.realm_token.rem
    assert a.realm_token.challenge != b.realm_token.challenge
    assert a.platform_token.signature != b.platform_token.signature


def test_measurement_extend_chains(machine):
    realm_id = create_realm(machine)
    machine.rmm.rmi_realm_activate(realm_id)
    digest = b"\x11" * 32
    machine.rmm.rsi_measurement_extend(realm_id, 0, digest, caller=World.REALM)
    once = machine.rmm.descriptor(realm_id).rem[0]
    assert once == measure.extend(bytes(32), digest)
    machine.rmm.rsi_measurement_extend(realm_id, 0, digest, caller=World.REALM)
    twice = machine.rmm.descriptor(realm_id).rem[0]
    assert twice == measure.extend(once, digest)
    assert twice != once
    with pytest.raises(BoundsError):
        machine.rmm.rsi_measurement_extend(realm_id, 4, digest, caller=World.REALM)


def test_unknown_realm(machine):
    with pytest.raises(NotFoundError):
        machine.rmm.rmi_realm_activate("realm-999")


def test_rmi_commands_reject_non_hypervisor_worlds(machine):
    realm_id = create_realm(machine)
    for world in (World.REALM, World.SECURE, World.ROOT):
        with pytest.raises(InterfaceError):
            machine.rmm.rmi_realm_create(PERS, (0, 0), caller=world)
        with pytest.raises(InterfaceError):
            machine.rmm.rmi_realm_activate(realm_id, caller=world)
        with pytest.raises(InterfaceError):
            machine.rmm.rmi_realm_destroy(realm_id, caller=world)
    assert machine.rmm.descriptor(realm_id).state.value == "new"  # nothing happened

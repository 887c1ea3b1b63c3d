"""Report assembly and appraisal: honest paths, reject reasons, tamper sweep."""

import pytest

from realmsim import attestation as att
from realmsim.errors import DecodeError
from realmsim.image import platform_key_seed, platform_measurements
from realmsim.rmm import RealmDescriptor, RealmState


def make_descriptor(rim=b"\x10" * 32, rem=None):
    return RealmDescriptor(
        realm_id="realm-1",
        state=RealmState.ACTIVE,
        rim=rim,
        rem=rem or [bytes(32)] * 4,
        personalization=b"\x20" * 64,
    )


@pytest.fixture
def refs(platform):
    return att.ReferenceValues(
        expected_rim=b"\x10" * 32,
        accepted_platform_measurements=(platform.measurements,),
        platform_public_key=platform.public_key_bytes,
    )


CHALLENGE = b"\x07" * 64


def test_honest_round_trip(platform, refs):
    report = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    assert att.verify_report(report, CHALLENGE, refs) == att.Verdict.accept()


def test_encode_decode_byte_identity(platform):
    report = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    encoded = att.encode_report(report)
    assert att.encode_report(att.decode_report(encoded)) == encoded
    assert len(encoded) < 2048


def test_stale_challenge_rejected(platform, refs):
    report = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    verdict = att.verify_report(report, b"\x08" * 64, refs)
    assert verdict == att.Verdict.reject(att.REASON_CHALLENGE)


def test_rim_mismatch_rejected(platform, refs):
    report = att.assemble_report(make_descriptor(rim=b"\x11" * 32), CHALLENGE, platform)
    assert att.verify_report(report, CHALLENGE, refs).reason == att.REASON_RIM


def test_debug_platform_rejected(refs, platform):
    debug = att.PlatformState(
        platform_key_seed(2024), platform_measurements(), lifecycle_state=att.LIFECYCLE_DEBUG
    )
    report = att.assemble_report(make_descriptor(), CHALLENGE, debug)
    assert att.verify_report(report, CHALLENGE, refs).reason == att.REASON_DEBUG


def test_unknown_platform_measurements_rejected(platform, refs):
    other = att.PlatformState(platform_key_seed(2024), [b"\x99" * 32])
    report = att.assemble_report(make_descriptor(), CHALLENGE, other)
    assert att.verify_report(report, CHALLENGE, refs).reason == att.REASON_PLATFORM


def test_wrong_signing_key_rejected(refs):
    imposter = att.PlatformState(platform_key_seed(999), platform_measurements())
    report = att.assemble_report(make_descriptor(), CHALLENGE, imposter)
    assert att.verify_report(report, CHALLENGE, refs).reason == att.REASON_SIGNATURE


def test_malformed_bytes_reject_with_decode_reason(refs):
    assert att.verify_report_bytes(b"\x00garbage", CHALLENGE, refs).reason == att.REASON_DECODE
    with pytest.raises(DecodeError):
        att.decode_report(b"")


def test_single_byte_tamper_sweep(platform, refs):
    """Every single-byte mutation of the encoded report must be rejected."""
    report = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    encoded = bytearray(att.encode_report(report))
    assert att.verify_report_bytes(bytes(encoded), CHALLENGE, refs).accepted
    for i in range(len(encoded)):
        for mask in (0x01, 0xFF):
            mutated = bytearray(encoded)
            mutated[i] ^= mask
            verdict = att.verify_report_bytes(bytes(mutated), CHALLENGE, refs)
            assert not verdict.accepted, f"mutation at byte {i} mask {mask:#x} accepted"


def test_realm_token_content_flip_fails_binding(platform, refs):
    """Flips inside realm-token field contents land on the binding check."""
    report = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    realm_bytes = att.encode_realm_token(report.realm_token)
    encoded = att.encode_report(report)
    # locate the challenge bytes inside the encoded report and flip one
    offset = encoded.index(CHALLENGE)
    mutated = bytearray(encoded)
    mutated[offset] ^= 0x01
    verdict = att.verify_report_bytes(bytes(mutated), CHALLENGE, refs)
    assert verdict.reason == att.REASON_BINDING
    assert realm_bytes in encoded  # nested token embedded verbatim


def test_extra_populated_granule_changes_rim_to_mismatch(machine, platform):
    """Two realms differing by one populate call appraise differently."""
    from realmsim.granules import GRANULE_SIZE

    realm_ids = []
    for extra in (False, True):
        realm_id = machine.rmm.rmi_realm_create(b"\x20" * 64, (0, 0))
        granule_id = 10 + len(realm_ids) * 4
        machine.space.delegate(granule_id)
        machine.rmm.rmi_data_create(realm_id, granule_id, b"\x01" * GRANULE_SIZE, 0)
        if extra:
            machine.space.delegate(granule_id + 1)
            machine.rmm.rmi_data_create(realm_id, granule_id + 1, b"\x02" * GRANULE_SIZE, 4096)
        machine.rmm.rmi_realm_activate(realm_id)
        realm_ids.append(realm_id)
    base, extra = (machine.rmm.descriptor(r) for r in realm_ids)
    refs = att.ReferenceValues(
        expected_rim=base.rim,
        accepted_platform_measurements=(platform.measurements,),
        platform_public_key=platform.public_key_bytes,
    )
    report = att.assemble_report(extra, CHALLENGE, platform)
    assert att.verify_report(report, CHALLENGE, refs).reason == att.REASON_RIM


def test_reject_reason_stable_for_same_corruption(platform, refs):
    report = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    encoded = bytearray(att.encode_report(report))
    encoded[40] ^= 0x55
    reasons = {att.verify_report_bytes(bytes(encoded), CHALLENGE, refs).reason for _ in range(5)}
    assert len(reasons) == 1


def test_verifier_accepts_exactly_matching_reports(machine, platform, refs):
    """Soundness at small scale: accept iff rim matches and challenge echoes."""
    for rim_byte, challenge, expect in [
        (0x10, CHALLENGE, True),
        (0x11, CHALLENGE, False),
        (0x10, b"\x09" * 64, False),
    ]:
        report = att.assemble_report(make_descriptor(rim=bytes([rim_byte]) * 32), challenge, platform)
        verdict = att.verify_report(report, CHALLENGE, refs)
        assert verdict.accepted == expect


def test_rem_slot_changes_encoding(platform):
    a = att.assemble_report(make_descriptor(), CHALLENGE, platform)
    rem = [bytes(32)] * 3 + [b"\x01" * 32]
    b = att.assemble_report(make_descriptor(rem=rem), CHALLENGE, platform)
    assert att.encode_report(a) != att.encode_report(b)

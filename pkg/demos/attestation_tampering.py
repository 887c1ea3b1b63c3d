#!/usr/bin/env python3
"""Show what the verifier catches: tampering, replay, debug platforms.

Run from the repository root:  python3 demos/attestation_tampering.py
"""

from realmsim import attestation as att
from realmsim.granules import GRANULE_SIZE, World
from realmsim.orchestrator import make_machine

machine = make_machine(16)
realm_id = machine.rmm.rmi_realm_create(b"\x31" * 64, (0, 0))
machine.space.delegate(2)
machine.rmm.rmi_data_create(realm_id, 2, b"\x44" * GRANULE_SIZE, 0)
machine.rmm.rmi_realm_activate(realm_id)

refs = att.ReferenceValues(
    expected_rim=machine.rmm.descriptor(realm_id).rim,
    accepted_platform_measurements=(machine.platform.measurements,),
    platform_public_key=machine.platform.public_key_bytes,
)

challenge = b"\x09" * 64
report = machine.rmm.rsi_attestation_token(realm_id, challenge, caller=World.REALM)
encoded = att.encode_report(report)
print(f"report: {len(encoded)} bytes, rim {report.realm_token.rim.hex()[:16]}...")

verdict = att.verify_report_bytes(encoded, challenge, refs)
print(f"honest report, fresh challenge      -> {'Accept' if verdict.accepted else verdict.reason}")

verdict = att.verify_report_bytes(encoded, b"\x0a" * 64, refs)
print(f"replayed report, new challenge      -> Reject({verdict.reason})")

# flip one byte inside the realm token (the binding digest catches it)
tampered = bytearray(encoded)
tampered[20] ^= 0x01
verdict = att.verify_report_bytes(bytes(tampered), challenge, refs)
print(f"one bit flipped in the realm token  -> Reject({verdict.reason})")

# flip one byte of the signature
tampered = bytearray(encoded)
tampered[-5] ^= 0x01
verdict = att.verify_report_bytes(bytes(tampered), challenge, refs)
print(f"one bit flipped in the signature    -> Reject({verdict.reason})")

rejects = 0
for i in range(len(encoded)):
    mutated = bytearray(encoded)
    mutated[i] ^= 0xFF
    if not att.verify_report_bytes(bytes(mutated), challenge, refs).accepted:
        rejects += 1
print(f"full sweep: {rejects}/{len(encoded)} single-byte mutations rejected")

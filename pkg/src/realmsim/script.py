"""Scenario scripts: ordered command lists with bit-deterministic replay.

A script is a list of {"op": ..., "args": {...}} objects covering the
hypervisor command surface plus realm-side service calls. Replay returns
one result record per command; errors become typed result entries rather
than exceptions, so adversarial scripts always run to completion.
"""

import json

from .errors import SimError
from .granules import World

OPS = (
    "delegate",
    "undelegate",
    "realm_create",
    "data_create",
    "activate",
    "rec_enter",
    "destroy",
    "measurement_extend",
    "attestation_token",
    "host_call",
)


def apply_command(machine, command: dict) -> dict:
    """Run one command against the machine; never raises for domain errors."""
    op = command.get("op")
    args = command.get("args", {})
    try:
        if op == "delegate":
            machine.space.delegate(args["granule_id"])
            return {"op": op, "ok": True}
        if op == "undelegate":
            machine.space.undelegate(args["granule_id"])
            return {"op": op, "ok": True}
        if op == "realm_create":
            personalization = bytes.fromhex(args.get("personalization", "00" * 64))
            entry = tuple(args.get("entry_point", (0, 0)))
            realm_id = machine.rmm.rmi_realm_create(personalization, entry)
            return {"op": op, "ok": True, "realm_id": realm_id}
        if op == "data_create":
            content = bytes.fromhex(args["content"]) if "content" in args else bytes(4096)
            machine.rmm.rmi_data_create(
                args["realm_id"], args["granule_id"], content, args.get("target_addr", 0)
            )
            return {"op": op, "ok": True}
        if op == "activate":
            machine.rmm.rmi_realm_activate(args["realm_id"])
            return {"op": op, "ok": True}
        if op == "rec_enter":
            exit_reason = machine.rmm.rmi_rec_enter(args["realm_id"])
            return {
                "op": op,
                "ok": True,
                "exit": exit_reason.kind.value,
                "payload": exit_reason.payload.hex(),
            }
        if op == "destroy":
            machine.rmm.rmi_realm_destroy(args["realm_id"])
            return {"op": op, "ok": True}
        if op == "measurement_extend":
            machine.rmm.rsi_measurement_extend(
                args["realm_id"],
                args.get("index", 0),
                bytes.fromhex(args.get("digest", "00" * 32)),
                caller=World.REALM,
            )
            return {"op": op, "ok": True}
        if op == "attestation_token":
            report = machine.rmm.rsi_attestation_token(
                args["realm_id"], bytes.fromhex(args.get("challenge", "00" * 128)), caller=World.REALM
            )
            return {"op": op, "ok": True, "rim": report.realm_token.rim.hex()}
        if op == "host_call":
            exit_reason = machine.rmm.rsi_host_call(
                args["realm_id"], bytes.fromhex(args.get("payload", "")), caller=World.REALM
            )
            return {"op": op, "ok": True, "exit": exit_reason.kind.value}
        return {"op": op, "ok": False, "error": "UnknownOp"}
    except SimError as exc:
        return {"op": op, "ok": False, "error": type(exc).__name__}


def run_script(machine, commands) -> list:
    return [apply_command(machine, command) for command in commands]


def load_script(path) -> list:
    with open(path) as f:
        return json.load(f)

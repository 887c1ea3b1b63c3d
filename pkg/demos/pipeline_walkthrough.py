#!/usr/bin/env python3
"""Walk through the eight-step deployment pipeline with a running commentary.

Run from the repository root:  python3 demos/pipeline_walkthrough.py
"""

from realmsim import model
from realmsim.costs import CostProfile
from realmsim.granules import StateKind
from realmsim.image import verifier_public_key
from realmsim.orchestrator import Orchestrator, PipelineConfig

STEP_NAMES = {
    1: "fetch verified realm image",
    2: "delegate memory, populate, activate",
    3: "open authenticated channel to provider",
    4: "challenge/report attestation",
    5: "sealed model delivery",
    6: "realm announces readiness",
    7: "inference via the shared exchange region",
    8: "attested update query",
}

config = PipelineConfig(
    image_path="fixtures/demo_image.bundle",
    inputs=model.demo_inputs(8, seed=42, n_features=4),
    verifier_public_key=verifier_public_key(),
    update_query=True,
    model_versions=2,
    policy=model.Policy(max_inferences=0, valid_until=0),
)

with open("fixtures/calibrated_profile.json") as f:
    profile = CostProfile.from_json(f.read())

orchestrator = Orchestrator(config, profile)
before = orchestrator.machine.space.counts()
print(f"machine: {len(orchestrator.machine.space)} granules, "
      f"{before[StateKind.NORMAL_WORLD]} in the normal world\n")

result = orchestrator.run_pipeline()

seen = set()
for entry in result.transcript:
    step = entry.get("step")
    if step in STEP_NAMES and step not in seen:
        seen.add(step)
        print(f"step {step}: {STEP_NAMES[step]}")
    if entry["event"] == "attestation":
        print(f"         challenge {entry['challenge'][:16]}..., verdict: {entry['outcome']}")
    if entry["event"] == "inference":
        print(f"         request {entry['request_id']} -> class {entry['output']}")
    if entry["event"] == "update_check":
        print(f"         provider answered: {entry['result']}")
    if entry["event"] == "termination":
        print(f"teardown: {entry['reason']}")

after = orchestrator.machine.space.counts()
print(f"\nreclamation: normal-world granules {before[StateKind.NORMAL_WORLD]} -> "
      f"{after[StateKind.NORMAL_WORLD]} (realm-owned now {after[StateKind.REALM_OWNED]})")

ledger = result.ledger
print(f"modeled instructions (workload, after idle subtraction): "
      f"boot {ledger.workload_total('boot'):,}, "
      f"inference {ledger.workload_total('inference'):,}, "
      f"termination {ledger.workload_total('termination'):,}")

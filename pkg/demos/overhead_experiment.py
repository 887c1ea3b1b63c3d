#!/usr/bin/env python3
"""Reproduce the realm-vs-normal overhead ratios from the committed profile.

Runs a reduced workload (2 runs instead of 5) to stay quick; the ratios are
identical because jitter is off by default. Expect roughly half a minute.

Run from the repository root:  python3 demos/overhead_experiment.py
"""

from realmsim.costs import CostProfile
from realmsim.experiment import ExperimentConfig, run_comparison

with open("fixtures/calibrated_profile.json") as f:
    profile = CostProfile.from_json(f.read())

print("profile: world switch", profile.world_switch_cost, "instr,",
      "vm enter", profile.vm_enter_cost, "instr,",
      profile.interrupts_per_inference, "interrupt round trips per inference\n")

report = run_comparison(profile, ExperimentConfig.for_image("98mb", runs=2), seed=0)
scenes = report["scenarios"]

print("98MB image, 40 inferences, means in millions of instructions:")
print(f"  per inference   realm {scenes['realm_vm']['per_inference']['mean'] / 1e6:10.1f}"
      f"   normal {scenes['normal_vm']['per_inference']['mean'] / 1e6:8.1f}"
      f"   ratio {report['ratios']['per_inference']:.2f}")
print(f"  boot            realm {scenes['realm_vm']['boot']['mean'] / 1e6:10.1f}"
      f"   normal {scenes['normal_vm']['boot']['mean'] / 1e6:8.1f}"
      f"   ratio {report['ratios']['boot']:.2f}")
print(f"  termination     realm {scenes['realm_vm']['termination']['mean'] / 1e6:10.1f}"
      f"   normal {scenes['normal_vm']['termination']['mean'] / 1e6:8.1f}"
      f"   ratio {report['ratios']['termination']:.2f}")

large = run_comparison(profile, ExperimentConfig.for_image("139mb", inferences=1, runs=1), seed=0)
print(f"\n139MB image: boot ratio {large['ratios']['boot']:.2f} "
      "(population cost scales with image size; switches and bases do not)")

print("\nThese are calibration-target reproductions of published endpoint")
print("measurements, not hardware results; see README for what is structural.")

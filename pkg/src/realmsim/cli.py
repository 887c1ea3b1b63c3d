"""Command-line entry point.

Subcommands:
  run           execute the eight-step pipeline from a config file
  experiment    run both cost scenarios and emit the comparison report
  calibrate     fit a cost profile to target endpoint values
  attest-verify appraise a stored attestation report against references
  make-image    build and sign a realm image bundle

Exit codes: 0 success, 1 domain failure (verification reject, policy
refusal, pipeline abort), 2 usage error.
"""

import argparse
import json
import sys

from . import experiment as exp
from .attestation import ReferenceValues, verify_report_bytes
from .costs import CostProfile
from .errors import SimError
from .image import (
    DEFAULT_MACHINE_SEED,
    DEFAULT_PROVIDER_SEED,
    DEFAULT_VERIFIER_SEED,
    build_image,
    demo_segments,
    encode_image,
    provider_key_seed,
    verifier_public_key,
)
from .orchestrator import Orchestrator, PipelineConfig


def _write_output(text: str, out_path) -> None:
    if out_path is None or out_path == "-":
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as f:
            f.write(text)


def _cmd_run(args) -> int:
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.tcp:
        config.provider_mode = "tcp"
    profile = None
    profile_path = args.profile or config.cost_profile
    if profile_path:
        with open(profile_path) as f:
            profile = CostProfile.from_json(f.read())
    result = Orchestrator(config, profile).run_pipeline()
    lines = [json.dumps(entry, sort_keys=True) for entry in result.transcript]
    _write_output("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_experiment(args) -> int:
    with open(args.profile) as f:
        profile = CostProfile.from_json(f.read())
    config = exp.ExperimentConfig.for_image(
        args.image, inferences=args.inferences, runs=args.runs, tcp=args.tcp
    )
    report = exp.run_comparison(profile, config, args.seed if args.seed is not None else 0)
    if args.format == "csv":
        _write_output(exp.report_to_csv(report), args.out)
    else:
        _write_output(exp.report_to_json(report), args.out)
    return 0


def _cmd_calibrate(args) -> int:
    targets = None
    if args.targets:
        with open(args.targets) as f:
            targets = json.load(f)
    profile = exp.calibrate(
        targets,
        world_switch_cost=args.world_switch_cost,
        vm_enter_cost=args.vm_enter_cost,
        idle_cost_per_tick=args.idle_cost,
    )
    _write_output(profile.to_json(), args.out)
    return 0


def _cmd_attest_verify(args) -> int:
    with open(args.report, "rb") as f:
        report_bytes = f.read()
    with open(args.refs) as f:
        refs = ReferenceValues.from_json_dict(json.load(f))
    challenge = bytes.fromhex(args.challenge) if args.challenge else None
    verdict = verify_report_bytes(report_bytes, challenge, refs)
    if verdict.accepted:
        print("Accept")
        return 0
    print(f"Reject: {verdict.reason}")
    return 1


def _cmd_make_image(args) -> int:
    segments = demo_segments(args.code_granules, args.work_granules, args.seed if args.seed is not None else 11)
    personalization = bytes.fromhex(args.personalization) if args.personalization else bytes(64)
    provider_public = provider_key_seed(args.provider_seed)
    from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

    provider_public = X25519PrivateKey.from_private_bytes(provider_public).public_key().public_bytes_raw()
    image = build_image(
        segments,
        entry_point=(0, 0),
        personalization=personalization,
        provider_public_key=provider_public,
        description=args.description,
        machine_seed=args.machine_seed,
        verifier_seed=args.verifier_seed,
    )
    with open(args.out, "wb") as f:
        f.write(encode_image(image))
    if args.refs_out:
        with open(args.refs_out, "w") as f:
            json.dump(image.refs.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    print(f"image: {args.out} ({image.image_size_bytes} bytes, rim {image.refs.expected_rim.hex()[:16]}...)", file=sys.stderr)
    print(f"verifier public key: {verifier_public_key(args.verifier_seed).hex()}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="realmsim", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the eight-step pipeline")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--profile", help="cost profile JSON (optional)")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--tcp", action="store_true", help="talk to the provider over a local socket")
    p_run.add_argument("--out", help="transcript path (default stdout)")
    p_run.set_defaults(func=_cmd_run)

    p_exp = sub.add_parser("experiment", help="run both scenarios and report ratios")
    p_exp.add_argument("--profile", required=True)
    p_exp.add_argument("--image", default="98mb", help="98mb, 139mb, or a granule count")
    p_exp.add_argument("--inferences", type=int, default=40)
    p_exp.add_argument("--runs", type=int, default=5)
    p_exp.add_argument("--seed", type=int)
    p_exp.add_argument("--tcp", action="store_true")
    p_exp.add_argument("--format", choices=("json", "csv"), default="json")
    p_exp.add_argument("--out")
    p_exp.set_defaults(func=_cmd_experiment)

    p_cal = sub.add_parser("calibrate", help="fit a cost profile to target values")
    p_cal.add_argument("--targets", help="JSON file overriding the built-in targets")
    p_cal.add_argument("--world-switch-cost", type=int, default=12500)
    p_cal.add_argument("--vm-enter-cost", type=int, default=5000)
    p_cal.add_argument("--idle-cost", type=int, default=500)
    p_cal.add_argument("--seed", type=int, help="accepted for interface uniformity; calibration is deterministic")
    p_cal.add_argument("--out")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_att = sub.add_parser("attest-verify", help="appraise a report file")
    p_att.add_argument("report")
    p_att.add_argument("refs")
    p_att.add_argument("--challenge", help="expected challenge (hex); omitted skips freshness")
    p_att.add_argument("--seed", type=int, help="accepted for interface uniformity")
    p_att.set_defaults(func=_cmd_attest_verify)

    p_img = sub.add_parser("make-image", help="build a signed realm image bundle")
    p_img.add_argument("--out", required=True)
    p_img.add_argument("--refs-out", help="also write reference values JSON")
    p_img.add_argument("--code-granules", type=int, default=4)
    p_img.add_argument("--work-granules", type=int, default=4)
    p_img.add_argument("--seed", type=int, help="seed for synthetic program pages")
    p_img.add_argument("--description", default="demo realm image")
    p_img.add_argument("--personalization", help="64-byte hex value")
    p_img.add_argument("--machine-seed", type=int, default=DEFAULT_MACHINE_SEED)
    p_img.add_argument("--verifier-seed", type=int, default=DEFAULT_VERIFIER_SEED)
    p_img.add_argument("--provider-seed", type=int, default=DEFAULT_PROVIDER_SEED)
    p_img.set_defaults(func=_cmd_make_image)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: bad input file or value: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

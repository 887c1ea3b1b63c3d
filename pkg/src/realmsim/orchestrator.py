"""The normal-world side: hypervisor plus client app, driving the pipeline.

One component plays both roles with role-tagged actions: it fetches and
checks the published realm image, delegates memory and populates the
realm, activates it, lets the realm provision itself against the
provider, and then feeds inference requests through a bounded exchange
region of normal-world granules. Host calls from the realm steer the
loop (readiness, update results, termination), and teardown always
reclaims every delegated granule, even on abort.
"""

import json
from dataclasses import dataclass, field

from . import channel as ch
from . import costs
from .attestation import PlatformState
from .errors import ExchangeFull, NotFoundError, SimError
from .granules import (
    GRANULE_SIZE,
    AccessKind,
    GranuleSpace,
    NormalMemoryView,
    RealmMemoryView,
    StateKind,
    World,
)
from .image import (
    DEFAULT_MACHINE_SEED,
    DEFAULT_PROVIDER_SEED,
    fetch_realm_image,
    platform_key_seed,
    platform_measurements,
    provider_key_seed,
)
from .model import Policy, demo_weights, make_package
from .provider import ModelProvider
from .rmm import ExitKind, Rmm, SimClock
from .rng import DeterministicRng
from .runtime import (
    REC_OUTPUT,
    RealmRuntime,
    RuntimeConfig,
    encode_input_record,
    parse_record,
)

EXCHANGE_GRANULES = 16
PLATFORM_KEY_GRANULE = 0


@dataclass
class PipelineConfig:
    image_path: str
    inputs_path: str | None = None
    inputs: list | None = None
    provider_mode: str = "inprocess"  # or "tcp"
    policy: Policy = field(default_factory=Policy)
    model_seed: int = 42
    model_classes: int = 3
    model_features: int = 4
    model_versions: int = 1
    update_query: bool = False
    verifier_public_key: bytes = b""
    provider_seed: int = DEFAULT_PROVIDER_SEED
    machine_seed: int = DEFAULT_MACHINE_SEED
    total_granules: int = 64
    cost_profile: str | None = None
    seed: int = 0

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        """Schema: image_path, provider {mode: inprocess|tcp}, inputs_path,
        policy_expectation {max_inferences, valid_until}, cost_profile, seed,
        plus model/fixture knobs. ``policy`` is accepted as an alias."""
        with open(path) as f:
            data = json.load(f)
        policy = Policy(**(data.pop("policy_expectation", None) or data.pop("policy", {})))
        data.pop("policy", None)
        verifier_key = bytes.fromhex(data.pop("verifier_public_key"))
        provider = data.pop("provider", {"mode": "inprocess"})
        model = data.pop("model", {})
        return cls(
            image_path=data.pop("image_path"),
            inputs_path=data.pop("inputs_path", None),
            provider_mode=provider.get("mode", provider.get("endpoint", "inprocess")),
            policy=policy,
            model_seed=model.get("seed", 42),
            model_classes=model.get("classes", 3),
            model_features=model.get("features", 4),
            model_versions=model.get("versions", 1),
            verifier_public_key=verifier_key,
            **data,
        )


def load_inputs(path) -> list:
    """One inference input per line: a JSON array of integers."""
    inputs = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                inputs.append([int(v) for v in json.loads(line)])
    return inputs


@dataclass
class Machine:
    space: GranuleSpace
    clock: SimClock
    ledger: object
    rmm: Rmm
    platform: PlatformState


def make_machine(total_granules: int, ledger=None, machine_seed: int = DEFAULT_MACHINE_SEED) -> Machine:
    """Assemble the simulated device; granule 0 is root-world key storage."""
    if ledger is None:
        ledger = costs.NullLedger()
    space = GranuleSpace(total_granules, ledger=ledger, root_granules=(PLATFORM_KEY_GRANULE,))
    key_seed = platform_key_seed(machine_seed)
    space.access(World.ROOT, PLATFORM_KEY_GRANULE, AccessKind.WRITE, 0, data=key_seed)
    platform = PlatformState(key_seed, platform_measurements())
    clock = SimClock(ledger)
    rmm = Rmm(space, platform, ledger=ledger, clock=clock)
    return Machine(space, clock, ledger, rmm, platform)


class Exchange:
    """Normal-world view of the bounded input/output region, one record per slot."""

    def __init__(self, view: NormalMemoryView, granule_ids):
        self._view = view
        self._granules = list(granule_ids)
        self._next_request_id = 0

    def _slot_state(self, granule_id: int):
        buf = self._view.read(granule_id, 0, GRANULE_SIZE)
        if buf[0] == 0:
            return "free", None
        return "record", parse_record(buf)

    def put_input(self, values) -> int:
        for granule_id in self._granules:
            state, _ = self._slot_state(granule_id)
            if state == "free":
                request_id = self._next_request_id
                self._next_request_id += 1
                self._view.write(granule_id, 0, encode_input_record(request_id, values))
                return request_id
        raise ExchangeFull(f"no free slot among {len(self._granules)} exchange granules")

    def take_outputs(self) -> list:
        """Collect unconsumed outputs in request order and free their slots."""
        collected = []
        for granule_id in self._granules:
            state, record = self._slot_state(granule_id)
            if state != "record" or record is None:
                continue
            if record.record_type != REC_OUTPUT or record.consumed:
                continue
            class_index = int.from_bytes(record.payload[:4], "little", signed=True)
            collected.append((record.request_id, class_index))
            self._view.write(granule_id, 0, bytes(record.size))
        collected.sort(key=lambda item: item[0])
        return collected


@dataclass
class PipelineResult:
    transcript: list
    ledger: object
    outputs: list
    realm_id: str | None = None


class TranscriptValidationError(SimError):
    pass


def validate_transcript(entries) -> None:
    """Steps must run 1..6 in order, then any mix of 7/8, then termination."""
    steps = [e["step"] for e in entries if e.get("step") is not None]
    if [s for s in steps if s <= 6] != [1, 2, 3, 4, 5, 6]:
        raise TranscriptValidationError(f"setup steps out of order: {steps}")
    if any(b < a for a, b in zip(steps, steps[1:])):
        raise TranscriptValidationError(f"step numbers decrease: {steps}")
    if not entries or entries[-1].get("event") != "termination":
        raise TranscriptValidationError("transcript does not end in termination")


class Orchestrator:
    def __init__(self, config: PipelineConfig, profile: costs.CostProfile | None = None):
        self.config = config
        self.ledger = costs.CostLedger(profile if profile is not None else costs.CostProfile())
        self.machine = make_machine(config.total_granules, self.ledger, config.machine_seed)
        self.rng = DeterministicRng(config.seed)
        self._tcp_server = None

    # -- exchange ----------------------------------------------------------

    def _entry(self, transcript, step, event, **extra):
        entry = {"step": step, "event": event, "tick": self.machine.clock.tick}
        entry.update(extra)
        transcript.append(entry)

    def _build_provider(self, refs):
        """Provider starts with version 1; later versions are published after
        provisioning so an update query has something to find."""
        weights, bias = demo_weights(self.config.model_seed, self.config.model_classes, self.config.model_features)
        provider = ModelProvider(
            refs,
            provider_key_seed(self.config.provider_seed),
            [make_package(1, weights, bias, self.config.policy)],
            self.rng,
            clock=self.machine.clock,
        )
        pending = []
        for version in range(2, self.config.model_versions + 1):
            w2, b2 = demo_weights(self.config.model_seed + version, self.config.model_classes, self.config.model_features)
            pending.append(make_package(version, w2, b2, self.config.policy))
        return provider, pending

    def _open_channel(self, provider):
        if self.config.provider_mode == "tcp":
            self._tcp_server = ch.TcpProviderServer(provider).start()
            return ch.TcpChannel(self._tcp_server.host, self._tcp_server.port)
        return ch.InProcessChannel(provider.new_session())

    def _provider_session(self, provider):
        return provider.sessions[-1] if provider.sessions else None

    # -- the eight-step pipeline --------------------------------------------

    def run_pipeline(self, inputs=None) -> PipelineResult:
        config = self.config
        if inputs is None:
            inputs = config.inputs if config.inputs is not None else load_inputs(config.inputs_path)
        transcript: list = []
        ledger = self.ledger
        machine = self.machine
        outputs: list = []
        realm_id = None
        delegated: list = []
        channel = None
        initial_normal = machine.space.counts()[StateKind.NORMAL_WORLD]
        try:
            ledger.set_phase(costs.PHASE_BOOT)
            image = fetch_realm_image(config.image_path, config.verifier_public_key)
            self._entry(transcript, 1, "fetch_image", image_bytes=image.image_size_bytes)

            provider, pending_updates = self._build_provider(image.refs)
            channel = self._open_channel(provider)

            # Step 2: delegate, populate, activate.
            realm_id = machine.rmm.rmi_realm_create(image.personalization, image.entry_point)
            free = [i for i in machine.space.normal_world_ids() if i != PLATFORM_KEY_GRANULE]
            needed = len(image.segments)
            if needed + EXCHANGE_GRANULES + 1 > len(free):
                raise SimError("machine too small for image plus exchange region")
            image_granules = free[:needed]
            exchange_granules = free[needed : needed + EXCHANGE_GRANULES]
            mailbox = free[needed + EXCHANGE_GRANULES]
            for granule_id, (target_addr, content) in zip(image_granules, image.segments):
                machine.space.delegate(granule_id)
                delegated.append(granule_id)
                machine.rmm.rmi_data_create(realm_id, granule_id, content, target_addr)
            machine.rmm.rmi_realm_activate(realm_id)
            ledger.record(costs.EV_BOOT_BASE_REALM, actor="realm")
            self._entry(transcript, 2, "realm_activated", granules=len(image_granules))

            # Working pages (zero-content segments) hold the model mirror.
            store = [
                gid
                for gid, (_, content) in zip(image_granules, image.segments)
                if content == bytes(GRANULE_SIZE)
            ]
            runtime = RealmRuntime(
                RealmMemoryView(machine.space, realm_id),
                exchange_granules,
                RuntimeConfig(
                    pinned_provider_key=image.provider_public_key,
                    channel_key_seed=self.rng.child("realm-channel").bytes(32),
                    update_on_idle=config.update_query,
                ),
                provider_channel=channel,
                model_store_granules=store,
                ledger=ledger,
            )
            machine.rmm.attach_runtime(realm_id, runtime)
            machine.rmm.set_mailbox(realm_id, mailbox)

            # Steps 3-6 happen inside the first realm entry.
            ledger.set_phase(costs.PHASE_PROVISIONING)
            exit_reason = machine.rmm.rmi_rec_enter(realm_id)
            if exit_reason.kind is not ExitKind.HOST_CALL or exit_reason.payload != b"ready":
                raise SimError(f"realm failed to provision: {exit_reason}")
            session = self._provider_session(provider)
            self._entry(transcript, 3, "channel_established", provider_messages=session.provider_message_count())
            verdict = session.verdicts[0]
            challenge = provider.challenge_log[0]
            self._entry(
                transcript,
                4,
                "attestation",
                outcome="accept" if verdict.accepted else verdict.reason,
                challenge=challenge.hex(),
            )
            self._entry(transcript, 5, "model_delivered", version=provider.latest.version)
            self._entry(transcript, 6, "ready_announced")

            # Step 7: feed the batch through the exchange region.
            ledger.set_phase(costs.PHASE_INFERENCE)
            exchange = Exchange(NormalMemoryView(machine.space), exchange_granules)
            terminated = None
            for values in inputs:
                request_id = exchange.put_input(values)
                exit_reason = machine.rmm.rmi_rec_enter(realm_id)
                if exit_reason.kind is ExitKind.TERMINATION_REQUEST:
                    terminated = exit_reason
                    break
                for rid, class_index in exchange.take_outputs():
                    outputs.append((rid, class_index))
                    self._entry(transcript, 7, "inference", request_id=rid, output=class_index)

            # Step 8: one idle entry lets the realm query for updates.
            if config.update_query and terminated is None:
                for package in pending_updates:
                    provider.add_package(package)
                exit_reason = machine.rmm.rmi_rec_enter(realm_id)
                if exit_reason.kind is ExitKind.TERMINATION_REQUEST:
                    terminated = exit_reason
                elif exit_reason.kind is ExitKind.HOST_CALL:
                    self._entry(transcript, 8, "update_check", result=exit_reason.payload.decode("ascii", "replace"))

            ledger.set_phase(costs.PHASE_TERMINATION)
            reason = terminated.termination_reason if terminated is not None else "batch-complete"
            machine.rmm.rmi_realm_destroy(realm_id)
            ledger.record(costs.EV_TERMINATION_BASE_REALM, actor="realm")
            self._entry(transcript, None, "termination", reason=reason)
            for granule_id in delegated:
                machine.space.undelegate(granule_id)
            delegated.clear()
            return PipelineResult(transcript, ledger, outputs, realm_id)
        except Exception:
            self._reclaim(realm_id, delegated)
            raise
        finally:
            if channel is not None:
                channel.close()
            if self._tcp_server is not None:
                self._tcp_server.stop()
                self._tcp_server = None
            final_normal = machine.space.counts()[StateKind.NORMAL_WORLD]
            assert final_normal == initial_normal, "granules leaked during teardown"

    def _reclaim(self, realm_id, delegated) -> None:
        """Abort-path teardown: destroy whatever exists, then undelegate."""
        rmm = self.machine.rmm
        if realm_id is not None:
            try:
                rmm.rmi_realm_destroy(realm_id)
            except (SimError, NotFoundError):
                pass
        for granule_id in list(delegated):
            try:
                self.machine.space.undelegate(granule_id)
            except SimError:
                pass
        delegated.clear()

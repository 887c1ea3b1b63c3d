"""World-switch and instruction-cost accounting.

Every module reports events to one append-only ledger; a cost profile
maps event types to modeled instruction counts. The profile's numbers
are calibrated against published endpoint measurements (see
``experiment.calibrate``), so totals here are modeled quantities, not
hardware measurements. Idle instructions accrue per simulated clock tick
and are removed by baseline subtraction, mirroring how a workload's cost
is isolated on an instruction-accurate platform simulator.
"""

import json
from dataclasses import dataclass, field, fields

from .errors import ConfigError, MeasurementError

EV_WORLD_SWITCH = "world_switch"
EV_VM_ENTER = "vm_enter"
EV_POPULATE = "populate"
EV_INFERENCE_COMPUTE = "inference_compute"
EV_BOOT_BASE_REALM = "boot_base_realm"
EV_BOOT_BASE_NORMAL = "boot_base_normal"
EV_TERMINATION_BASE_REALM = "termination_base_realm"
EV_TERMINATION_BASE_NORMAL = "termination_base_normal"
EV_IDLE_TICK = "idle_tick"
EV_MEMORY_ACCESS = "memory_access"
EV_INTERRUPT_WORLD_SWITCH = "interrupt_world_switch"
EV_INTERRUPT_VM_ENTER = "interrupt_vm_enter"

PHASE_SETUP = "setup"
PHASE_BOOT = "boot"
PHASE_PROVISIONING = "provisioning"
PHASE_INFERENCE = "inference"
PHASE_TERMINATION = "termination"


@dataclass(frozen=True)
class CostProfile:
    """Per-event modeled instruction costs.

    ``interrupts_per_inference`` is the number of extra enter/exit round
    trips one inference incurs from interrupt handling; it is what lets a
    calibrated profile express a large per-inference switching gap while
    keeping per-page population costs non-negative.
    """

    world_switch_cost: int = 0
    vm_enter_cost: int = 0
    inference_compute_cost: int = 0
    populate_cost_per_byte: float = 0.0
    boot_base_realm: int = 0
    boot_base_normal: int = 0
    termination_base_realm: int = 0
    termination_base_normal: int = 0
    idle_cost_per_tick: int = 0
    interrupts_per_inference: int = 0
    jitter_sigmas: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in fields(self):
            if f.name == "jitter_sigmas":
                continue
            value = getattr(self, f.name)
            if value < 0:
                raise ConfigError(f"profile entry {f.name} must be non-negative")

    def to_json(self) -> str:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        if not data["jitter_sigmas"]:
            del data["jitter_sigmas"]
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CostProfile":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown profile entries: {sorted(unknown)}")
        return cls(**data)


@dataclass
class CostEvent:
    __slots__ = ("event", "actor", "tick", "phase", "count", "instructions")
    event: str
    actor: str
    tick: int
    phase: str
    count: int
    instructions: int


class CostLedger:
    def __init__(self, profile: CostProfile):
        self.profile = profile
        self.entries: list[CostEvent] = []
        self._phase = PHASE_SETUP
        self._tick = 0
        self._totals: dict[str, int] = {}
        self._idle_totals: dict[str, int] = {}

    @property
    def phase(self) -> str:
        return self._phase

    def set_phase(self, phase: str) -> None:
        self._phase = phase

    def set_tick(self, tick: int) -> None:
        self._tick = tick

    def _cost_of(self, event: str, size) -> int:
        p = self.profile
        if event == EV_WORLD_SWITCH or event == EV_INTERRUPT_WORLD_SWITCH:
            return p.world_switch_cost
        if event == EV_VM_ENTER or event == EV_INTERRUPT_VM_ENTER:
            return p.vm_enter_cost
        if event == EV_POPULATE:
            if size is None:
                raise ConfigError("populate events require a size")
            return round(p.populate_cost_per_byte * size)
        if event == EV_INFERENCE_COMPUTE:
            return p.inference_compute_cost
        if event == EV_BOOT_BASE_REALM:
            return p.boot_base_realm
        if event == EV_BOOT_BASE_NORMAL:
            return p.boot_base_normal
        if event == EV_TERMINATION_BASE_REALM:
            return p.termination_base_realm
        if event == EV_TERMINATION_BASE_NORMAL:
            return p.termination_base_normal
        if event == EV_IDLE_TICK:
            return p.idle_cost_per_tick
        if event == EV_MEMORY_ACCESS:
            return 0
        raise ConfigError(f"unknown event type: {event}")

    def record(self, event: str, actor: str = "normal", size=None, count: int = 1) -> None:
        instructions = self._cost_of(event, size) * count
        self.entries.append(CostEvent(event, actor, self._tick, self._phase, count, instructions))
        self._totals[self._phase] = self._totals.get(self._phase, 0) + instructions
        if event == EV_IDLE_TICK:
            self._idle_totals[self._phase] = self._idle_totals.get(self._phase, 0) + instructions

    def world_switches(self, n: int, actor: str = "root") -> None:
        for _ in range(n):
            self.record(EV_WORLD_SWITCH, actor=actor)

    def vm_enters(self, n: int, actor: str = "normal") -> None:
        for _ in range(n):
            self.record(EV_VM_ENTER, actor=actor)

    def rec_enter_round_trip(self) -> None:
        """One realm entry/exit: 4 world switches plus the hypervisor's own
        VM-entry machinery, which a normal VM entry also pays."""
        self.vm_enters(2)
        self.world_switches(4)

    def normal_vm_round_trip(self) -> None:
        self.vm_enters(2)

    def memory_access(self, actor) -> None:
        self.record(EV_MEMORY_ACCESS, actor=getattr(actor, "value", str(actor)))

    def idle_tick(self) -> None:
        self.record(EV_IDLE_TICK, actor="platform")

    def total(self, phase: str | None = None) -> int:
        if phase is None:
            return sum(self._totals.values())
        return self._totals.get(phase, 0)

    def idle_total(self, phase: str | None = None) -> int:
        if phase is None:
            return sum(self._idle_totals.values())
        return self._idle_totals.get(phase, 0)

    def workload_total(self, phase: str | None = None) -> int:
        return baseline_subtract(self.total(phase), self.idle_total(phase))

    def count_events(self, event: str, phase: str | None = None) -> int:
        return sum(
            e.count
            for e in self.entries
            if e.event == event and (phase is None or e.phase == phase)
        )

    def recomputed_total(self, phase: str | None = None) -> int:
        """Sum over raw entries; exists so tests can check ledger conservation."""
        return sum(e.instructions for e in self.entries if phase is None or e.phase == phase)


def baseline_subtract(total: int, idle: int) -> int:
    """Workload instructions = observed total minus the idle baseline."""
    if idle > total:
        raise MeasurementError(f"idle count {idle} exceeds total {total}")
    return total - idle


class NullLedger:
    """Stands in when cost accounting is irrelevant (unit tests, fuzzing)."""

    def __init__(self):
        self.profile = CostProfile()

    def set_phase(self, phase):
        pass

    def set_tick(self, tick):
        pass

    def record(self, event, actor="normal", size=None, count=1):
        pass

    def world_switches(self, n, actor="root"):
        pass

    def vm_enters(self, n, actor="normal"):
        pass

    def rec_enter_round_trip(self):
        pass

    def normal_vm_round_trip(self):
        pass

    def memory_access(self, actor):
        pass

    def idle_tick(self):
        pass

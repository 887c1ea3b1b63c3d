"""Deterministic simulator of a realm-based confidential ML deployment pipeline.

The package models a machine with four hardware-isolated address spaces,
a realm lifecycle monitor with measured boot and attestation, a model
provider that releases weights only to verified realms, a realm-side
inference runtime with usage policies, and a world-switch cost model
that reproduces published overhead ratios from a calibrated profile.
"""

from .attestation import (
    AttestationReport,
    PlatformState,
    ReferenceValues,
    Verdict,
    assemble_report,
    verify_report,
    verify_report_bytes,
)
from .costs import CostLedger, CostProfile, baseline_subtract
from .errors import (
    AccessViolation,
    BoundsError,
    ConfigError,
    DecodeError,
    ExchangeFull,
    ImageVerificationError,
    IntegrityError,
    InterfaceError,
    LifecycleError,
    MeasurementError,
    NotFoundError,
    OwnershipError,
    PolicyExhausted,
    ProtocolError,
    SimError,
    StateError,
)
from .granules import GRANULE_SIZE, AccessKind, GranuleSpace, StateKind, World
from .measure import MeasurementRecord, extend, image_measurement
from .model import ModelPackage, Policy, classify, make_package
from .orchestrator import Machine, Orchestrator, PipelineConfig, make_machine, validate_transcript
from .provider import ModelProvider
from .rmm import ExitKind, ExitReason, RealmDescriptor, RealmState, Rmm
from .runtime import RealmRuntime, RuntimeConfig

__all__ = [name for name in dir() if not name.startswith("_")]

"""Model packages and the fixed-point affine classifier.

Weights, biases, and inputs are 32-bit signed integers at scale 2^-16.
Scores are accumulated in 64-bit integer arithmetic so results are
bit-identical on every platform; an explicit bound check guards the
64-bit contract.
"""

import struct
from dataclasses import dataclass

from . import codec
from .errors import DecodeError, IntegrityError
from .measure import content_digest
from .rng import DeterministicRng

SCALE_BITS = 16
SCALE = 1 << SCALE_BITS

UNLIMITED = 0
_INT32_MAX = 1 << 31
_INT64_MAX = 1 << 63
_MAX_FEATURES = 1024


@dataclass(frozen=True)
class Policy:
    """Usage bounds delivered with the model; 0 means unlimited."""

    max_inferences: int = UNLIMITED
    valid_until: int = UNLIMITED


@dataclass(frozen=True)
class ModelPackage:
    version: int
    n_classes: int
    n_features: int
    weights: tuple  # n_classes rows of n_features ints
    bias: tuple  # n_classes ints
    policy: Policy
    digest: bytes

    def verify_digest(self) -> bool:
        return weight_digest(self.n_classes, self.n_features, self.weights, self.bias) == self.digest


def encode_weights(n_classes: int, n_features: int, weights, bias) -> bytes:
    """Canonical weight encoding: dims then row-major int32 LE values."""
    if len(weights) != n_classes or len(bias) != n_classes:
        raise ValueError("weight shape does not match declared dimensions")
    out = bytearray(struct.pack("<II", n_classes, n_features))
    for row in weights:
        if len(row) != n_features:
            raise ValueError("weight row length does not match feature count")
        out += struct.pack(f"<{n_features}i", *row)
    out += struct.pack(f"<{n_classes}i", *bias)
    return bytes(out)


def weight_digest(n_classes: int, n_features: int, weights, bias) -> bytes:
    return content_digest(encode_weights(n_classes, n_features, weights, bias))


def make_package(version: int, weights, bias, policy: Policy) -> ModelPackage:
    n_classes = len(weights)
    n_features = len(weights[0]) if weights else 0
    weights = tuple(tuple(row) for row in weights)
    bias = tuple(bias)
    return ModelPackage(
        version=version,
        n_classes=n_classes,
        n_features=n_features,
        weights=weights,
        bias=bias,
        policy=policy,
        digest=weight_digest(n_classes, n_features, weights, bias),
    )


def classify(weights, bias, values) -> int:
    """argmax_c sum_d W[c][d]*x[d] + b[c]; ties resolve to the lowest class."""
    n_features = len(values)
    if n_features > _MAX_FEATURES:
        raise ValueError(f"feature count {n_features} exceeds {_MAX_FEATURES}")
    for v in values:
        if not -_INT32_MAX <= v < _INT32_MAX:
            raise ValueError("input value outside 32-bit range")
    best_class = 0
    best_score = None
    for c, row in enumerate(weights):
        score = bias[c]
        for w, x in zip(row, values):
            score += w * x
        if not -_INT64_MAX <= score < _INT64_MAX:
            raise ValueError("score overflows 64-bit accumulator")
        if best_score is None or score > best_score:
            best_score = score
            best_class = c
    return best_class


def encode_package(package: ModelPackage) -> bytes:
    return codec.encode(
        {
            0: package.version,
            1: package.n_classes,
            2: package.n_features,
            3: struct.pack(
                f"<{package.n_classes * package.n_features}i",
                *(v for row in package.weights for v in row),
            ),
            4: struct.pack(f"<{package.n_classes}i", *package.bias),
            5: [package.policy.max_inferences, package.policy.valid_until],
            6: package.digest,
        }
    )


def decode_package(data: bytes) -> ModelPackage:
    obj = codec.decode(data)
    try:
        version = obj[0]
        n_classes = obj[1]
        n_features = obj[2]
        weight_bytes = obj[3]
        bias_bytes = obj[4]
        max_inf, valid_until = obj[5]
        digest = obj[6]
    except (KeyError, TypeError, ValueError):
        raise DecodeError("model package missing required fields") from None
    if len(weight_bytes) != 4 * n_classes * n_features or len(bias_bytes) != 4 * n_classes:
        raise DecodeError("model package weight sizes inconsistent with dimensions")
    flat = struct.unpack(f"<{n_classes * n_features}i", weight_bytes)
    weights = tuple(
        tuple(flat[c * n_features : (c + 1) * n_features]) for c in range(n_classes)
    )
    bias = struct.unpack(f"<{n_classes}i", bias_bytes)
    package = ModelPackage(
        version=version,
        n_classes=n_classes,
        n_features=n_features,
        weights=weights,
        bias=bias,
        policy=Policy(max_inferences=max_inf, valid_until=valid_until),
        digest=digest,
    )
    if not package.verify_digest():
        raise IntegrityError("model package digest mismatch")
    return package


def write_package(package: ModelPackage, path) -> None:
    """Package file format on disk: the wire encoding, stable across runs."""
    with open(path, "wb") as f:
        f.write(encode_package(package))


def read_package(path) -> ModelPackage:
    with open(path, "rb") as f:
        return decode_package(f.read())


def demo_weights(seed: int = 42, n_classes: int = 3, n_features: int = 4):
    """Pseudo-random fixture weights, small enough to stay far from overflow."""
    rng = DeterministicRng(seed, "demo-model")
    weights = [
        [rng.int_range(-4 * SCALE, 4 * SCALE) for _ in range(n_features)]
        for _ in range(n_classes)
    ]
    bias = [rng.int_range(-2 * SCALE, 2 * SCALE) for _ in range(n_classes)]
    return weights, bias


def demo_inputs(count: int, seed: int = 42, n_features: int = 4):
    rng = DeterministicRng(seed, "demo-inputs")
    return [
        [rng.int_range(-8 * SCALE, 8 * SCALE) for _ in range(n_features)]
        for _ in range(count)
    ]

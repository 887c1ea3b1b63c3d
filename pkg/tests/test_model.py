"""Classifier and package: oracle comparisons, tie-breaks, integrity."""

import pytest

from realmsim import model
from realmsim.errors import DecodeError, IntegrityError


def oracle_classify(weights, bias, values):
    """Direct affine argmax, written independently of the production path."""
    scores = []
    for c in range(len(weights)):
        total = bias[c]
        for d in range(len(values)):
            total = total + weights[c][d] * values[d]
        scores.append(total)
    best = max(scores)
    return scores.index(best)


def test_zero_weights_argmax_of_bias():
    weights = [[0, 0], [0, 0], [0, 0]]
    bias = [1 * model.SCALE, 3 * model.SCALE, 2 * model.SCALE]
    assert model.classify(weights, bias, [12345, -99]) == 1


def test_identity_weights_one_hot():
    weights = [[model.SCALE if i == j else 0 for j in range(3)] for i in range(3)]
    bias = [0, 0, 0]
    one_hot_at_2 = [0, 0, model.SCALE]
    assert model.classify(weights, bias, one_hot_at_2) == 2


def test_fixture_weights_match_oracle():
    weights, bias = model.demo_weights(seed=42, n_classes=3, n_features=4)
    for values in model.demo_inputs(50, seed=7, n_features=4):
        assert model.classify(weights, bias, values) == oracle_classify(weights, bias, values)


def test_ties_break_to_lowest_class():
    weights = [[0], [0], [0]]
    bias = [5, 5, 5]
    assert model.classify(weights, bias, [123]) == 0
    bias = [1, 5, 5]
    assert model.classify(weights, bias, [123]) == 1


def test_overflow_guard():
    weights = [[(1 << 30)] * 1024]
    bias = [0]
    with pytest.raises(ValueError, match="overflow"):
        model.classify(weights, bias, [(1 << 30)] * 1024)
    with pytest.raises(ValueError, match="feature count"):
        model.classify([[0] * 1025], [0], [0] * 1025)


def test_package_round_trip():
    weights, bias = model.demo_weights()
    package = model.make_package(3, weights, bias, model.Policy(max_inferences=9, valid_until=100))
    decoded = model.decode_package(model.encode_package(package))
    assert decoded == package
    assert decoded.verify_digest()


def test_package_digest_covers_weights():
    weights, bias = model.demo_weights()
    a = model.make_package(1, weights, bias, model.Policy())
    tampered = [list(row) for row in weights]
    tampered[0][0] += 1
    b = model.make_package(1, tampered, bias, model.Policy())
    assert a.digest != b.digest


def test_corrupted_package_rejected():
    weights, bias = model.demo_weights()
    package = model.make_package(1, weights, bias, model.Policy())
    encoded = bytearray(model.encode_package(package))
    # flip one byte inside the weight array region
    idx = encoded.index(b"\x00" * 0) + len(encoded) // 2
    encoded[idx] ^= 0xFF
    with pytest.raises((IntegrityError, DecodeError)):
        model.decode_package(bytes(encoded))


def test_package_file_format_stable(tmp_path):
    weights, bias = model.demo_weights()
    package = model.make_package(2, weights, bias, model.Policy(max_inferences=7))
    path_a, path_b = tmp_path / "a.pkg", tmp_path / "b.pkg"
    model.write_package(package, path_a)
    model.write_package(package, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    assert model.read_package(path_a) == package

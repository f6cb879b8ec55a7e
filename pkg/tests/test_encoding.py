import math
import random

import pytest

from ssxgb import bcp
from ssxgb.encoding import (EncodingOverflowError, FixedPointConfig, decode,
                            decode_signed, encode, round_ratio)

N = (1 << 127) - 1   # any odd modulus works for pure encode/decode tests
F = 24


def test_encode_zero_and_negative_one():
    assert encode(0.0, F, N) == 0
    assert encode(-1.0, F, N) == N - (1 << F)
    assert decode(1 << F, F, N) == 1.0
    assert decode(N - (1 << F), F, N) == -1.0


def test_roundtrip_within_half_ulp():
    rng = random.Random(3)
    for _ in range(1000):
        v = rng.uniform(-1e3, 1e3)
        got = decode(encode(v, F, N), F, N)
        assert abs(got - v) <= 2.0 ** -F


def test_encode_preserves_ordering():
    rng = random.Random(4)
    vals = sorted(rng.uniform(-50, 50) for _ in range(200))
    decoded = [decode(encode(v, F, N), F, N) for v in vals]
    assert decoded == sorted(decoded)


def test_rejects_non_finite_and_overflow():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(EncodingOverflowError):
            encode(bad, F, N)
    with pytest.raises(EncodingOverflowError):
        encode(2.0 ** 20, F, N, value_bits=16)
    encode(2.0 ** 15, F, N, value_bits=16)   # inside the bound


def test_decode_signed():
    assert decode_signed(5, N) == 5
    assert decode_signed(N - 5, N) == -5


def test_round_ratio_half_away_from_zero():
    assert round_ratio(3, 2) == 2
    assert round_ratio(-3, 2) == -2
    assert round_ratio(1, 3) == 0
    assert round_ratio(2, 3) == 1
    assert round_ratio(7, 1) == 7
    assert round_ratio(-7, -1) == 7
    with pytest.raises(ZeroDivisionError):
        round_ratio(1, 0)
    rng = random.Random(5)
    for _ in range(500):
        num = rng.randrange(-10**9, 10**9)
        den = rng.randrange(1, 10**6)
        assert abs(round_ratio(num, den) - num / den) <= 0.5 + 1e-9


def test_config_bound_and_headroom():
    fpc = FixedPointConfig(scale_exp=24, quotient_exp=24, value_bits=16)
    assert fpc.bound_exp == 40
    assert fpc.headroom_ok((1 << 512), mask_bits=40)
    assert not fpc.headroom_ok((1 << 80), mask_bits=40)


def test_homomorphic_sum_of_encodings(toy_params):
    pp, _ = toy_params
    rng = random.Random(6)
    kp = bcp.keygen(pp, rng=rng)
    f = 10
    for _ in range(100):
        x = rng.uniform(-100, 100)
        y = rng.uniform(-100, 100)
        c1 = bcp.enc(pp, kp.pk, encode(x, f, pp.n), rng=rng)
        c2 = bcp.enc(pp, kp.pk, encode(y, f, pp.n), rng=rng)
        total = bcp.Ciphertext(a=c1.a * c2.a % pp.n_sq, b=c1.b * c2.b % pp.n_sq,
                               key_id=kp.key_id)
        got = decode(bcp.dec(pp, kp.sk, total), f, pp.n)
        assert abs(got - (x + y)) <= 2.0 ** (1 - f)

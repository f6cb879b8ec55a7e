import random

import pytest

from ssxgb import bcp
from ssxgb.encoding import FixedPointConfig, decode
from ssxgb.federation import CommMeter, MessageBus
from ssxgb.subprotocols import ServerC, ServerS


@pytest.fixture(scope="session")
def toy_params():
    """64-bit safe primes: fast enough for per-test loops."""
    rng = random.Random(1001)
    return bcp.setup(64, rng=rng, allow_toy=True)


@pytest.fixture(scope="session")
def small_params():
    """128-bit safe primes: enough headroom for every sub-protocol."""
    rng = random.Random(2002)
    return bcp.setup(128, rng=rng, allow_toy=True)


class ProtocolHarness:
    """Two users, both servers, and a bus over one parameter set."""

    def __init__(self, pp, mk, seed=0, fpc=None, mask_bits=16):
        self.pp, self.mk = pp, mk
        rng = random.Random(seed)
        self.kp1 = bcp.keygen(pp, rng=rng, key_id="u0")
        self.kp2 = bcp.keygen(pp, rng=rng, key_id="u1")
        self.user_pks = {"u0": self.kp1.pk, "u1": self.kp2.pk}
        self.fpc = fpc or FixedPointConfig(scale_exp=10, quotient_exp=10, value_bits=12)
        self.meter = CommMeter(zeta=pp.ciphertext_bytes)
        self.bus = MessageBus(self.meter)
        self.server_s = ServerS(pp, mk, self.user_pks, rng=random.Random(seed + 1))
        self.bus.register("S", self.server_s.handle)
        self.server_c = ServerC(pp, self.user_pks, self.bus, self.fpc,
                                mask_bits=mask_bits, rng=random.Random(seed + 2))

    def enc(self, value, scale=None):
        return self.server_c.encrypt_value(value, self.fpc.scale_exp if scale is None else scale)

    def dec(self, sc):
        raw = bcp.mdec(self.pp, self.server_c.user_pks[sc.ct.key_id], self.mk, sc.ct)
        return decode(raw, sc.scale, self.pp.n)

    def dec_raw(self, ct):
        key = ct.ct.key_id if hasattr(ct, "ct") else ct.key_id
        inner = ct.ct if hasattr(ct, "ct") else ct
        return bcp.mdec(self.pp, self.server_c.user_pks[key], self.mk, inner)


@pytest.fixture()
def harness(small_params):
    pp, mk = small_params
    return ProtocolHarness(pp, mk, seed=42)

"""Two-server secure computation on BCP ciphertexts.

Server C orchestrates: it holds public keys only, masks every plaintext-
bearing value before involving server S, and strips the masks from S's
replies.  Server S holds the master key and decrypts exactly what C sends
it.  Component-wise ciphertext products give addition for free; the
interactive protocols below supply multiplication, key transformation,
comparison, division, a fused split-gain evaluation, and argmax.

Every interactive exchange is a blocking request/response over the
federation bus and is byte-metered per protocol.
"""

import random
from dataclasses import dataclass
from fractions import Fraction

import gmpy2

from . import bcp
from .bcp import Ciphertext, MasterKey, PublicParams
from .encoding import (FixedPointConfig, ScaledCiphertext, decode_signed,
                       round_ratio)

JOINT_KEY = "joint"


class ProtocolError(Exception):
    """Raised when a sub-protocol precondition or exchange fails."""


class KeyMismatchError(ProtocolError):
    """Raised when operands are under different public keys."""


class ScaleError(ProtocolError):
    """Raised when operands carry incompatible fixed-point scales."""


@dataclass(frozen=True)
class ComparisonResult:
    """Outcome of the encrypted less/greater-than protocol: 1 iff m1 < m2."""

    u_star: int


# --- local (non-interactive) homomorphic operations -------------------------

def raw_add(pp: PublicParams, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    if c1.key_id != c2.key_id:
        raise KeyMismatchError(f"add across keys {c1.key_id!r} vs {c2.key_id!r}")
    n_sq = pp.n_sq
    return Ciphertext(a=int(gmpy2.mul(c1.a, c2.a) % n_sq),
                      b=int(gmpy2.mul(c1.b, c2.b) % n_sq),
                      key_id=c1.key_id)


def raw_exp(pp: PublicParams, c: Ciphertext, k: int) -> Ciphertext:
    """Ciphertext of k*m from a ciphertext of m, k a signed integer constant.

    Negative constants use the component inverse, which decrypts identically
    to the textbook exponent N+k but costs an inversion instead of a full
    exponentiation.
    """
    n_sq = pp.n_sq
    if k < 0:
        pos = raw_exp(pp, c, -k)
        return Ciphertext(a=int(gmpy2.invert(pos.a, n_sq)),
                          b=int(gmpy2.invert(pos.b, n_sq)),
                          key_id=c.key_id)
    return Ciphertext(a=int(gmpy2.powmod(c.a, k, n_sq)),
                      b=int(gmpy2.powmod(c.b, k, n_sq)),
                      key_id=c.key_id)


def raw_neg(pp: PublicParams, c: Ciphertext) -> Ciphertext:
    return raw_exp(pp, c, -1)


def raw_sub(pp: PublicParams, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return raw_add(pp, c1, raw_neg(pp, c2))


def add(pp: PublicParams, c1: ScaledCiphertext, c2: ScaledCiphertext) -> ScaledCiphertext:
    if c1.scale != c2.scale:
        raise ScaleError(f"add requires equal scales, got {c1.scale} vs {c2.scale}")
    return ScaledCiphertext(ct=raw_add(pp, c1.ct, c2.ct), scale=c1.scale)


def neg(pp: PublicParams, c: ScaledCiphertext) -> ScaledCiphertext:
    return ScaledCiphertext(ct=raw_neg(pp, c.ct), scale=c.scale)


def exp(pp: PublicParams, c: ScaledCiphertext, k: int, k_scale: int = 0) -> ScaledCiphertext:
    """Multiply by the integer constant k; if k encodes a fixed-point value,
    pass its scale so the result records scale + k_scale."""
    return ScaledCiphertext(ct=raw_exp(pp, c.ct, k), scale=c.scale + k_scale)


def sub(pp: PublicParams, c1: ScaledCiphertext, c2: ScaledCiphertext) -> ScaledCiphertext:
    if c1.scale != c2.scale:
        raise ScaleError(f"sub requires equal scales, got {c1.scale} vs {c2.scale}")
    return ScaledCiphertext(ct=raw_sub(pp, c1.ct, c2.ct), scale=c1.scale)


def key_prod(pp: PublicParams, user_pks: dict) -> int:
    """Joint public key: the product of all user public keys mod N^2.

    A ciphertext under the joint key decrypts with the sum of the user
    secret keys, or with the master key.
    """
    if not user_pks:
        raise ProtocolError("key_prod requires at least one registered user key")
    joint = 1
    for _, pk in sorted(user_pks.items()):
        joint = int(gmpy2.mul(joint, pk) % pp.n_sq)
    return joint


# --- server S ----------------------------------------------------------------

@dataclass
class SDecryptRecord:
    """One master decryption performed by S: raw residues it observed."""

    protocol: str
    values: list


class ServerS:
    """The key-holding server: decrypts masked values on C's behalf.

    Never receives participant data directly; everything it decrypts has
    been blinded by C.  Keeps a log of every decrypted residue so tests can
    audit exactly what it observed.
    """

    def __init__(self, pp: PublicParams, mk: MasterKey, user_pks: dict,
                 rng: random.Random | None = None):
        self.pp = pp
        self.mk = mk
        self.user_pks = dict(user_pks)
        self.user_pks[JOINT_KEY] = key_prod(pp, user_pks)
        self.rng = rng or random.SystemRandom()
        self.decrypt_log: list[SDecryptRecord] = []
        self._gain_sessions: dict[int, dict] = {}
        self._next_handle = 0

    def _mdec(self, ct: Ciphertext) -> int:
        if ct.key_id not in self.user_pks:
            raise ProtocolError(f"S has no public key registered for {ct.key_id!r}")
        return bcp.mdec(self.pp, self.user_pks[ct.key_id], self.mk, ct)

    def _enc_joint(self, raw: int) -> Ciphertext:
        return bcp.enc(self.pp, self.user_pks[JOINT_KEY], raw % self.pp.n,
                       rng=self.rng, key_id=JOINT_KEY)

    def handle(self, protocol: str, payload: dict):
        if protocol == "mult":
            return self._serve_mult(payload)
        if protocol == "div":
            return self._serve_div(payload)
        if protocol == "lgt":
            return self._serve_lgt(payload)
        if protocol == "trans_dec":
            return self._serve_trans_dec(payload)
        if protocol == "gain_open":
            return self._serve_gain_open(payload)
        if protocol == "gain_eval":
            return self._serve_gain_eval(payload)
        raise ProtocolError(f"server S cannot handle protocol {protocol!r}")

    def _serve_mult(self, payload):
        x1 = self._mdec(payload["c1"])
        x2 = self._mdec(payload["c2"])
        self.decrypt_log.append(SDecryptRecord("mult", [x1, x2]))
        return {"product": self._enc_joint(x1 * x2 % self.pp.n)}

    def _serve_div(self, payload):
        n = self.pp.n
        x = decode_signed(self._mdec(payload["num"]), n)
        y = decode_signed(self._mdec(payload["den"]), n)
        self.decrypt_log.append(SDecryptRecord("div", [x, y]))
        if y == 0:
            return {"error": "zero denominator"}
        q = round_ratio(x << payload["quotient_exp"], y)
        return {"quotient": self._enc_joint(q)}

    def _serve_lgt(self, payload):
        l_raw = self._mdec(payload["l"])
        self.decrypt_log.append(SDecryptRecord("lgt", [l_raw]))
        # N-complement sign test: negative residues have long bit length.
        u_prime = 1 if l_raw.bit_length() > self.pp.n.bit_length() // 2 else 0
        return {"u_prime": u_prime}

    def _serve_trans_dec(self, payload):
        target = payload["target"]
        if target not in self.user_pks:
            raise ProtocolError(f"unknown target key {target!r}")
        x = self._mdec(payload["c"])
        self.decrypt_log.append(SDecryptRecord("trans_dec", [x]))
        ct = bcp.enc(self.pp, self.user_pks[target], x, rng=self.rng, key_id=target)
        return {"ct": ct}

    def _serve_gain_open(self, payload):
        n = self.pp.n
        x = decode_signed(self._mdec(payload["g_total"]), n)
        y = decode_signed(self._mdec(payload["h_total"]), n)
        w = decode_signed(self._mdec(payload["lam"]), n)
        self.decrypt_log.append(SDecryptRecord("gain_open", [x, y, w]))
        if y == 0:
            return {"error": "zero denominator"}
        handle = self._next_handle
        self._next_handle += 1
        self._gain_sessions[handle] = {
            "x": x, "y": y, "w": w,
            "g_scale": payload["g_scale"], "h_scale": payload["h_scale"],
            "out_exp": payload["out_exp"],
        }
        return {"handle": handle}

    def _serve_gain_eval(self, payload):
        sess = self._gain_sessions[payload["handle"]]
        n = self.pp.n
        u = decode_signed(self._mdec(payload["g_left"]), n)
        v = decode_signed(self._mdec(payload["h_left"]), n)
        self.decrypt_log.append(SDecryptRecord("gain_eval", [u, v]))
        x, y, w = sess["x"], sess["y"], sess["w"]
        u_r = x - u
        v_r = y - v + w
        if v == 0 or v_r == 0:
            return {"error": "zero denominator"}
        gain = Fraction(u * u, v) + Fraction(u_r * u_r, v_r) - Fraction(x * x, y)
        # Quotients of raw integers live at scale 2*g_scale - h_scale; shift
        # the rounded result onto the advertised output scale.
        shift = sess["out_exp"] - (2 * sess["g_scale"] - sess["h_scale"])
        if shift >= 0:
            q = round_ratio(gain.numerator << shift, gain.denominator)
        else:
            q = round_ratio(gain.numerator, gain.denominator << (-shift))
        return {"gain": self._enc_joint(q)}


# --- server C ----------------------------------------------------------------

class GainSession:
    """Per-node state for the fused split-gain protocol.

    One open (3 ciphertexts) plus one 3-ciphertext round trip per candidate
    evaluates the full gain G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l) at S:
    the session masks G-side values by a, (H+l)-side values by b = a^2 * c,
    so the quotient S computes is the true gain divided by c.  C removes c
    with one constant multiplication; the division headroom c is also the
    extra output precision, so the unmasking error stays below half an
    output unit.
    """

    def __init__(self, server_c: "ServerC", g_total: ScaledCiphertext,
                 h_total: ScaledCiphertext, lam_value: float):
        self.c_srv = server_c
        pp = server_c.pp
        fpc = server_c.fpc
        self.g_scale = g_total.scale
        self.h_scale = h_total.scale
        mask_bits = server_c._gain_mask_bits(self.g_scale, self.h_scale)
        self.out_exp = fpc.quotient_exp + mask_bits
        rng = server_c.rng
        self.alpha = rng.randrange(2, 1 << mask_bits)
        self.c_mask = rng.randrange(2, 1 << mask_bits)
        beta = self.alpha * self.alpha * self.c_mask

        lam_ct = server_c.encrypt_value(lam_value, self.h_scale)
        h_lam = add(pp, h_total, lam_ct)
        payload = {
            "g_total": raw_exp(pp, g_total.ct, self.alpha),
            "h_total": raw_exp(pp, h_lam.ct, beta),
            "lam": raw_exp(pp, lam_ct.ct, beta),
            "g_scale": self.g_scale, "h_scale": self.h_scale,
            "out_exp": self.out_exp,
        }
        self._beta = beta
        self._lam_ct = lam_ct
        reply = server_c.bus.call("C", "S", "gain_open", payload)
        if "error" in reply:
            raise ProtocolError(f"gain session rejected: {reply['error']}")
        self.handle = reply["handle"]

    def evaluate(self, g_left: ScaledCiphertext, h_left: ScaledCiphertext) -> ScaledCiphertext:
        """Encrypted split gain for one candidate, at scale out_exp."""
        pp = self.c_srv.pp
        if g_left.scale != self.g_scale or h_left.scale != self.h_scale:
            raise ScaleError("candidate sums must match the session scales")
        h_left_lam = add(pp, h_left, self._lam_ct)
        payload = {
            "g_left": raw_exp(pp, g_left.ct, self.alpha),
            "h_left": raw_exp(pp, h_left_lam.ct, self._beta),
            "handle": self.handle,
        }
        reply = self.c_srv.bus.call("C", "S", "gain_eval", payload)
        if "error" in reply:
            raise ProtocolError(f"gain evaluation failed: {reply['error']}")
        masked = ScaledCiphertext(ct=reply["gain"], scale=self.out_exp)
        return exp(pp, masked, self.c_mask)


class ServerC:
    """The orchestration server: computes on ciphertexts, holds no secret key."""

    def __init__(self, pp: PublicParams, user_pks: dict, bus,
                 fpc: FixedPointConfig, mask_bits: int = 40,
                 rng: random.Random | None = None):
        self.pp = pp
        self.user_pks = dict(user_pks)
        self.joint_pk = key_prod(pp, user_pks)
        self.user_pks[JOINT_KEY] = self.joint_pk
        self.bus = bus
        self.fpc = fpc
        self.mask_bits = mask_bits
        self.rng = rng or random.SystemRandom()

    # -- helpers --------------------------------------------------------------

    def encrypt_raw(self, raw: int, key_id: str = JOINT_KEY) -> Ciphertext:
        return bcp.enc(self.pp, self.user_pks[key_id], raw % self.pp.n,
                       rng=self.rng, key_id=key_id)

    def encrypt_value(self, value, scale: int, key_id: str = JOINT_KEY) -> ScaledCiphertext:
        from .encoding import encode
        raw = encode(value, scale, self.pp.n)
        return ScaledCiphertext(ct=self.encrypt_raw(raw, key_id), scale=scale)

    def _check_headroom(self, bits_needed: int, what: str) -> None:
        if bits_needed > self.pp.n.bit_length() - 2:
            raise ProtocolError(
                f"{what}: needs {bits_needed} bits, modulus allows "
                f"{self.pp.n.bit_length() - 2}; shrink scales or masks")

    def _gain_mask_bits(self, g_scale: int, h_scale: int) -> int:
        v = self.fpc.value_bits
        n_bits = self.pp.n.bit_length()
        by_denominator = (n_bits - 4 - h_scale - v) // 3
        by_numerator = n_bits - 4 - g_scale - v
        by_lgt = n_bits // 2 - self.fpc.quotient_exp - 2 * v - 2
        bits = min(self.mask_bits, by_denominator, by_numerator, by_lgt)
        if bits < 4:
            raise ProtocolError(
                f"gain protocol out of headroom at scales ({g_scale},{h_scale}) "
                f"for a {n_bits}-bit modulus")
        return bits

    # -- interactive sub-protocols --------------------------------------------

    def mult(self, c1: ScaledCiphertext, c2: ScaledCiphertext) -> ScaledCiphertext:
        """Encrypted product via additive masking; exact modulo N.

        C blinds both operands, S decrypts and multiplies the residues, and
        C strips the three cross terms with constant multiplications.
        """
        if c1.key_id != JOINT_KEY or c2.key_id != JOINT_KEY:
            raise KeyMismatchError("mult operands must be under the joint key")
        pp, fpc = self.pp, self.fpc
        b1 = fpc.value_bits + c1.scale
        b2 = fpc.value_bits + c2.scale
        self._check_headroom(b1 + b2 + 2 * self.mask_bits + 2, "mult")
        r1 = self.rng.randrange(1, 1 << (self.mask_bits + b1))
        r2 = self.rng.randrange(1, 1 << (self.mask_bits + b2))
        m1 = raw_add(pp, c1.ct, self.encrypt_raw(r1))
        m2 = raw_add(pp, c2.ct, self.encrypt_raw(r2))
        reply = self.bus.call("C", "S", "mult", {"c1": m1, "c2": m2})
        prod = reply["product"]
        prod = raw_sub(pp, prod, raw_exp(pp, c2.ct, r1))
        prod = raw_sub(pp, prod, raw_exp(pp, c1.ct, r2))
        prod = raw_sub(pp, prod, self.encrypt_raw(r1 * r2 % pp.n))
        return ScaledCiphertext(ct=prod, scale=c1.scale + c2.scale)

    def trans_dec(self, c: ScaledCiphertext | Ciphertext, target: str) -> Ciphertext:
        """Re-encrypt a joint-key ciphertext under one user's public key."""
        ct = c.ct if isinstance(c, ScaledCiphertext) else c
        if ct.key_id != JOINT_KEY:
            raise KeyMismatchError("trans_dec expects a joint-key ciphertext")
        return self.transform_key(c, target)

    def transform_key(self, c: ScaledCiphertext | Ciphertext, target: str):
        """Move a ciphertext from its current key to ``target`` via S.

        C adds a random blind under the source key, S master-decrypts the
        blinded residue and re-encrypts it under the target key, and C
        subtracts the blind under the target key.  S sees only m + r.
        """
        scaled = isinstance(c, ScaledCiphertext)
        ct = c.ct if scaled else c
        if target not in self.user_pks:
            raise ProtocolError(f"unknown target key {target!r}")
        scale = c.scale if scaled else 0
        blind_bits = self.mask_bits + self.fpc.value_bits + scale
        self._check_headroom(blind_bits + 2, "transform_key")
        r = self.rng.randrange(1, 1 << blind_bits)
        blinded = raw_add(self.pp, ct, self.encrypt_raw(r, ct.key_id))
        reply = self.bus.call("C", "S", "trans_dec", {"c": blinded, "target": target})
        out = raw_sub(self.pp, reply["ct"], self.encrypt_raw(r, target))
        return ScaledCiphertext(ct=out, scale=scale) if scaled else out

    def lgt(self, c1: ScaledCiphertext, c2: ScaledCiphertext,
            coin: int | None = None) -> ComparisonResult:
        """Compare two encrypted values: u_star = 1 iff m1 < m2.

        C doubles both operands and adds one to the first, so equality
        resolves deterministically to "m1 >= m2".  A coin flip hides the
        orientation of the difference from S, which only reports the
        N-complement sign of what it decrypts.
        """
        if c1.scale != c2.scale:
            raise ScaleError("lgt requires equal scales")
        pp = self.pp
        bits = self.fpc.value_bits + c1.scale + 2
        if bits > pp.n.bit_length() // 2 - 1:
            raise ProtocolError(
                f"lgt operands at scale {c1.scale} overflow the sign test")
        twice1 = raw_exp(pp, c1.ct, 2)
        twice1p1 = raw_add(pp, twice1, self.encrypt_raw(1))
        twice2 = raw_exp(pp, c2.ct, 2)
        s = self.rng.randrange(2) if coin is None else coin
        if s == 1:
            l = raw_sub(pp, twice1p1, twice2)
        else:
            l = raw_sub(pp, twice2, twice1p1)
        reply = self.bus.call("C", "S", "lgt", {"l": l})
        u_prime = reply["u_prime"]
        u_star = u_prime if s == 1 else 1 - u_prime
        return ComparisonResult(u_star=u_star)

    def div(self, c_num: ScaledCiphertext, c_den: ScaledCiphertext,
            taus: tuple[int, int] | None = None) -> ScaledCiphertext:
        """Encrypted division at the configured quotient scale.

        C multiplicatively masks the operands with t1, t2, sends
        [[t1*m1 + t2*m2]] and [[t1*m2]]; S decrypts, returns the rounded
        quotient, and C subtracts the known bias t2/t1.  The caller
        guarantees a nonzero denominator.
        """
        if c_num.scale != c_den.scale:
            raise ScaleError("div requires equal operand scales")
        pp, fpc = self.pp, self.fpc
        self._check_headroom(fpc.value_bits + c_num.scale + self.mask_bits + 2, "div")
        if taus is None:
            tau1 = self.rng.randrange(1, 1 << self.mask_bits)
            tau2 = self.rng.randrange(1, 1 << self.mask_bits)
        else:
            tau1, tau2 = taus
        num = raw_add(pp, raw_exp(pp, c_num.ct, tau1), raw_exp(pp, c_den.ct, tau2))
        den = raw_exp(pp, c_den.ct, tau1)
        reply = self.bus.call("C", "S", "div",
                              {"num": num, "den": den, "quotient_exp": fpc.quotient_exp})
        if "error" in reply:
            raise ProtocolError(f"division failed at S: {reply['error']}")
        corr = round_ratio(tau2 << fpc.quotient_exp, tau1)
        out = raw_sub(pp, reply["quotient"], self.encrypt_raw(corr))
        return ScaledCiphertext(ct=out, scale=fpc.quotient_exp)

    def sargmax(self, entries: dict) -> object:
        """Key of the maximum encrypted value; ties keep the earliest key.

        Iterates keys in sorted order with one comparison per remaining key,
        replacing the running maximum only on strict improvement.
        """
        if not entries:
            raise ProtocolError("sargmax over an empty map")
        keys = sorted(entries)
        scales = {entries[k].scale for k in keys}
        if len(scales) != 1:
            raise ScaleError("sargmax entries must share one scale")
        best_key = keys[0]
        best = entries[best_key]
        for key in keys[1:]:
            if self.lgt(best, entries[key]).u_star == 1:
                best_key, best = key, entries[key]
        return best_key

    def gain_session(self, g_total: ScaledCiphertext, h_total: ScaledCiphertext,
                     lam_value: float) -> GainSession:
        return GainSession(self, g_total, h_total, lam_value)

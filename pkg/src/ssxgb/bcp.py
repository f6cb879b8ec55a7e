"""BCP double-trapdoor additive homomorphic cryptosystem.

Plaintexts live in Z_N, ciphertexts are pairs (A, B) in Z*_{N^2}.  Every
ciphertext can be decrypted two ways: with the matching user secret key, or
with the master key derived from the factorization of N.  The second
trapdoor is what lets an outsourced server decrypt masked intermediate
values without holding any user key.

All arithmetic uses gmpy2 for speed; values are stored as plain Python ints.
"""

import json
import random
from dataclasses import dataclass
from math import gcd

import gmpy2

FORMAT_VERSION = 1

# Miller-Rabin rounds for the final acceptance of a prime candidate.
PRIME_ROUNDS = 64

# Primes below this bound are used to pre-sieve safe-prime candidates.
_SMALL_PRIMES = [p for p in range(3, 4000)
                 if all(p % d for d in range(2, int(p ** 0.5) + 1))]

# Candidate budget for one safe prime before giving up.
_SAFE_PRIME_BUDGET = 4_000_000


class ParameterError(Exception):
    """Raised when parameter generation fails or parameters are inconsistent."""


class DomainError(Exception):
    """Raised when a plaintext is outside Z_N."""


class DecryptionError(Exception):
    """Raised when a ciphertext does not decrypt under the supplied key."""


@dataclass(frozen=True)
class PublicParams:
    """Public parameters (N, g, k) shared by every entity.

    ``g`` generates the subgroup used for encryption and satisfies
    g^(p'q') = 1 + kconst*N (mod N^2) with kconst invertible mod N.
    """

    n: int
    g: int
    kconst: int
    k_bits: int

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def ciphertext_bytes(self) -> int:
        """Serialized size of one (A, B) pair: two Z_{N^2} elements."""
        element = (self.n_sq.bit_length() + 7) // 8
        return 2 * element


@dataclass(frozen=True)
class MasterKey:
    """Master trapdoor: p' = (p-1)/2 and q' = (q-1)/2."""

    p_prime: int
    q_prime: int


@dataclass(frozen=True)
class KeyPair:
    """Per-user key pair: pk = g^sk mod N^2, sk uniform in Z_{N^2}."""

    pk: int
    sk: int
    key_id: str


@dataclass(frozen=True)
class Ciphertext:
    """A BCP ciphertext (A, B) tagged with the id of its public key."""

    a: int
    b: int
    key_id: str


def _safe_prime(bits: int, rng: random.Random) -> tuple[int, int]:
    """Return (p, p') with p = 2p'+1, both prime, p exactly ``bits`` bits."""
    for _ in range(_SAFE_PRIME_BUDGET):
        cand = rng.getrandbits(bits - 1) | (1 << (bits - 2)) | 1
        ok = True
        for sp in _SMALL_PRIMES:
            r = cand % sp
            if r == 0 or (2 * r + 1) % sp == 0:
                ok = False
                break
        if not ok:
            continue
        if not gmpy2.is_prime(cand, 25):
            continue
        p = 2 * cand + 1
        if gmpy2.is_prime(p, PRIME_ROUNDS) and gmpy2.is_prime(cand, PRIME_ROUNDS):
            return p, cand
    raise ParameterError(f"no {bits}-bit safe prime found within budget")


def setup(k_bits: int, *, rng: random.Random | None = None,
          allow_toy: bool = False) -> tuple[PublicParams, MasterKey]:
    """Generate public parameters and the master key.

    ``k_bits`` is the bit length of each safe prime, so N has about
    2*k_bits bits.  Sizes below 256 bits are for tests only and must be
    requested explicitly with ``allow_toy``.
    """
    if k_bits < 256 and not allow_toy:
        raise ParameterError(
            f"k_bits={k_bits} below production minimum 256; pass allow_toy=True for tests")
    if k_bits < 16:
        raise ParameterError("k_bits must be at least 16")
    rng = rng or random.SystemRandom()

    p, p_prime = _safe_prime(k_bits, rng)
    while True:
        q, q_prime = _safe_prime(k_bits, rng)
        if q != p:
            break
    n = p * q
    n_sq = n * n
    pq_prime = p_prime * q_prime

    # g = alpha^2 lands in the subgroup of order N*p'*q'; retry until its
    # order-N component is full, i.e. g^(p'q') = 1 + kN with gcd(k, N) = 1.
    while True:
        alpha = rng.randrange(2, n_sq - 1)
        if gcd(alpha, n) != 1:
            continue
        g = int(gmpy2.powmod(alpha, 2, n_sq))
        w = int(gmpy2.powmod(g, pq_prime, n_sq))
        kconst = (w - 1) // n
        if (w - 1) % n != 0:
            raise ParameterError("subgroup structure violated; primes are not safe")
        if kconst == 0 or gcd(kconst, n) != 1:
            continue
        break

    pp = PublicParams(n=n, g=g, kconst=kconst, k_bits=k_bits)
    mk = MasterKey(p_prime=p_prime, q_prime=q_prime)
    return pp, mk


def keygen(pp: PublicParams, *, rng: random.Random | None = None,
           key_id: str = "user") -> KeyPair:
    """Generate a user key pair under ``pp``."""
    rng = rng or random.SystemRandom()
    sk = rng.randrange(1, pp.n_sq)
    pk = int(gmpy2.powmod(pp.g, sk, pp.n_sq))
    return KeyPair(pk=pk, sk=sk, key_id=key_id)


def _enc_nonce(pp: PublicParams, rng: random.Random) -> int:
    # Short exponent: k_bits of randomness (>= 128) instead of a full
    # Z_{N^2} draw.  Halves the dominant cost of Enc relative to Dec while
    # keeping the scheme correct for any r; see the benchmark suite.
    bits = max(128, pp.k_bits)
    return rng.getrandbits(bits) | 1


def enc(pp: PublicParams, pk: int, m: int, *, rng: random.Random | None = None,
        key_id: str = "user") -> Ciphertext:
    """Encrypt m in Z_N under ``pk``: A = g^r, B = pk^r * (1 + mN) mod N^2."""
    if not 0 <= m < pp.n:
        raise DomainError(f"plaintext {m} outside Z_N")
    rng = rng or random.SystemRandom()
    r = _enc_nonce(pp, rng)
    n_sq = pp.n_sq
    a = int(gmpy2.powmod(pp.g, r, n_sq))
    b = int(gmpy2.mul(gmpy2.powmod(pk, r, n_sq), 1 + m * pp.n) % n_sq)
    return Ciphertext(a=a, b=b, key_id=key_id)


def dec(pp: PublicParams, sk: int, ct: Ciphertext) -> int:
    """Decrypt with the user secret key: m = ((B / A^sk mod N^2) - 1) / N."""
    n_sq = pp.n_sq
    denom = gmpy2.powmod(ct.a, sk, n_sq)
    u = int(gmpy2.mul(ct.b, gmpy2.invert(denom, n_sq)) % n_sq)
    t = u - 1
    if t % pp.n != 0:
        raise DecryptionError("ciphertext does not decrypt under this key")
    return t // pp.n


def mdec(pp: PublicParams, pk: int, mk: MasterKey, ct: Ciphertext) -> int:
    """Master decryption: recover m from any ciphertext given its public key.

    Recovers a mod N from pk and r mod N from A (both via the 1 + kN
    structure of g^(p'q')), forms gamma = a*r mod N, and strips g^gamma
    before a final (p'q')-power unwrap.
    """
    n, n_sq = pp.n, pp.n_sq
    pq_prime = mk.p_prime * mk.q_prime
    try:
        k_inv = gmpy2.invert(pp.kconst, n)
    except ZeroDivisionError:
        raise ParameterError("kconst not invertible mod N; bad setup") from None

    def unwrap(x: int) -> int:
        w = int(gmpy2.powmod(x, pq_prime, n_sq))
        t = w - 1
        if t % n != 0:
            raise DecryptionError("value outside the expected subgroup")
        return (t // n) * int(k_inv) % n

    a_mod_n = unwrap(pk)
    r_mod_n = unwrap(ct.a)
    gamma = a_mod_n * r_mod_n % n
    d = int(gmpy2.mul(ct.b, gmpy2.invert(gmpy2.powmod(pp.g, gamma, n_sq), n_sq)) % n_sq)
    w = int(gmpy2.powmod(d, pq_prime, n_sq))
    t = w - 1
    if t % n != 0:
        raise DecryptionError("ciphertext malformed for master decryption")
    delta = gmpy2.invert(pq_prime, n)
    return (t // n) * int(delta) % n


def verify_params(pp: PublicParams, mk: MasterKey) -> bool:
    """Check the structural invariants of a (pp, mk) pair."""
    p = 2 * mk.p_prime + 1
    q = 2 * mk.q_prime + 1
    if p * q != pp.n:
        return False
    if not (2 * pp.k_bits - 1 <= pp.n.bit_length() <= 2 * pp.k_bits):
        return False
    if pp.n % 2 == 0:
        return False
    w = int(gmpy2.powmod(pp.g, mk.p_prime * mk.q_prime, pp.n_sq))
    if (w - 1) % pp.n != 0:
        return False
    kconst = (w - 1) // pp.n
    return kconst == pp.kconst and 1 <= kconst < pp.n and gcd(kconst, pp.n) == 1


# --- JSON serialization -----------------------------------------------------
#
# Big integers travel as decimal strings so the documents survive tools that
# mangle large numbers.

def _tag(kind: str, fields: dict) -> dict:
    doc = {"format_version": FORMAT_VERSION, "kind": kind}
    doc.update(fields)
    return doc


def to_json(obj) -> str:
    if isinstance(obj, PublicParams):
        doc = _tag("public_params", {"n": str(obj.n), "g": str(obj.g),
                                     "kconst": str(obj.kconst), "k_bits": obj.k_bits})
    elif isinstance(obj, MasterKey):
        doc = _tag("master_key", {"p_prime": str(obj.p_prime), "q_prime": str(obj.q_prime)})
    elif isinstance(obj, KeyPair):
        doc = _tag("key_pair", {"pk": str(obj.pk), "sk": str(obj.sk), "key_id": obj.key_id})
    elif isinstance(obj, Ciphertext):
        doc = _tag("ciphertext", {"a": str(obj.a), "b": str(obj.b), "key_id": obj.key_id})
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return json.dumps(doc)


def from_json(text: str):
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParameterError(f"unsupported format version {doc.get('format_version')}")
    kind = doc.get("kind")
    if kind == "public_params":
        return PublicParams(n=int(doc["n"]), g=int(doc["g"]),
                            kconst=int(doc["kconst"]), k_bits=int(doc["k_bits"]))
    if kind == "master_key":
        return MasterKey(p_prime=int(doc["p_prime"]), q_prime=int(doc["q_prime"]))
    if kind == "key_pair":
        return KeyPair(pk=int(doc["pk"]), sk=int(doc["sk"]), key_id=doc["key_id"])
    if kind == "ciphertext":
        return Ciphertext(a=int(doc["a"]), b=int(doc["b"]), key_id=doc["key_id"])
    raise ParameterError(f"unknown document kind {kind!r}")

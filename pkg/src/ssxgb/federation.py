"""Entity layer: participants, the in-process message bus, and byte metering.

The bus is deterministic and synchronous: a request/response ``call``
dispatches immediately, one-way ``send``s queue in FIFO order until
``run_until_idle``.  Every message is metered per (sender, receiver,
protocol) edge, counting ciphertexts and payload bytes separately from
headers so the closed-form communication predictions can be checked on
ciphertext payload alone.
"""

import csv
import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .bcp import Ciphertext, KeyPair
from .encoding import ScaledCiphertext

# Fixed per-message envelope: seq, sender, receiver, protocol, round ids.
HEADER_BYTES = 32


class ConfigError(Exception):
    """Raised for invalid federation or run configuration."""


class UnknownEntityError(ConfigError):
    """Raised when a message targets an unregistered entity."""


@dataclass(frozen=True)
class InstanceSpace:
    """Ordered set of sample indices defining the records at a tree node."""

    indices: tuple

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def split(self, left_ids) -> tuple["InstanceSpace", "InstanceSpace"]:
        """Partition into (I_L, I_R): left = given ids, right = complement."""
        left_set = set(left_ids)
        left = tuple(i for i in self.indices if i in left_set)
        right = tuple(i for i in self.indices if i not in left_set)
        return InstanceSpace(left), InstanceSpace(right)


@dataclass
class Participant:
    """One data owner: a vertical slice of the feature matrix.

    ``lookup`` maps (tree_id, node_id) -> {(feature, candidate): threshold};
    thresholds never leave the participant, the servers only ever see the
    opaque (feature, candidate) labels.
    """

    name: str
    index: int
    columns: dict            # feature id -> np.ndarray of float64
    keypair: KeyPair | None = None
    is_lbp: bool = False
    labels: np.ndarray | None = None
    lookup: dict = field(default_factory=dict)

    @property
    def feature_ids(self) -> list:
        return sorted(self.columns)

    def record_thresholds(self, tree_id, node_id, thresholds: dict) -> None:
        self.lookup[(tree_id, node_id)] = dict(thresholds)

    def threshold_for(self, tree_id, node_id, j, k) -> float:
        try:
            return self.lookup[(tree_id, node_id)][(j, k)]
        except KeyError:
            raise ConfigError(f"no lookup entry for node {node_id} candidate ({j},{k})") from None


def partition_instances(participant: Participant, instances: InstanceSpace,
                        tree_id, node_id, j: int, k: int) -> tuple[InstanceSpace, InstanceSpace]:
    """Split a node's instance space on the participant's recorded threshold.

    Routing convention: LEFT iff feature value < threshold.
    """
    if j not in participant.columns:
        raise ConfigError(f"participant {participant.name} does not own feature {j}")
    threshold = participant.threshold_for(tree_id, node_id, j, k)
    col = participant.columns[j]
    left = tuple(i for i in instances if col[i] < threshold)
    return instances.split(left)


def count_ciphertexts(payload) -> int:
    """Count ciphertext objects anywhere in a nested payload."""
    if isinstance(payload, (Ciphertext, ScaledCiphertext)):
        return 1
    if isinstance(payload, dict):
        return sum(count_ciphertexts(v) for v in payload.values())
    if isinstance(payload, (list, tuple)):
        return sum(count_ciphertexts(v) for v in payload)
    return 0


@dataclass
class EdgeStats:
    messages: int = 0
    ciphertext_count: int = 0
    ciphertext_bytes: int = 0
    header_bytes: int = 0


class CommMeter:
    """Per-edge, per-protocol byte accounting.

    bytes = ciphertext_count * zeta + headers, where zeta is the serialized
    size of one (A, B) pair at the configured key size.
    """

    def __init__(self, zeta: int, header_bytes: int = HEADER_BYTES):
        self.zeta = zeta
        self.header_bytes = header_bytes
        self.edges: dict[tuple, EdgeStats] = {}

    def record(self, frm: str, to: str, protocol: str, ct_count: int) -> int:
        stats = self.edges.setdefault((frm, to, protocol), EdgeStats())
        stats.messages += 1
        stats.ciphertext_count += ct_count
        stats.ciphertext_bytes += ct_count * self.zeta
        stats.header_bytes += self.header_bytes
        return ct_count * self.zeta + self.header_bytes

    def ciphertext_bytes(self, frm=None, to=None, protocols=None) -> int:
        """Sum ciphertext payload bytes over matching edges (headers excluded)."""
        total = 0
        for (f, t, p), stats in self.edges.items():
            if frm is not None and not _match(f, frm):
                continue
            if to is not None and not _match(t, to):
                continue
            if protocols is not None and p not in protocols:
                continue
            total += stats.ciphertext_bytes
        return total

    def snapshot(self) -> dict:
        return {edge: EdgeStats(**vars(stats)) for edge, stats in self.edges.items()}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sender", "receiver", "protocol", "messages",
                             "ciphertext_count", "ciphertext_bytes", "header_bytes"])
            for (f, t, p) in sorted(self.edges):
                s = self.edges[(f, t, p)]
                writer.writerow([f, t, p, s.messages, s.ciphertext_count,
                                 s.ciphertext_bytes, s.header_bytes])


def _match(value: str, pattern) -> bool:
    if callable(pattern):
        return pattern(value)
    if isinstance(pattern, (set, frozenset, list, tuple)):
        return value in pattern
    return value == pattern


def meter_delta(before: dict, after: dict, frm=None, to=None, protocols=None) -> int:
    """Ciphertext bytes recorded between two meter snapshots."""
    total = 0
    for edge, stats in after.items():
        f, t, p = edge
        if frm is not None and not _match(f, frm):
            continue
        if to is not None and not _match(t, to):
            continue
        if protocols is not None and p not in protocols:
            continue
        prev = before.get(edge)
        total += stats.ciphertext_bytes - (prev.ciphertext_bytes if prev else 0)
    return total


@dataclass(frozen=True)
class TranscriptRecord:
    seq: int
    frm: str
    to: str
    protocol: str
    session: int
    round: int
    ct_count: int
    bytes: int


class MessageBus:
    """Deterministic in-process message bus with FIFO one-way delivery."""

    def __init__(self, meter: CommMeter):
        self.meter = meter
        self.handlers: dict[str, object] = {}
        self.transcript: list[TranscriptRecord] = []
        self.payload_log: list[tuple] = []   # (record, payload) kept for tests
        self._queue: deque = deque()
        self._seq = 0
        self._session = 0

    def register(self, name: str, handler) -> None:
        """Register an entity; handler(protocol, payload) -> reply payload."""
        self.handlers[name] = handler

    def _log(self, frm, to, protocol, session, rnd, payload) -> None:
        ct_count = count_ciphertexts(payload)
        nbytes = self.meter.record(frm, to, protocol, ct_count)
        rec = TranscriptRecord(seq=self._seq, frm=frm, to=to, protocol=protocol,
                               session=session, round=rnd, ct_count=ct_count,
                               bytes=nbytes)
        self._seq += 1
        self.transcript.append(rec)
        self.payload_log.append((rec, payload))

    def call(self, frm: str, to: str, protocol: str, payload) -> object:
        """Blocking request/response exchange; both directions are metered."""
        if to not in self.handlers:
            raise UnknownEntityError(f"unknown entity {to!r}")
        session = self._session
        self._session += 1
        self._log(frm, to, protocol, session, 0, payload)
        reply = self.handlers[to](protocol, payload)
        self._log(to, frm, protocol, session, 1, reply)
        return reply

    def send(self, frm: str, to: str, protocol: str, payload) -> None:
        """Queue a one-way message for FIFO delivery."""
        if to not in self.handlers:
            raise UnknownEntityError(f"unknown entity {to!r}")
        session = self._session
        self._session += 1
        self._queue.append((frm, to, protocol, session, payload))

    def run_until_idle(self) -> int:
        """Deliver queued messages in send order; returns messages delivered."""
        delivered = 0
        while self._queue:
            frm, to, protocol, session, payload = self._queue.popleft()
            self._log(frm, to, protocol, session, 0, payload)
            self.handlers[to](protocol, payload)
            delivered += 1
        return delivered

    def transcript_hash(self) -> str:
        h = hashlib.sha256()
        for rec in self.transcript:
            line = f"{rec.seq}|{rec.frm}|{rec.to}|{rec.protocol}|{rec.session}|{rec.round}|{rec.ct_count}|{rec.bytes}"
            h.update(line.encode())
        return h.hexdigest()

    def write_transcript(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.transcript:
                fh.write(json.dumps({"seq": rec.seq, "from": rec.frm, "to": rec.to,
                                     "protocol": rec.protocol, "session": rec.session,
                                     "round": rec.round, "ct_count": rec.ct_count,
                                     "bytes": rec.bytes}) + "\n")


def expected_cost_participant(zeta: int, d: int, n: int, q: int) -> int:
    """Predicted participant->C ciphertext bytes for one split: 2*zeta*d*ceil(n/q)."""
    if q <= 0:
        raise ConfigError("bucket size q must be positive")
    return 2 * zeta * d * math.ceil(n / q)


def expected_cost_servers(zeta: int, n: int, q: int, total_features: int) -> int:
    """Predicted C<->S ciphertext bytes for one split: 12*zeta + 3*zeta*ceil(n/q)*D."""
    if q <= 0:
        raise ConfigError("bucket size q must be positive")
    return 12 * zeta + 3 * zeta * math.ceil(n / q) * total_features


def vertical_partition(features: np.ndarray, labels: np.ndarray, feature_names,
                       n_participants: int, lbp_index: int) -> list[Participant]:
    """Split feature columns contiguously and near-evenly across participants.

    The participant at ``lbp_index`` receives the label column.
    """
    n_features = features.shape[1]
    if n_participants > n_features:
        raise ConfigError(
            f"{n_participants} participants but only {n_features} features")
    if not 0 <= lbp_index < n_participants:
        raise ConfigError(f"lbp index {lbp_index} out of range")
    if np.isnan(features).any():
        raise ConfigError("features contain NaN")
    blocks = np.array_split(np.arange(n_features), n_participants)
    participants = []
    for idx, block in enumerate(blocks):
        cols = {int(j): features[:, j].astype(np.float64) for j in block}
        is_lbp = idx == lbp_index
        participants.append(Participant(
            name=f"P{idx}", index=idx, columns=cols, is_lbp=is_lbp,
            labels=labels.astype(np.float64) if is_lbp else None))
    return participants

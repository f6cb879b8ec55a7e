"""Secure prediction on client-encrypted records.

The client encrypts its feature vector under its own key and sends it to
server C.  For every internal node on a tree path, C re-keys the single
relevant feature ciphertext to the node owner's key (via S, blinded), the
owner decrypts, compares against its private threshold, and returns only
the branch direction.  Leaf weights stay encrypted under the joint key; C
sums them with the base score and hands the client one re-keyed score
ciphertext, so neither server ever sees the prediction.
"""

import random
from dataclasses import dataclass

import numpy as np

from . import bcp
from .encoding import ScaledCiphertext, decode, encode
from .secure_training import Federation, SecureLeaf, SecureNode, TreeList
from .subprotocols import JOINT_KEY, ProtocolError, add
from .xgb_plain import sigmoid


class PredictionError(ProtocolError):
    """Raised when a record cannot be scored."""


@dataclass
class ClientRecord:
    """A client's encrypted feature vector, ordered by global feature index."""

    client_id: str
    cts: list


def encrypt_record(fed: Federation, client_kp: bcp.KeyPair, values) -> ClientRecord:
    """Encrypt one record under the client's key, one ciphertext per feature."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(fed.all_features):
        raise PredictionError(
            f"record has {len(values)} features, model expects {len(fed.all_features)}")
    fpc = fed.fpc
    rng = random.Random()
    cts = []
    for v in values:
        raw = encode(float(v), fpc.scale_exp, fed.pp.n, value_bits=fpc.value_bits)
        ct = bcp.enc(fed.pp, client_kp.pk, raw, rng=rng, key_id=client_kp.key_id)
        cts.append(ScaledCiphertext(ct=ct, scale=fpc.scale_exp))
    return ClientRecord(client_id=client_kp.key_id, cts=cts)


def _walk_tree(fed: Federation, tree, record: ClientRecord) -> ScaledCiphertext:
    node = tree.root
    while isinstance(node, SecureNode):
        if node.owner not in fed.bus.handlers:
            raise PredictionError(f"owner {node.owner!r} is offline")
        feature_pos = fed.all_features.index(node.feature)
        transformed = fed.server_c.transform_key(record.cts[feature_pos], node.owner)
        reply = fed.bus.call("C", node.owner, "predict_compare", {
            "ct": transformed.ct, "scale": transformed.scale,
            "tree": tree.tree_id, "node": node.node_id,
            "j": node.feature, "k": node.cand})
        node = node.left if reply["left"] else node.right
    assert isinstance(node, SecureLeaf)
    return node.weight


def spredict(fed: Federation, tree_list: TreeList, record: ClientRecord) -> ScaledCiphertext:
    """Encrypted ensemble score for one record, re-keyed to the client.

    Exactly one owner interaction per internal node visited; the final sum
    F0 + sum of leaf weights happens under the joint key at server C.
    """
    pp = fed.pp
    score = tree_list.f0
    for tree in tree_list.trees:
        leaf_ct = _walk_tree(fed, tree, record)
        score = add(pp, score, leaf_ct)
    if score.ct.key_id != JOINT_KEY:
        raise PredictionError("ensemble score must be under the joint key")
    return fed.server_c.trans_dec(score, record.client_id)


def decrypt_score(pp: bcp.PublicParams, client_kp: bcp.KeyPair,
                  score: ScaledCiphertext) -> tuple:
    """Client-side: decrypt the logit and apply the exact sigmoid locally."""
    raw = bcp.dec(pp, client_kp.sk, score.ct)
    logit = decode(raw, score.scale, pp.n)
    return logit, float(sigmoid(logit))

"""Operator surface: dataset ingestion, training/prediction runs, benchmarks.

Run artifacts land in --out-dir:

    metrics.csv        one row per round (deterministic: no wall times)
    model.json         encrypted ensemble (base score + trees)
    participants.json  per-participant private lookup tables and keys
    crypto.json        public params + master key (simulation-only artifact)
    transcript.jsonl   one line per bus message (secure modes)
    meter.csv          per-edge communication accounting
    run_summary.json   wall times, transcript hash, final metrics

Exit codes: 0 success, 2 configuration error, 3 protocol failure.
"""

import argparse
import csv
import json
import random
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import bcp
from .encoding import FixedPointConfig, ScaledCiphertext
from .federation import (CommMeter, ConfigError, MessageBus, Participant,
                         vertical_partition)
from .secure_prediction import decrypt_score, encrypt_record, spredict
from .secure_training import (Federation, SecureLeaf, SecureNode, SecureTree,
                              TreeList, derive_seed, oracle_train, ssxgb_train)
from .subprotocols import ProtocolError, ServerC, ServerS, key_prod
from .xgb_plain import BoostParams, accuracy, logloss

PRESETS = ("iris", "digits", "mnist")
MODES = ("secure", "plaintext-oracle", "both")


@dataclass
class RunConfig:
    dataset: str | None = None
    label_col: str = "label"
    preset: str | None = None
    participants: int = 4
    lbp: int = 0
    key_bits: int = 512          # modulus size; safe primes are half this
    scale_bits: int = 24
    quotient_bits: int = 24
    value_bits: int = 16
    mask_bits: int = 40
    eta: float = 0.08
    reg_lambda: float = 1.0
    gamma: float = 0.0
    max_depth: int = 4
    rounds: int = 10
    subsample: float = 0.8
    colsample: float = 0.8
    bucket_size: int | None = None
    candidates: int = 8
    subset_rows: int | None = None
    subset_features: int | None = None
    seed: int = 0
    mode: str = "secure"
    out_dir: str = "runs/out"

    def boost_params(self) -> BoostParams:
        return BoostParams(eta=self.eta, reg_lambda=self.reg_lambda,
                           gamma=self.gamma, max_depth=self.max_depth,
                           rounds=self.rounds, subsample_rows=self.subsample,
                           subsample_cols=self.colsample,
                           n_candidates=self.candidates,
                           bucket_size=self.bucket_size)

    def fixed_point(self) -> FixedPointConfig:
        return FixedPointConfig(scale_exp=self.scale_bits,
                                quotient_exp=self.quotient_bits,
                                value_bits=self.value_bits)


# --- dataset ingestion --------------------------------------------------------

def load_csv(path, label_col: str):
    """Rectangular numeric CSV with a header; returns (X, y, feature names)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}: empty file")
        if label_col not in header:
            raise ConfigError(f"{path}: no label column {label_col!r}")
        label_idx = header.index(label_col)
        rows = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: ragged row")
            try:
                rows.append([float(v) for v in row])
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: non-numeric cell ({err})") from None
    data = np.asarray(rows, dtype=np.float64)
    labels = data[:, label_idx]
    features = np.delete(data, label_idx, axis=1)
    names = [h for i, h in enumerate(header) if i != label_idx]
    return features, labels, names


def iris_dataset(seed: int):
    """Iris, binarized setosa-vs-rest and balanced with 50 jittered
    setosa resamples (seeded)."""
    from sklearn.datasets import load_iris
    data = load_iris()
    x = data.data.astype(np.float64)
    y = (data.target == list(data.target_names).index("setosa")).astype(np.float64)
    rng = np.random.default_rng(derive_seed(seed, "iris-balance"))
    setosa_rows = np.flatnonzero(y == 1.0)
    picks = rng.choice(setosa_rows, size=50, replace=True)
    jitter = rng.normal(0.0, 0.05, size=(50, x.shape[1]))
    x = np.vstack([x, x[picks] + jitter])
    y = np.concatenate([y, np.ones(50)])
    return x, y, [n.replace(" (cm)", "").replace(" ", "_") for n in data.feature_names]


def digits_dataset(seed: int, rows: int = 2000):
    """Offline handwritten-digits corpus, binarized 0-4 vs 5-9 and resampled
    (with replacement plus jitter) to a balanced set of ``rows`` samples."""
    from sklearn.datasets import load_digits
    data = load_digits()
    x = data.data.astype(np.float64)
    y = (data.target <= 4).astype(np.float64)
    rng = np.random.default_rng(derive_seed(seed, "digits-balance"))
    per_class = rows // 2
    out_x, out_y = [], []
    for cls in (1.0, 0.0):
        rows_cls = np.flatnonzero(y == cls)
        picks = rng.choice(rows_cls, size=per_class, replace=True)
        jitter = rng.normal(0.0, 0.05, size=(per_class, x.shape[1]))
        out_x.append(x[picks] + jitter)
        out_y.append(np.full(per_class, cls))
    x = np.vstack(out_x)
    y = np.concatenate(out_y)
    order = np.random.default_rng(derive_seed(seed, "digits-shuffle")).permutation(len(y))
    return x[order], y[order], [f"px{i}" for i in range(x.shape[1])]


def mnist_dataset(csv_path, label_col: str = "label"):
    """Real MNIST from a local CSV (this sandbox cannot download it);
    digits 0-4 are the positive class."""
    if not csv_path:
        raise ConfigError("the mnist preset needs --dataset pointing at a local MNIST CSV")
    x, y, names = load_csv(csv_path, label_col)
    return x, (y <= 4).astype(np.float64), names


def subset_dataset(x, y, names, cfg: RunConfig):
    """Deterministic row/feature subsetting for desk-scale secure runs."""
    if cfg.subset_features is not None and cfg.subset_features < x.shape[1]:
        variances = x.var(axis=0)
        keep = np.sort(np.argsort(variances)[::-1][:cfg.subset_features])
        x = x[:, keep]
        names = [names[i] for i in keep]
    if cfg.subset_rows is not None and cfg.subset_rows < x.shape[0]:
        rng = np.random.default_rng(derive_seed(cfg.seed, "row-subset"))
        pos = np.flatnonzero(y == 1.0)
        neg = np.flatnonzero(y == 0.0)
        half = cfg.subset_rows // 2
        picks = np.concatenate([
            rng.choice(pos, size=min(half, len(pos)), replace=False),
            rng.choice(neg, size=min(cfg.subset_rows - half, len(neg)), replace=False)])
        picks = np.sort(picks)
        x, y = x[picks], y[picks]
    return x, y, names


def ingest(cfg: RunConfig):
    """Load the configured dataset and partition it vertically.

    Returns (participants, feature_names, X, y).
    """
    if cfg.preset == "iris":
        x, y, names = iris_dataset(cfg.seed)
    elif cfg.preset == "digits":
        x, y, names = digits_dataset(cfg.seed)
    elif cfg.preset == "mnist":
        x, y, names = mnist_dataset(cfg.dataset, cfg.label_col)
    elif cfg.dataset:
        x, y, names = load_csv(cfg.dataset, cfg.label_col)
        bad = set(np.unique(y)) - {0.0, 1.0}
        if bad:
            raise ConfigError(f"labels must be binary 0/1 after mapping, found {sorted(bad)}")
    else:
        raise ConfigError("either --dataset or --preset is required")
    x, y, names = subset_dataset(x, y, names, cfg)
    participants = vertical_partition(x, y, names, cfg.participants, cfg.lbp)
    return participants, names, x, y


# --- model / run persistence ---------------------------------------------------

def _ct_doc(sc: ScaledCiphertext) -> dict:
    return {"a": str(sc.ct.a), "b": str(sc.ct.b), "key": sc.ct.key_id, "scale": sc.scale}


def _ct_from_doc(doc) -> ScaledCiphertext:
    return ScaledCiphertext(ct=bcp.Ciphertext(a=int(doc["a"]), b=int(doc["b"]),
                                              key_id=doc["key"]), scale=doc["scale"])


def _tree_doc(node) -> dict:
    if isinstance(node, SecureLeaf):
        return {"kind": "leaf", "node_id": node.node_id, "weight": _ct_doc(node.weight)}
    return {"kind": "node", "node_id": node.node_id, "owner": node.owner,
            "feature": node.feature, "cand": node.cand,
            "left": _tree_doc(node.left), "right": _tree_doc(node.right)}


def _tree_from_doc(doc):
    from .federation import InstanceSpace
    if doc["kind"] == "leaf":
        return SecureLeaf(node_id=doc["node_id"], weight=_ct_from_doc(doc["weight"]),
                          instances=InstanceSpace(()))
    return SecureNode(node_id=doc["node_id"], owner=doc["owner"],
                      feature=doc["feature"], cand=doc["cand"],
                      left=_tree_from_doc(doc["left"]),
                      right=_tree_from_doc(doc["right"]))


def save_model(path, tree_list: TreeList, cfg: RunConfig) -> None:
    doc = {"format_version": 1, "key_bits": cfg.key_bits,
           "fixed_point": {"scale_exp": cfg.scale_bits,
                           "quotient_exp": cfg.quotient_bits,
                           "value_bits": cfg.value_bits},
           "f0": _ct_doc(tree_list.f0),
           "trees": [{"tree_id": t.tree_id, "root": _tree_doc(t.root)}
                     for t in tree_list.trees]}
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> tuple:
    doc = json.loads(Path(path).read_text())
    trees = [SecureTree(tree_id=t["tree_id"], root=_tree_from_doc(t["root"]))
             for t in doc["trees"]]
    return TreeList(f0=_ct_from_doc(doc["f0"]), trees=trees), doc


def save_federation(out_dir: Path, fed: Federation) -> None:
    crypto = {"format_version": 1,
              "pp": json.loads(bcp.to_json(fed.pp)),
              "mk": json.loads(bcp.to_json(fed.mk)),
              "seed": fed.seed,
              "mask_bits": fed.mask_bits,
              "features": fed.all_features}
    (out_dir / "crypto.json").write_text(json.dumps(crypto))
    parts = []
    for p in fed.participants:
        lookup = [{"tree": t, "node": n, "j": j, "k": k, "threshold": thr}
                  for (t, n), table in p.lookup.items()
                  for (j, k), thr in table.items()]
        parts.append({"name": p.name, "index": p.index, "is_lbp": p.is_lbp,
                      "features": p.feature_ids,
                      "keypair": json.loads(bcp.to_json(p.keypair)),
                      "lookup": lookup})
    (out_dir / "participants.json").write_text(json.dumps(parts))


def load_federation(out_dir: Path, cfg_doc: dict) -> Federation:
    """Rebuild a prediction-capable federation from a saved run."""
    crypto = json.loads((out_dir / "crypto.json").read_text())
    pp = bcp.from_json(json.dumps(crypto["pp"]))
    mk = bcp.from_json(json.dumps(crypto["mk"]))
    parts_doc = json.loads((out_dir / "participants.json").read_text())
    participants = []
    for doc in parts_doc:
        part = Participant(name=doc["name"], index=doc["index"],
                           columns={j: np.zeros(0) for j in doc["features"]},
                           is_lbp=doc["is_lbp"])
        part.keypair = bcp.from_json(json.dumps(doc["keypair"]))
        for entry in doc["lookup"]:
            part.lookup.setdefault((entry["tree"], entry["node"]), {})[
                (entry["j"], entry["k"])] = entry["threshold"]
        participants.append(part)
    fp_doc = cfg_doc["fixed_point"]
    fpc = FixedPointConfig(scale_exp=fp_doc["scale_exp"],
                           quotient_exp=fp_doc["quotient_exp"],
                           value_bits=fp_doc["value_bits"])
    return Federation.restore(participants, pp, mk, fpc,
                              mask_bits=crypto["mask_bits"], seed=crypto["seed"],
                              features=crypto["features"])


# --- training runner ------------------------------------------------------------

def run_train(cfg: RunConfig) -> dict:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    participants, names, x, y = ingest(cfg)
    params = cfg.boost_params()
    fpc = cfg.fixed_point()
    summary = {"config": asdict(cfg), "n_samples": int(len(y)),
               "n_features": int(x.shape[1])}
    rows = []

    oracle = None
    if cfg.mode in ("plaintext-oracle", "both"):
        t0 = time.perf_counter()
        oracle_parts, _, _, _ = ingest(cfg)
        oracle = oracle_train(oracle_parts, params, fpc, cfg.seed)
        summary["oracle_wall_s"] = time.perf_counter() - t0
        summary["oracle_final"] = oracle.metrics[-1]

    fed = None
    tree_list = None
    if cfg.mode in ("secure", "both"):
        t0 = time.perf_counter()
        fed = Federation(participants, k_bits=cfg.key_bits // 2, fpc=fpc,
                         mask_bits=cfg.mask_bits, seed=cfg.seed,
                         allow_toy=cfg.key_bits < 512)
        secure_metrics = []
        byte_marks = []

        def hook(t, yhat_cts):
            logits = np.array([fed.harness_decode(c) for c in yhat_cts])
            secure_metrics.append({"round": t, "accuracy": accuracy(y, logits),
                                   "logloss": logloss(y, logits)})
            byte_marks.append({
                "p_to_c": fed.meter.ciphertext_bytes(
                    frm=lambda f: f.startswith("P"), to="C"),
                "c_s": fed.meter.ciphertext_bytes(
                    frm=lambda f: f in ("C", "S"), to=lambda t_: t_ in ("C", "S"))})

        tree_list = ssxgb_train(fed, params, round_hook=hook)
        summary["secure_wall_s"] = time.perf_counter() - t0
        summary["secure_final"] = secure_metrics[-1]
        summary["transcript_hash"] = fed.bus.transcript_hash()
        fed.bus.write_transcript(out_dir / "transcript.jsonl")
        fed.meter.write_csv(out_dir / "meter.csv")
        save_model(out_dir / "model.json", tree_list, cfg)
        save_federation(out_dir, fed)

        prev = {"p_to_c": 0, "c_s": 0}
        for i, m in enumerate(secure_metrics):
            row = {"round": m["round"],
                   "train_accuracy": f"{m['accuracy']:.6f}",
                   "train_logloss": f"{m['logloss']:.8f}",
                   "bytes_participant_to_c": byte_marks[i]["p_to_c"] - prev["p_to_c"],
                   "bytes_c_s": byte_marks[i]["c_s"] - prev["c_s"]}
            prev = byte_marks[i]
            if oracle is not None:
                row["oracle_accuracy"] = f"{oracle.metrics[i]['accuracy']:.6f}"
                row["oracle_logloss"] = f"{oracle.metrics[i]['logloss']:.8f}"
            rows.append(row)
    else:
        for m in oracle.metrics:
            rows.append({"round": m["round"],
                         "train_accuracy": f"{m['accuracy']:.6f}",
                         "train_logloss": f"{m['logloss']:.8f}",
                         "bytes_participant_to_c": 0, "bytes_c_s": 0})

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    (out_dir / "run_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


# --- prediction runner -----------------------------------------------------------

def run_predict(model_dir, records_csv, out_path=None) -> list:
    model_dir = Path(model_dir)
    tree_list, model_doc = load_model(model_dir / "model.json")
    fed = load_federation(model_dir, model_doc)
    with open(records_csv, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{records_csv}: empty file")
        try:
            records = [[float(v) for v in row] for row in reader]
        except ValueError as err:
            raise ConfigError(f"{records_csv}: non-numeric cell ({err})") from None
    client = fed.register_client("client-0")
    results = []
    for idx, values in enumerate(records):
        record = encrypt_record(fed, client, values)
        score = spredict(fed, tree_list, record)
        logit, proba = decrypt_score(fed.pp, client, score)
        results.append({"row": idx, "logit": f"{logit:.8f}",
                        "probability": f"{proba:.8f}",
                        "prediction": int(logit >= 0.0)})
    if out_path:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["row", "logit", "probability",
                                                    "prediction"])
            writer.writeheader()
            writer.writerows(results)
    return results


# --- primitive benchmarks ---------------------------------------------------------

BENCH_OPS = ("Enc", "Dec", "mDec", "KeyProd", "Add", "Mult", "TransDec",
             "Exp", "Sub", "LGT", "Div")


def bench_primitives(key_sizes=(512, 1024, 2048), reps: int = 20,
                     seed: int = 0) -> list:
    """Mean wall-clock per primitive per key size (modulus bits).

    Two users share the joint key, matching the two-user setting the timing
    table was reported in.  Sub-millisecond ops run in inner loops so the
    means are resolvable.
    """
    if reps < 5:
        raise ConfigError("need at least 5 repetitions")
    results = []
    for size in key_sizes:
        rng = random.Random(derive_seed(seed, f"bench:{size}"))
        pp, mk = bcp.setup(size // 2, rng=rng, allow_toy=size < 512)
        kp1 = bcp.keygen(pp, rng=rng, key_id="u0")
        kp2 = bcp.keygen(pp, rng=rng, key_id="u1")
        user_pks = {"u0": kp1.pk, "u1": kp2.pk}
        fpc = FixedPointConfig(scale_exp=24, quotient_exp=24, value_bits=16)
        meter = CommMeter(zeta=pp.ciphertext_bytes)
        bus = MessageBus(meter)
        server_s = ServerS(pp, mk, user_pks, rng=random.Random(derive_seed(seed, "s")))
        bus.register("S", server_s.handle)
        server_c = ServerC(pp, user_pks, bus, fpc, mask_bits=40,
                           rng=random.Random(derive_seed(seed, "c")))

        def enc_val(v):
            return server_c.encrypt_value(v, fpc.scale_exp)

        ca, cb = enc_val(3.25), enc_val(-1.5)
        cu = bcp.enc(pp, kp1.pk, 12345, rng=rng, key_id="u0")
        timings = {}

        def timed(name, fn, inner=1):
            samples = []
            for _ in range(reps):
                t0 = time.perf_counter()
                for _ in range(inner):
                    fn()
                samples.append((time.perf_counter() - t0) / inner)
            timings[name] = 1000.0 * (sorted(samples)[len(samples) // 2])

        from .subprotocols import add as s_add, exp as s_exp, sub as s_sub
        timed("Enc", lambda: bcp.enc(pp, kp1.pk, 12345, rng=rng, key_id="u0"))
        timed("Dec", lambda: bcp.dec(pp, kp1.sk, cu))
        timed("mDec", lambda: bcp.mdec(pp, kp1.pk, mk, cu))
        timed("KeyProd", lambda: key_prod(pp, user_pks), inner=200)
        timed("Add", lambda: s_add(pp, ca, cb), inner=200)
        timed("Mult", lambda: server_c.mult(ca, cb))
        timed("TransDec", lambda: server_c.trans_dec(ca, "u0"))
        timed("Exp", lambda: s_exp(pp, ca, 7), inner=50)
        timed("Sub", lambda: s_sub(pp, ca, cb), inner=50)
        timed("LGT", lambda: server_c.lgt(ca, cb))
        timed("Div", lambda: server_c.div(ca, cb))
        results.append({"key_size": size, **{op: timings[op] for op in BENCH_OPS}})
    return results


def write_bench_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operation"] + [f"{r['key_size']}_bits_ms" for r in results])
        for op in BENCH_OPS:
            writer.writerow([op] + [f"{r[op]:.4f}" for r in results])


# --- argument parsing ----------------------------------------------------------

def _add_train_args(p):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--dataset")
    p.add_argument("--label-col", dest="label_col")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--participants", type=int)
    p.add_argument("--lbp", type=int)
    p.add_argument("--key-bits", dest="key_bits", type=int)
    p.add_argument("--scale-bits", dest="scale_bits", type=int)
    p.add_argument("--quotient-bits", dest="quotient_bits", type=int)
    p.add_argument("--value-bits", dest="value_bits", type=int)
    p.add_argument("--mask-bits", dest="mask_bits", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--subsample", type=float)
    p.add_argument("--colsample", type=float)
    p.add_argument("--bucket-size", dest="bucket_size", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--subset-rows", dest="subset_rows", type=int)
    p.add_argument("--subset-features", dest="subset_features", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out-dir", dest="out_dir")


PRESET_DEFAULTS = {
    "iris": {"participants": 4, "lbp": 0, "eta": 0.08, "max_depth": 4,
             "subsample": 0.8, "colsample": 0.8},
    "digits": {"participants": 16, "lbp": 0, "eta": 0.08, "max_depth": 6,
               "subsample": 0.8, "colsample": 0.8},
    "mnist": {"participants": 16, "lbp": 0, "eta": 0.08, "max_depth": 6,
              "subsample": 0.8, "colsample": 0.8},
}


def build_config(args) -> RunConfig:
    base = {}
    if args.config:
        base.update(json.loads(Path(args.config).read_text()))
    preset = args.preset or base.get("preset")
    if preset:
        merged = dict(PRESET_DEFAULTS[preset])
        merged.update(base)
        base = merged
        base["preset"] = preset
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        base[key] = value
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(base) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        cfg = RunConfig(**base)
    except TypeError as err:
        raise ConfigError(str(err)) from None
    if cfg.seed is None:
        raise ConfigError("a seed is mandatory")
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ssxgb",
                                     description="multi-party boosting simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p_train = sub.add_parser("train", help="train a model")
    _add_train_args(p_train)
    p_pred = sub.add_parser("predict", help="score records against a trained run")
    p_pred.add_argument("--model-dir", required=True)
    p_pred.add_argument("--records", required=True)
    p_pred.add_argument("--out", default=None)
    p_bench = sub.add_parser("bench", help="time the cryptographic primitives")
    p_bench.add_argument("--key-sizes", default="512,1024,2048")
    p_bench.add_argument("--reps", type=int, default=20)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=None)

    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0

    try:
        if args.command == "train":
            summary = run_train(build_config(args))
            final = summary.get("secure_final") or summary.get("oracle_final")
            print(f"done: accuracy={final['accuracy']:.4f} "
                  f"logloss={final['logloss']:.4f} -> {summary['config']['out_dir']}")
        elif args.command == "predict":
            results = run_predict(args.model_dir, args.records, args.out)
            for r in results:
                print(f"row {r['row']}: p={r['probability']} logit={r['logit']}")
        elif args.command == "bench":
            sizes = [int(s) for s in args.key_sizes.split(",")]
            results = bench_primitives(sizes, reps=args.reps, seed=args.seed)
            if args.out:
                write_bench_csv(args.out, results)
            header = "operation " + " ".join(f"{r['key_size']:>10}b" for r in results)
            print(header)
            for op in BENCH_OPS:
                print(f"{op:<9} " + " ".join(f"{r[op]:>9.3f}ms" for r in results))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ProtocolError as err:
        print(f"protocol error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Corpus ingestion, temporal splitting and the synthetic planted-community corpus.

Mashup file: JSON Lines ``{"id", "timestamp" (ISO-8601), "services": [ids]}``.
Service registry: CSV with ``id,name``. Embeddings: see ``numerics.io``.
"""
import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
import itertools
import json
import logging
from pathlib import Path

import numpy as np

from .errors import IngestionError, InputError
from .numerics.io import read_embeddings, write_embeddings_bin

log = logging.getLogger(__name__)

DEFAULT_D_R = 768
DEFAULT_D_S = 128
RAND_INIT_STD = 0.1
SYNTH_EPOCH = datetime(2020, 1, 1)


@dataclass(frozen=True)
class RequirementSample:
    id: str
    timestamp: float
    v_r: np.ndarray
    services: tuple  # indices into the service registry


@dataclass(frozen=True)
class ServiceRecord:
    id: str
    name: str
    z0: np.ndarray = None


@dataclass
class CorpusSplit:
    init_history: list
    train: list
    test: list


@dataclass
class IngestionReport:
    raw_records: int = 0
    retained: int = 0
    dropped_small: int = 0
    dropped_services: list = field(default_factory=list)


@dataclass
class Corpus:
    samples: list
    services: list
    epoch: datetime
    d_r: int
    d_s: int
    report: IngestionReport

    @property
    def service_ids(self):
        return [s.id for s in self.services]

    def init_matrix(self):
        """Stack of service init vectors, or None if any is missing."""
        if not self.services or any(s.z0 is None for s in self.services):
            return None
        return np.vstack([s.z0 for s in self.services])


def days_since(ts, epoch):
    us = (ts - epoch) // timedelta(microseconds=1)
    return (us / 1e6) / 86400.0


def quantize_days(days):
    """Round a day count to microsecond resolution, as the file format stores it."""
    return (round(days * 86400e6) / 1e6) / 86400.0


def days_to_iso(days, epoch):
    return (epoch + timedelta(microseconds=round(days * 86400e6))).isoformat()


def _parse_ts(raw):
    try:
        return datetime.fromisoformat(raw)
    except (TypeError, ValueError) as exc:
        raise IngestionError(f"bad timestamp {raw!r}") from exc


def load_corpus(mashup_path, service_path, req_embedding_path, svc_embedding_path=None):
    """Load samples and the service registry; samples come back sorted by time.

    Services never used by any mashup are dropped from the registry (the
    filter runs over the whole file, not a training window).
    """
    records = []
    with open(mashup_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    names = {}
    with open(service_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["id"] in names:
                raise IngestionError(f"{service_path}: duplicate service id {row['id']}")
            names[row["id"]] = row.get("name", "")

    report = IngestionReport(raw_records=len(records))
    kept = []
    for rec in records:
        svcs = list(dict.fromkeys(str(s) for s in rec["services"]))
        for s in svcs:
            if s not in names:
                raise IngestionError(f"mashup {rec['id']}: unknown service {s}")
        if len(svcs) < 2:
            report.dropped_small += 1
            continue
        kept.append((str(rec["id"]), _parse_ts(rec["timestamp"]), svcs))
    report.retained = len(kept)
    if report.dropped_small:
        log.warning("dropped %d mashups with fewer than two services", report.dropped_small)

    used = sorted({s for _, _, svcs in kept for s in svcs})
    report.dropped_services = sorted(set(names) - set(used))
    index = {s: i for i, s in enumerate(used)}

    req_ids, req_mat = read_embeddings(req_embedding_path)
    req_index = {r: i for i, r in enumerate(req_ids)}
    d_r = req_mat.shape[1]
    svc_vecs = {}
    d_s = DEFAULT_D_S
    if svc_embedding_path is not None:
        sids, smat = read_embeddings(svc_embedding_path)
        d_s = smat.shape[1]
        svc_vecs = dict(zip(sids, smat))
        missing = [s for s in used if s not in svc_vecs]
        if missing:
            raise IngestionError(f"{svc_embedding_path}: no embedding for service {missing[0]}")
    if not np.all(np.isfinite(req_mat)):
        raise IngestionError(f"{req_embedding_path}: non-finite values")

    epoch = min((ts for _, ts, _ in kept), default=SYNTH_EPOCH)
    samples = []
    for rid, ts, svcs in kept:
        if rid not in req_index:
            raise IngestionError(f"{req_embedding_path}: no embedding for requirement {rid}")
        samples.append(RequirementSample(
            rid, days_since(ts, epoch), req_mat[req_index[rid]].copy(),
            tuple(index[s] for s in svcs)))
    samples.sort(key=lambda s: (s.timestamp, s.id))
    services = [ServiceRecord(s, names[s], svc_vecs[s].copy() if s in svc_vecs else None)
                for s in used]
    return Corpus(samples, services, epoch, d_r, d_s, report)


def save_corpus(corpus, out_dir, samples=None):
    """Write mashups.jsonl, services.csv and embedding binaries into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = corpus.samples if samples is None else samples
    ids = corpus.service_ids
    paths = {
        "mashups": out / "mashups.jsonl",
        "services": out / "services.csv",
        "req_emb": out / "requirements.bin",
    }
    with open(paths["mashups"], "w") as fh:
        for s in samples:
            fh.write(json.dumps({"id": s.id, "timestamp": days_to_iso(s.timestamp, corpus.epoch),
                                 "services": [ids[i] for i in s.services]}) + "\n")
    with open(paths["services"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "name"])
        for s in corpus.services:
            w.writerow([s.id, s.name])
    write_embeddings_bin(paths["req_emb"], [s.id for s in samples],
                         np.vstack([s.v_r for s in samples]) if samples
                         else np.zeros((0, corpus.d_r)))
    Z0 = corpus.init_matrix()
    if Z0 is not None:
        paths["svc_emb"] = out / "services.bin"
        write_embeddings_bin(paths["svc_emb"], ids, Z0)
    return paths


def split_temporal(samples, n_init, n_train):
    if n_init < 0 or n_train < 0 or n_init + n_train > len(samples):
        raise InputError(f"cannot take {n_init}+{n_train} from {len(samples)} samples")
    return CorpusSplit(list(samples[:n_init]), list(samples[n_init:n_init + n_train]),
                       list(samples[n_init + n_train:]))


@dataclass
class SyntheticTruth:
    G: np.ndarray
    g: np.ndarray
    centroids: np.ndarray
    service_labels: np.ndarray
    requirement_labels: np.ndarray
    noise: float
    spread: float

    @property
    def separable(self):
        return self.noise == 0.0

    def to_json(self):
        return {
            "G": self.G.tolist(), "g": self.g.tolist(), "centroids": self.centroids.tolist(),
            "service_labels": self.service_labels.tolist(),
            "requirement_labels": self.requirement_labels.tolist(),
            "noise": self.noise, "spread": self.spread, "separable": self.separable,
        }


def generate_synthetic(K, S, R, d_r, d_s, noise, rng, spread=0.09, centroid_scale=0.15):
    """Planted-community corpus.

    The default scales keep service coordinates inside the near-linear range
    of tanh, so the bounded representation updates start from vectors they
    can reproduce.

    Services of community k sit at ``centroid_k + N(0, spread)``. A hidden
    affine map ``x -> G x + g`` sends service space to requirement space and
    each requirement is the image of the mean of 2-5 services drawn from one
    community, plus ``N(0, noise)``.
    Returns (corpus, truth).
    """
    if min(K, S, R) < 1 or noise < 0:
        raise InputError("K, S, R must be >= 1 and noise >= 0")
    centroids = rng.normal(0.0, centroid_scale, size=(K, d_s))
    labels = np.repeat(np.arange(K), S)
    Z0 = centroids[labels] + rng.normal(0.0, spread, size=(K * S, d_s))
    G = rng.normal(0.0, 1.0 / np.sqrt(d_s), size=(d_r, d_s))
    g = rng.normal(0.0, 0.1, size=d_r)
    width = len(str(K * S - 1))
    services = [ServiceRecord(f"s{i:0{width}d}", f"service-{i}", Z0[i].copy())
                for i in range(K * S)]
    times = np.sort(rng.uniform(0.0, float(R), size=R))
    rwidth = len(str(R - 1))
    samples, req_labels = [], []
    for j in range(R):
        k = int(rng.integers(K))
        size = int(rng.integers(2, 6))
        members = np.flatnonzero(labels == k)
        chosen = np.sort(rng.choice(members, size=min(size, len(members)), replace=False))
        v = G @ Z0[chosen].mean(axis=0) + g
        if noise > 0:
            v = v + rng.normal(0.0, noise, size=d_r)
        samples.append(RequirementSample(f"r{j:0{rwidth}d}", quantize_days(times[j]), v,
                                         tuple(int(c) for c in chosen)))
        req_labels.append(k)
    samples.sort(key=lambda s: (s.timestamp, s.id))
    corpus = Corpus(samples, services, SYNTH_EPOCH, d_r, d_s,
                    IngestionReport(R, R, 0, []))
    truth = SyntheticTruth(G, g, centroids, labels, np.array(req_labels), float(noise),
                           float(spread))
    return corpus, truth


def subset_table(truth, Z0, max_size=5):
    """Every within-community subset of size 2..max_size and its mean vector."""
    subsets = []
    for k in range(truth.centroids.shape[0]):
        members = np.flatnonzero(truth.service_labels == k)
        for size in range(2, min(max_size, len(members)) + 1):
            subsets.extend(itertools.combinations(members.tolist(), size))
    means = np.vstack([Z0[list(sub)].mean(axis=0) for sub in subsets])
    return subsets, means


def nearest_centroid_oracle(v_r, truth, Z0, max_size=5, table=None):
    """Recover the component set of a synthetic requirement from its vector.

    Inverts the hidden map back into service space and returns the
    within-community subset whose mean lies nearest. Uses no usage counts.
    Pass ``table`` from ``subset_table`` to reuse it across requirements.
    """
    subsets, means = table if table is not None else subset_table(truth, Z0, max_size)
    m, *_ = np.linalg.lstsq(truth.G, v_r - truth.g, rcond=None)
    return list(subsets[int(np.argmin(((means - m) ** 2).sum(axis=1)))])

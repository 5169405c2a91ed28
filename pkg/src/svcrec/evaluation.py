"""Top-N ranking metrics and the temporal test loop."""
from dataclasses import dataclass, field
import csv
import json

import numpy as np

from . import dynrep
from .errors import InputError
from .graph import generate_events
from .recommend import rank_services

MODES = ("prequential", "frozen")
DEFAULT_N = tuple(range(1, 11))


def precision_recall_f1(predicted, actual, N, paper_literal_f1=False):
    """Precision, recall and F1 of the top-N prefix of ``predicted``.

    With ``paper_literal_f1`` the third value is |hit| / (|C| + |C_hat|)
    instead of the harmonic mean.
    """
    actual = set(actual)
    if not actual:
        raise InputError("actual component set is empty")
    top = list(predicted)[:N]
    if not top:
        return 0.0, 0.0, 0.0
    hit = len(actual.intersection(top))
    p = hit / len(top)
    r = hit / len(actual)
    if paper_literal_f1:
        return p, r, hit / (len(actual) + len(top))
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass
class MetricsReport:
    by_n: dict
    n_list: tuple
    mode: str
    rows: list = field(default_factory=list)

    def f1(self, N=5):
        return self.by_n[N][2]

    def csv_rows(self, std=None):
        out = []
        for N in self.n_list:
            p, r, f = self.by_n[N]
            s = std.by_n[N] if std is not None else ("", "", "")
            out.append([self.mode, N, p, r, f, *s])
        return out


CSV_HEADER = ["mode", "N", "precision", "recall", "f1", "precision_std", "recall_std", "f1_std"]


def write_metrics_csv(path, reports):
    """``reports`` is a list of (MetricsReport, std MetricsReport or None)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rep, std in reports:
            for row in rep.csv_rows(std):
                w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def write_detail_jsonl(path, report):
    with open(path, "w") as fh:
        for row in report.rows:
            fh.write(json.dumps(row) + "\n")


def _score_requirement(rows, by_n_acc, smp, ranked, n_list, paper_literal_f1, mode):
    detail = {"requirement_id": smp.id, "mode": mode, "actual": sorted(smp.services),
              "predicted": ranked, "metrics": {}}
    for N in n_list:
        m = precision_recall_f1(ranked, smp.services, N, paper_literal_f1)
        by_n_acc[N].append(m)
        detail["metrics"][str(N)] = list(m)
    rows.append(detail)


def _summarise(by_n_acc, n_list, mode, rows):
    by_n = {}
    for N in n_list:
        arr = np.array(by_n_acc[N]) if by_n_acc[N] else np.zeros((1, 3))
        by_n[N] = tuple(float(x) for x in arr.mean(axis=0))
    return MetricsReport(by_n, tuple(n_list), mode, rows)


def evaluate(test, state, rec, dy, n_list=DEFAULT_N, mode="prequential", *,
             static_z=False, paper_literal_f1=False):
    """Macro-averaged metrics over ``test`` in temporal order.

    In prequential mode each requirement is ranked first, then its true
    component set is replayed as co-invocation events with frozen parameters
    (``state`` is mutated). Frozen mode never touches ``state``.
    """
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}")
    n_list = tuple(n_list)
    prev = -np.inf
    by_n_acc = {N: [] for N in n_list}
    rows = []
    for smp in test:
        if smp.timestamp < prev:
            raise InputError("test samples must be sorted by timestamp")
        prev = smp.timestamp
        ranked = [s.service for s in rank_services(rec, smp.v_r, state.Z, max(n_list))]
        _score_requirement(rows, by_n_acc, smp, ranked, n_list, paper_literal_f1, mode)
        if mode == "prequential" and not static_z:
            for ev in generate_events(smp.services, smp.timestamp):
                dynrep.process_event(state, dy, ev)
    return _summarise(by_n_acc, n_list, mode, rows)


def popularity_ranking(train, n_services):
    counts = np.zeros(n_services, dtype=np.int64)
    for smp in train:
        for s in smp.services:
            counts[s] += 1
    return [int(i) for i in np.lexsort((np.arange(n_services), -counts))]


def popularity_baseline(train, test, n_list=DEFAULT_N, n_services=None, paper_literal_f1=False):
    """Rank every test requirement by training-set usage counts (ties by index)."""
    if not train:
        raise InputError("popularity baseline needs training samples")
    if n_services is None:
        n_services = 1 + max(s for smp in list(train) + list(test) for s in smp.services)
    ranking = popularity_ranking(train, n_services)
    n_list = tuple(n_list)
    by_n_acc = {N: [] for N in n_list}
    rows = []
    for smp in test:
        _score_requirement(rows, by_n_acc, smp, ranking[:max(n_list)], n_list,
                           paper_literal_f1, "popularity")
    return _summarise(by_n_acc, n_list, "popularity", rows)


def aggregate_reports(reports):
    """Mean and standard deviation (population) of several reports, per N."""
    n_list = reports[0].n_list
    mean, std = {}, {}
    for N in n_list:
        arr = np.array([r.by_n[N] for r in reports])
        mean[N] = tuple(float(x) for x in arr.mean(axis=0))
        std[N] = tuple(float(x) for x in arr.std(axis=0))
    mode = reports[0].mode
    return MetricsReport(mean, n_list, mode), MetricsReport(std, n_list, mode)

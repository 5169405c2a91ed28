"""Command-line entry point: synth, train, eval, recommend, gradcheck.

Configuration is a flat ``key = value`` file (``#`` starts a comment) whose
keys are the training options plus the data keys below; ``--set key=value``
overrides file values. Relative paths in a config file resolve against the
file's directory. Failures print one JSON error record on stderr and exit 1.
"""
import argparse
from dataclasses import fields, replace
import hashlib
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__, gradcheck
from .data import generate_synthetic, load_corpus, save_corpus, split_temporal
from .dynrep import DyRepParams
from .errors import InputError
from .evaluation import (
    DEFAULT_N, MODES, aggregate_reports, evaluate, popularity_baseline, write_detail_jsonl,
    write_metrics_csv,
)
from .graph import GraphState
from .numerics.io import read_embeddings, read_tensors, write_tensors
from .recommend import RecParams, rank_services
from .rng import substream
from .trainer import TrainConfig, build_model, train

log = logging.getLogger("svcrec")

DATA_KEYS = {"mashups": str, "services": str, "req_emb": str, "svc_emb": str,
             "n_init": int, "n_train": int, "seeds": int}
PATH_KEYS = ("mashups", "services", "req_emb", "svc_emb")
DATA_DEFAULTS = {"svc_emb": None, "n_init": 300, "n_train": 2400, "seeds": 1}
ABLATIONS = ("rand_init", "static_z", "no_transform")


class CommandError(Exception):
    pass


# --- configuration -------------------------------------------------------------

def _convert(key, raw, typ):
    if typ is bool or typ == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError(f"config key {key}: expected a boolean, got {raw!r}")
    conv = {"int": int, "float": float, "str": str}.get(typ, typ)
    try:
        return conv(raw.strip())
    except ValueError as exc:
        raise InputError(f"config key {key}: cannot parse {raw!r}") from exc


def _key_types():
    types = {f.name: f.type for f in fields(TrainConfig)}
    types.update(DATA_KEYS)
    return types


def parse_config_file(path):
    out = {}
    base = Path(path).resolve().parent
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k in PATH_KEYS and v and not os.path.isabs(v):
                v = str(base / v)
            out[k] = v
    return out


def resolve_config(config_path, overrides, ablations):
    """Return (TrainConfig, data dict); later sources override earlier ones."""
    raw = parse_config_file(config_path) if config_path else {}
    for item in overrides or ():
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v
    for a in ablations or ():
        raw[a] = "true"
    types = _key_types()
    unknown = sorted(set(raw) - set(types))
    if unknown:
        raise InputError(f"unknown config key {unknown[0]}")
    vals = {k: _convert(k, v, types[k]) for k, v in raw.items()}
    data = dict(DATA_DEFAULTS)
    data.update({k: v for k, v in vals.items() if k in DATA_KEYS})
    cfg = TrainConfig(**{k: v for k, v in vals.items() if k not in DATA_KEYS})
    return cfg, data


def _load(data):
    for k in ("mashups", "services", "req_emb"):
        if not data.get(k):
            raise InputError(f"config key {k} is required")
    corpus = load_corpus(data["mashups"], data["services"], data["req_emb"], data.get("svc_emb"))
    n_init = data["n_init"]
    n_train = min(data["n_train"], len(corpus.samples) - n_init)
    return corpus, split_temporal(corpus.samples, n_init, n_train)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- checkpoints -----------------------------------------------------------------

def save_checkpoint(out_dir, state, rec, dy, config):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensors = {f"rec.{k}": v for k, v in rec.tensors().items()}
    tensors.update({f"dy.{k}": v for k, v in dy.tensors().items()})
    write_tensors(out / "params.bin", tensors)
    state.save(out / "graph.json", out / "z.bin")
    meta = {"activation": dy.activation, "time_scale": dy.time_scale,
            "transform": rec.uses_transform, "d_r": int(rec.d_r), "d_s": int(dy.dim),
            "config": config.to_dict()}
    with open(out / "model.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return {"params": str(out / "params.bin"), "graph": str(out / "graph.json"),
            "z": str(out / "z.bin"), "model": str(out / "model.json")}


def load_checkpoint(ckpt_dir, d_r=None):
    """Rebuild (state, rec, dy) from a checkpoint directory.

    ``d_r`` is the requirement dimension the caller will feed; tensor shapes
    are checked against it and against the stored Z.
    """
    ckpt = Path(ckpt_dir)
    with open(ckpt / "model.json") as fh:
        meta = json.load(fh)
    state = GraphState.load(ckpt / "graph.json")
    d_s = state.dim
    d_r = meta["d_r"] if d_r is None else d_r
    tensors = read_tensors(ckpt / "params.bin")
    rng = np.random.default_rng(0)
    rec = RecParams.init(d_r, d_s, rng, transform=meta["transform"])
    dy = DyRepParams.init(d_s, rng, meta["activation"], meta["time_scale"])
    rec.load_tensors({k[4:]: v for k, v in tensors.items() if k.startswith("rec.")})
    dy.load_tensors({k[3:]: v for k, v in tensors.items() if k.startswith("dy.")})
    return state, rec, dy


# --- commands --------------------------------------------------------------------

def cmd_synth(args):
    rng = substream(args.seed, "synth")
    corpus, truth = generate_synthetic(args.K, args.S, args.R, args.d_r, args.d_s, args.noise, rng,
                                       spread=args.spread, centroid_scale=args.centroid_scale)
    save_corpus(corpus, args.out)
    with open(Path(args.out) / "truth.json", "w") as fh:
        json.dump(truth.to_json(), fh)
    print(f"wrote {len(corpus.samples)} requirements and {len(corpus.services)} services to {args.out}")
    return 0


def cmd_train(args):
    cfg, data = resolve_config(args.config, args.set, args.ablation)
    corpus, split = _load(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_list = tuple(args.n) if args.n else DEFAULT_N
    seeds = list(range(cfg.seed, cfg.seed + data["seeds"]))
    reports, artifacts = [], {}
    for s in seeds:
        scfg = replace(cfg, seed=s)
        state, rec, dy = build_model(corpus, split, scfg)
        rep = train(split.train, scfg, state, rec, dy)
        seed_dir = out / f"seed{s}"
        artifacts[f"seed{s}"] = save_checkpoint(seed_dir, state, rec, dy, scfg)
        with open(seed_dir / "train_report.json", "w") as fh:
            json.dump(rep.to_dict(), fh, indent=1)
        artifacts[f"seed{s}"]["train_report"] = str(seed_dir / "train_report.json")
        test_rep = evaluate(split.test, state, rec, dy, n_list, static_z=scfg.static_z)
        write_detail_jsonl(seed_dir / "detail.jsonl", test_rep)
        reports.append(test_rep)
        log.info("seed %d: test F1@5 %s", s, test_rep.by_n.get(5))
    metrics = out / "metrics.csv"
    if reports and split.test:
        mean, std = aggregate_reports(reports)
        write_metrics_csv(metrics, [(mean, std if len(reports) > 1 else None)])
        artifacts["metrics"] = str(metrics)
    manifest = {
        "version": __version__,
        "command": "train",
        "config": cfg.to_dict(),
        "data": data,
        "ablations": [a for a in ABLATIONS if getattr(cfg, a)],
        "inputs": {k: {"path": data[k], "sha256": sha256(data[k])}
                   for k in PATH_KEYS if data.get(k)},
        "seeds": seeds,
        "artifacts": artifacts,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    print(f"trained {len(seeds)} seed(s); artifacts in {out}")
    return 0


def cmd_eval(args):
    cfg, data = resolve_config(args.config, args.set, args.ablation)
    corpus, split = _load(data)
    state, rec, dy = load_checkpoint(args.checkpoint, corpus.d_r)
    if state.ids != corpus.service_ids:
        raise InputError("checkpoint service list does not match the corpus registry")
    n_list = tuple(args.n) if args.n else DEFAULT_N
    rep = evaluate(split.test, state, rec, dy, n_list, args.mode, static_z=cfg.static_z,
                   paper_literal_f1=args.paper_literal_f1)
    rows = [(rep, None)]
    if args.baseline:
        rows.append((popularity_baseline(split.train, split.test, n_list,
                                         len(corpus.services), args.paper_literal_f1), None))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", rows)
    write_detail_jsonl(out / "detail.jsonl", rep)
    N = 5 if 5 in n_list else n_list[0]
    print(f"{args.mode} F1@{N} = {rep.by_n[N][2]:.4f} over {len(split.test)} requirements")
    return 0


def cmd_recommend(args):
    ids, V = read_embeddings(args.requirements)
    state, rec, dy = load_checkpoint(args.checkpoint)
    if len(ids) and V.shape[1] != rec.d_r:
        raise InputError(f"requirement embeddings have dim {V.shape[1]}, checkpoint expects {rec.d_r}")
    with open(args.out, "w") as fh:
        for rid, v in zip(ids, V):
            ranked = rank_services(rec, v, state.Z, args.n)
            fh.write(json.dumps({"requirement_id": rid, "ranked": [
                {"service_id": state.ids[s.service], "score": s.score, "prob": s.prob}
                for s in ranked]}) + "\n")
    print(f"wrote {len(ids)} recommendation records to {args.out}")
    return 0


def cmd_gradcheck(args):
    rows, worst = gradcheck.run(args.instances, args.seed, args.d_r, args.d_s, args.services,
                                args.events, args.form, corrupt=args.corrupt)
    table = {}
    for _, loss, tensor, err in rows:
        table[(loss, tensor)] = max(table.get((loss, tensor), 0.0), err)
    print(f"{'loss':4s}  {'tensor':8s}  {'max rel err':>12s}  status")
    for (loss, tensor), err in table.items():
        ok = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        print(f"{loss:4s}  {tensor:8s}  {err:12.3e}  {ok}")
    if not worst < gradcheck.TOLERANCE:
        raise CommandError(f"gradient mismatch: max relative error {worst:.3e} "
                           f">= {gradcheck.TOLERANCE:g}")
    print(f"all {len(table)} tensors within {gradcheck.TOLERANCE:g} over {args.instances} instances")
    return 0


# --- parser ----------------------------------------------------------------------

def _add_config_args(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--ablation", action="append", choices=ABLATIONS,
                   help="switch on an ablation (repeatable)")


def build_parser():
    ap = argparse.ArgumentParser(prog="svcrec", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    ap.add_argument("--version", action="version", version=f"svcrec {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted-community corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--K", type=int, default=4, help="communities")
    p.add_argument("--S", type=int, default=10, help="services per community")
    p.add_argument("--R", type=int, default=600, help="requirements")
    p.add_argument("--d-r", type=int, default=16, help="requirement dimension")
    p.add_argument("--d-s", type=int, default=8, help="service dimension")
    p.add_argument("--noise", type=float, default=0.1, help="requirement noise std")
    p.add_argument("--spread", type=float, default=0.09, help="service spread around centroids")
    p.add_argument("--centroid-scale", type=float, default=0.15, help="centroid std")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train, test and write a checkpoint per seed")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, nargs="+", help="N values for test metrics (default 1..10)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint directory (e.g. run/seed0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=MODES, default="prequential")
    p.add_argument("--n", type=int, nargs="+", help="N values (default 1..10)")
    p.add_argument("--baseline", action="store_true", help="also emit popularity rows")
    p.add_argument("--paper-literal-f1", action="store_true",
                   help="report |hit| / (|C| + |C_hat|) instead of the harmonic mean")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("recommend", help="rank services for requirement embeddings")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--requirements", required=True, help="requirement embedding file")
    p.add_argument("--n", type=int, default=5, help="services per requirement")
    p.add_argument("--out", required=True, help="output JSON Lines file")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("gradcheck", help="compare analytic and numerical gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--d-r", type=int, default=6)
    p.add_argument("--d-s", type=int, default=4)
    p.add_argument("--services", type=int, default=5)
    p.add_argument("--events", type=int, default=3)
    p.add_argument("--form", choices=("survival", "paper-literal"), default="survival")
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one machine-readable line, whatever failed
        record = {"error": type(exc).__name__, "command": args.command, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        if args.verbose:
            log.exception("command failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())

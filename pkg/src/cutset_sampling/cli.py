"""Command-line interface.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
The manifest records the command, every resolved argument, the seed and
the SHA-256 of each input file; ``replay`` re-runs it.  Wall-clock figures
go to ``timing.json`` only, so CSV outputs are byte-identical across runs.

Exit codes: 0 success, 2 usage, 3 invalid input, 4 zero-probability
evidence, 5 resource cap exceeded, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .exact import cutset_conditioning, jtc_posteriors
from .generators import GenSpec, generate, pick_evidence
from .graph import (
    Cutset,
    _decompose,
    find_loop_cutset,
    find_w_cutset,
    moralize,
    nested_w_cutsets,
)
from .metrics import batch_means_ci, compare
from .model import (
    CapExceededError,
    Marginals,
    Network,
    NetworkError,
    ZeroEvidenceError,
    load_evidence,
    load_network,
    marginals_from_vectors,
    marginals_to_csv,
    serialize_evidence,
    serialize_network,
)
from .propagation import ibp_posteriors
from .sampling import (
    ENGINES,
    ESTIMATORS,
    INITS,
    SCANS,
    AisBnParams,
    SamplerResult,
    SamplingConfig,
    aisbn_run,
    cutset_gibbs_run,
    gibbs_run,
    likelihood_weighting_run,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INPUT, EXIT_ZERO, EXIT_CAP = 0, 1, 2, 3, 4, 5
SAMPLE_METHODS = ("gibbs", "cutset", "lw", "aisbn")


class InputError(Exception):
    """Bad input file or argument combination (exit code 3)."""


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write_manifest(out: Path, command: str, args: dict, inputs: Sequence[Optional[str]]) -> None:
    digests = {}
    for p in inputs:
        if p:
            digests[p] = _sha256(Path(p))
    manifest = {
        "tool": "cutset-sampling",
        "version": __version__,
        "command": command,
        "args": args,
        "seed": args.get("seed"),
        "inputs": digests,
    }
    _write(out / "manifest.json", _json(manifest))


def _load(net_path: str, ev_path: Optional[str]):
    try:
        net = load_network(net_path)
    except OSError as exc:
        raise InputError(f"cannot read network: {exc}") from None
    e: Dict[int, int] = {}
    if ev_path:
        try:
            e = load_evidence(ev_path, net)
        except OSError as exc:
            raise InputError(f"cannot read evidence: {exc}") from None
    return net, e


def _names(net: Network, vs) -> str:
    return ";".join(net.variables[v].name for v in vs)


def _choose_cutset(net: Network, e, mode: str, w: Optional[int]) -> Cutset:
    if mode == "loop":
        return find_loop_cutset(net, e)
    if w is None:
        raise InputError("--w is required with --cutset-mode w")
    if w < 1:
        raise InputError("--w must be >= 1")
    return find_w_cutset(net, e, w)


def load_marginals_csv(path: str, net: Network) -> Marginals:
    """Read a variable,state,probability CSV (as written by ``infer``)."""
    vectors = [np.full(net.cards[i], np.nan) for i in range(net.n)]
    try:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read reference marginals: {exc}") from None
    for r in rows:
        try:
            i = net.name_index[r["variable"]]
            s = net.variables[i].states.index(r["state"])
            vectors[i][s] = float(r["probability"])
        except (KeyError, ValueError, TypeError):
            raise InputError(f"reference marginals: bad row {r}") from None
    if any(np.isnan(v).any() for v in vectors):
        raise InputError("reference marginals do not cover every variable state")
    return marginals_from_vectors(vectors)


# ---------------------------------------------------------------------------
# generate


def cmd_generate(a) -> int:
    spec = GenSpec(family=a.family, seed=a.seed, n_root=a.n_root, n_total=a.n_total,
                   n_leaves=a.n_leaves, n_parents=a.parents, min_parents=a.min_parents,
                   max_parents=a.max_parents, rows=a.rows, cols=a.cols, code_bits=a.code_bits,
                   sigma=a.sigma, flip_prob=a.flip_prob)
    net, e = generate(spec)
    if a.evidence_count:
        if spec.family == "coding":
            raise InputError("coding networks carry their own evidence")
        ev_seed = a.seed if a.evidence_seed is None else a.evidence_seed
        e = pick_evidence(net, a.evidence_policy, a.evidence_count, ev_seed)
    out = Path(a.out)
    _write(out / "network.json", serialize_network(net))
    _write(out / "evidence.json", serialize_evidence(e, net))
    _write_manifest(out, "generate", vars(a), [])
    print(f"{net.n} variables, {len(e)} evidence bindings -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cutset


def _cluster_histogram(net: Network, e, members) -> Dict[int, int]:
    clusters = _decompose(moralize(net).without(set(members) | set(e)))[0]
    hist: Dict[int, int] = {}
    for c in clusters:
        hist[len(c)] = hist.get(len(c), 0) + 1
    return dict(sorted(hist.items()))


def cmd_cutset(a) -> int:
    net, e = _load(a.net, a.evidence)
    if a.mode == "loop":
        found = [(None, find_loop_cutset(net, e))]
    else:
        if not a.w:
            raise InputError("--w is required with --mode w")
        if min(a.w) < 1:
            raise InputError("--w must be >= 1")
        if a.nested:
            found = list(nested_w_cutsets(net, e, a.w).items())
        else:
            found = [(w, find_w_cutset(net, e, w)) for w in sorted(set(a.w))]
    rows = [("w", "kind", "size", "certified_width", "members", "proper_subset_of")]
    hist_rows = [("w", "cluster_size", "count")]
    for pos, (w, c) in enumerate(found):
        sub = ""
        if pos > 0:
            prev = set(found[pos - 1][1].members)
            if set(c.members) < prev:
                sub = str(found[pos - 1][0])
        rows.append(("" if w is None else w, c.kind, len(c), c.certified_width, _names(net, c.members), sub))
        for size, count in _cluster_histogram(net, e, c.members).items():
            hist_rows.append(("" if w is None else w, size, count))
    out = Path(a.out)
    text = _csv(rows)
    _write(out / "cutset.csv", text)
    _write(out / "clusters.csv", _csv(hist_rows))
    _write_manifest(out, "cutset", vars(a), [a.net, a.evidence])
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer


def cmd_infer(a) -> int:
    net, e = _load(a.net, a.evidence)
    summary = {"method": a.method, "evidence": len(e)}
    if a.method == "exact":
        m = jtc_posteriors(net, e)
    elif a.method == "cutset-cond":
        c = _choose_cutset(net, e, a.cutset_mode, a.w)
        m = cutset_conditioning(net, e, c)
        summary.update(cutset=_names(net, c.members), cutset_size=len(c))
    else:
        r = ibp_posteriors(net, e, max_iters=a.max_iters, tol=a.tol)
        if r.zero_belief:
            raise ZeroEvidenceError()
        m = r.marginals
        summary.update(converged=r.converged, iterations=r.iterations, max_change=r.max_change)
    if m.log_evidence is not None:
        summary.update(p_evidence=m.evidence_prob, log_p_evidence=m.log_evidence)
    out = Path(a.out)
    _write(out / "marginals.csv", marginals_to_csv(net, m))
    _write(out / "summary.json", _json(summary))
    _write_manifest(out, "infer", vars(a), [a.net, a.evidence])
    if m.log_evidence is not None:
        print(f"P(e) = {m.evidence_prob!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample


def _config(d: dict) -> SamplingConfig:
    return SamplingConfig(chains=d["chains"], samples=d["samples"], burn_in=d["burn_in"],
                          scan=d["scan"], seed=d["seed"], init=d["init"], estimator=d["estimator"],
                          residual_every=d["residual_every"], engine=d["engine"])


def _run_sampler(net: Network, e, d: dict, cutset: Optional[Cutset] = None) -> SamplerResult:
    cfg = _config(d)
    method = d["method"]
    if method == "gibbs":
        return gibbs_run(net, e, cfg)
    if method == "cutset":
        c = cutset if cutset is not None else _choose_cutset(net, e, d["cutset_mode"], d.get("w"))
        return cutset_gibbs_run(net, e, c, cfg)
    if method == "lw":
        return likelihood_weighting_run(net, e, cfg)
    if method == "aisbn":
        return aisbn_run(net, e, cfg, AisBnParams(interval=d["aisbn_interval"], updates=d["aisbn_updates"]))
    raise InputError(f"unknown method {method!r}")


def _stats_row(net: Network, e, res: SamplerResult, alpha: float, cutset: Optional[Cutset],
               exact: Optional[Marginals]):
    ci = batch_means_ci(res.chains, alpha, skip=e) if len(res.chains) >= 2 else None
    row = {
        "method": res.method,
        "estimator": res.estimator,
        "chains": len(res.chains),
        "samples": res.samples,
        "sampling_set_size": len(res.sampled),
        "certified_width": "" if cutset is None else cutset.certified_width,
        "unique_tuples": "" if res.unique_tuples is None else res.unique_tuples,
        "dead_ends": res.dead_ends,
        "degenerate_updates": res.degenerate_updates,
        "non_ergodic": int(res.non_ergodic),
        "ci_half_width": float("nan") if ci is None else ci.aggregate,
    }
    report = None
    if exact is not None:
        report = compare(exact, res.pooled, skip=e)
        row.update(mse=report.mse, abs_error=report.avg_abs_error, kl=report.kl,
                   kl_infinite=len(report.kl_infinite), hellinger=report.hellinger)
    return row, ci, report


def cmd_sample(a) -> int:
    net, e = _load(a.net, a.evidence)
    d = vars(a)
    cutset = None
    if a.method == "cutset":
        cutset = _choose_cutset(net, e, a.cutset_mode, a.w)
    exact = load_marginals_csv(a.exact_ref, net) if a.exact_ref else None
    res = _run_sampler(net, e, d, cutset)
    row, ci, report = _stats_row(net, e, res, a.alpha, cutset, exact)
    pooled = res.pooled
    est_rows = [("variable", "state", "estimate", "variance", "ci_half_width")
                + (("exact", "abs_error") if exact is not None else ())]
    for v in net.variables:
        for s, label in enumerate(v.states):
            r = (v.name, label, float(pooled[v.index][s]),
                 float(ci.variance[v.index][s]) if ci else float("nan"),
                 float(ci.half_width[v.index][s]) if ci else float("nan"))
            if exact is not None:
                r += (float(exact[v.index][s]), abs(float(exact[v.index][s]) - float(pooled[v.index][s])))
            est_rows.append(r)
    chain_rows = [("chain", "variable", "state", "estimate")]
    for k, m in enumerate(res.chains):
        for v in net.variables:
            if v.index in e:
                continue
            for s, label in enumerate(v.states):
                chain_rows.append((k, v.name, label, float(m[v.index][s])))
    out = Path(a.out)
    _write(out / "estimates.csv", _csv(est_rows))
    _write(out / "chains.csv", _csv(chain_rows))
    _write(out / "stats.csv", _csv([tuple(row), tuple(row.values())]))
    if cutset is not None:
        _write(out / "cutset.csv", _csv([("kind", "size", "certified_width", "members"),
                                         (cutset.kind, len(cutset), cutset.certified_width,
                                          _names(net, cutset.members))]))
    if report is not None:
        _write(out / "metrics.csv", _csv([("metric", "variable", "value")] + report.rows(
            [v.name for v in net.variables])))
    _write(out / "timing.json", _json({"samples_per_second": res.rate}))
    _write_manifest(out, "sample", d, [a.net, a.evidence, a.exact_ref])
    summary = f"{res.method}: {len(res.sampled)} sampled variables, {res.samples} samples x {len(res.chains)} chains"
    if report is not None:
        summary += f", abs error {report.avg_abs_error:.5f}"
    print(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark

_RUN_DEFAULTS = dict(method="gibbs", cutset_mode="loop", w=None, chains=20, samples=1000, burn_in=0,
                     scan="systematic", seed=0, init="ibp", estimator="mixture", residual_every=1,
                     engine="cached", alpha=0.1, aisbn_interval=2500, aisbn_updates=10, evidence=None)

BENCH_COLUMNS = ("name", "network", "method", "w", "sampling_set_size", "certified_width", "chains",
                 "samples", "unique_tuples", "dead_ends", "non_ergodic", "mse", "abs_error", "kl",
                 "kl_infinite", "hellinger", "ci_half_width")


def _bench_cells(desc: dict, base: Path):
    unknown = set(desc) - set(_RUN_DEFAULTS) - {"name", "net"}
    if unknown:
        raise InputError(f"suite entry has unknown keys {sorted(unknown)}")
    if "net" not in desc:
        raise InputError("suite entry needs a 'net' path")
    d = dict(_RUN_DEFAULTS)
    d.update(desc)
    if d["method"] not in SAMPLE_METHODS:
        raise InputError(f"unknown method {d['method']!r}")
    d["net"] = str((base / desc["net"]).resolve()) if not Path(desc["net"]).is_absolute() else desc["net"]
    if d["evidence"]:
        d["evidence"] = str((base / d["evidence"]).resolve()) if not Path(d["evidence"]).is_absolute() else d["evidence"]
    ws = d["w"]
    if d["method"] == "cutset" and d["cutset_mode"] == "w":
        ws = ws if isinstance(ws, list) else [ws]
        return d, [int(w) for w in ws]
    return d, [None]


def cmd_benchmark(a) -> int:
    suite_path = Path(a.suite)
    try:
        suite = json.loads(suite_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read suite: {exc}") from None
    if not isinstance(suite, list):
        raise InputError("suite must be a JSON array of run descriptors")
    rows = [BENCH_COLUMNS]
    timing = []
    inputs = [a.suite]
    exact_cache: Dict[tuple, Marginals] = {}
    for pos, desc in enumerate(suite):
        if not isinstance(desc, dict):
            raise InputError(f"suite entry {pos} is not an object")
        d, ws = _bench_cells(desc, suite_path.parent)
        net, e = _load(d["net"], d["evidence"])
        inputs.extend([d["net"], d["evidence"]])
        key = (d["net"], d["evidence"])
        if key not in exact_cache:
            exact_cache[key] = jtc_posteriors(net, e)
        exact = exact_cache[key]
        cutsets: Dict[Optional[int], Optional[Cutset]] = {None: None}
        if d["method"] == "cutset":
            if d["cutset_mode"] == "loop":
                cutsets = {None: find_loop_cutset(net, e)}
            else:
                if min(ws) < 1:
                    raise InputError("w must be >= 1")
                cutsets = nested_w_cutsets(net, e, ws)
        for w in ws:
            c = cutsets[w]
            res = _run_sampler(net, e, d, c)
            row, _, _ = _stats_row(net, e, res, d["alpha"], c, exact)
            name = desc.get("name", f"run{pos}")
            full = dict(row, name=name, network=Path(d["net"]).name, w="" if w is None else w)
            rows.append(tuple(full[k] for k in BENCH_COLUMNS))
            timing.append({"name": name, "method": res.method, "w": w, "samples_per_second": res.rate})
    out = Path(a.out)
    text = _csv(rows)
    _write(out / "benchmark.csv", text)
    _write(out / "timing.json", _json(timing))
    _write_manifest(out, "benchmark", vars(a), sorted({p for p in inputs if p}))
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay


def cmd_replay(a) -> int:
    try:
        manifest = json.loads(Path(a.manifest).read_text(encoding="utf-8"))
        command, args = manifest["command"], dict(manifest["args"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read manifest: {exc}") from None
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or _sha256(Path(path)) != digest:
            raise InputError(f"input {path} is missing or changed since the manifest was written")
    if a.out:
        args["out"] = a.out
    ns = argparse.Namespace(**args)
    return COMMANDS[command](ns)


COMMANDS = {
    "generate": cmd_generate,
    "cutset": cmd_cutset,
    "infer": cmd_infer,
    "sample": cmd_sample,
    "benchmark": cmd_benchmark,
    "replay": cmd_replay,
}


# ---------------------------------------------------------------------------
# argument parsing


def _add_sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=SAMPLE_METHODS, required=True)
    p.add_argument("--cutset-mode", choices=("loop", "w"), default="loop")
    p.add_argument("--w", type=int, default=None)
    p.add_argument("--chains", type=int, default=20)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scan", choices=SCANS, default="systematic")
    p.add_argument("--init", choices=INITS, default="ibp")
    p.add_argument("--estimator", choices=ESTIMATORS, default="mixture")
    p.add_argument("--engine", choices=ENGINES, default="cached")
    p.add_argument("--residual-every", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--aisbn-interval", type=int, default=2500)
    p.add_argument("--aisbn-updates", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutset-sampling", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded benchmark network")
    g.add_argument("--family", choices=("multipartite", "two-layer", "grid", "coding"), required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-root", type=int, default=100)
    g.add_argument("--n-total", type=int, default=200)
    g.add_argument("--n-leaves", type=int, default=150)
    g.add_argument("--parents", type=int, default=3)
    g.add_argument("--min-parents", type=int, default=1)
    g.add_argument("--max-parents", type=int, default=3)
    g.add_argument("--rows", type=int, default=15)
    g.add_argument("--cols", type=int, default=30)
    g.add_argument("--code-bits", type=int, default=50)
    g.add_argument("--sigma", type=float, default=0.4)
    g.add_argument("--flip-prob", type=float, default=None)
    g.add_argument("--evidence-count", type=int, default=0)
    g.add_argument("--evidence-policy", choices=("leaves", "any"), default="leaves")
    g.add_argument("--evidence-seed", type=int, default=None)
    g.add_argument("--out", required=True)

    c = sub.add_parser("cutset", help="find a loop-cutset or w-cutsets")
    c.add_argument("--net", required=True)
    c.add_argument("--evidence")
    c.add_argument("--mode", choices=("loop", "w"), default="loop")
    c.add_argument("--w", type=int, nargs="+")
    c.add_argument("--nested", action="store_true", help="make C_{w+1} a subset of C_w")
    c.add_argument("--out", required=True)

    i = sub.add_parser("infer", help="exact or IBP posterior marginals")
    i.add_argument("--net", required=True)
    i.add_argument("--evidence")
    i.add_argument("--method", choices=("exact", "ibp", "cutset-cond"), default="exact")
    i.add_argument("--cutset-mode", choices=("loop", "w"), default="loop")
    i.add_argument("--w", type=int, default=None)
    i.add_argument("--max-iters", type=int, default=25)
    i.add_argument("--tol", type=float, default=1e-8)
    i.add_argument("--out", required=True)

    s = sub.add_parser("sample", help="approximate posteriors by sampling")
    s.add_argument("--net", required=True)
    s.add_argument("--evidence")
    _add_sampling_flags(s)
    s.add_argument("--exact-ref", help="marginals CSV to score against")
    s.add_argument("--out", required=True)

    b = sub.add_parser("benchmark", help="run a JSON suite of sampling runs")
    b.add_argument("--suite", required=True)
    b.add_argument("--out", required=True)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    d = vars(args)
    del d["command"]
    try:
        return COMMANDS[command](args)
    except ZeroEvidenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ZERO
    except CapExceededError as exc:
        print(f"error: resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (InputError, NetworkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

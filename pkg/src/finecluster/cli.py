"""Command-line driver: generate, corrupt, cluster, verify, sweep.

Exit codes: 0 success, 1 usage or I/O error, 2 no viable centers,
3 verification failed.
"""
import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen, svg
from . import io as fio
from .baseline import kpca_cluster
from .pipeline import ClusterOutput, ConstantsProfile, NoViableCenters, cluster
from .verify import clustering_metrics, metrics_csv, verify_refinement

EXIT_OK, EXIT_USAGE, EXIT_NO_CENTERS, EXIT_VERIFY = 0, 1, 2, 3
PRESETS = ("a1", "fig1", "fig2", "nlsc", "grid")
SWEEP_COLUMNS = ("alpha", "separation_factor", "fraction", "seed", "k", "m", "exit",
                 "recovered", "refinement_pass", "max_sym_diff_frac", "max_mean_error_over_sigma",
                 "classified_frac")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _profile(args):
    try:
        return ConstantsProfile.named(args.profile).with_overrides(_parse_overrides(args.set))
    except ValueError as err:
        raise UsageError(str(err)) from err


def _truth_entry(truth, labels_name):
    return {"labels": labels_name, "means": truth.means.tolist(),
            "sigmas": truth.sigmas.tolist(), "weights": truth.weights.tolist()}


def _preset(name, n, seed, alpha, separation_factor, grid_points):
    """Returns (X, truths, spec or None, alpha)."""
    if name in ("a1", "nlsc"):
        kwargs = {"separation_factor": separation_factor} if separation_factor else {}
        spec = datagen.a1_spec(dim=10 if name == "a1" else 50, **kwargs)
        X, truth = datagen.generate(spec, n, seed, exact_counts=True)
        return X, [truth], spec, spec.alpha
    if name == "fig1":
        kwargs = {"separation_factor": separation_factor} if separation_factor else {}
        spec = datagen.fig1_spec(w_norm=0.3, **kwargs)
        X, truth = datagen.generate(spec, n, seed, exact_counts=True)
        return X, [truth], spec, spec.alpha
    if name == "fig2":
        X, truths = datagen.nonidentifiable_fixture(n)
        return X, truths, None, 0.25
    if name == "grid":
        a = alpha or 0.25
        X, truth = datagen.nlsc_counterexample(a, 1.0, grid_points)
        return X, [truth], None, a
    raise UsageError(f"unknown preset {name!r}")


def _write_dataset_dir(out, X, truths, manifest):
    out.mkdir(parents=True, exist_ok=True)
    fio.write_dataset(out / "data.fcds", X)
    entries = []
    for i, truth in enumerate(truths):
        name = "labels.fclb" if i == 0 else f"labels_{i}.fclb"
        fio.write_labels(out / name, truth.labels)
        entries.append(_truth_entry(truth, name))
    manifest["truths"] = entries
    manifest["n"], manifest["d"] = int(X.shape[0]), int(X.shape[1])
    manifest["sha256"] = {p.name: _sha256(p) for p in sorted(out.glob("*.fc*"))}
    _dump_json(out / "manifest.json", manifest)


def cmd_generate(args):
    out = Path(args.out)
    if args.spec:
        spec, _ = datagen.load_spec(args.spec)
        X, truth = datagen.generate(spec, args.n, args.seed, exact_counts=args.exact_counts)
        truths, alpha, preset = [truth], spec.alpha, None
    else:
        X, truths, spec, alpha = _preset(args.preset, args.n, args.seed, args.alpha,
                                         args.separation_factor, args.grid_points)
        preset = args.preset
    manifest = {"kind": "dataset", "preset": preset, "seed": args.seed, "alpha": alpha,
                "spec": spec.to_dict() if spec is not None else None}
    _write_dataset_dir(out, X, truths, manifest)
    return EXIT_OK


def _load_truth(data_path, labels_path, manifest_path, X):
    labels = fio.read_labels(labels_path)
    if labels.size != X.shape[0]:
        raise UsageError("labels and dataset sizes differ")
    if manifest_path:
        manifest = json.loads(Path(manifest_path).read_text())
        for entry in manifest.get("truths", []):
            if entry["labels"] == Path(labels_path).name:
                return datagen.GroundTruth(labels, entry["means"], entry["sigmas"], entry["weights"])
    return datagen.GroundTruth.from_labels(X, labels)


def cmd_corrupt(args):
    X = fio.read_dataset(args.data)
    truth = _load_truth(args.data, args.labels, args.manifest, X)
    try:
        res = datagen.corrupt(X, truth, args.fraction, args.strategy, args.seed, alpha=args.alpha)
    except ValueError as err:
        raise UsageError(str(err)) from err
    manifest = {"kind": "corrupted", "source": str(args.data), "fraction": args.fraction,
                "strategy": args.strategy, "seed": args.seed, "replaced": int(res.replaced.size)}
    _write_dataset_dir(Path(args.out), res.data, [res.truth], manifest)
    return EXIT_OK


def _write_cluster_outputs(out_dir, X, out, summary):
    out_dir.mkdir(parents=True, exist_ok=True)
    n = X.shape[0]
    fio.write_assignments(out_dir / "assignments.fcas", out.assignment(n))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "size", "sigma"] + [f"x{i}" for i in range(X.shape[1])])
    for j, B in enumerate(out.sets):
        w.writerow([j, int(B.size), repr(float(out.scales[j]))] + [repr(float(v)) for v in out.centers[j]])
    (out_dir / "centers.csv").write_text(buf.getvalue())
    if X.shape[1] >= 2:
        (out_dir / "scatter.svg").write_text(svg.scatter(X, out.assignment(n), "output sets"))
    _dump_json(out_dir / "summary.json", summary)


def _write_trace(out_dir, state):
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(ev, sort_keys=True, default=_json_default) for ev in (state.trace if state else [])]
    (out_dir / "trace.jsonl").write_text("".join(line + "\n" for line in lines))


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj)}")


def run_cluster(X, alpha, delta, profile, seed, out_dir, baseline=None, k=None):
    out_dir = Path(out_dir)
    if X.shape[0] < 2:
        raise UsageError("dataset needs at least two points")
    if baseline == "kpca":
        if not k:
            raise UsageError("--baseline kpca needs --k")
        labels = kpca_cluster(X, k, seed)
        out = ClusterOutput.from_sets(X, [np.flatnonzero(labels == j) for j in range(k)])
        summary = {"method": "kpca", "k": k, "seed": seed, "m": out.m, "sizes": [int(B.size) for B in out.sets]}
        _write_cluster_outputs(out_dir, X, out, summary)
        return EXIT_OK, out
    summary = {"method": "pipeline", "alpha": alpha, "delta": delta, "seed": seed, "profile": profile.to_dict()}
    try:
        out = cluster(X, alpha, delta, profile, seed)
    except NoViableCenters as err:
        _write_trace(out_dir, err.state)
        summary.update({"m": 0, "error": str(err)})
        _dump_json(out_dir / "summary.json", summary)
        return EXIT_NO_CENTERS, None
    summary.update({"m": out.m, "sizes": [int(B.size) for B in out.sets]})
    _write_cluster_outputs(out_dir, X, out, summary)
    _write_trace(out_dir, out.state)
    return EXIT_OK, out


def cmd_cluster(args):
    X = fio.read_dataset(args.data)
    if X.ndim != 2 or X.shape[0] == 0:
        raise UsageError("dataset is empty")
    code, _ = run_cluster(X, args.alpha, args.delta, _profile(args), args.seed, args.out,
                          baseline=args.baseline, k=args.k)
    return code


def cmd_verify(args):
    X = fio.read_dataset(args.data)
    truth = _load_truth(args.data, args.labels, args.manifest, X)
    assign = fio.read_assignments(args.assignments)
    if assign.size != X.shape[0]:
        raise UsageError("assignments and dataset sizes differ")
    out = ClusterOutput.from_sets(X, fio.assignment_to_sets(assign))
    report = verify_refinement(out, truth, args.alpha, c_const=args.c_const,
                               separation_factor=args.separation_factor)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "clauses.csv").write_text(report.to_csv())
    (out_dir / "metrics.csv").write_text(metrics_csv(report.metrics))
    return EXIT_OK if report.passed else EXIT_VERIFY


def _sweep_cell(task):
    alpha, sep, frac, seed, n, profile, delta, out_dir = task
    k = int(math.floor(1.0 / alpha + 1e-9))
    sigmas = [(0.5, 1.0, 2.0)[i % 3] for i in range(k)]
    spec = datagen.a1_spec(dim=10, sigmas=tuple(sigmas), alpha=alpha, separation_factor=sep, seed=seed)
    X, truth = datagen.generate(spec, n, seed, exact_counts=True)
    if frac > 0:
        res = datagen.corrupt(X, truth, frac, "far_blob", seed)
        X, truth = res.data, res.truth
    code, out = run_cluster(X, alpha, delta, profile, seed, out_dir)
    row = {"alpha": alpha, "separation_factor": sep, "fraction": frac, "seed": seed, "k": k,
           "m": 0, "exit": code, "recovered": 0, "refinement_pass": 0, "max_sym_diff_frac": math.nan,
           "max_mean_error_over_sigma": math.nan, "classified_frac": 0.0}
    if out is not None:
        rep = verify_refinement(out, truth, alpha, separation_factor=profile.distance_prune_factor)
        met = rep.metrics
        sd = max(c["sym_diff"] for c in met["clusters"])
        row.update({
            "m": out.m,
            "recovered": int(out.m == k and all(c["n_sets"] == 1 for c in met["clusters"])
                             and sd <= 0.045 * n / k),
            "refinement_pass": int(rep.passed),
            "max_sym_diff_frac": max(c["sym_diff_frac"] for c in met["clusters"]),
            "max_mean_error_over_sigma": max(c["mean_error_over_sigma"] for c in met["clusters"]),
            "classified_frac": met["classified_frac"],
        })
        _dump_json(Path(out_dir) / "verify.json", rep.to_dict())
    return row


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def cmd_sweep(args):
    profile = _profile(args)
    grids = {"alpha": args.alphas, "separation_factor": args.separation_factors,
             "fraction": args.fractions, "seed": args.seeds}
    for key, values in grids.items():
        if not values:
            raise UsageError(f"sweep grid for {key} is empty")
    out = Path(args.out)
    tasks = []
    for alpha, sep, frac, seed in itertools.product(*grids.values()):
        cell = out / f"alpha={alpha:g}_sep={sep:g}_frac={frac:g}_seed={seed}"
        tasks.append((alpha, sep, frac, seed, args.n, profile, args.delta, str(cell)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    rows.sort(key=lambda r: (r["alpha"], r["separation_factor"], r["fraction"], r["seed"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(buf.getvalue())
    # pass rate against the first grid axis that varies
    axis = next((k for k in ("separation_factor", "alpha", "fraction") if len(grids[k]) > 1), "separation_factor")
    xs = sorted(set(r[axis] for r in rows))
    rec = [np.mean([r["recovered"] for r in rows if r[axis] == x]) for x in xs]
    ref = [np.mean([r["refinement_pass"] for r in rows if r[axis] == x]) for x in xs]
    (out / "sweep.svg").write_text(svg.line(xs, {"recovered": rec, "refinement": ref},
                                            title="pass rate", xlabel=axis, ylabel="fraction of cells"))
    return EXIT_OK


def _add_common(p, profile=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    if profile:
        p.add_argument("--alpha", type=float, required=True)
        p.add_argument("--delta", type=float, default=0.1)
        p.add_argument("--profile", choices=("paper", "practical"), default="practical")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="profile override")
        p.add_argument("--jobs", type=int, default=1)


def build_parser():
    parser = _Parser(prog="finecluster", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset, labels and manifest")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--spec", help="mixture spec JSON file")
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--alpha", type=float, default=None, help="only used by the grid preset")
    g.add_argument("--separation-factor", type=float, default=None)
    g.add_argument("--grid-points", type=int, default=101)
    g.add_argument("--exact-counts", action="store_true")
    _add_common(g, profile=False)

    c = sub.add_parser("corrupt", help="replace a fraction of points adversarially")
    c.add_argument("--data", required=True)
    c.add_argument("--labels", required=True)
    c.add_argument("--manifest")
    c.add_argument("--fraction", type=float, required=True)
    c.add_argument("--strategy", choices=datagen.STRATEGIES, default="far_blob")
    c.add_argument("--alpha", type=float, default=None)
    _add_common(c, profile=False)

    k = sub.add_parser("cluster", help="run the clustering pipeline")
    k.add_argument("--data", required=True)
    k.add_argument("--baseline", choices=("kpca",), default=None)
    k.add_argument("--k", type=int, default=None, help="number of clusters for the baseline")
    _add_common(k)

    v = sub.add_parser("verify", help="check an output against ground truth")
    v.add_argument("--data", required=True)
    v.add_argument("--labels", required=True)
    v.add_argument("--assignments", required=True)
    v.add_argument("--manifest")
    v.add_argument("--alpha", type=float, required=True)
    v.add_argument("--c-const", type=float, default=13.0)
    v.add_argument("--separation-factor", type=float, default=None,
                   help="pairwise separation factor (default 100 * c-const)")
    _add_common(v, profile=False)

    s = sub.add_parser("sweep", help="grid of generate + cluster + verify runs")
    s.add_argument("--alphas", type=float, nargs="+", default=[1 / 3])
    s.add_argument("--separation-factors", type=float, nargs="+", default=[12.0])
    s.add_argument("--fractions", type=float, nargs="+", default=[0.0])
    s.add_argument("--seeds", type=int, nargs="+", default=[0])
    s.add_argument("--n", type=int, default=3000)
    s.add_argument("--out", required=True)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--profile", choices=("paper", "practical"), default="practical")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--jobs", type=int, default=1)
    return parser


COMMANDS = {"generate": cmd_generate, "corrupt": cmd_corrupt, "cluster": cmd_cluster,
            "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, fio.FormatError, OSError, datagen.SpecError) as err:
        print(f"finecluster: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

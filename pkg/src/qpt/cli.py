"""Command-line pipeline: simulate -> sample -> fit -> region.

One JSON config document (with a "version" field) drives all stages;
each stage can also run standalone against the files a previous run
left in the output directory. Chains run as independent concurrent
tasks with seeds base+index; files are only written by the main thread.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 sampler or solver
failure, 5 fit failure, 6 region failure (degenerate or unreachable).
"""

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime, timezone

import numpy as np

from . import fom, regions, tomodata, walkers
from .channels import ChannelDims, depolarizing
from .errors import (
    BadParameter,
    DegenerateFit,
    InsufficientBins,
    QptError,
    RankDeficient,
    NoConvergence,
    NotPSD,
    SolverFailure,
    TargetUnreachable,
    TooFewSamples,
    TuningFailed,
)
from .regions import FitParams, QuantumErrorBars, RegionParams
from .tomodata import Scheme
from .walkers import WalkerConfig

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SAMPLER = 4
EXIT_FIT = 5
EXIT_REGION = 6


# ---------------------------------------------------------------------------
# config plumbing

def _load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if cfg.get("version") != CONFIG_VERSION:
        raise BadParameter(
            f"config version must be {CONFIG_VERSION}, got {cfg.get('version')!r}"
        )
    return cfg


def _out_dir(cfg, args):
    out = args.out or cfg.get("out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_channel(spec):
    kind = spec.get("kind", "choi")
    if kind == "depolarizing":
        d = int(spec.get("d", 2))
        return depolarizing(float(spec["p"]), d), ChannelDims(d, d)
    if kind == "choi":
        m = tomodata.matrix_from_json(spec["matrix"])
        d_in = int(spec.get("d_in", round(math.sqrt(m.shape[0]))))
        if m.shape[0] % d_in:
            raise BadParameter("choi size not divisible by d_in")
        return m, ChannelDims(d_in, m.shape[0] // d_in)
    raise BadParameter(f"unknown channel kind {spec.get('kind')!r}")


def _parse_figure(cfg, dims: ChannelDims):
    fig = cfg.get("figure", {"kind": fom.DIAMOND, "reference": "identity"})
    kind = fig.get("kind", fom.DIAMOND)
    ref = None
    if kind == fom.DIAMOND:
        r = fig.get("reference", "identity")
        if isinstance(r, str):
            if r != "identity":
                raise BadParameter(f"unknown reference {r!r}")
            if dims.d_in != dims.d_out:
                raise BadParameter("identity reference needs d_in == d_out")
            ref = fom.identity_choi(dims.d_in)
        else:
            ref = tomodata.matrix_from_json(r)
    return fom.FigureSpec(kind, ref)


def _dataset_path(cfg, out):
    return cfg.get("dataset") or os.path.join(out, "dataset.json")


def _fit_json(fp: FitParams):
    doc = {
        "model": fp.model,
        "a2": fp.a2,
        "a1": fp.a1,
        "m": fp.m,
        "c": fp.c,
        "reduced_chi2": fp.reduced_chi2,
    }
    if fp.p is not None:
        doc["p"] = fp.p
    return doc


def _fit_from_json(doc):
    return FitParams(
        int(doc["model"]),
        float(doc["a2"]),
        float(doc["a1"]),
        float(doc["m"]),
        float(doc["c"]),
        doc.get("p"),
        float(doc.get("reduced_chi2", float("nan"))),
    )


# ---------------------------------------------------------------------------
# stage internals (shared by the standalone commands and analyze)

def _simulate(cfg, out, seed_override):
    sim = cfg["simulate"]
    choi, dims = _parse_channel(sim["channel"])
    scheme = Scheme(sim.get("scheme", "ancilla-assisted"))
    skind = sim["settings"]["kind"]
    settings = tomodata.standard_settings(
        skind, scheme, int(sim["settings"].get("n_qubits", 1))
    )
    psi = None
    if scheme == Scheme.AA:
        if "input_state" in sim:
            sigma_a = tomodata.matrix_from_json(sim["input_state"])
        else:
            sigma_a = np.eye(dims.d_in) / dims.d_in
        psi = tomodata.aa_input_state(sigma_a)
    template = tomodata.Dataset(scheme, dims, settings, psi)
    seed = seed_override if seed_override is not None else int(sim.get("seed", 0))
    rng = np.random.default_rng(seed)
    ds = tomodata.simulate(choi, template, sim.get("shots", 0), rng)
    path = os.path.join(out, "dataset.json")
    tomodata.save_dataset(ds, path)
    per = [int(np.sum(s.counts)) for s in ds.settings]
    print(f"dataset: {path}")
    print(f"total_n: {ds.total_n}")
    print(f"per-setting counts: {','.join(str(c) for c in per)}")
    return ds, path


def _make_evaluator_factory(cfg, ds):
    """One evaluator per chain: solver caches are warm-started state."""
    method = cfg.get("method", "channel")
    figure = _parse_figure(cfg, ds.dims)
    if method == "channel":
        return method, figure, lambda: fom.make_channel_evaluator(figure, ds.dims)
    if method == "state":
        if ds.scheme != Scheme.AA:
            raise BadParameter("the state method needs an ancilla-assisted dataset")
        return method, figure, lambda: fom.BipartiteFigure(figure, ds.dims)
    raise BadParameter(f"unknown method {method!r}")


def _sample(cfg, out, ds, seed_override, tag=""):
    method, figure, make_eval = _make_evaluator_factory(cfg, ds)
    wopts = dict(cfg.get("walker", {}))
    n_chains = int(cfg.get("n_chains", os.cpu_count() or 1))
    base_seed = seed_override if seed_override is not None else int(wopts.pop("seed", 0))
    wopts.pop("seed", None)
    if method == "state":
        wopts.setdefault("jump", "sphere-gaussian")

    def one_chain(i):
        wcfg = WalkerConfig(seed=base_seed + i, **wopts)
        evaluator = make_eval()
        if method == "channel":
            res = walkers.run_channel_chain(ds, evaluator, wcfg)
        else:
            res = walkers.run_state_chain(ds, evaluator, wcfg)
        return res, evaluator

    results = [None] * n_chains
    gaps = [0.0] * n_chains
    t0 = time.monotonic()
    with ThreadPoolExecutor(max_workers=min(n_chains, os.cpu_count() or 1)) as ex:
        futures = {ex.submit(one_chain, i): i for i in range(n_chains)}
        first_error = None
        for fut in as_completed(futures):
            i = futures[fut]
            try:
                res, evaluator = fut.result()
            except Exception as e:  # keep finished chains on disk
                first_error = first_error or e
                continue
            results[i] = res
            gaps[i] = getattr(evaluator, "max_gap", 0.0)
            walkers.save_chain_csv(res, os.path.join(out, f"chain{tag}-{i:02d}.csv"))
        if first_error is not None:
            raise first_error
    for i, res in enumerate(results):
        print(
            f"chain {i}: acceptance {res.acceptance_rate:.3f}, "
            f"step {res.step_size:.4g}, clamps {res.clamp_events}, "
            f"rank rejects {res.rank_rejects}"
        )
    edges = walkers.auto_bin_edges(results, n_bins=int(cfg.get("bins", 50)))
    hist = walkers.merge_chains(results, edges)
    hist_path = os.path.join(out, f"histogram{tag}.csv")
    walkers.save_histogram_csv(hist, hist_path)
    meta = {
        "acceptance": [r.acceptance_rate for r in results],
        "clamp_events": int(sum(r.clamp_events for r in results)),
        "rank_rejects": int(sum(r.rank_rejects for r in results)),
        "max_gap": max(gaps),
        "samples": int(sum(len(r.fom_samples) for r in results)),
        "seconds": time.monotonic() - t0,
    }
    print(f"histogram: {hist_path} ({len(hist.counts)} bins, {meta['samples']} samples)")
    print(f"max primal-dual gap: {meta['max_gap']:.3e}")
    return hist, meta


def _fit(hist, out, tag=""):
    fit1 = regions.fit_histogram(hist, regions.MODEL_ONE)
    qeb = regions.quantum_error_bars(fit1)
    doc = {
        "error_bar_model": regions.MODEL_ONE,
        "model_one": _fit_json(fit1),
        "qeb": {"v0": qeb.v0, "delta": qeb.delta, "gamma": qeb.gamma},
    }
    try:
        fit2 = regions.fit_histogram(hist, regions.MODEL_TWO)
        doc["model_two"] = _fit_json(fit2)
    except (InsufficientBins, DegenerateFit) as e:
        doc["model_two"] = {"error": str(e)}
    path = os.path.join(out, f"fit{tag}.json")
    _write_json(doc, path)
    print(
        f"fit: v0 {qeb.v0:.5f}, delta {qeb.delta:.5f}, gamma {qeb.gamma:.6f} "
        f"(model one chi2/dof {fit1.reduced_chi2:.2f})"
    )
    if "error" not in doc["model_two"]:
        print(f"model two chi2/dof {doc['model_two']['reduced_chi2']:.2f}")
    return fit1, qeb, doc


def _region_inputs(cfg, out):
    """n, d2ab and d_A come from the dataset unless the config pins them."""
    rcfg = cfg.get("region", {})
    have = {k: rcfg[k] for k in ("n", "d2ab", "d_A") if k in rcfg}
    if len(have) < 3:
        path = _dataset_path(cfg, out)
        if os.path.exists(path):
            ds = tomodata.load_dataset(path)
            have.setdefault("n", ds.total_n)
            have.setdefault("d2ab", (ds.dims.d_in * ds.dims.d_out) ** 2)
            have.setdefault("d_A", ds.dims.d_in)
        else:
            raise BadParameter(
                "region needs n, d2ab and d_A in the config or a dataset file"
            )
    return int(have["n"]), int(have["d2ab"]), int(have["d_A"])


def _region(cfg, out, fp, qeb, paper_compat, n, d2ab, d_a, tag=""):
    rcfg = cfg.get("region", {})
    binom = rcfg.get("binom_mode", "exact")
    if paper_compat:
        binom = "upper-bound"
    rp = RegionParams(
        n=n,
        eps=float(rcfg.get("eps", 0.01)),
        d2ab=d2ab,
        method=cfg.get("method", "channel"),
        binom_mode=binom,
        log10_compat=paper_compat,
    )
    figure_kind = cfg.get("figure", {}).get("kind", fom.DIAMOND)
    report = regions.assemble_report(fp, rp, figure_kind, d_a, qeb=qeb)
    doc = report.to_json()
    doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    path = os.path.join(out, f"report{tag}.json")
    _write_json(doc, path)
    print(
        f"region: delta {report.delta:.4f}, threshold 10^{report.threshold_log10:.1f}, "
        f"gamma_E {report.gamma_e:.4f}, interval "
        f"[{report.interval[0]:.4f}, {report.interval[1]:.4f}]"
    )
    return report, doc


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args):
    cfg = _load_config(args.config)
    out = _out_dir(cfg, args)
    _simulate(cfg, out, args.seed)
    return EXIT_OK


def cmd_sample(args):
    cfg = _load_config(args.config)
    out = _out_dir(cfg, args)
    ds = tomodata.load_dataset(_dataset_path(cfg, out))
    if cfg.get("rescale") is not None:
        ds = tomodata.rescale_counts(ds, float(cfg["rescale"]))
    _sample(cfg, out, ds, args.seed)
    return EXIT_OK


def cmd_fit(args):
    cfg = _load_config(args.config)
    out = _out_dir(cfg, args)
    hist_path = cfg.get("histogram") or os.path.join(out, "histogram.csv")
    hist = walkers.load_histogram_csv(hist_path)
    _fit(hist, out)
    return EXIT_OK


def cmd_region(args):
    cfg = _load_config(args.config)
    out = _out_dir(cfg, args)
    fit_path = cfg.get("fit") or os.path.join(out, "fit.json")
    with open(fit_path) as fh:
        fit_doc = json.load(fh)
    fp = _fit_from_json(fit_doc["model_one"])
    qeb = QuantumErrorBars(**fit_doc["qeb"]) if "qeb" in fit_doc else None
    n, d2ab, d_a = _region_inputs(cfg, out)
    _region(cfg, out, fp, qeb, args.paper_compat, n, d2ab, d_a)
    return EXIT_OK


def cmd_analyze(args):
    cfg = _load_config(args.config)
    out = _out_dir(cfg, args)
    summary = {"out": out, "stages": {}}
    t0 = time.monotonic()
    if "simulate" in cfg and cfg.get("dataset") is None:
        ds, ds_path = _simulate(cfg, out, args.seed)
        summary["stages"]["simulate"] = {"dataset": ds_path, "total_n": ds.total_n}
    else:
        ds = tomodata.load_dataset(_dataset_path(cfg, out))
    sweep = cfg.get("alpha_sweep")
    if sweep:
        summary["sweep"] = _alpha_sweep(cfg, out, ds, args, sorted(sweep))
    else:
        if cfg.get("rescale") is not None:
            ds = tomodata.rescale_counts(ds, float(cfg["rescale"]))
        hist, meta = _sample(cfg, out, ds, args.seed)
        summary["stages"]["sample"] = meta
        fp, qeb, fit_doc = _fit(hist, out)
        summary["stages"]["fit"] = fit_doc
        n, d2ab, d_a = ds.total_n, (ds.dims.d_in * ds.dims.d_out) ** 2, ds.dims.d_in
        report, doc = _region(cfg, out, fp, qeb, args.paper_compat, n, d2ab, d_a)
        summary["stages"]["region"] = doc
    summary["seconds"] = time.monotonic() - t0
    summary["timestamp"] = datetime.now(timezone.utc).isoformat()
    _write_json(summary, os.path.join(out, "summary.json"))
    print(f"summary: {os.path.join(out, 'summary.json')}")
    return EXIT_OK


def _alpha_sweep(cfg, out, ds, args, alphas):
    """Frequency-rescaled pipeline per alpha; log-log width-vs-n slope."""
    points = []
    for k, alpha in enumerate(alphas):
        tag = f"-alpha{k}"
        ds_a = tomodata.rescale_counts(ds, alpha)
        seed = (args.seed if args.seed is not None else
                int(cfg.get("walker", {}).get("seed", 0))) + 7919 * (k + 1)
        hist, meta = _sample(cfg, out, ds_a, seed, tag=tag)
        fp, qeb, _ = _fit(hist, out, tag=tag)
        points.append(
            {"alpha": alpha, "n": ds_a.total_n, "v0": qeb.v0,
             "delta": qeb.delta, "gamma": qeb.gamma, "max_gap": meta["max_gap"]}
        )
    log_n = np.log10([p["n"] for p in points])
    log_d = np.log10([p["delta"] for p in points])
    slope = float(np.polyfit(log_n, log_d, 1)[0])
    print(f"width-vs-n log-log slope: {slope:.3f}")
    return {"points": points, "slope": slope}


# ---------------------------------------------------------------------------
# entry point

def _parser():
    p = argparse.ArgumentParser(
        prog="qpt",
        description="Quantum error bars and confidence regions for process tomography.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("simulate", cmd_simulate, "draw a dataset from a known channel"),
        ("sample", cmd_sample, "run the Metropolis chains and histogram the figure"),
        ("fit", cmd_fit, "fit the histogram and report quantum error bars"),
        ("region", cmd_region, "assemble the confidence interval"),
        ("analyze", cmd_analyze, "run the full pipeline"),
    ):
        q = sub.add_parser(name, help=doc)
        q.add_argument("--config", required=True, help="JSON run configuration")
        q.add_argument("--paper-compat", action="store_true",
                       help="base-10 delta formula and upper-bound binomial")
        q.add_argument("--out", default=None, help="output directory")
        q.add_argument("--seed", type=int, default=None, help="override the config seed")
        q.set_defaults(func=fn)
    return p


def _exit_code(command, exc):
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (DegenerateFit, TargetUnreachable)):
        return EXIT_FIT if command == "fit" else EXIT_REGION
    if isinstance(exc, (InsufficientBins, TooFewSamples)):
        return EXIT_FIT
    if isinstance(exc, (SolverFailure, NoConvergence, TuningFailed, RankDeficient, NotPSD)):
        return EXIT_SAMPLER
    return EXIT_CONFIG


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (QptError, OSError, KeyError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return _exit_code(args.command, e)


if __name__ == "__main__":
    sys.exit(main())

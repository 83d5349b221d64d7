"""Command line entry point: ``frest <subcommand> [flags]``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on numerical
failure (eigensolver non-convergence, non-SPD covariance, diverging training).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io
from .analysis import (ar1_covariance, decorrelation_table, estimate_df_bias,
                       expected_df_bias, table_array)
from .exceptions import (ConvergenceError, DecompositionError, FrestError,
                         InvalidInputError, InvalidParameterError, ParseError,
                         TrainingError)
from .graph import (Graph, GraphSpectrum, build_gaussian_kernel_graph, eigendecompose,
                    laplacian)
from .loss import COMPONENTS, LossConfig
from .model import (OptimizerConfig, ablation_table, alpha_sweep, split_windows, summarize,
                    train)
from .synth import KINDS, SynthSpec, default_graph, generate, needs_graph
from .transforms import fft_time, gft_space, jft

log = logging.getLogger("frest")

NUMERICAL_ERRORS = (ConvergenceError, DecompositionError, TrainingError, ArithmeticError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _components(text):
    comps = tuple(c.strip() for c in text.split(",") if c.strip())
    if not comps or any(c not in COMPONENTS for c in comps):
        raise argparse.ArgumentTypeError(f"components must be drawn from {COMPONENTS}")
    return comps


def _add_graph_args(p, required=False):
    g = p.add_argument_group("graph")
    g.add_argument("--graph", required=required, help="adjacency CSV (N x N) or coordinates CSV (N x 2)")
    g.add_argument("--graph-kind", choices=("adjacency", "coords"), default="adjacency")
    g.add_argument("--distance", choices=("euclidean", "haversine"), default="euclidean")
    g.add_argument("--sigma-sq", type=float, help="Gaussian kernel width (required for coords)")
    g.add_argument("--kernel-epsilon", type=float, help="kernel sparsity threshold (required for coords)")
    g.add_argument("--laplacian", choices=("normalized", "combinatorial"), default="normalized")


def _load_graph(args):
    if args.graph is None:
        return None
    mat, labels = io.read_matrix_csv(args.graph)
    if args.graph_kind == "adjacency":
        return Graph(mat, labels)
    if args.sigma_sq is None or args.kernel_epsilon is None:
        raise InvalidParameterError("--sigma-sq and --kernel-epsilon are required with coordinates")
    return build_gaussian_kernel_graph(mat, args.distance, args.sigma_sq, args.kernel_epsilon)


def _spectrum(graph, kind):
    return None if graph is None else GraphSpectrum.from_graph(graph, kind)


def _emit(args, obj, table=None):
    if args.json or table is None:
        sys.stdout.write(io.dumps_json(obj))
    else:
        sys.stdout.write(table)


def cmd_graph(args):
    graph = _load_graph(args)
    lap = laplacian(graph, args.laplacian)
    spec = eigendecompose(lap, kind=args.laplacian)
    if args.out:
        io.write_matrix_csv(os.path.join(args.out, "adjacency.csv"), graph.adjacency)
        io.write_matrix_csv(os.path.join(args.out, "eigenvalues.csv"), spec.eigenvalues[None, :])
        # one eigenvector per row (column-major listing of U)
        io.write_matrix_csv(os.path.join(args.out, "eigenvectors.csv"), spec.eigenvectors.T)
    summary = {"n_nodes": graph.n_nodes, "n_edges": int(np.count_nonzero(np.triu(graph.adjacency))),
               "connected": graph.is_connected(), "laplacian": args.laplacian,
               "eigenvalue_min": float(spec.eigenvalues[0]),
               "eigenvalue_max": float(spec.eigenvalues[-1])}
    _emit(args, summary, "".join(f"{k}: {v}\n" for k, v in summary.items()))


def cmd_transform(args):
    sig = io.load_signal_csv(args.input)
    graph = _load_graph(args)
    if args.kind != "fft" and graph is None:
        raise InvalidInputError(f"--graph is required for {args.kind}")
    spectrum = _spectrum(graph, args.laplacian)
    if args.kind == "fft":
        out = fft_time(sig)
    elif args.kind == "gft":
        out = gft_space(sig, spectrum)
    else:
        out = jft(sig, spectrum)
    io.write_complex_csv(args.out, out.values)
    _emit(args, {"kind": args.kind, "shape": list(out.shape), "out": args.out},
          f"wrote {args.kind} of {sig.shape[0]}x{sig.shape[1]} signal to {args.out}\n")


def _load_ensemble(args):
    if args.series:
        if args.window is None:
            raise InvalidParameterError("--window is required with --series")
        series = io.load_signal_csv(args.series)
        if args.window < 1 or args.stride < 1:
            raise InvalidParameterError("--window and --stride must be positive")
        starts = range(0, series.shape[0] - args.window + 1, args.stride)
        if not starts:
            raise InvalidInputError(f"series of length {series.shape[0]} is shorter than the window")
        return np.stack([series[s:s + args.window] for s in starts])
    if not args.inputs:
        raise InvalidInputError("give sample CSVs or --series")
    return np.stack([io.load_signal_csv(p) for p in args.inputs])


def cmd_analyze(args):
    ens = _load_ensemble(args)
    graph = _load_graph(args)
    spectrum = _spectrum(graph, args.laplacian) if graph is not None else GraphSpectrum.identity(ens.shape[2])
    reports = decorrelation_table(ens, spectrum, onesided=not args.full_spectrum)
    arr = table_array(reports)
    rows = [{"domain": r.domain_label, "temporal": r.rho_temporal, "spatial": r.rho_spatial,
             "joint": r.rho_joint} for r in reports]
    if args.out_csv:
        io.write_records_csv(args.out_csv, rows, ["domain", "temporal", "spatial", "joint"])
    payload = {"samples": int(ens.shape[0]), "t": int(ens.shape[1]), "n": int(ens.shape[2]),
               "onesided": not args.full_spectrum, "table": rows}
    if args.out_json:
        io.write_json(args.out_json, payload)
    lines = ["domain   temporal  spatial   joint"]
    for r, vals in zip(reports, arr):
        lines.append(f"{r.domain_label:<8} " + " ".join(f"{v:8.4f}" for v in vals))
    _emit(args, payload, "\n".join(lines) + "\n")


def cmd_bias(args):
    if args.cov:
        cov, _ = io.read_matrix_csv(args.cov)
    elif args.ar1_rho is not None:
        cov = ar1_covariance(args.n_vars, args.ar1_rho)
    else:
        raise InvalidInputError("give --cov or --ar1-rho")
    ordering = None
    if args.ordering:
        ordering = io.read_matrix_csv(args.ordering)[0].ravel().astype(int)
    res = estimate_df_bias(cov, ordering, args.samples, args.noise_var, args.seed)
    res["expected_bias"] = expected_df_bias(cov, ordering, args.noise_var)
    res["seed"] = args.seed
    if args.out:
        io.write_json(args.out, res)
    _emit(args, res, f"bias_mean {res['bias_mean']:.6g} +/- {res['bias_stderr']:.3g} "
                     f"(closed form {res['expected_bias']:.6g})\n")


def cmd_synth(args):
    spec = SynthSpec(kind=args.kind, t=args.t, n=args.n, m=args.m, seed=args.seed, rho=args.rho,
                     spatial_profile=args.spatial_profile, temporal_profile=args.temporal_profile,
                     eta=args.eta, damping=args.damping, noise_std=args.noise_std,
                     source=args.source, n_sources=args.n_sources, burn_in=args.burn_in,
                     laplacian_kind=args.laplacian)
    graph = _load_graph(args)
    graph_ref = args.graph
    if graph is None and needs_graph(spec.kind):
        graph = default_graph(spec.n, spec.seed)
        graph_ref = "graph.csv"
        io.write_matrix_csv(os.path.join(args.out, graph_ref), graph.adjacency)
    ens = generate(spec, graph)
    files = []
    if args.long:
        files.append("series.csv")
        io.write_matrix_csv(os.path.join(args.out, files[0]), ens.reshape(-1, spec.n))
    else:
        width = max(4, len(str(spec.m - 1)))
        for i, sample in enumerate(ens):
            name = f"sample_{i:0{width}d}.csv"
            io.write_matrix_csv(os.path.join(args.out, name), sample)
            files.append(name)
    manifest = {"spec": spec.to_dict(), "seed": spec.seed, "graph": graph_ref,
                "files": files, "layout": "long" if args.long else "per-sample"}
    io.write_json(os.path.join(args.out, "manifest.json"), manifest)
    _emit(args, manifest, f"wrote {len(files)} file(s) to {args.out}\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _train_inputs(args):
    series = io.load_signal_csv(args.data)
    graph = _load_graph(args)
    spectrum = _spectrum(graph, args.laplacian)
    cfg = LossConfig.from_dict(_read_json(args.config)) if args.config else LossConfig()
    overrides = {k: v for k, v in {
        "alpha": args.alpha, "epsilon": args.loss_epsilon,
        "normalization_mode": args.normalization, "ema_decay": args.ema_decay,
        "complex_l1_convention": args.complex_l1, "components": args.components}.items()
        if v is not None}
    cfg = LossConfig.from_dict({**cfg.to_dict(), **overrides})
    if args.loss == "frest" and spectrum is None and any(c != "fft" for c in cfg.components):
        raise InvalidInputError("--graph is required for gft/jft components")
    if series.shape[1] != (spectrum.n_nodes if spectrum is not None else series.shape[1]):
        raise InvalidInputError("data and graph disagree on the number of nodes")
    datasets = split_windows(series, args.t, args.h, tuple(args.split), args.stride)
    opt = OptimizerConfig(optimizer=args.optimizer, lr=args.lr, epochs=args.epochs,
                          batch_size=args.batch, seed=args.seed, sharing=args.sharing)
    return datasets, cfg, opt, spectrum


def _data_echo(args):
    return {"data": args.data, "graph": args.graph, "graph_kind": args.graph_kind,
            "distance": args.distance, "sigma_sq": args.sigma_sq,
            "kernel_epsilon": args.kernel_epsilon, "laplacian": args.laplacian,
            "t": args.t, "h": args.h, "split": list(args.split), "stride": args.stride}


def cmd_train(args):
    datasets, cfg, opt, spectrum = _train_inputs(args)
    log.info("train config: loss=%s %s %s seed=%d", args.loss, cfg.to_dict(), opt.to_dict(), opt.seed)
    _, report = train(datasets, cfg, opt, spectrum, loss=args.loss)
    log.info("wall clock %.2fs", report.wall_clock_seconds)
    out = report.to_dict(include_timing=args.record_timing)
    out["config"]["data"] = _data_echo(args)
    if args.out:
        io.write_json(args.out, out)
    if args.curve:
        io.write_records_csv(args.curve, report.epochs,
                             ["epoch", "train_loss"] + (["val_loss"] if "val_loss" in report.epochs[0] else []))
    t = report.test
    _emit(args, out, f"test MAE {t['mae']:.6g}  MSE {t['mse']:.6g}  RMSE {t['rmse']:.6g}"
                     f"  (best epoch {report.best_epoch})\n")


def cmd_sweep(args):
    datasets, cfg, opt, spectrum = _train_inputs(args)
    seeds = args.seeds or [args.seed]
    log.info("sweep config: %s %s seeds=%s", cfg.to_dict(), opt.to_dict(), seeds)
    if args.ablation:
        rows = ablation_table(datasets, cfg, opt, spectrum, seeds)
        columns = ["row", "mae", "mse", "rmse"]
    else:
        per_seed = alpha_sweep(datasets, args.alphas, cfg, opt, spectrum, seeds)
        rows = per_seed + summarize(per_seed)
        columns = ["alpha", "seed", "mae", "mse", "rmse"]
    if args.out:
        io.write_records_csv(args.out, rows, columns)
    key = columns[0]
    lines = [" ".join(f"{c:>10}" for c in columns)]
    for r in rows:
        lines.append(" ".join(f"{r[c]:>10.5g}" if isinstance(r[c], float) else f"{r[c]!s:>10}"
                              for c in columns))
    _emit(args, {"rows": rows, "group_by": key}, "\n".join(lines) + "\n")


def _add_train_args(p):
    p.add_argument("--data", required=True, help="long series CSV, L rows x N nodes")
    _add_graph_args(p)
    p.add_argument("--t", type=int, default=48, help="history length")
    p.add_argument("--h", type=int, default=96, help="forecast horizon")
    p.add_argument("--split", type=_floats, default=[0.6, 0.2, 0.2])
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--loss", choices=("mse", "frest"), default="frest")
    p.add_argument("--alpha", type=float)
    p.add_argument("--config", help="JSON file with loss settings")
    p.add_argument("--loss-epsilon", type=float)
    p.add_argument("--normalization", choices=("per-step", "ema"))
    p.add_argument("--ema-decay", type=float)
    p.add_argument("--complex-l1", choices=("modulus", "re-im"))
    p.add_argument("--components", type=_components)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--sharing", choices=("shared", "per-node"), default="shared")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="frest", description=__doc__.splitlines()[0])
    parser.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("graph", help="build a graph and export its Laplacian spectrum")
    _add_graph_args(p, required=True)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("transform", help="apply fft, gft or jft to a signal CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("fft", "gft", "jft"), required=True)
    p.add_argument("--out", required=True)
    _add_graph_args(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("analyze", help="correlation table over raw/fft/gft/jft domains")
    p.add_argument("inputs", nargs="*", help="one CSV per sample")
    p.add_argument("--series", help="long series CSV to cut into windows")
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--full-spectrum", action="store_true",
                   help="keep the conjugate half of time-transformed spectra")
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    _add_graph_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bias", help="Monte-Carlo MSE-vs-NLL gap for a Gaussian covariance")
    p.add_argument("--cov", help="covariance CSV")
    p.add_argument("--ar1-rho", type=float)
    p.add_argument("--n-vars", type=int, default=6)
    p.add_argument("--ordering", help="CSV holding a permutation of variable indices")
    p.add_argument("--noise-var", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("synth", help="generate synthetic ensembles")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--spatial-profile", default="flat", help="flat | heat:TAU | inverse:TAU")
    p.add_argument("--temporal-profile", default="flat", help="flat | heat:TAU | inverse:TAU")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--damping", type=float, default=1.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--source", choices=("none", "impulse", "periodic"), default="none")
    p.add_argument("--n-sources", type=int, default=3)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--long", action="store_true", help="write one concatenated series CSV")
    p.add_argument("--out", required=True)
    _add_graph_args(p)
    p.set_defaults(func=cmd_synth, laplacian="combinatorial")

    p = sub.add_parser("train", help="train the linear forecaster with MSE or FreST loss")
    _add_train_args(p)
    p.add_argument("--out", help="report JSON")
    p.add_argument("--curve", help="per-epoch loss CSV")
    p.add_argument("--record-timing", action="store_true",
                   help="include wall-clock time in the report (breaks byte-reproducibility)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="alpha sweep or component ablation")
    _add_train_args(p)
    p.add_argument("--alphas", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 0.9])
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--ablation", action="store_true",
                   help="rows MSE, FFT, GFT, JFT, FFT+GFT, FreST instead of an alpha grid")
    p.add_argument("--out", help="CSV output")
    p.set_defaults(func=cmd_sweep)
    return parser


def _thread_limit():
    raw = os.environ.get("FREST_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParameterError(f"FREST_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidParameterError("FREST_THREADS must be >= 1")
    return n


def run(argv=None):
    """Parse ``argv`` and run the subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=_thread_limit()):
            log.info("%s: %s", args.command,
                     {k: v for k, v in vars(args).items() if k != "func"})
            args.func(args)
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return 2
    except (FrestError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

"""``ltlp`` command line: datasets, embeddings, distances and evaluations.

Each run writes ``manifest.json`` (into the output directory, or next to an
output file as ``<file>.manifest.json``) with the full argument vector,
resolved parameters, seeds and per-phase wall-clock timings. ``ltlp rerun
MANIFEST`` replays it.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ltlp import __version__ as VERSION
from ltlp import io
from ltlp.errors import LTLpError

logger = logging.getLogger("ltlp")


class Timer:
    def __init__(self):
        self.phases: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _words(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _sinkhorn_config(args):
    from ltlp.solvers import SinkhornConfig

    return SinkhornConfig(
        epsilon=args.eps,
        relative_epsilon=args.eps_relative,
        max_iterations=args.max_iter,
        log_domain=not args.scaling,
    )


def _add_solver_flags(p):
    p.add_argument("--p", type=float, default=2.0, help="transport exponent (default 2)")
    p.add_argument("--solver", choices=("auto", "exact", "sinkhorn"), default="auto")
    p.add_argument("--eps", type=_positive, default=0.01, help="Sinkhorn epsilon")
    p.add_argument("--eps-relative", action="store_true",
                   help="read --eps as a fraction of the largest cost entry")
    p.add_argument("--scaling", action="store_true",
                   help="plain scaling iterations instead of the log domain")
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--channel-scale", type=_positive, default=1.0)
    p.add_argument("--chi", type=float, default=None,
                   help="shift used to make values positive for WP (default |min f| + 0.01)")


# subcommands ---------------------------------------------------------------


def cmd_synth1d(args, timer):
    from ltlp.synth import Synth1DConfig, gen_dataset_1d

    cfg = Synth1DConfig(l=args.l, r=args.r, b=args.b, gamma1=args.gamma1, gamma2=args.gamma2,
                        noise=args.noise, grid=args.grid, r1=args.r1)
    with timer.phase("generate"):
        signals, labels = gen_dataset_1d(cfg, args.seed)
    with timer.phase("write"):
        io.write_dataset(args.out, signals, labels)
    return {"config": cfg.as_dict(), "seeds": {"dataset": args.seed}, "signals": len(signals)}


def cmd_synth2d(args, timer):
    from ltlp.synth import Synth2DConfig, gen_dataset_2d

    cfg = Synth2DConfig(grid=args.grid, n_per_class=args.per_class)
    with timer.phase("generate"):
        signals, labels = gen_dataset_2d(cfg, args.seed)
    with timer.phase("write"):
        io.write_dataset(args.out, signals, labels)
    return {"config": cfg.as_dict(), "seeds": {"dataset": args.seed}, "signals": len(signals)}


def cmd_embed(args, timer):
    from ltlp.experiments import embed_dataset
    from ltlp.solvers import count_solves

    with timer.phase("read"):
        ids, signals, labels = io.read_dataset(args.data)
    cfg = _sinkhorn_config(args)
    with timer.phase("embed"), count_solves() as solves:
        _, emb = embed_dataset(signals, args.method, args.p, args.solver, args.channel_scale,
                               cfg, args.chi, args.threads)
    meta = {"method": args.method.upper(), "data": str(Path(args.data).resolve()),
            "solver": args.solver, "epsilon": args.eps, "epsilon_relative": args.eps_relative,
            "chi": args.chi, "labels": labels}
    with timer.phase("write"):
        io.write_embeddings(args.out, ids, emb, meta)
    unconverged = sum(not e.converged for e in emb)
    if unconverged:
        logger.warning("%d of %d embeddings came from unconverged Sinkhorn runs", unconverged, len(emb))
    return {"solver_calls": solves.calls, "signals": len(emb), "unconverged": unconverged}


def cmd_distmat(args, timer):
    from ltlp.embedding import pairwise_linear_distances
    from ltlp.experiments import embed_dataset, full_distance_matrix
    from ltlp.finance import cor_matrix
    from ltlp.solvers import count_solves

    with timer.phase("read"):
        ids, signals, _ = io.read_dataset(args.data)
    method = args.method.upper()
    cfg = _sinkhorn_config(args)
    n = len(signals)
    with count_solves() as solves:
        if method in ("LWP", "LTLP"):
            with timer.phase("embed"):
                _, emb = embed_dataset(signals, method, args.p, args.solver, args.channel_scale,
                                       cfg, args.chi, args.threads)
            with timer.phase("distances"):
                D = pairwise_linear_distances(emb)
        elif method == "COR":
            with timer.phase("distances"):
                D = cor_matrix(np.stack([s.values.T for s in signals]))
        else:
            logger.info("%s: %d signals, %d pairwise solves", method, n, n * (n - 1) // 2)
            with timer.phase("solve"):
                D = full_distance_matrix(signals, method, args.p, args.solver, args.channel_scale,
                                         cfg, args.chi, args.threads,
                                         progress_every=max(1, n * (n - 1) // 20))
    logger.info("%s: %d solver calls", method, solves.calls)
    with timer.phase("write"):
        io.write_matrix(args.out, ids, D.entries)
    return {"solver_calls": solves.calls, "signals": n}


def _labels_for(ids, meta, labels_path):
    if labels_path:
        table = io.read_labels(labels_path)
        missing = [i for i in ids if i not in table]
        if missing:
            raise LTLpError(f"no label for ids {missing[:5]}")
        return np.array([table[i] for i in ids])
    if "labels" in meta:
        return np.array(meta["labels"])
    raise LTLpError("no labels available; pass --labels")


def cmd_cluster(args, timer):
    from ltlp.analysis import adjusted_rand_index, kmeans, repeat_seed
    from ltlp.parallel import parallel_map

    ids, X, meta = io.read_embeddings(args.embeddings)
    truth = _labels_for(ids, meta, args.labels)
    seeds = [repeat_seed(args.seed, r) for r in range(args.repeats)]
    with timer.phase("evaluate"):
        assignments = parallel_map(lambda s: kmeans(X, args.k, s), seeds, args.threads)
        scores = [adjusted_rand_index(truth, a) for a in assignments]
    with timer.phase("write"):
        io.write_scores(args.out, scores, "ari")
        io.write_assignments(Path(args.out).with_name(Path(args.out).stem + "_assignments.csv"),
                             ids, assignments[0])
    return {"seeds": {"base": args.seed, "repeats": seeds}, "median_ari": float(np.median(scores))}


def cmd_classify(args, timer):
    from ltlp.analysis import cross_validate

    ids, X, meta = io.read_embeddings(args.embeddings)
    truth = _labels_for(ids, meta, args.labels)
    with timer.phase("evaluate"):
        scores = cross_validate(X, truth, args.folds, args.repeats, args.seed, args.neighbours,
                                args.threads)
    with timer.phase("write"):
        io.write_scores(args.out, scores, "macro_f1")
    return {"seeds": {"base": args.seed}, "mean_f1": float(np.mean(scores)), "stratified": True}


def cmd_interp(args, timer):
    from ltlp.experiments import reference_for
    from ltlp.interpolation import mode_sweep

    ids, X, meta = io.read_embeddings(args.embeddings)
    with timer.phase("reference"):
        _, signals, _ = io.read_dataset(args.ref)
        ref = reference_for(signals, meta["method"], meta.get("chi"))
    emb = io.embedding_vectors(X, meta, ref.measure.weights)
    with timer.phase("invert"):
        out = mode_sweep(emb, args.component, args.stddevs, ref)
    with timer.phase("write"):
        names = []
        for s, sig in zip(args.stddevs, out):
            name = f"mode{args.component}_{s:+g}.csv"
            io.write_signal(Path(args.out) / name, sig, weights=True)
            names.append([name, f"{s:g}"])
        io.write_rows(Path(args.out) / io.DATASET_MANIFEST, ["path", "label"], names)
    return {"signals": len(out)}


def cmd_flowmin(args, timer):
    from ltlp.flow import GridField, flow_minimize

    outs = _words(args.out)
    if len(outs) != 2:
        raise LTLpError("--out takes MAP.csv,ENERGY.csv")
    with timer.phase("read"):
        mu, nu = io.read_grid(args.mu), io.read_grid(args.nu)
        f = io.read_grid(args.f) if args.f else None
        g = io.read_grid(args.g) if args.g else None
        grid = GridField.from_densities(mu, nu, f, g)
    with timer.phase("solve"):
        res = flow_minimize(grid, args.tau, args.max_steps, args.energy_tol)
    with timer.phase("write"):
        nodes = grid.nodes().reshape(-1, 2)
        T = res.map.reshape(-1, 2)
        nx, ny = grid.shape
        ij = np.indices((nx, ny)).reshape(2, -1).T
        io.write_rows(outs[0], ["i", "j", "x", "y", "Tx", "Ty"],
                      ([int(a), int(b), float(x), float(y), float(u), float(v)]
                       for (a, b), (x, y), (u, v) in zip(ij, nodes, T)))
        io.write_rows(outs[1], ["step", "energy"], ([k, float(e)] for k, e in enumerate(res.energies)))
    return {"steps": res.steps, "final_tau": res.tau, "pushforward_l1": res.pushforward_error,
            "folded_steps": res.folded_steps}


def cmd_finance(args, timer):
    from ltlp.finance import FinanceConfig, run_finance

    with timer.phase("read"):
        prices = io.read_prices(args.prices)
    cfg = FinanceConfig(m=args.window, k=args.k, horizons=tuple(args.horizons),
                        return_kinds=tuple(r.upper() for r in args.returns),
                        burn_in=args.burn_in, p=args.p)
    with timer.phase("solve"):
        res = run_finance(prices, args.method, cfg, solver=args.solver, threads=args.threads)
    out = Path(args.out)
    with timer.phase("write"):
        io.write_matrix(out / "distances.csv", [prices.dates[d + cfg.m] for d in range(res.distances.size)],
                        res.distances.entries)
        for run in res.runs:
            ok = np.all(np.isfinite(run.realized), axis=1)
            dates = [prices.dates[d] for d in run.days[ok]]
            for q, series in run.pnl.items():
                name = f"pnl_{res.method.lower()}_h{run.horizon}_{run.return_kind.lower()}_q{q}.csv"
                io.write_rows(out / name, ["date", "pnl"], ([d, float(v)] for d, v in zip(dates, series)))
        stats = res.stats()
        io.write_rows(out / "stats.csv", ["method", "horizon", "returnKind", "quintile", "SR", "PPT", "N"],
                      ([r["method"], r["horizon"], r["returnKind"], r["quintile"], float(r["SR"]),
                        float(r["PPT"]), r["N"]] for r in stats))
    return {"config": {"m": cfg.m, "k": cfg.k, "horizons": list(cfg.horizons),
                       "return_kinds": list(cfg.return_kinds), "burn_in": cfg.burn_in,
                       "start_day": cfg.start_day, "p": cfg.p},
            "solver_calls": res.distances.solver_calls}


COMMANDS = {
    "synth1d": cmd_synth1d, "synth2d": cmd_synth2d, "embed": cmd_embed, "distmat": cmd_distmat,
    "cluster": cmd_cluster, "classify": cmd_classify, "interp": cmd_interp,
    "flowmin": cmd_flowmin, "finance": cmd_finance,
}

DIR_OUTPUTS = {"synth1d", "synth2d", "interp", "finance"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltlp", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="worker pool size (default: logical cores)")
    parser.add_argument("--manifest", default=None, help="where to write manifest.json")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth1d", help="noisy hump and chirp signals on [0, 1]")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--l", type=float, default=0.2)
    p.add_argument("--r", type=float, default=0.1)
    p.add_argument("--b", type=float, default=0.3)
    p.add_argument("--gamma1", type=float, default=0.02)
    p.add_argument("--gamma2", type=float, default=0.05)
    p.add_argument("--r1", type=float, default=0.5, help="share of chirps using gamma1")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=150)

    p = sub.add_parser("synth2d", help="Gaussian-modulated fields of classes M1 and M2")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--per-class", type=int, default=25)

    p = sub.add_parser("embed", help="linear embedding of every signal in a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", type=str.lower, choices=("lwp", "ltlp"), required=True)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("distmat", help="pairwise distance matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--method", type=str.lower, choices=("lp", "wp", "tlp", "lwp", "ltlp", "cor"),
                   required=True)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="repeated K-means on embeddings, scored by ARI")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="repeated k-fold nearest-neighbour macro-F1")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--neighbours", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("interp", help="signals along a principal mode of the embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ref", required=True, help="dataset directory the embeddings came from")
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--stddevs", type=_floats, default=[-2.0, -1.0, 0.0, 1.0, 2.0])
    p.add_argument("--out", required=True)

    p = sub.add_parser("flowmin", help="flow minimisation between two grid densities")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--f", default=None)
    p.add_argument("--g", default=None)
    p.add_argument("--tau", type=_positive, default=1e-3)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--energy-tol", type=float, default=1e-9)
    p.add_argument("--out", required=True, help="MAP.csv,ENERGY.csv")

    p = sub.add_parser("finance", help="sliding-window kNN forecasts and PnL statistics")
    p.add_argument("--prices", required=True)
    p.add_argument("--method", type=str.lower, choices=("cor", "wp", "lwp", "ltlp"), required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--horizons", type=_ints, default=[1, 3, 5, 10])
    p.add_argument("--returns", type=_words, default=["rr", "mr"])
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--burn-in", type=int, default=60)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--solver", choices=("auto", "exact", "sinkhorn"), default="exact")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rerun", help="replay the run recorded in a manifest")
    p.add_argument("manifest_path")
    p.add_argument("--out", default=None, help="override the recorded output location")
    return parser


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = _words(args.out)[0] if args.command == "flowmin" else args.out
    if args.command in DIR_OUTPUTS:
        return Path(out) / "manifest.json"
    return Path(str(out) + ".manifest.json")


def _rerun(args) -> int:
    manifest = io.read_json(args.manifest_path)
    argv = list(manifest["argv"])
    if args.out is not None:
        k = argv.index("--out")
        argv[k + 1] = args.out
        if "--manifest" in argv:
            j = argv.index("--manifest")
            del argv[j:j + 2]
    return main(argv)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "rerun":
        try:
            return _rerun(args)
        except (OSError, KeyError, ValueError) as exc:
            print(f"ltlp: error: cannot replay {args.manifest_path}: {exc}", file=sys.stderr)
            return 1
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    timer = Timer()
    started = time.time()
    try:
        with timer.phase("total"):
            info = COMMANDS[args.command](args, timer)
    except (LTLpError, ValueError, OSError) as exc:
        print(f"ltlp: error: {exc}", file=sys.stderr)
        return 1
    params = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    manifest = {
        "command": args.command,
        "argv": argv,
        "params": params,
        "version": VERSION,
        "started": started,
        "timings": timer.phases,
        **info,
    }
    io.write_json(_manifest_path(args), manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())

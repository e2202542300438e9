"""Command-line entry point: ``mapi <subcommand> [options]``.

Exit status is 0 on success, 1 on runtime failure (including failed
checks) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, checks
from .mavp import MavpOperator
from .pagerank import GNUTELLA, PageRankConfig, load_snap_edgelist, run_pagerank, topk_overlap
from .pca import (
    SAMPLE_DIR,
    IdenticalImagesError,
    fit_reconstruction,
    occlude,
    psnr,
    read_pgm,
    write_pgm,
)
from .power import PowerIterConfig, diamond_fixed_point, initial_vector, mapi
from .report import RunManifest, dumps, output_paths, traces_to_csv
from .stochastic import (
    MomentumConfig,
    SyntheticSpec,
    minibatch_mapi_momentum,
    orient,
    rank_order,
    synth_dataset,
)

log = logging.getLogger("mapi")


def _write_outputs(args, stem: str, report: dict, traces: dict) -> tuple:
    out_dir, stem = output_paths(args.out, stem)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    csv_path.write_text(traces_to_csv(traces))
    json_path.write_text(dumps(report))
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return csv_path, json_path


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _psnr_or_inf(ref, img) -> float:
    try:
        return psnr(ref, img)
    except IdenticalImagesError:
        return float("inf")


# -- subcommands ---------------------------------------------------------------------

def cmd_kernel_check(args) -> int:
    results = checks.run_all()
    failed = [r for r in results if not r["passed"]]
    if args.json:
        sys.stdout.write(dumps({"passed": not failed, "results": results}))
    else:
        width = max(len(r["check"]) for r in results)
        for r in results:
            print(f"{r['check']:<{width}}  {'PASS' if r['passed'] else 'FAIL'}  {r['detail']}")
        print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_prop1(args) -> int:
    rng = np.random.default_rng(args.seed)
    a = rng.uniform(0.01, 1.0, size=(args.n, args.n))
    target = diamond_fixed_point(a)
    w0 = initial_vector(args.n, args.seed, positive=True)
    cfg = PowerIterConfig(operator=MavpOperator.DIAMOND, max_iterations=args.iters,
                          seed=args.seed, positive_init=True, threads=args.threads)
    errors = {}
    traces = {}
    for t in range(1, args.iters + 1):
        w, trace = mapi(a, cfg.with_(max_iterations=t), w0=w0)
        errors[t] = float(np.abs(w - target).max())
    traces["diamond"] = trace
    err2 = errors.get(2, float("nan"))
    later = max((e for t, e in errors.items() if t > 2), default=0.0)
    ok = err2 <= 1e-12 and later <= 1e-12
    config = {"n": args.n, "iters": args.iters, "seed": args.seed, "threads": args.threads}
    report = {
        "manifest": RunManifest.build("prop1", config, args.seed).as_dict(),
        "fixed_point": target,
        "max_abs_error_by_iteration": {str(t): e for t, e in errors.items()},
        "max_abs_error_t2": err2,
        "passed": ok,
    }
    _write_outputs(args, "prop1", report, traces)
    print(f"fixed-point max-abs error at t=2: {err2:.3g}; t>2: {later:.3g} -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_reconstruct(args) -> int:
    image_dir = Path(args.images) if args.images else SAMPLE_DIR
    if not image_dir.exists():
        raise FileNotFoundError(image_dir)
    paths = sorted(p for p in image_dir.iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise FileNotFoundError(f"no .pgm images in {image_dir}")
    op = MavpOperator.parse(args.op)
    cfg = PowerIterConfig(operator=op, max_iterations=args.iters, seed=args.seed,
                          threads=args.threads)
    out_dir, _ = output_paths(args.out, "reconstruct")
    rows, traces = [], {}
    for idx, path in enumerate(paths):
        clean = read_pgm(path)
        tile = args.tile or min(clean.shape) // 4
        copies = [occlude(clean, tile, args.n_tiles, _derived_seed(args.seed, idx, k))
                  for k in range(args.n_corrupt)]
        model = fit_reconstruction(copies, op, cfg, divisor=args.divisor,
                                   projection_norm=args.projection_norm)
        rec = [model.project(c) for c in copies]
        if args.save_images:
            out_dir.mkdir(parents=True, exist_ok=True)
            for k, img in enumerate(rec):
                write_pgm(out_dir / f"{path.stem}_rec{k:02d}.pgm", img)
        p_occ = [_psnr_or_inf(clean, c) for c in copies]
        p_rec = [_psnr_or_inf(clean, r) for r in rec]
        rows.append({
            "image": path.stem,
            "tile": tile,
            "psnr_occluded_db": float(np.mean(p_occ)),
            "psnr_reconstructed_db": float(np.mean(p_rec)),
            "psnr_mean_image_db": _psnr_or_inf(clean, model.mean.reshape(clean.shape)),
            "per_copy": {"occluded": p_occ, "reconstructed": p_rec},
        })
        for k, tr in enumerate(model.traces, start=1):
            traces[f"{path.stem}/w{k}"] = tr
        print(f"{path.stem:<16} occluded {rows[-1]['psnr_occluded_db']:7.2f} dB  "
              f"{op.value} {rows[-1]['psnr_reconstructed_db']:7.2f} dB")
    avg_occ = float(np.mean([r["psnr_occluded_db"] for r in rows]))
    avg_rec = float(np.mean([r["psnr_reconstructed_db"] for r in rows]))
    print(f"{'average':<16} occluded {avg_occ:7.2f} dB  {op.value} {avg_rec:7.2f} dB")
    config = {k: getattr(args, k) for k in ("op", "n_corrupt", "tile", "n_tiles", "seed", "iters",
                                             "divisor", "projection_norm", "threads")}
    config["images"] = str(image_dir)
    report = {
        "manifest": RunManifest.build("reconstruct", config, args.seed, inputs=paths).as_dict(),
        "operator": op.value,
        "images": rows,
        "average": {"psnr_occluded_db": avg_occ, "psnr_reconstructed_db": avg_rec},
    }
    _write_outputs(args, "reconstruct", report, traces)
    return 0


def cmd_stochastic(args) -> int:
    spec = SyntheticSpec(args.n, args.d, args.gap, args.seed)
    x, u1 = synth_dataset(spec)
    mcfg = MomentumConfig(batch_size=args.batch, momentum=args.beta, iterations=args.iters,
                          seed=args.seed, switch_at=args.switch_at)
    variants = [args.op] + (["rpi"] if args.compare and args.op != "rpi" else [])
    traces, finals = {}, {}
    for variant in variants:
        op = MavpOperator.parse(variant)
        w, trace = minibatch_mapi_momentum(x, mcfg, op, u1)
        traces[variant] = trace
        w = orient(w, u1)
        finals[variant] = {
            "w_final": w,
            "rank_order": (rank_order(w) + 1).tolist(),
            "final_alignment_error": trace[-1].alignment_error,
        }
        print(f"{variant:<6} final alignment error {trace[-1].alignment_error:.3e}  "
              f"ranks {finals[variant]['rank_order']}")
    report = {
        "manifest": RunManifest.build("stochastic", {
            "n": args.n, "d": args.d, "gap": args.gap, "batch": args.batch, "beta": args.beta,
            "iters": args.iters, "op": args.op, "switch_at": args.switch_at,
            "compare": args.compare}, args.seed).as_dict(),
        "u1": orient(u1, u1),
        "u1_rank_order": (rank_order(u1) + 1).tolist(),
        "variants": finals,
    }
    if len(finals) == 2:
        a, b = (finals[v]["rank_order"] for v in variants)
        report["rank_agreement"] = a == b
        print(f"rank agreement: {a == b}")
    _write_outputs(args, "stochastic", report, traces)
    return 0


def cmd_pagerank(args) -> int:
    graph_path = Path(args.graph)
    if not graph_path.exists():
        raise FileNotFoundError(graph_path)
    g = load_snap_edgelist(graph_path)
    methods = ["rpi", args.method] if args.compare and args.method != "rpi" else [args.method]
    results, traces = {}, {}
    for m in methods:
        cfg = PageRankConfig(alpha=args.alpha, iterations=args.iters, method=m,
                             seed=args.seed, perturb=args.perturb)
        res = run_pagerank(g, cfg)
        results[m] = res
        traces[m] = res.trace
        top = [t["node"] for t in res.top(g, args.topk)]
        print(f"{m:<10} top-{args.topk}: {top}  final delta_l1 {res.trace[-1].delta_l1:.3e}")
    config = {"graph": str(graph_path), "alpha": args.alpha, "iters": args.iters,
              "method": args.method, "topk": args.topk, "compare": args.compare,
              "seed": args.seed, "perturb": args.perturb}
    report = {
        "manifest": RunManifest.build("pagerank", config, args.seed, inputs=[graph_path]).as_dict(),
        "graph": {"nodes": g.n_nodes, "edges": g.n_edges, "dangling": int(g.dangling.sum())},
        "methods": {m: {"top": r.top(g, args.topk), "trace": r.trace.to_list()}
                    for m, r in results.items()},
    }
    if len(results) == 2:
        a, b = (results[m].ranking for m in methods)
        overlap = topk_overlap(a, b, args.topk)
        report["overlap"] = {"k": args.topk, "methods": methods, "common": overlap}
        print(f"top-{args.topk} overlap {methods[0]} vs {methods[1]}: {overlap}")
    _write_outputs(args, "pagerank", report, traces)
    return 0


def cmd_datasets(args) -> int:
    if not args.verify:
        for name, (url, nodes, edges) in GNUTELLA.items():
            print(f"{name}: {url}  (expect {nodes} nodes, {edges} edges)")
        return 0
    path = Path(args.verify)
    if not path.exists():
        raise FileNotFoundError(path)
    g = load_snap_edgelist(path)
    _, nodes, edges = GNUTELLA[args.name]
    ok = (g.n_nodes, g.n_edges) == (nodes, edges)
    print(f"{path}: {g.n_nodes} nodes, {g.n_edges} edges; expected {nodes}/{edges} -> "
          f"{'OK' if ok else 'MISMATCH'}")
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mapi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for row-parallel kernels (default 1)")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel-check", help="run the MAVP self-check suites")
    k.add_argument("--json", action="store_true", help="machine-readable output")
    k.set_defaults(func=cmd_kernel_check)

    q = sub.add_parser("prop1", help="diamond-MAPI two-step fixed point check")
    q.add_argument("--n", type=int, default=20)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--iters", type=int, default=5)
    q.add_argument("--out")
    q.set_defaults(func=cmd_prop1)

    r = sub.add_parser("reconstruct", help="occluded-image reconstruction")
    r.add_argument("--images", help="directory of clean PGM images (default: bundled samples)")
    r.add_argument("--op", default="min2", choices=["min1", "min2", "diamond", "dot", "rpi"])
    r.add_argument("--n-corrupt", type=int, default=10)
    r.add_argument("--tile", type=int, default=None, help="tile size (default: side/4)")
    r.add_argument("--n-tiles", type=int, default=3)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--iters", type=int, default=20)
    r.add_argument("--divisor", choices=["n-1", "n"], default="n-1")
    r.add_argument("--projection-norm", choices=["l1", "l2"], default="l1")
    r.add_argument("--save-images", action="store_true", help="write reconstructed PGMs")
    r.add_argument("--out")
    r.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("stochastic", help="mini-batch MAPI with momentum on synthetic data")
    s.add_argument("--n", type=int, default=10**6)
    s.add_argument("--d", type=int, default=10)
    s.add_argument("--gap", type=float, default=0.1)
    s.add_argument("--batch", type=int, default=128)
    s.add_argument("--beta", type=float, default=0.225)
    s.add_argument("--iters", type=int, default=100)
    s.add_argument("--op", default="min1", choices=["min1", "rpi"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--switch-at", type=int, default=None)
    s.add_argument("--compare", action="store_true", help="also run the regular variant")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stochastic)

    g = sub.add_parser("pagerank", help="PageRank on a SNAP edge list")
    g.add_argument("--graph", required=True)
    g.add_argument("--alpha", type=float, default=0.85)
    g.add_argument("--iters", type=int, default=10)
    g.add_argument("--method", default="mapi-min1", choices=["rpi", "mapi-min1", "mapi-min2"])
    g.add_argument("--topk", type=int, default=10)
    g.add_argument("--compare", action="store_true", help="also run RPI and report the overlap")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--perturb", type=float, default=0.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_pagerank)

    d = sub.add_parser("datasets", help="print dataset URLs or verify a download")
    d.add_argument("--verify", metavar="PATH")
    d.add_argument("--name", choices=sorted(GNUTELLA), default="gnutella08")
    d.set_defaults(func=cmd_datasets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        missing = exc.filename if exc.filename else exc.args[0] if exc.args else exc
        print(f"mapi: error: no such file or directory: {missing}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"mapi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

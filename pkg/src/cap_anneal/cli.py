"""Command line front end: ``cluster``, ``segment``, ``pickup`` and ``bench``.

Exit status is 0 on success, 1 for bad input or infeasible capacities and
2 when the last annealing step did not converge (reports are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import (
    brute_force_capacitated,
    brute_force_unconstrained,
    fixed_eta_da,
    lloyd,
    random_init,
    MAX_ENUMERATION,
)
from .core import CapacitySpec, InstanceError
from .imaging import segment_image
from .io import parse_capacities, read_instance, read_ppm, write_ppm, write_report, _clean
from .scenarios import PICKUP_TYPE_COUNTS, pickup_instance, random_suite
from .solver import AnnealConfig, InfeasibleError, anneal

log = logging.getLogger("cap_anneal")

# per-command schedule defaults; see README for timings
GROWTH = {"cluster": 1.1, "pickup": 1.1, "segment": 1.2, "bench": 1.05}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _number_or_auto(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _grid(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, e.g. 30x20, got {text!r}") from None
    return w, h


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("annealing")
    g.add_argument("--k", type=int, help="number of clusters / resources")
    g.add_argument("--beta-init", type=_number_or_auto, default="auto")
    g.add_argument("--beta-growth", type=float, help="geometric growth factor (> 1)")
    g.add_argument("--beta-max", type=_number_or_auto, default="auto")
    g.add_argument("--tol", type=float, default=1e-8, help="inner convergence tolerance")
    g.add_argument("--max-iters", type=int, default=2000, help="inner iteration cap per beta")
    g.add_argument("--seed", type=int, help="RNG seed (default: $CAP_ANNEAL_SEED or 0)")
    g.add_argument("--sigma", type=float, default=1.0, help="descent step scaling")
    g.add_argument("--capacities", help="path, or inline '10,12,12' ('a,b;c,d' for a matrix)")
    g.add_argument("--mode", choices=("none", "sized", "typed"))
    g.add_argument("--typed-assoc", choices=("restricted", "pooled"), default="restricted")
    g.add_argument("--unconstrained-eta", choices=("uniform", "mass"),
                   help="cluster weights without capacities (default: mass for segment)")
    g.add_argument("--out", help="directory for report files")
    g.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="cap-anneal", description="Deterministic annealing with capacity constraints.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cluster", parents=[common], help="cluster an instance file")
    c.add_argument("instance", help="CSV or JSON instance")
    c.add_argument("--format", choices=("csv", "json"))

    s = sub.add_parser("segment", parents=[common], help="colour-segment a PPM image")
    s.add_argument("image", help="P3 or P6 PPM file")
    s.add_argument("--pixelate", type=_grid, metavar="WxH", help="also write a WxH pixelated image")
    s.add_argument("--lloyd-runs", type=int, default=0,
                   help="compare against this many random Lloyd runs")

    k = sub.add_parser("pickup", parents=[common], help="assign typed time-window shipments")
    k.add_argument("instance", nargs="?", help="CSV/JSON with t_start, t_end, type columns")
    k.add_argument("--format", choices=("csv", "json"))
    k.add_argument("--type-counts", type=_int_list, default=list(PICKUP_TYPE_COUNTS))
    k.add_argument("--vehicles", type=int, default=10)

    b = sub.add_parser("bench", parents=[common], help="compare DA with the baselines")
    b.add_argument("instance", nargs="?", help="optional instance file")
    b.add_argument("--format", choices=("csv", "json"))
    b.add_argument("--instances", type=int, default=20)
    b.add_argument("--n", type=int, default=8)
    b.add_argument("--lloyd-runs", type=int, default=10)
    return p


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CAP_ANNEAL_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CAP_ANNEAL_SEED must be an integer, got {env!r}") from None


def _config(args) -> AnnealConfig:
    growth = args.beta_growth if args.beta_growth is not None else GROWTH[args.command]
    try:
        eta = args.unconstrained_eta or ("mass" if args.command == "segment" else "uniform")
        return AnnealConfig(beta_init=args.beta_init, beta_growth=growth, beta_max=args.beta_max,
                            inner_tol=args.tol, inner_max_iters=args.max_iters, sigma=args.sigma, rng_seed=_seed(args),
                            typed_assoc=args.typed_assoc, unconstrained_eta=eta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _capacities(args, ds, file_cap: CapacitySpec) -> CapacitySpec:
    mode = args.mode
    if args.capacities:
        if mode == "none":
            raise UsageError("--mode none conflicts with --capacities")
        cap = parse_capacities(args.capacities, mode)
    elif file_cap.mode != "none" and mode != "none":
        cap = file_cap
    else:
        if mode in ("sized", "typed"):
            raise UsageError(f"--mode {mode} needs capacities")
        cap = CapacitySpec()
    if mode is not None and cap.mode != mode:
        raise UsageError(f"capacities are {cap.mode}, but --mode {mode} was given")
    if cap.mode == "typed" and cap.lam.shape[1] == 1 and ds.typed and ds.n_types > 1:
        raise UsageError("typed capacities need one column per type")
    return cap


def _k(args, cap: CapacitySpec) -> int:
    if cap.k is not None:
        if args.k is not None and args.k != cap.k:
            raise InstanceError(f"{cap.k} capacities given for K={args.k}")
        return cap.k
    if args.k is None:
        raise UsageError("--k is required without capacities")
    return args.k


def _finish(report, args, extra=None) -> int:
    if args.out:
        write_report(report, args.out, extra)
        print(f"report written to {args.out}")
    if not report.converged:
        print("warning: the last annealing step did not converge", file=sys.stderr)
        return 2
    return 0


def _print_summary(report):
    print(f"method        {report.method}")
    print(f"K             {report.final_state.k}")
    print(f"distortion    {report.distortion:.6g}")
    print(f"hard cost     {report.hard_cost:.6g}")
    if report.capacity.mode != "none":
        print(f"residual      {report.residual:.3e}")
    print("masses        " + " ".join(f"{m:.4f}" for m in report.masses.per_cluster))
    print("hard counts   " + " ".join(str(int(c)) for c in report.hard_counts))
    print(f"outer steps   {len(report.trajectory)} (not converged: {report.nonconverged_steps})")


def cmd_cluster(args) -> int:
    inst = read_instance(args.instance, args.format)
    cap = _capacities(args, inst.dataset, inst.capacities)
    k = _k(args, cap)
    report = anneal(inst.dataset, k, cap, _config(args))
    _print_summary(report)
    return _finish(report, args)


def cmd_segment(args) -> int:
    if args.k is None:
        raise UsageError("--k is required")
    if args.capacities or args.mode not in (None, "none"):
        raise UsageError("segmentation is unconstrained; drop --capacities/--mode")
    img = read_ppm(args.image)
    cfg = _config(args)
    seg, palette, info = segment_image(img, args.k, cfg, args.pixelate)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_ppm(seg, out / "out.ppm")
    extra = {k: v for k, v in info.items() if k not in ("report", "pixelated")}
    extra["palette"] = palette
    if "pixelated" in info:
        write_ppm(info["pixelated"], out / "pixelated.ppm")
    print(f"image         {img.width}x{img.height}, {info['distinct_colors']} distinct colours")
    print(f"palette       {len(palette)} entries, {info['output_colors']} colours in output")
    print(f"distortion    {info['distortion']:.6g}")
    print(f"compression   {info['compression_palette']:.1f} (palette only), "
          f"{info['compression_with_index']:.2f} (with index map)")
    if args.lloyd_runs:
        from .imaging import color_dataset
        ds, _ = color_dataset(img)
        rng = np.random.default_rng(cfg.rng_seed)
        runs = [lloyd(ds, args.k, random_init(ds, args.k, rng)).distortion
                for _ in range(args.lloyd_runs)]
        extra["lloyd_distortions"] = runs
        print(f"lloyd         median {np.median(runs):.6g}, best {min(runs):.6g} "
              f"over {args.lloyd_runs} runs")
    (out / "segment.json").write_text(json.dumps(_clean(extra), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'out.ppm'}")
    report = info["report"]
    args.out = str(out)
    return _finish(report, args, extra)


def cmd_pickup(args) -> int:
    cfg = _config(args)
    if args.instance:
        inst = read_instance(args.instance, args.format)
        ds, windows = inst.dataset, inst.windows
        if not ds.typed:
            raise InstanceError("pickup instances need a type column")
        if args.capacities:
            cap = parse_capacities(args.capacities, "typed")
        elif inst.capacities.mode == "typed":
            cap = inst.capacities
        else:
            from .scenarios import random_typed_capacities
            k = args.k or args.vehicles
            cap = random_typed_capacities(ds, k, np.random.default_rng(cfg.rng_seed))
    else:
        if args.capacities:
            raise UsageError("--capacities needs an instance file for pickup")
        windows, ds, cap = pickup_instance(args.type_counts, args.k or args.vehicles, cfg.rng_seed)
    if args.mode not in (None, "typed"):
        raise UsageError("pickup is a typed problem; use --mode typed")
    k = _k(args, cap)
    report = anneal(ds, k, cap, cfg)
    _print_summary(report)
    n = ds.n
    per_type = report.masses.per_cluster_per_type
    print(f"\nshipments per vehicle and type (soft mass x N, target in brackets), N={n}")
    print("vehicle " + "".join(f"{'type ' + str(t + 1):>20}" for t in range(ds.n_types)))
    for j in range(k):
        cells = "".join(f"{per_type[j, t] * n:>11.4f} [{cap.lam[j, t] * n:6.2f}]"
                        for t in range(ds.n_types))
        print(f"{j + 1:>7} {cells}")
    extra = {"windows": windows} if windows is not None else None
    return _finish(report, args, extra)


def cmd_bench(args) -> int:
    cfg = _config(args)
    rng = np.random.default_rng(cfg.rng_seed)
    k = args.k or 2
    if args.instance:
        inst = read_instance(args.instance, args.format)
        cap = _capacities(args, inst.dataset, inst.capacities)
        k = _k(args, cap)
        suite, caps = [inst.dataset], [cap]
    else:
        if args.n % k:
            raise UsageError("generated bench instances need N divisible by K")
        suite = random_suite(args.instances, args.n, seed=cfg.rng_seed)
        caps = [CapacitySpec("sized", np.full(k, 1.0 / k))] * len(suite)

    print(f"{'inst':>4} {'DA':>10} {'lloyd med':>10} {'lloyd best':>10} {'oracle':>10} "
          f"{'DA cap':>10} {'oracle cap':>10} {'DA resid':>9} {'fixed resid':>11}")
    for i, (ds, cap) in enumerate(zip(suite, caps)):
        da = anneal(ds, k, cfg=cfg)
        runs = [lloyd(ds, k, random_init(ds, k, rng)).distortion for _ in range(args.lloyd_runs)]
        small = k**ds.n <= MAX_ENUMERATION
        orc = brute_force_unconstrained(ds, k).best_cost if small else float("nan")
        da_cap = fx = None
        orc_cap = float("nan")
        if cap.mode != "none":
            da_cap = anneal(ds, k, cap, cfg)
            if cap.mode == "sized":
                fx = fixed_eta_da(ds, cap, cfg)
            counts = cap.cluster_masses() * ds.n
            uniform = np.ptp(ds.weights) <= 1e-12 * ds.weights.max()
            if small and uniform and np.allclose(counts, np.round(counts)):
                orc_cap = brute_force_capacitated(ds, k, np.round(counts).astype(int)).best_cost
        med = np.median(runs) if runs else float("nan")
        best = min(runs) if runs else float("nan")
        print(f"{i:>4} {da.distortion:>10.6f} {med:>10.6f} {best:>10.6f} {orc:>10.6f} "
              f"{da_cap.hard_cost if da_cap else float('nan'):>10.6f} {orc_cap:>10.6f} "
              f"{da_cap.residual if da_cap else float('nan'):>9.1e} "
              f"{fx.residual if fx else float('nan'):>11.1e}")
    return 0


COMMANDS = {"cluster": cmd_cluster, "segment": cmd_segment, "pickup": cmd_pickup,
            "bench": cmd_bench}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cap-anneal: error: {exc}", file=sys.stderr)
        return 1
    except (InstanceError, InfeasibleError, ValueError, OSError) as exc:
        print(f"cap-anneal: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())

"""Command line entry points.

Every output file starts with a metadata block holding the full run
configuration; CSV bodies depend only on the configuration, so re-running a
command reproduces them byte for byte. Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""
import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "NEUMANN_ATLAS_THREADS"


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def _config_dict(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _metadata(args):
    return {
        "tool": "neumann-atlas",
        "version": __version__,
        "generated": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": _config_dict(args),
    }


def _header_lines(args):
    meta = _metadata(args)
    return [f"tool: {meta['tool']} {meta['version']}", f"generated: {meta['generated']}",
            "config: " + json.dumps(meta["config"], sort_keys=True)]


def _write_json(path, payload, args):
    out = {"metadata": _metadata(args)}
    out.update(payload)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _write_csv(path, header, rows, args):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _header_lines(args):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _star_params(args):
    from .stardomain import StarParams
    if not (args.a > 0 and args.b > 0):
        raise ConfigError("--a and --b must be positive")
    if args.b > args.a:
        raise ConfigError("expected b <= a (swap the parameters)")
    return StarParams(args.a, args.b)


def _sibling(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


# --------------------------------------------------------------------------- #
# trace / stats
# --------------------------------------------------------------------------- #

def _census_job(job):
    """Worker: census of one field."""
    from .wavefield import WaveSpec, sample_random_wave, sample_separable
    from .tracer import census_field
    kind, energy, seed, N = job
    if kind == "separable":
        fld = sample_separable(energy[0], energy[1], N)
    else:
        fld = sample_random_wave(WaveSpec.random(energy, seed), N)
    cs = census_field(fld)
    return cs


def _run_censuses(jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [_census_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        # map keeps submission order, so output is independent of thread count
        return list(ex.map(_census_job, jobs))


def _check_exclusions(censuses, limit):
    counts = [cs.excluded_count for cs in censuses]
    if limit is not None and sum(counts) > limit:
        raise NumericalFailure(f"excluded domains per realization: {counts} (limit {limit})")
    return counts


def _validate_wave(args):
    from .wavefield import enumerate_lattice
    if args.modes is None:
        if args.energy is None:
            raise ConfigError("give --energy or --modes")
        if not enumerate_lattice(args.energy):
            raise ConfigError(f"{args.energy} is not a sum of two squares")
    elif min(args.modes) < 1:
        raise ConfigError("--modes must be positive")
    if args.resolution < 8:
        raise ConfigError("--resolution must be >= 8")


def cmd_trace(args):
    from .tracer import export_census_csv
    _validate_wave(args)
    if args.modes is not None:
        job = ("separable", tuple(args.modes), None, args.resolution)
    else:
        job = ("random", args.energy, args.seed, args.resolution)
    cs = _census_job(job)
    counts = _check_exclusions([cs], args.max_excluded)
    export_census_csv([cs], args.output, _header_lines(args))
    print(f"{len(cs.domains)} domains, {counts[0]} excluded, area {cs.total_area:.12f}")


def cmd_stats(args):
    from .tracer import rho_statistics, export_histogram, export_census_csv
    _validate_wave(args)
    if args.modes is not None:
        raise ConfigError("stats needs --energy (random waves)")
    if args.realizations < 1:
        raise ConfigError("--realizations must be >= 1")
    jobs = [("random", args.energy, args.seed + k, args.resolution) for k in range(args.realizations)]
    censuses = _run_censuses(jobs, args.threads)
    counts = _check_exclusions(censuses, args.max_excluded)
    stats = rho_statistics(censuses)
    extra = {"metadata": _metadata(args), "excluded_per_realization": counts}
    export_histogram(stats, args.output, _sibling(args.output, ".json"), _header_lines(args), extra)
    if args.census:
        export_census_csv(censuses, args.census, _header_lines(args))
    s = stats.summary()
    print(f"{s['n_domains']} domains, exceedance {s['exceed_ground']:.4f}, by type "
          + ", ".join(f"{k} {v['ground']:.4f}" for k, v in s["exceed_by_type"].items()))


# --------------------------------------------------------------------------- #
# star / spectral
# --------------------------------------------------------------------------- #

def cmd_star(args):
    from . import stardomain as sd
    p = _star_params(args)
    xs = np.linspace(0.0, p.a, args.points)
    gam = sd.gamma_boundary(p, xs)
    rho_s, rho_l = sd.rho_star_lens(p)
    win = sd.admissibility_window(p)
    if args.format == "csv":
        _write_csv(args.output, ["x", "gamma"], zip(xs, gam), args)
    else:
        _write_json(args.output, {
            "lambda_ab": sd.lambda_ab(p),
            "quarter_area": sd.quarter_area(p),
            "star_area": sd.star_area(p),
            "lens_area": sd.lens_area(p),
            "star_perimeter": sd.star_perimeter(p),
            "rho_star": rho_s,
            "rho_lens": rho_l,
            "window": {"alpha_lo": win.alpha_lo, "alpha_hi": win.alpha_hi, "feasible": win.feasible,
                       "alpha_best": win.alpha_best, "margin": win.margin},
            "gamma": {"x": xs, "value": gam},
        }, args)
    print(f"lambda_ab {sd.lambda_ab(p):.12g}, rho_star {rho_s:.12g}, rho_lens {rho_l:.12g}, "
          f"window feasible {win.feasible}")


def cmd_spectral(args):
    from .spectral import ground_state_gap, SolverFailure
    p = _star_params(args)
    if args.cells < 100:
        raise ConfigError("--cells must be >= 100")
    try:
        g = ground_state_gap(p, args.cells)
    except SolverFailure as exc:
        raise NumericalFailure(str(exc)) from exc
    row = {"lambda_v": g.lambda_v, "lambda_h": g.lambda_h, "gap": g.gap, "error_v": g.error_v,
           "error_h": g.error_h, "lambda_ab": g.lambda_ab, "margin_ratio": g.margin_ratio}
    if args.format == "csv":
        _write_csv(args.output, list(row), [list(row.values())], args)
    else:
        _write_json(args.output, row, args)
    print(f"lambda_v {g.lambda_v:.10g}, lambda_h {g.lambda_h:.10g}, gap {g.gap:.6g}")
    if not g.gap > 0:
        raise NumericalFailure(f"non-positive gap {g.gap}")


# --------------------------------------------------------------------------- #
# rearrange / cheeger
# --------------------------------------------------------------------------- #

def cmd_rearrange(args):
    from . import rearrange as ra
    from .stardomain import SectorParams, quarter_area
    p = _star_params(args)
    alpha = args.alpha * math.pi
    if not 0 < alpha <= 0.25 * math.pi:
        raise ConfigError("--alpha (in units of pi) must lie in (0, 1/4]")
    funcs = [("separable", ra.swapped_profile(p))]
    funcs += [(f"bumps-{args.seed + k}", ra.random_bumps(p, args.seed + k)) for k in range(args.functions)]
    results = []
    for name, f in funcs:
        mesh, vals = ra.sample_on_quarter(p, f, args.cells)
        prof = ra.level_profile(mesh.nodes, mesh.tris, vals, args.thresholds)
        rf = ra.rearrange_to_sector(prof, ra.matching_sector(prof, alpha))
        g = ra.gradient_inequality_check(mesh.nodes, mesh.tris, vals, alpha)
        eq, cell = ra.equimeasurability_error(rf)
        norms = {n.name: n.rel_error for n in ra.norm_identity(mesh.nodes, mesh.tris, vals, rf)}
        results.append({"function": name, "dirichlet_rearranged": g.lhs, "dirichlet_original": g.rhs,
                        "gradient_holds": g.holds, "equimeasurability_error": eq, "cell_area": cell,
                        "norm_rel_errors": norms})
    s = SectorParams(alpha, math.sqrt(2 * quarter_area(p) / alpha))
    f0 = funcs[0][1]
    t_grid = np.linspace(0.05, 0.95, args.levels)
    rep = ra.perimeter_inequality_check(p, f0, t_grid, s, n_cells=args.cells)
    _write_json(args.output, {"functions": results, "perimeter": {
        "function": funcs[0][0], "alpha": alpha, "fraction_holding": rep.fraction_holding,
        "rows": [r.__dict__ for r in rep.rows]}}, args)
    bad = [r["function"] for r in results if not r["gradient_holds"]]
    print(f"{len(results)} functions, gradient inequality fails for {bad or 'none'}, "
          f"perimeter inequality holds at {rep.fraction_holding:.3f} of levels")


def cmd_cheeger(args):
    from . import isoperimetric as iso
    p = _star_params(args)
    if not 0 < args.eta_min < args.eta_max < 1:
        raise ConfigError("need 0 < --eta-min < --eta-max < 1 (fractions of the quarter area)")
    total = iso.boundary_curve(p, args.mode).total_area()
    grid = total * np.geomspace(args.eta_min, args.eta_max, args.points)
    try:
        cc = iso.cheeger_curve(p, grid, args.mode)
    except iso.NoArcFound as exc:
        raise NumericalFailure(str(exc)) from exc
    cc.to_csv(args.output, _header_lines(args) + [
        f"transition_eta: {_fmt(cc.transition_eta)}", f"argmin_eta: {_fmt(cc.eta_min)}",
        f"min_C: {_fmt(cc.C.min())}"])
    print(f"min C {cc.C.min():.10g} at eta/|quarter| = {cc.eta_min / total:.6g}; "
          f"transition at {cc.transition_eta / total:.6g}")


# --------------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------------- #

def _positive_int(s):
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser():
    ap = argparse.ArgumentParser(prog="neumann-atlas", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def wave_opts(sp):
        sp.add_argument("--energy", type=int, help="E = n1^2 + n2^2")
        sp.add_argument("--modes", type=int, nargs=2, metavar=("N1", "N2"),
                        help="separable field 2 cos(2 pi n1 x1) cos(2 pi n2 x2) instead of a random wave")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--resolution", type=int, default=512, help="grid size N")
        sp.add_argument("--max-excluded", type=int, default=None,
                        help="fail (exit 3) when more domains than this are excluded")

    def star_opts(sp):
        sp.add_argument("--a", type=float, required=True)
        sp.add_argument("--b", type=float, required=True)

    sp = sub.add_parser("trace", help="Neumann domains of one field")
    wave_opts(sp)
    sp.add_argument("--output", default="census.csv")
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("stats", help="rho statistics over random-wave realizations")
    wave_opts(sp)
    sp.add_argument("--realizations", type=int, default=10)
    sp.add_argument("--threads", type=_positive_int, default=None)
    sp.add_argument("--output", default="rho_hist.csv", help="histogram CSV; summary goes next to it as .json")
    sp.add_argument("--census", default=None, help="optional per-domain CSV")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("star", help="closed-form quantities of the star-like domain")
    star_opts(sp)
    sp.add_argument("--points", type=_positive_int, default=201)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--output", default="star.json")
    sp.set_defaults(func=cmd_star)

    sp = sub.add_parser("spectral", help="lambda_v and lambda_h on the quarter domain")
    star_opts(sp)
    sp.add_argument("--cells", type=int, default=10000)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--output", default="spectral.json")
    sp.set_defaults(func=cmd_spectral)

    sp = sub.add_parser("rearrange", help="rearrangement checks on seeded test functions")
    star_opts(sp)
    sp.add_argument("--alpha", type=float, default=0.2, help="sector angle in units of pi")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--functions", type=int, default=10, help="number of random bump functions")
    sp.add_argument("--cells", type=int, default=20000)
    sp.add_argument("--thresholds", type=_positive_int, default=512)
    sp.add_argument("--levels", type=_positive_int, default=16, help="levels for the perimeter check")
    sp.add_argument("--output", default="rearrange.json")
    sp.set_defaults(func=cmd_rearrange)

    sp = sub.add_parser("cheeger", help="F and C along the arc-minimizer family")
    star_opts(sp)
    sp.add_argument("--points", type=_positive_int, default=200)
    sp.add_argument("--eta-min", type=float, default=1e-6)
    sp.add_argument("--eta-max", type=float, default=0.999)
    sp.add_argument("--mode", choices=("exact", "gaussian"), default="exact")
    sp.add_argument("--output", default="cheeger.csv")
    sp.set_defaults(func=cmd_cheeger)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "threads", "unset") is None:
            args.threads = default_threads()
        args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

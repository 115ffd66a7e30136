"""Command-line interface: solves, probes, comparisons and spot checks.

Exit codes: 0 on success, 1 when a probe hard-assertion fails, 2 on
configuration/schema violations (including coefficient invariant
rejections, before any solve), 3 on solver failures.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, fdm, figures, probes, spectral
from .config import (ConfigError, build_coefficients, build_g_top, build_grid,
                     build_source_field, dump_json, load_config, read_solution_csv,
                     thread_count, write_solution_csv)
from .fields import GridDerivatives
from .geometry import GridFunction, half_ball_points, make_slab_grid
from .holder import ck_2alpha_norm, ck_alpha_norm, holder_seminorm, sup_norm
from .kummer import kummer_m, kummer_u, wronskian
from .operators import CoefficientError, apply_operator
from .quadrature import QuadratureError

EXIT_OK = 0
EXIT_PROBE_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _solve_problem(cfg, grid, coeffs, rtol, scheme, method, tol):
    """Dispatch to the configured solver; returns (u, report_dict, extras)."""
    solver = cfg.get("solver", {})
    kind = solver.get("method", "spectral" if coeffs.is_constant else "fdm")
    f_field = build_source_field(cfg, grid)
    f = f_field.on_grid(grid)
    if kind == "spectral":
        halfspace = bool(solver.get("halfspace", False))
        if halfspace:
            sol = spectral.solve_constant_halfspace(coeffs, f, rtol=rtol)
        else:
            sol = spectral.solve_constant_slab(coeffs, f, rtol=rtol)
        residual = apply_operator(coeffs, sol.u)
        residual = GridFunction(grid, residual.values - np.asarray(f.values))
        return sol.u, {"solver": "spectral", **sol.report()}, {
            "spectral": sol, "f": f, "residual": residual}
    if kind == "fdm":
        g_top = build_g_top(cfg, grid)
        system = fdm.assemble_system(coeffs, f, g_top, scheme=scheme)
        rep = fdm.solve_slab_fdm(system, tol=tol, method=method)
        residual = apply_operator(coeffs, rep.u)
        residual = GridFunction(grid, residual.values - np.asarray(f.values))
        return rep.u, {"solver": "fdm", **rep.to_dict()}, {
            "fdm": rep, "f": f, "residual": residual}
    raise ConfigError(f"unknown solver method {kind!r}")


def _source_provider(coeffs, grid, u, extras):
    if "spectral" in extras:
        return probes.SpectralDerivatives(extras["spectral"])
    return GridDerivatives(u)


def _run_probe(name, params, cfg, grid, coeffs, u, extras):
    src = _source_provider(coeffs, grid, u, extras)
    alpha = float(params.get("alpha", 0.5))
    seed = int(params.get("seed", cfg.get("seed", 0)))
    if name == "schauder":
        center = params.get("center", [0.0] * grid.d)
        r0 = float(params.get("r0", 0.4 * grid.nu))
        r = float(params.get("r", 0.5 * r0))
        cap = params.get("cap")
        return probes.schauder_quotient(src, coeffs, grid, center, r, r0, alpha,
                                        cap=cap, seed=seed)
    if name == "global":
        return probes.global_schauder_quotient(src, coeffs, grid, alpha,
                                               k=int(params.get("k", 0)),
                                               cap=params.get("cap"), seed=seed)
    if name == "taylor":
        center = params.get("center", [0.0] * grid.d)
        r0 = float(params.get("r0", 0.45 * grid.nu))
        radii = params.get("radii", [0.25 * r0, 0.5 * r0, 0.75 * r0])
        return probes.taylor_remainder_probe(src, coeffs, grid, center, radii, r0,
                                             alpha, ratio_cap=float(params.get("ratio_cap", 4.0)),
                                             seed=seed)
    if name == "flatness":
        levels = int(params.get("refinements", 2))
        sols = [u]
        g = grid
        for _ in range(levels):
            g = make_slab_grid(g.d, g.nu, g.period, g.n_tangential, 2 * g.n_vertical)
            f_field = build_source_field(cfg, g)
            if coeffs.is_constant:
                sols.append(spectral.solve_constant_slab(coeffs, f_field.on_grid(g)).u)
            else:
                system = fdm.assemble_system(coeffs, f_field.on_grid(g),
                                             build_g_top(cfg, g), scheme="central")
                sols.append(fdm.solve_slab_fdm(system).u)
        return probes.boundary_flatness_probe(sols,
                                              noise_band=float(params.get("noise_band", 0.10)))
    if name == "interp":
        center = params.get("center", [0.0] * grid.d)
        r0 = float(params.get("r0", 0.4 * grid.nu))
        ball = half_ball_points(grid, center, r0)
        eps_grid = params.get("eps_grid", [0.05, 0.1, 0.2, 0.4, 0.8])
        return probes.interpolation_probe(src, alpha, ball, eps_grid,
                                          m_cap=params.get("m_cap"), seed=seed)
    if name == "xddu":
        center = params.get("center", [0.0] * grid.d)
        r = float(params.get("r", 0.4 * grid.nu))
        ball = half_ball_points(grid, center, r)
        return probes.xd_du_holder_probe(src, alpha, ball, r, seed=seed)
    if name == "maxp":
        f_field = build_source_field(cfg, grid)
        return probes.max_principle_probe(coeffs, f_field.on_grid(grid),
                                          build_g_top(cfg, grid),
                                          tol=float(params.get("tol", 1e-8)), seed=seed)
    raise ConfigError(f"unknown probe name {name!r}")


def cmd_solve(args, halfspace_default=None, force_method=None):
    try:
        cfg = load_config(args.config)
        grid = build_grid(cfg)
        coeffs = build_coefficients(cfg, grid)
    except (ConfigError, CoefficientError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    solver_cfg = cfg.setdefault("solver", {})
    if force_method:
        solver_cfg["method"] = force_method
    try:
        u, report, extras = _solve_problem(
            cfg, grid, coeffs,
            rtol=float(solver_cfg.get("rtol", 1e-9)),
            scheme=solver_cfg.get("scheme", "upwind"),
            method=solver_cfg.get("linear_solver", "direct"),
            tol=float(solver_cfg.get("tol", 1e-10)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (spectral.SpectralError, fdm.SolverError, fdm.FdmError, QuadratureError,
            ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out:
        write_solution_csv(u, args.out, residual=extras.get("residual"))
    if args.report:
        dump_json(report, args.report)
    if args.figures:
        figures.render_solution(u, args.figures)
        figures.render_residual_profile(extras["residual"], args.figures)
        if "spectral" in extras:
            figures.render_mode_diagnostics(report.get("modes", []), args.figures)
    return EXIT_OK


def cmd_probe(args):
    try:
        cfg = load_config(args.config)
        grid = build_grid(cfg)
        coeffs = build_coefficients(cfg, grid)
        probe_specs = cfg.get("probes", [])
        if args.name != "batch":
            matching = [p for p in probe_specs if p.get("name") == args.name]
            probe_specs = matching or [{"name": args.name}]
        if not probe_specs:
            raise ConfigError("no probes configured")
        threads = thread_count(args.threads)
    except (ConfigError, CoefficientError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        needs_solution = any(p.get("name", args.name) != "maxp" for p in probe_specs)
        if needs_solution:
            solver_cfg = cfg.get("solver", {})
            u, _, extras = _solve_problem(
                cfg, grid, coeffs, rtol=float(solver_cfg.get("rtol", 1e-9)),
                scheme=solver_cfg.get("scheme", "central"),
                method=solver_cfg.get("linear_solver", "direct"),
                tol=float(solver_cfg.get("tol", 1e-10)))
        else:
            u, extras = None, {}

        def run_one(spec):
            name = spec.get("name", args.name)
            return _run_probe(name, spec, cfg, grid, coeffs, u, extras)

        if threads > 1 and len(probe_specs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                reports = list(pool.map(run_one, probe_specs))
        else:
            reports = [run_one(spec) for spec in probe_specs]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (spectral.SpectralError, fdm.SolverError, fdm.FdmError, QuadratureError,
            ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    dicts = [rep.to_dict() for rep in reports]
    payload = dicts if len(dicts) > 1 else dicts[0]
    if args.out:
        dump_json(payload, args.out)
    if args.summary_csv:
        with open(args.summary_csv, "w") as fh:
            fh.write("probe,passed,headline\n")
            for rep in dicts:
                headline = rep["measured"].get("quotient", "")
                fh.write(f"{rep['name']},{int(rep['passed'])},{headline}\n")
    if args.figures:
        figures.render_probe_summary(dicts, args.figures)
    for rep in dicts:
        print(f"{rep['name']}: {'pass' if rep['passed'] else 'FAIL'}")
    return EXIT_OK if all(rep["passed"] for rep in dicts) else EXIT_PROBE_FAILURE


def cmd_compare(args):
    grid_a, header_a, data_a = read_solution_csv(args.a)
    grid_b, header_b, data_b = read_solution_csv(args.b)
    if data_a.shape[0] != data_b.shape[0]:
        print("compare error: row counts differ", file=sys.stderr)
        return EXIT_CONFIG
    d = len([h for h in header_a if h.startswith("x")])
    if not np.allclose(data_a[:, :d], data_b[:, :d], atol=1e-12):
        print("compare error: grids differ", file=sys.stderr)
        return EXIT_CONFIG
    ua, ub = data_a[:, d], data_b[:, d]
    diff = ua - ub
    report = {
        "sup_difference": float(np.max(np.abs(diff))),
        "l2_difference": float(np.sqrt(np.mean(np.square(diff)))),
    }
    if grid_a is not None:
        shape = grid_a.shape
        diff_grid = np.abs(diff.reshape(shape))
        layer = np.max(diff_grid.reshape(-1, shape[-1]), axis=0)
        report["per_layer_sup"] = layer.tolist()
        report["grid"] = grid_a.descriptor()
        if args.figures:
            figures.render_comparison(layer, grid_a.vertical_coords(), args.figures)
    if args.out:
        dump_json(report, args.out)
    print(f"sup difference: {report['sup_difference']:.6e}")
    return EXIT_OK


def cmd_kummer_eval(args):
    a = complex(args.a_re, args.a_im)
    try:
        m = kummer_m(a, args.b, args.y)
        w = wronskian(a, args.b, args.y) if args.y > 0 else None
        u = kummer_u(a, args.b, args.y)
    except (ValueError, OverflowError) as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"M(a, b, y) = {m!r}")
    print(f"U(a, b, y) = {u!r}")
    print(f"W(a, b; y) = {w!r}")
    return EXIT_OK


def cmd_norms(args):
    grid, header, data = read_solution_csv(args.csv)
    d = len([h for h in header if h.startswith("x")])
    pts = data[:, :d]
    vals = data[:, d]
    if args.k == 0 and not args.two_alpha:
        from .geometry import PointSet

        points = PointSet(pts, tag=args.csv)
        report = {
            "alpha": args.alpha,
            "k": 0,
            "sup_norm": float(np.max(np.abs(vals))),
            "seminorm": holder_seminorm(vals, args.alpha, points),
        }
        report["c_alpha"] = report["sup_norm"] + report["seminorm"]
    else:
        if grid is None:
            print("norms error: k > 0 needs the grid descriptor in the CSV header",
                  file=sys.stderr)
            return EXIT_CONFIG
        gf = GridFunction(grid, vals.reshape(grid.shape))
        src = GridDerivatives(gf)
        from .geometry import PointSet

        points = PointSet(pts, tag=args.csv, grid=grid)
        if args.two_alpha:
            rep = ck_2alpha_norm(src, args.k, args.alpha, points)
        else:
            rep = ck_alpha_norm(src, args.k, args.alpha, points)
        report = rep.to_dict()
    if args.out:
        dump_json(report, args.out)
    else:
        import json as _json

        print(_json.dumps(report, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_run(args):
    try:
        cfg = load_config(args.config)
        grid = build_grid(cfg)
        coeffs = build_coefficients(cfg, grid)
        out_cfg = cfg.get("output", {})
        threads = thread_count(args.threads if args.threads is not None
                               else cfg.get("threads"))
    except (ConfigError, CoefficientError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    solver_cfg = cfg.get("solver", {})
    try:
        u, solve_report, extras = _solve_problem(
            cfg, grid, coeffs, rtol=float(solver_cfg.get("rtol", 1e-9)),
            scheme=solver_cfg.get("scheme", "upwind"),
            method=solver_cfg.get("linear_solver", "direct"),
            tol=float(solver_cfg.get("tol", 1e-10)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (spectral.SpectralError, fdm.SolverError, fdm.FdmError, QuadratureError,
            ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    probe_specs = cfg.get("probes", [])
    try:
        def run_one(spec):
            return _run_probe(spec["name"], spec, cfg, grid, coeffs, u, extras)

        if threads > 1 and len(probe_specs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                probe_reports = list(pool.map(run_one, probe_specs))
        else:
            probe_reports = [run_one(spec) for spec in probe_specs]
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (spectral.SpectralError, fdm.SolverError, fdm.FdmError, QuadratureError,
            ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    probe_dicts = [rep.to_dict() for rep in probe_reports]
    all_pass = all(rep["passed"] for rep in probe_dicts)
    summary = {
        "config": cfg,
        "solve": solve_report,
        "probes": probe_dicts,
        "all_probes_passed": all_pass,
        "version": __version__,
    }
    sol_path = out_cfg.get("solution_csv", "solution.csv")
    rep_path = out_cfg.get("report_json", "report.json")
    write_solution_csv(u, sol_path, residual=extras.get("residual"))
    dump_json(summary, rep_path)
    fig_dir = args.figures or out_cfg.get("figures_dir")
    if fig_dir:
        figures.render_solution(u, fig_dir)
        figures.render_residual_profile(extras["residual"], fig_dir)
        if "spectral" in extras:
            figures.render_mode_diagnostics(solve_report.get("modes", []), fig_dir)
        figures.render_probe_summary(probe_dicts, fig_dir)
    for rep in probe_dicts:
        print(f"{rep['name']}: {'pass' if rep['passed'] else 'FAIL'}")
    print(f"solution -> {sol_path}; report -> {rep_path}")
    return EXIT_OK if all_pass else EXIT_PROBE_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="degenlab",
        description="Numerical laboratory for boundary-degenerate elliptic operators")
    parser.add_argument("--version", action="version",
                        version=f"degenlab {__version__} (numpy {np.__version__})")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (falls back to DEGENLAB_THREADS, then 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve-spectral", help="constant-coefficient spectral solve")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", default=None, help="solution CSV path")
    ps.add_argument("--report", default=None, help="report JSON path")
    ps.add_argument("--figures", default=None, help="directory for rendered figures")
    ps.set_defaults(func=lambda a: cmd_solve(a, force_method="spectral"))

    pf = sub.add_parser("solve-fdm", help="finite-difference slab solve")
    pf.add_argument("--config", required=True)
    pf.add_argument("--out", default=None)
    pf.add_argument("--report", default=None)
    pf.add_argument("--figures", default=None)
    pf.set_defaults(func=lambda a: cmd_solve(a, force_method="fdm"))

    pp = sub.add_parser("probe", help="run verification probes")
    pp.add_argument("--name", required=True,
                    choices=["schauder", "global", "taylor", "flatness", "interp",
                             "xddu", "maxp", "batch"])
    pp.add_argument("--config", required=True)
    pp.add_argument("--out", default=None)
    pp.add_argument("--summary-csv", default=None)
    pp.add_argument("--figures", default=None)
    pp.set_defaults(func=cmd_probe)

    pc = sub.add_parser("compare", help="difference report between two solution CSVs")
    pc.add_argument("a")
    pc.add_argument("b")
    pc.add_argument("--out", default=None)
    pc.add_argument("--figures", default=None)
    pc.set_defaults(func=cmd_compare)

    pk = sub.add_parser("kummer-eval", help="spot-check M, U, W")
    pk.add_argument("a_re", type=float)
    pk.add_argument("a_im", type=float)
    pk.add_argument("b", type=float)
    pk.add_argument("y", type=float)
    pk.set_defaults(func=cmd_kummer_eval)

    pn = sub.add_parser("norms", help="weighted Hölder norms of a CSV field")
    pn.add_argument("--csv", required=True)
    pn.add_argument("--alpha", type=float, required=True)
    pn.add_argument("--k", type=int, default=0)
    pn.add_argument("--two-alpha", action="store_true",
                    help="compute the (k, 2+alpha) norm instead of (k, alpha)")
    pn.add_argument("--out", default=None)
    pn.set_defaults(func=cmd_norms)

    pr = sub.add_parser("run", help="full experiment: solve + probes + artifacts")
    pr.add_argument("--config", required=True)
    pr.add_argument("--figures", default=None)
    pr.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

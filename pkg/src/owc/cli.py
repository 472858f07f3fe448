"""Command line entry point.

Exit codes: 0 success, 2 refused by a check or invalid config, 3 depth or
subcriticality lost during a run, 4 Picard iteration did not converge,
64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import coupling, diagnostics, io, swe_core
from .errors import AssumptionViolated, CflViolation, NoConvergence, OWCError, ParseError, ValidationError
from .model import PhysicalParams, check_initial_data, validate_params
from .solver import picard_solve, run

EXIT_OK, EXIT_REFUSED, EXIT_ASSUMPTION, EXIT_PICARD, EXIT_USAGE = 0, 2, 3, 4, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _fmt(v: float) -> str:
    return f"{v:g}"


def _load(args):
    if not args.config:
        raise _Usage("--config is required")
    return io.parse_config(args.config)


class _Usage(Exception):
    pass


# subcommands -----------------------------------------------------------------

def cmd_check(args) -> int:
    b = _load(args)
    p = b.params
    lines, ok = [], True
    rep = validate_params(p)
    lines.append(str(rep))
    ok &= rep.ok
    u0, G0 = b.build_initial()
    rep = check_initial_data(p, u0)
    lines.append(str(rep))
    ok &= rep.ok
    if not ok:
        _say(args, "\n".join(lines))
        return EXIT_REFUSED
    for order in (0, 1):
        rep = coupling.compatibility_check(u0, G0, order, p)
        lines.append(str(rep))
        ok &= rep.ok
    (zl, ql), (zr, qr) = coupling.wall_traces(u0)
    um = swe_core.CellState(zl, ql, p.h_0)
    up = swe_core.CellState(zr, qr, p.h_0)
    L, inv_norm = swe_core.lopatinskii(um, up, p.g)
    det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    l_ok = abs(det) > 1e-12 and inv_norm <= 1.0 / swe_core.KAPPA_0
    lines.append(
        f"L = [[{_fmt(L[0, 0])},{_fmt(L[0, 1])}],[{_fmt(L[1, 0])},{_fmt(L[1, 1])}]], det={_fmt(det)}, "
        f"{'PASS' if l_ok else 'FAIL'} (|L^-1|={inv_norm:.6g})"
    )
    ok &= l_ok
    sym_ok = True
    for u in (um, up):
        S = swe_core.symmetrizer(u, p.g)
        SA = S @ swe_core.jacobian(u, p.g)
        sym_ok &= bool(np.all(np.linalg.eigvalsh(S) > 0) and np.allclose(SA, SA.T, atol=1e-12))
    lines.append(f"symmetrizer: {'PASS' if sym_ok else 'FAIL'} (S > 0 and S A symmetric at both wall traces)")
    ok &= sym_ok
    try:
        cert = swe_core.boundary_dissipativity(
            swe_core.kreiss_symmetrizer_4x4(um, up, p.g), swe_core.system_matrix_4x4(um, up, p.g)
        )
        lines.append(f"boundary_dissipativity: PASS (c_2={cert.c_2:.6g}, C_2={cert.C_2:.6g})")
    except OWCError as e:
        lines.append(f"boundary_dissipativity: FAIL ({e})")
        ok = False
    _say(args, "\n".join(lines))
    return EXIT_OK if ok else EXIT_REFUSED


def _summary(res) -> str:
    return (
        f"t={res.state.t:.6g} steps={res.n_steps} q_i={res.G.q_i:.6g} P_ch={res.G.P_ch:.6g} "
        f"mass_drift={diagnostics.mass_drift(res):.3e} wall={res.wall_time:.2f}s"
    )


def cmd_simulate(args) -> int:
    b = _load(args)
    res = run(b.build_initial(), b.params, b.solver, force=args.force)
    if args.out:
        io.write_result(args.out, res, args.config)
    _say(args, "simulate: " + _summary(res))
    return EXIT_OK


def cmd_picard(args) -> int:
    b = _load(args)
    cfg = b.solver
    if args.max_iter:
        cfg = cfg.with_(picard_max_iter=args.max_iter)
    if args.tol:
        cfg = cfg.with_(picard_tol=args.tol)
    try:
        res, hist = picard_solve(b.build_initial(), b.params, cfg, force=args.force)
    except NoConvergence as e:
        d = e.history
        if args.out:
            Path(args.out, "diagnostics").mkdir(parents=True, exist_ok=True)
            io.write_csv(Path(args.out, "diagnostics/picard_history.csv"),
                         {"iteration": np.arange(1, len(d) + 1), "difference": np.array(d, dtype=float)})
        ratios = [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]
        _say(args, f"picard: no convergence after {e.max_iter} iterations; ratios "
             + " ".join(f"{r:.3g}" for r in ratios))
        return EXIT_PICARD
    d = np.array(hist.differences)
    if args.out:
        io.write_result(args.out, res, args.config,
                        extra={"picard_history.csv": {"iteration": np.arange(1, len(d) + 1), "difference": d}})
    _say(args, f"picard: converged in {len(d)} iterations; ratios " + " ".join(f"{r:.3g}" for r in hist.ratios))
    _say(args, "picard: " + _summary(res))
    return EXIT_OK


def cmd_converge(args) -> int:
    b = _load(args)
    levels = [int(v) for v in args.levels.split(",")]
    rep = diagnostics.convergence_study(b.params, b.solver, levels, b.initial, b.layout, workers=args.workers)
    if args.out:
        Path(args.out, "diagnostics").mkdir(parents=True, exist_ok=True)
        io.write_csv(Path(args.out, "diagnostics/convergence.csv"), {
            "resolution": np.array(rep.resolutions[:-1]),
            "error": np.array(rep.errors),
            "error_vs_finest": np.array(rep.errors_vs_finest),
        })
    _say(args, str(rep))
    return EXIT_OK


def cmd_ode_scaling(args) -> int:
    p = _load(args).params if args.config else PhysicalParams()
    T = [float(v) for v in args.T.split(",")]
    traces = tuple(float(v) for v in args.traces.split(","))
    if len(traces) != 4:
        raise _Usage("--traces needs four values zeta_l,q_l,zeta_r,q_r")
    rep = diagnostics.ode_scaling_test(p, traces, T)
    if args.out:
        Path(args.out, "diagnostics").mkdir(parents=True, exist_ok=True)
        io.write_csv(Path(args.out, "diagnostics/ode_scaling.csv"), {"T": np.array(rep.T), "norm": np.array(rep.norms)})
    _say(args, str(rep))
    return EXIT_OK if rep.ok else EXIT_REFUSED


def _sweep_target(bundle: io.ConfigBundle, key: str):
    section, _, name = key.rpartition(".")
    for sec in ([section] if section else io.SECTIONS):
        if name in io._known_keys(sec):
            return sec, name
    raise _Usage(f"unknown sweep key {key!r}")


def _sweep_one(job):
    text, cfg_path, out, force = job
    tmp = Path(out) / "config.cfg"
    Path(out).mkdir(parents=True, exist_ok=True)
    tmp.write_text(text)
    argv = ["--config", str(tmp), "--quiet"] + (["--force"] if force else []) + ["--out", str(out), "simulate"]
    return main(argv)


def cmd_sweep(args) -> int:
    b = _load(args)
    key, _, values = args.assignment.partition("=")
    if not values:
        raise _Usage("sweep expects key=v1,v2,...")
    section, name = _sweep_target(b, key)
    base = io.serialize_config(b)
    out_root = Path(args.out or "sweep")
    jobs = []
    for v in values.split(","):
        lines, cur = [], None
        for line in base.splitlines():
            if line.startswith("["):
                cur = line.strip("[]")
            if cur == section and line.split("=")[0].strip() == name:
                line = f"{name} = {v}"
            lines.append(line)
        text = "\n".join(lines) + "\n"
        io.parse_config_text(text, args.config)  # fail early on bad values
        jobs.append((text, args.config, out_root / f"{name}={v}", args.force))
    with ProcessPoolExecutor(max_workers=args.workers) as ex:
        codes = list(ex.map(_sweep_one, jobs))
    for (_, _, out, _), c in zip(jobs, codes):
        _say(args, f"sweep {out}: exit {c}")
    return max(codes) if codes else EXIT_OK


# argument parsing ------------------------------------------------------------

def _common(parser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="configuration file")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory")
    parser.add_argument("--force", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="run even if pre-run checks fail")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="print nothing on success")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="owc", description="Shallow water OWC simulator and well-posedness checks")
    _common(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    common = _Parser(add_help=False)
    _common(common, suppress=True)
    sub.add_parser("check", parents=[common], help="run all structural and data checks").set_defaults(fn=cmd_check)
    sub.add_parser("simulate", parents=[common], help="integrate to t_end").set_defaults(fn=cmd_simulate)
    sp = sub.add_parser("picard", parents=[common], help="Picard iteration with frozen coefficients")
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.set_defaults(fn=cmd_picard)
    sp = sub.add_parser("converge", parents=[common], help="grid convergence study")
    sp.add_argument("--levels", default="1,2,4,8", help="refinement factors, comma separated")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(fn=cmd_converge)
    sp = sub.add_parser("ode-scaling", parents=[common], help="sqrt(T) scaling of the boundary ODE")
    sp.add_argument("--T", default="0.1,0.05,0.025,0.0125")
    sp.add_argument("--traces", default="0,0,0.1,0", help="zeta_l,q_l,zeta_r,q_r held constant")
    sp.set_defaults(fn=cmd_ode_scaling)
    sp = sub.add_parser("sweep", parents=[common], help="parallel simulate over key=v1,v2,...")
    sp.add_argument("assignment", metavar="key=v1,v2,...")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.fn(args)
    except _Usage as e:
        print(f"owc: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as e:
        print(f"owc: config error: {e}", file=sys.stderr)
        return EXIT_REFUSED
    except ValidationError as e:
        print(f"owc: refused: {e}", file=sys.stderr)
        return EXIT_REFUSED
    except AssumptionViolated as e:
        print(f"owc: {e}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except CflViolation as e:
        print(f"owc: {e}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NoConvergence as e:
        print(f"owc: {e}", file=sys.stderr)
        return EXIT_PICARD


if __name__ == "__main__":
    sys.exit(main())

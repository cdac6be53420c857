"""``perwave`` command-line front end.

Exit codes: 0 on success, 1 on a domain error (message on standard error),
2 on a usage error.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

import numpy as np

from .errors import PerwaveError
from .parallel import default_jobs

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Arguments parse but are inconsistent."""


def _floats(text: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers, got {len(vals)}")
    return vals


def _float_list(text):
    vals = _floats(text)
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _window(text):
    return _floats(text, 4)


def _lambda_grid(text):
    vals = _floats(text, 6)
    nx, ny = vals[4], vals[5]
    if nx < 1 or ny < 1 or nx != int(nx) or ny != int(ny):
        raise argparse.ArgumentTypeError("nx and ny must be positive integers")
    return vals[:4] + [int(nx), int(ny)]


def _complex(text):
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


# ---------------------------------------------------------------------------
# helpers


def _load(args, attr="profile"):
    from .io import load_model, read_profile

    prof, model = read_profile(getattr(args, attr))
    if getattr(args, "model", None):
        model = load_model(args.model)
    if model is None:
        raise UsageError("no model: pass --model or use a profile written with a model sidecar")
    return prof, model


def _plot_profile(args, path, profile, title):
    if args.no_plots:
        return
    from .svg import Figure

    fig = Figure(title, "x", "u")
    for i, comp in enumerate(profile.values):
        fig.line(profile.x, comp, f"u{i + 1}")
    fig.save(Path(path).with_suffix(".svg"))


def _print(text):
    sys.stdout.write(text + "\n")


def _end_states_from_guess(model, guess, nodes):
    """Periodic end states seeded by the guess values at the two ends."""
    from .grid import constant_state
    from .solver import solve_periodic_state

    left = solve_periodic_state(model, constant_state(guess.values[:, 0], model.period, nodes))
    right = solve_periodic_state(model, constant_state(guess.values[:, -1], model.period, nodes))
    return left, right


# ---------------------------------------------------------------------------
# commands


def cmd_list_models(args):
    from .model import BUILTIN_DESCRIPTIONS, PRESET_POTENTIALS

    for name, desc in BUILTIN_DESCRIPTIONS.items():
        _print(f"{name:10s} {desc}")
    if args.verbose:
        _print("potential presets: " + ", ".join(PRESET_POTENTIALS))
    return EXIT_OK


def cmd_solve(args):
    from .io import load_model, read_profile, write_profile
    from .solver import NewtonOptions, solve_localized, solve_periodic_state

    guess, side_model = read_profile(args.guess)
    model = load_model(args.model) if args.model else side_model
    if model is None:
        raise UsageError("solve needs --model unless the guess carries a model sidecar")
    opts = NewtonOptions(max_iter=args.max_iter, abs_tol=args.tol)
    if guess.grid.periodic_kind:
        if args.bc not in ("periodic", None):
            raise UsageError("periodic guesses are solved with periodic boundary conditions")
        sol = solve_periodic_state(model, guess, opts)
    else:
        if guess.asymptotics is None:
            guess = guess.replace(asymptotics=_end_states_from_guess(model, guess, args.state_nodes))
        bc = {"dirichlet": "dirichlet_to_states", None: "dirichlet_to_states"}.get(args.bc, args.bc)
        if bc == "periodic":
            raise UsageError("line guesses need dirichlet or projection boundary conditions")
        sol = solve_localized(model, guess, bc, opts)
    write_profile(args.out, sol, model)
    _plot_profile(args, args.out, sol, "solution")
    _print(f"residual {sol.meta['residual']:.3e} after {sol.meta['iterations']} Newton steps; "
           f"sigma_min {sol.meta['sigma_min']:.3e}")
    return EXIT_OK


def cmd_continue(args):
    from .io import write_profile, write_table
    from .solver import NewtonOptions, continue_parameter

    start, model = _load(args, "start")
    opts = NewtonOptions(max_iter=args.max_iter, abs_tol=args.tol)
    profiles = continue_parameter(model, start, args.param, args.targets, opts, min_step=args.min_step)
    rows = []
    out = Path(args.out_dir)
    for t, p in zip(args.targets, profiles):
        name = f"{args.prefix}_{args.param}_{t:g}.csv"
        write_profile(out / name, p, model.with_params(**{args.param: t}))
        rows.append({args.param: t, "file": name, "residual": p.meta.get("residual", 0.0),
                     "sigma_min": p.meta.get("sigma_min", float("nan"))})
    write_table(out / f"{args.prefix}_continuation.csv", rows)
    _print(f"{len(profiles)} profiles written to {out}")
    return EXIT_OK


def cmd_glue(args):
    from .construct import GluePlan, glue_multifront
    from .io import load_model, read_profile, write_profile
    from .solver import NewtonOptions

    loaded = [read_profile(p) for p in args.primaries]
    model = load_model(args.model) if args.model else loaded[0][1]
    if model is None:
        raise UsageError("glue needs --model unless the primaries carry a model sidecar")
    plan = GluePlan(model, [p for p, _ in loaded], args.n, args.offsets)
    u, err = glue_multifront(plan, NewtonOptions(max_iter=args.max_iter, abs_tol=args.tol))
    write_profile(args.out, u, model, {"err_norm": err})
    _plot_profile(args, args.out, u, f"{plan.M}-front, n={args.n}")
    _print(f"glued {plan.M} primaries at n={args.n}: err_norm {err:.6e}")
    return EXIT_OK


def cmd_extend(args):
    from .construct import extend_periodic_pulse
    from .io import write_profile
    from .solver import NewtonOptions

    primary, model = _load(args, "primary")
    u, err = extend_periodic_pulse(model, primary, args.n, NewtonOptions(max_iter=args.max_iter,
                                                                         abs_tol=args.tol))
    out = args.out or f"pulse_train_n{args.n}.csv"
    write_profile(out, u, model, {"err_norm": err})
    _plot_profile(args, out, u, f"pulse train, n={args.n}")
    _print(f"pulse train n={args.n}: err_norm {err:.6e}")
    return EXIT_OK


def cmd_spectrum(args):
    from .floquet import essential_boundary_bisect, essential_spectrum_grid
    from .io import load_model, read_profile, write_json, write_table

    state, side_model = read_profile(args.state)
    model = load_model(args.model) if args.model else side_model
    if model is None:
        raise UsageError("spectrum needs --model unless the state carries a model sidecar")
    right = read_profile(args.right_state)[0] if args.right_state else None
    if state.asymptotics is not None and not state.grid.periodic_kind:
        left, right_default = state.asymptotics
    else:
        left, right_default = state, state
    right = right if right is not None else right_default
    if args.kind == "ess":
        re0, re1, im0, im1, nx, ny = args.lambda_grid
        re = np.linspace(re0, re1, nx)
        im = np.linspace(im0, im1, ny)
        lams = (re[None, :] + 1j * im[:, None]).ravel()
        res = essential_spectrum_grid(model, (left, right), lams, (args.eta_minus, args.eta_plus),
                                      jobs=args.jobs)
        rows = [{"re": r["lambda"].real, "im": r["lambda"].imag, "in_spectrum": int(r["in_spectrum"]),
                 "l_minus": r["morse"][0], "l_plus": r["morse"][1],
                 "fredholm_index": "" if r["fredholm_index"] is None else r["fredholm_index"],
                 "unit_circle_distance": min(r["unit_circle_distance"])} for r in res]
        write_table(args.out, rows)
        if not args.no_plots:
            from .svg import Figure

            fig = Figure("essential spectrum", "Re", "Im")
            ins = [(r["re"], r["im"]) for r in rows if r["in_spectrum"]]
            if ins:
                fig.scatter(*zip(*ins), label="in spectrum")
            fig.save(Path(args.out).with_suffix(".svg"))
        _print(f"{sum(r['in_spectrum'] for r in rows)} of {len(rows)} points in the essential spectrum")
    else:
        edge = essential_boundary_bisect(model, left, args.inside, args.outside, args.tol,
                                         args.eta_minus)
        write_json(args.out, {"edge": edge, "inside": args.inside, "outside": args.outside})
        _print(f"essential spectrum edge at lambda = {edge:.12g}")
    return EXIT_OK


def cmd_evans(args):
    from .evans import Circle, LineEvans, PeriodicEvans, locate_roots, winding_count
    from .io import write_json
    from .model import WeightSpec

    prof, model = _load(args)
    if args.real_pair:
        from .applications import as_real_pair, gp_model

        if model.name != "gp_scalar":
            raise UsageError("--real-pair converts gp_scalar profiles only")
        p = model.params
        model = gp_model(p["mu"], p["omega"], model.potentials["V"], p["kappa"], real_pair=True)
        prof = as_real_pair(prof)
    disk = Circle(args.center, args.radius)
    report = {"center": args.center, "radius": args.radius, "model": model.to_dict()}
    if prof.grid.periodic_kind:
        ev = PeriodicEvans(model, prof, jobs=args.jobs)
        rows = []
        for j in range(args.gamma_grid):
            gamma = complex(np.exp(2j * math.pi * j / args.gamma_grid))
            rep = winding_count(lambda lams, g=gamma: ev(lams, g), disk)
            rows.append({"gamma": gamma, "winding": rep.winding, "contour": rep})
        report["gamma"] = rows
        counts = sorted({r["winding"] for r in rows})
        _print(f"winding over {args.gamma_grid} gamma values: {counts}")
    else:
        weight = WeightSpec(args.eta_minus, args.eta_plus) if (args.eta_minus or args.eta_plus) else None
        ev = LineEvans(model, prof, weight, jobs=args.jobs)
        rep = locate_roots(ev, disk) if args.locate else winding_count(ev, disk)
        report["contour"] = rep
        report["winding"] = rep.winding
        _print(f"winding {rep.winding}" + (f"; roots {[(complex(z), m) for z, m in rep.roots]}"
                                           if args.locate else ""))
    write_json(args.out, report)
    return EXIT_OK


def cmd_oracle(args):
    from .io import write_json, write_table
    from .oracle import direct_spectrum, inertia_details

    prof, model = _load(args)
    if args.kind == "eig":
        vals = direct_spectrum(model, prof, args.window)
        write_table(args.out, [{"re": float(z.real), "im": float(z.imag)} for z in vals])
        _print(f"{len(vals)} eigenvalues in the window")
    else:
        from .applications import gp_krein_report

        rep = gp_krein_report(model, prof)
        write_json(args.out, rep)
        _print(f"(n(L+), z(L+), n(L-), z(L-)) = {rep.counts}")
    return EXIT_OK


def cmd_app(args):
    from . import applications as app
    from .io import read_profile, write_json, write_table

    if args.app == "toy-slope":
        res = app.lambda0_slope_toy(args.V, args.eps, k=args.k, jobs=args.jobs)
        rows = []
        for s in res["sites"]:
            for e, lam in zip(s["eps"], s["lambda0"]):
                rows.append({"site": s["shift"], "eps": e, "lambda0": lam,
                             "predicted": s["predicted_slope"] * e})
        write_table(Path(args.out_dir) / "toy_slope.csv", rows)
        write_json(Path(args.out_dir) / "toy_slope.json", res)
        for s in res["sites"]:
            _print(f"site {s['shift']:.6f}: measured {s['measured_slope']:.6f}, "
                   f"predicted {s['predicted_slope']:.6f}, rel_error {s['rel_error']:.3%}")
    elif args.app == "toy-veff":
        tab = app.effective_potential_toy(args.V, app.sine_gordon_profile(40.0, 0.01, args.k),
                                          derivative=None)
        write_table(Path(args.out_dir) / "effective_potential.csv", tab.rows())
        write_json(Path(args.out_dir) / "effective_potential.json", tab)
        for z in tab.zeros:
            _print(f"zero at {z['shift']:.8f}, dV_eff {z['dV_eff']:.6f}")
    elif args.app == "gp-classify":
        prof, model = _load(args)
        rep = app.gp_krein_report(model, prof, M=args.M)
        write_json(Path(args.out_dir) / "krein_report.json", rep)
        write_table(Path(args.out_dir) / "profile_zeros.csv",
                    [{"x": float(x), "psi": float(v)} for x, v in zip(prof.x, prof.values[0])])
        _print(rep.verdict)
    elif args.app == "gp-pinning":
        res = app.pinning_integral_gp(args.V, args.omega)
        write_json(Path(args.out_dir) / "pinning_integral.json", res)
        _print(f"{res['value']:.14g}")
    elif args.app == "klausmeier-melnikov":
        model = app.klausmeier_model(0.0)
        pulse = app.klausmeier_pulse(model)
        res = app.melnikov_klausmeier(model.potentials["f"], model.potentials["g"], pulse, model)
        write_json(Path(args.out_dir) / "melnikov.json", res)
        _print(f"M = {res['M']:.10g}; predicted slope {res['predicted_slope']:.10g}")
    return EXIT_OK


def cmd_reproduce(args):
    from .recipes import RECIPES, run_recipe

    if args.name == "list" or args.name not in RECIPES:
        if args.name != "list":
            raise UsageError(f"unknown recipe {args.name!r}; known: {', '.join(RECIPES)}")
        for k, (_, d) in RECIPES.items():
            _print(f"{k:22s} {d}")
        return EXIT_OK
    out = args.out_dir or f"perwave-{args.name}"
    manifest = run_recipe(args.name, out, plots=not args.no_plots, jobs=args.jobs, quick=args.quick)
    _print(f"{len(manifest['files'])} files written to {out}; manifest {Path(out) / 'manifest.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=default_jobs(),
                        help="threads for lambda and gamma sweeps (default: $PERWAVE_JOBS or 1)")
    common.add_argument("--no-plots", action="store_true", help="skip SVG output")
    newton = argparse.ArgumentParser(add_help=False)
    newton.add_argument("--tol", type=float, default=1e-10, help="Newton residual tolerance (discrete L2)")
    newton.add_argument("--max-iter", type=int, default=50, help="maximum Newton steps")
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", help="model config JSON (overrides the profile sidecar)")

    p = argparse.ArgumentParser(prog="perwave", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("list-models", help="list built-in models", parents=[common])
    s.add_argument("-v", "--verbose", action="store_true", help="also list potential presets")
    s.set_defaults(func=cmd_list_models)

    s = sub.add_parser("solve", help="Newton solve from a guess profile", parents=[common, newton, model])
    s.add_argument("--guess", required=True, help="guess profile CSV")
    s.add_argument("--bc", choices=["dirichlet", "dirichlet_to_states", "projection", "periodic"],
                   default=None, help="boundary treatment (default: periodic for cells, dirichlet for lines)")
    s.add_argument("--state-nodes", type=int, default=64,
                   help="nodes per period for end states seeded from the guess ends")
    s.add_argument("--out", required=True, help="output profile CSV")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("continue", help="natural parameter continuation", parents=[common, newton, model])
    s.add_argument("--start", required=True, help="converged start profile CSV")
    s.add_argument("--param", required=True, help="parameter name, e.g. eps")
    s.add_argument("--targets", required=True, type=_float_list, help="comma-separated target values")
    s.add_argument("--min-step", type=float, default=1e-4, help="smallest continuation step")
    s.add_argument("--out-dir", default=".", help="directory for the output profiles")
    s.add_argument("--prefix", default="cont", help="file name prefix")
    s.set_defaults(func=cmd_continue)

    s = sub.add_parser("glue", help="glue primary fronts into a multifront", parents=[common, newton, model])
    s.add_argument("--primaries", nargs="+", required=True, help="primary profile CSVs in order")
    s.add_argument("--n", type=int, required=True, help="spacing in periods")
    s.add_argument("--offsets", type=lambda t: [int(v) for v in _floats(t)], default=None,
                   help="per-interface integer offsets in periods")
    s.add_argument("--out", required=True, help="output profile CSV")
    s.set_defaults(func=cmd_glue)

    s = sub.add_parser("extend", help="periodic pulse train from a primary pulse",
                       parents=[common, newton, model])
    s.add_argument("--primary", required=True, help="primary pulse CSV")
    s.add_argument("--n", type=int, required=True, help="train period in model periods (>= 3)")
    s.add_argument("--out", help="output profile CSV (default pulse_train_n<N>.csv)")
    s.set_defaults(func=cmd_extend)

    s = sub.add_parser("spectrum", help="essential spectrum of periodic end states", parents=[common, model])
    s.add_argument("kind", choices=["ess", "edge"], help="ess: membership grid; edge: real-axis bisection")
    s.add_argument("--state", required=True, help="periodic state CSV, or a front whose end states are used")
    s.add_argument("--right-state", help="right end state CSV when different from --state")
    s.add_argument("--lambda-grid", type=_lambda_grid, default=[-3.0, 1.0, -0.5, 0.5, 41, 11],
                   help="re0,re1,im0,im1,nx,ny")
    s.add_argument("--eta-minus", type=float, default=0.0, help="left exponential weight")
    s.add_argument("--eta-plus", type=float, default=0.0, help="right exponential weight")
    s.add_argument("--inside", type=float, default=-2.0, help="edge: real lambda inside the spectrum")
    s.add_argument("--outside", type=float, default=0.0, help="edge: real lambda outside the spectrum")
    s.add_argument("--tol", type=float, default=1e-9, help="edge: bisection tolerance")
    s.add_argument("--out", required=True, help="output CSV (ess) or JSON (edge)")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("evans", help="Evans winding counts and roots", parents=[common, model])
    s.add_argument("kind", choices=["count"], help="count: winding over a disk")
    s.add_argument("--profile", required=True, help="front, pulse or periodic profile CSV")
    s.add_argument("--center", type=_complex, default=0j, help="disk centre (complex, e.g. 0.1+0.2j)")
    s.add_argument("--radius", type=float, default=0.5, help="disk radius")
    s.add_argument("--gamma-grid", type=int, default=16, help="roots of unity for periodic profiles")
    s.add_argument("--eta-minus", type=float, default=0.0, help="left exponential weight")
    s.add_argument("--eta-plus", type=float, default=0.0, help="right exponential weight")
    s.add_argument("--locate", action="store_true", help="also localize roots (line profiles)")
    s.add_argument("--real-pair", action="store_true",
                   help="treat a gp_scalar profile as the two-component GP system")
    s.add_argument("--out", required=True, help="output report JSON")
    s.set_defaults(func=cmd_evans)

    s = sub.add_parser("oracle", help="dense eigenvalues or GP inertia counts", parents=[common, model])
    s.add_argument("kind", choices=["eig", "inertia"], help="eig: dense spectrum; inertia: GP Krein counts")
    s.add_argument("--profile", required=True, help="profile CSV")
    s.add_argument("--window", type=_window, default=[-1.0, 1.0, -1.0, 1.0], help="re0,re1,im0,im1")
    s.add_argument("--out", required=True, help="output CSV (eig) or JSON (inertia)")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("app", help="application experiments", parents=[common, model])
    s.add_argument("app", choices=["toy-slope", "toy-veff", "gp-classify", "gp-pinning",
                                   "klausmeier-melnikov"], help="experiment")
    s.add_argument("--V", default="cos_pi", help="potential preset for toy and GP experiments")
    s.add_argument("--eps", type=_float_list, default=[0.02, 0.05, 0.1], help="toy-slope eps values")
    s.add_argument("--k", type=int, default=0, help="toy front level")
    s.add_argument("--profile", help="gp-classify: profile CSV")
    s.add_argument("--M", type=int, default=2, help="gp-classify: number of pulses")
    s.add_argument("--omega", type=float, default=-1.0, help="gp-pinning: frequency (< 0)")
    s.add_argument("--out-dir", default=".", help="output directory")
    s.set_defaults(func=cmd_app)

    s = sub.add_parser("reproduce", help="run a named recipe", parents=[common])
    s.add_argument("name", help="recipe name, or 'list'")
    s.add_argument("--out-dir", help="output directory (default perwave-<name>)")
    s.add_argument("--quick", action="store_true", help="smaller grids and sweeps")
    s.set_defaults(func=cmd_reproduce)
    return p


_NEGATIVE_LIST = re.compile(r"^-\d|^-\.\d|^-inf|^-\d*\.?\d*e")
_VALUE_OPTIONS = {"--window", "--lambda-grid", "--targets", "--eps", "--center", "--offsets",
                  "--inside", "--outside", "--eta-minus", "--eta-plus", "--omega"}


def _join_negative_values(argv: list[str]) -> list[str]:
    """``--window -1,1,-1,1`` becomes ``--window=-1,1,-1,1`` so argparse does not read an option."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_OPTIONS and i + 1 < len(argv) and _NEGATIVE_LIST.match(argv[i + 1]):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def execute(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command == "app" and args.app == "gp-classify" and not args.profile:
        return _fail(parser, "gp-classify needs --profile")
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(parser, str(exc))
    except PerwaveError as exc:
        sys.stderr.write(f"perwave: error: {type(exc).__name__}: {exc}\n")
        return EXIT_DOMAIN
    except (OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"perwave: error: {type(exc).__name__}: {exc}\n")
        return EXIT_DOMAIN


def _fail(parser, message: str) -> int:
    parser.print_usage(sys.stderr)
    sys.stderr.write(f"perwave: error: {message}\n")
    return EXIT_USAGE


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()

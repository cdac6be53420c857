"""Named end-to-end experiments that write profiles, spectra and a manifest."""

from __future__ import annotations

import datetime as _dt
import hashlib
import math
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .applications import (as_real_pair, gp_krein_report, gp_model, gp_pulse_primary,
                           gp_pulse_train, klausmeier_model, klausmeier_multipulse,
                           klausmeier_pulse, klausmeier_slope, melnikov_klausmeier,
                           sparse_eigenvalues, toy_multifront_plan)
from .construct import decay_study, glue_multifront
from .evans import Circle, LineEvans, PeriodicEvans, locate_roots, winding_count
from .floquet import essential_spectrum_grid, slowest_decay_rate
from .io import write_json, write_profile, write_table
from .oracle import direct_spectrum
from .svg import Figure


class RecipeContext:
    """Output directory, file bookkeeping and plotting switch for one run."""

    def __init__(self, out_dir, plots: bool = True, jobs: int = 1):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.plots = plots
        self.jobs = jobs
        self.files: list[dict] = []

    def _record(self, paths, kind: str, description: str):
        for p in paths:
            p = Path(p)
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            self.files.append({"path": p.name, "kind": kind, "description": description,
                               "sha256": digest})

    def profile(self, name: str, profile, model, description: str, extra=None):
        paths = write_profile(self.out_dir / name, profile, model, extra)
        self._record(paths[:1], "profile_csv", description)
        self._record(paths[1:], "profile_sidecar", description)
        if self.plots:
            fig = Figure(description, "x", "u")
            for i, comp in enumerate(profile.values):
                fig.line(profile.x, comp, f"u{i + 1}")
            self.svg(Path(name).stem + ".svg", fig, description)

    def table(self, name: str, records, description: str):
        self._record([write_table(self.out_dir / name, records)], "csv", description)

    def json(self, name: str, data, description: str):
        self._record([write_json(self.out_dir / name, data)], "json", description)

    def svg(self, name: str, fig: Figure, description: str):
        if self.plots:
            self._record([fig.save(self.out_dir / name)], "svg", description)


def _complex_rows(values, **extra) -> list[dict]:
    rows = []
    for z in values:
        row = {"re": float(np.real(z)), "im": float(np.imag(z))}
        row.update(extra)
        rows.append(row)
    return rows


def toy_two_front_spectrum(ctx: RecipeContext, quick: bool = False) -> dict:
    """Glued toy 2-front between levels -1 and 1, its essential spectrum and near-zero eigenvalues."""
    eps, n = 0.1, (6 if quick else 8)
    npp = 50 if quick else 100
    plan = toy_multifront_plan(eps, n, nodes_per_period=npp)
    u, err = glue_multifront(plan)
    ctx.profile("two_front.csv", u, plan.model, "toy 2-front",
                {"err_norm": err, "eps": eps, "n": n})
    nx, ny = (21, 5) if quick else (41, 11)
    re = np.linspace(-3.0, 1.0, nx)
    im = np.linspace(-0.5, 0.5, ny)
    lams = (re[None, :] + 1j * im[:, None]).ravel()
    ess = essential_spectrum_grid(plan.model, u.asymptotics, lams, jobs=ctx.jobs)
    ctx.table("essential_spectrum.csv",
              [{"re": r["lambda"].real, "im": r["lambda"].imag, "in_spectrum": int(r["in_spectrum"]),
                "l_minus": r["morse"][0], "l_plus": r["morse"][1]} for r in ess],
              "essential spectrum membership of the end states")
    window = (-1.5, 0.5, -0.5, 0.5)
    oracle = direct_spectrum(plan.model, u, window)
    ctx.table("oracle_eigenvalues.csv", _complex_rows(oracle), "dense eigenvalues in the window")
    primaries = []
    for j, p in enumerate(plan.primaries):
        lam = locate_roots(LineEvans(plan.model, p, jobs=ctx.jobs), Circle(0.0, 0.3), expected=1)
        primaries.append({"front": j + 1, "roots": lam.roots})
    rep = locate_roots(LineEvans(plan.model, u, jobs=ctx.jobs), Circle(0.0, 0.3))
    ctx.json("evans_roots.json", {"two_front": rep, "primaries": primaries,
                                  "disk": {"center": 0.0, "radius": 0.3}},
             "Evans winding and localized roots near 0")
    if ctx.plots:
        fig = Figure("spectrum of the toy 2-front", "Re", "Im")
        ins = [r["lambda"] for r in ess if r["in_spectrum"]]
        if ins:
            fig.scatter(np.real(ins), np.imag(ins), "essential", "#bbbbbb")
        fig.scatter(oracle.real, oracle.imag, "oracle")
        ctx.svg("spectrum.svg", fig, "essential spectrum and eigenvalues")
    return {"eps": eps, "n": n, "nodes_per_period": npp, "err_norm": err,
            "winding": rep.winding, "oracle_in_disk": int(np.sum(np.abs(oracle) < 0.3))}


def gp_pulse_train_krein(ctx: RecipeContext, quick: bool = False) -> dict:
    """Periodic GP pulse trains: Krein counts, decay of the correction, periodic Evans over gamma."""
    mu, omega = 0.5, 1.0
    model = gp_model(mu, omega)
    pair = gp_model(mu, omega, real_pair=True)
    primary = gp_pulse_primary(model)
    ctx.profile("gp_primary.csv", primary, model, "GP primary pulse")
    n_list = [4, 6, 8]
    study = decay_study(lambda n: gp_pulse_train(model, primary, n), n_list, model.period,
                        distance_fraction=0.25)
    rows = []
    for n, train, row in zip(n_list, study["profiles"], study["rows"]):
        rep = gp_krein_report(model, train, "periodic")
        ctx.profile(f"gp_train_n{n}.csv", train, model, f"GP pulse train, n={n}",
                    {"err_norm": row["err_norm"]})
        rows.append({"n": n, "err_norm": row["err_norm"], "n_plus": rep.n_plus, "z_plus": rep.z_plus,
                     "n_minus": rep.n_minus, "z_minus": rep.z_minus, "slope": rep.slope,
                     "zeros": rep.zeros, "verdict": rep.verdict})
    ctx.table("krein_counts.csv", rows, "inertia counts and slope per train")
    rate = slowest_decay_rate(model, primary.asymptotics[0])
    ctx.json("decay.json", {"rows": study["rows"], "rate_per_length": study["rate_per_length"],
                            "floquet_rate": rate, "monotone": study["monotone"]},
             "decay of the correction against the Floquet rate")
    gammas = 4 if quick else 16
    train = study["profiles"][0]
    ev = PeriodicEvans(pair, as_real_pair(train), jobs=ctx.jobs)
    disk = Circle(0.0, 0.2)
    grows = []
    for j in range(gammas):
        gamma = complex(np.exp(2j * math.pi * j / gammas))
        w = winding_count(lambda lams, g=gamma: ev(lams, g), disk).winding
        grows.append({"j": j, "gamma_re": gamma.real, "gamma_im": gamma.imag, "winding": w})
    ctx.table("gamma_windings.csv", grows, "periodic Evans winding in |lambda|<0.2 per gamma")
    if ctx.plots and study["fitted_rate"] is not None:
        fig = Figure("correction norm against spacing", "n", "log err")
        fig.line(n_list, np.log([r["err_norm"] for r in study["rows"]]), "log err_norm")
        ctx.svg("decay.svg", fig, "decay plot")
    return {"mu": mu, "omega": omega, "n_list": n_list, "gammas": gammas,
            "counts": [(r["n_plus"], r["z_plus"], r["n_minus"], r["z_minus"]) for r in rows],
            "windings": sorted({g["winding"] for g in grows})}


def klausmeier_two_pulse(ctx: RecipeContext, quick: bool = False) -> dict:
    """Klausmeier pulse, its Melnikov slope prediction, and a glued 2-pulse at small eps."""
    npp = 320 if quick else 640
    base = klausmeier_model(0.0)
    pulse = klausmeier_pulse(base, nodes_per_period=npp)
    ctx.profile("klausmeier_pulse.csv", pulse, base, "Klausmeier pulse at eps=0")
    mel = melnikov_klausmeier(base.potentials["f"], base.potentials["g"], pulse, base)
    eps_list = [0.005, 0.01] if quick else [0.005, 0.01, 0.02]
    eps2 = 0.01
    slope = klausmeier_slope(klausmeier_model(eps2), pulse, eps_list)
    ctx.table("eigenvalue_slope.csv",
              [{"eps": e, "lambda0": l, "predicted": -mel["M"] * e}
               for e, l in zip(slope["eps"], slope["lambda0"])],
              "critical eigenvalue of the pinned pulse against eps")
    pinned = slope["profiles"][slope["eps"].index(eps2)]
    n = 8
    model = klausmeier_model(eps2)
    u, err = klausmeier_multipulse(model, pinned, 2, n)
    ctx.profile("klausmeier_two_pulse.csv", u, model, f"Klausmeier 2-pulse, eps={eps2}, n={n}",
                {"err_norm": err})
    vals = sparse_eigenvalues(model, u, 0.0, 6)
    ctx.table("two_pulse_eigenvalues.csv", _complex_rows(vals), "eigenvalues nearest 0")
    summary = {"M": mel["M"], "predicted_slope": mel["predicted_slope"],
               "measured_slope": slope["measured_slope"], "baseline": slope["baseline"],
               "eps_list": eps_list, "two_pulse_eps": eps2, "n": n, "err_norm": err}
    ctx.json("melnikov.json", {**mel, **summary}, "Melnikov integral and slope comparison")
    return summary


RECIPES: dict[str, tuple[Callable, str]] = {
    "toy-2front-spectrum": (toy_two_front_spectrum,
                            "toy 2-front at eps=0.1: profile, essential spectrum, eigenvalues"),
    "gp-pulse-train-krein": (gp_pulse_train_krein,
                             "GP pulse trains: Krein counts, decay, periodic Evans over gamma"),
    "klausmeier-2pulse": (klausmeier_two_pulse,
                          "Klausmeier pulse: Melnikov slope and glued 2-pulse"),
}


def run_recipe(name: str, out_dir, plots: bool = True, jobs: int = 1, quick: bool = False) -> dict:
    """Run a recipe and write ``manifest.json``; returns the manifest."""
    if name not in RECIPES:
        raise KeyError(name)
    fn, description = RECIPES[name]
    ctx = RecipeContext(out_dir, plots, jobs)
    summary = fn(ctx, quick)
    manifest = {"recipe": name, "description": description, "version": __version__,
                "parameters": {"quick": quick, "plots": plots, "jobs": jobs},
                "summary": summary, "files": ctx.files,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    write_json(ctx.out_dir / "manifest.json", manifest)
    return manifest

"""Command-line front end: scenario presets and config-file runs.

    tcljump --scenario fig3_detuned --out results/
    tcljump --config run.json --trajectories 20000 --out results/
    tcljump --list

Each run writes CSV files (rates, deterministic populations, ensemble
estimates) and a ``manifest.json`` with every parameter needed to repeat it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, ensemble, hilbert, mastereq, models, oracle, rates
from .errors import (
    ModelError,
    PropagationError,
    QuadratureError,
    RateDivergenceError,
    TrajectoryAbort,
)
from .models import BandGap, DetunedJC, ModelSpec, ResonantJC
from .unravel import TrajectoryConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COMPUTE = 3
EXIT_IO = 4
EXIT_ABORT = 5

DEFAULT_SEED = 20010101


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs.

    ``initial`` lists ``(rho11, rho10)`` pairs; ``dt`` is the trajectory step,
    ``det_dt`` the step of deterministic propagation and ``out_dt`` the
    spacing of all emitted series.
    """

    name: str
    model: ModelSpec
    rate_methods: tuple = ()
    population_methods: tuple = ()
    ensemble_methods: tuple = ()
    unraveling: str = "doubled"
    initial: tuple = ((1.0, 0.0),)
    t_end: float = 10.0
    dt: float = 5e-3
    det_dt: float = 1e-3
    out_dt: float = 0.05
    n_traj: int = 100_000
    seed: int = DEFAULT_SEED
    workers: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = models.to_dict(self.model)
        d["initial"] = [{"rho11": p, "rho10": [complex(c).real, complex(c).imag]}
                        for p, c in self.initial]
        for key in ("rate_methods", "population_methods", "ensemble_methods"):
            d[key] = [rates.RateMethod(x).value for x in getattr(self, key)]
        return d


ALL = ("exact", "tcl2", "tcl4", "gme", "markov")

PRESETS = {
    "fig1_rates": Scenario(
        "fig1_rates", ResonantJC(1.0, 5.0), rate_methods=ALL,
    ),
    "fig1_population": Scenario(
        "fig1_population", ResonantJC(1.0, 5.0), rate_methods=ALL,
        population_methods=ALL, ensemble_methods=("tcl2", "tcl4"), unraveling="lindblad",
    ),
    "fig1_strong": Scenario(
        "fig1_strong", ResonantJC(1.0, 0.2), rate_methods=ALL,
        population_methods=ALL, ensemble_methods=("tcl4",), unraveling="lindblad",
    ),
    "fig2_initials": Scenario(
        "fig2_initials", ResonantJC(1.0, 0.2), population_methods=("exact",),
        initial=((1.0, 0.0), (0.5, 0.0), (0.0, 0.0)),
    ),
    "fig3_detuned": Scenario(
        "fig3_detuned", DetunedJC(1.0, 0.3, 2.4), rate_methods=("exact", "tcl4", "markov"),
        population_methods=("exact", "tcl4", "markov"), ensemble_methods=("tcl4",),
    ),
    "fig4_gap": Scenario(
        "fig4_gap", BandGap(), rate_methods=("exact", "tcl4"),
        population_methods=("exact", "tcl4"), ensemble_methods=("tcl4",),
    ),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def scenario_from_dict(d: dict, base: Scenario | None = None) -> Scenario:
    """Build a scenario from a JSON-style dict, on top of ``base`` if given."""
    d = dict(d)
    kwargs = {}
    if "model" in d:
        kwargs["model"] = models.from_dict(d.pop("model"))
    if "initial" in d:
        init = []
        for item in d.pop("initial"):
            if isinstance(item, dict):
                re_im = item.get("rho10", [0.0, 0.0])
                c = complex(re_im[0], re_im[1]) if isinstance(re_im, list) else complex(re_im)
                init.append((float(item["rho11"]), c))
            else:
                init.append((float(item), 0.0))
        kwargs["initial"] = tuple(init)
    for key in ("rate_methods", "population_methods", "ensemble_methods"):
        if key in d:
            kwargs[key] = tuple(rates.RateMethod(x).value for x in d.pop(key))
    known = {f for f in Scenario.__dataclass_fields__}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    kwargs.update(d)
    if base is None:
        if "model" not in kwargs:
            raise ValueError("a config without a preset must give a model")
        kwargs.setdefault("name", "custom")
        return Scenario(**kwargs)
    return replace(base, **kwargs)


# -------------------------------------------------------------------- run


def _grid(t_end: float, step: float) -> np.ndarray:
    n = int(round(t_end / step))
    if abs(n * step - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end = {t_end:g} is not a multiple of the step {step:g}")
    return step * np.arange(n + 1)


def _subsample(series: mastereq.DensitySeries, times):
    idx = np.rint(times / (series.grid[1] - series.grid[0])).astype(int)
    idx = idx[idx < series.grid.size]
    return mastereq.DensitySeries(series.grid[idx], series.rho[idx], series.truncated,
                                  series.stop_time)


def _write_table(path, header, cols, unit, notes=()):
    with open(path, "w") as fh:
        fh.write(f"# time unit: {unit}\n")
        for note in notes:
            fh.write(f"# {note}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


@dataclass
class RunLog:
    files: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def _rho0(p: float, c: complex) -> np.ndarray:
    return hilbert.check_density_matrix(hilbert.two_level_density(p, c))


def _deterministic(sc: Scenario, method: str, p: float, c: complex, out_t, horizon):
    """Population/coherence series for one method and initial state."""
    m = sc.model
    if method == "exact":
        fine = _grid(sc.t_end, sc.det_dt)
        rho = oracle.exact_density(m, p, c, fine)
        return _subsample(mastereq.DensitySeries(fine, rho), out_t)
    if method == "gme":
        pop = oracle.population(m, "gme", p, out_t)
        rho = np.zeros((out_t.size, 2, 2), dtype=np.complex128)
        rho[:, 1, 1] = pop
        rho[:, 0, 0] = 1 - pop
        return mastereq.DensitySeries(out_t, rho)
    g = mastereq.tcl_generator(m, method, horizon)
    series = mastereq.propagate(g, _rho0(p, c), _grid(sc.t_end, sc.det_dt))
    return _subsample(series, out_t)


def run(sc: Scenario, out_dir) -> tuple[int, RunLog]:
    """Execute a scenario and write its files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog()
    unit = sc.model.time_unit
    out_t = _grid(sc.t_end, sc.out_dt)
    horizon = max(sc.t_end, 1.0)
    status = EXIT_OK

    def fail(what, exc, code=EXIT_COMPUTE):
        nonlocal status
        log.errors.append({"output": what, "category": type(exc).__name__, "message": str(exc)})
        status = max(status, code)

    for method in sc.rate_methods:
        name = f"rates_{method}.csv"
        try:
            table = rates.rate_table(sc.model, method, out_t)
            table.to_csv(out / name, unit)
            log.files.append(name)
            if table.truncated_at is not None:
                log.notes.append(f"{method} rate diverges at t = {table.truncated_at!r}; "
                                 "table stops before it")
        except (ModelError, QuadratureError, ValueError) as exc:
            fail(name, exc)

    multi = len(sc.initial) > 1
    for k, (p, c) in enumerate(sc.initial):
        tag = f"_init{k}" if multi else ""
        exact = None
        det = {}
        for method in sc.population_methods:
            name = f"population_{method}{tag}.csv"
            try:
                series = _deterministic(sc, method, p, c, out_t, horizon)
            except (ModelError, RateDivergenceError, PropagationError, QuadratureError,
                    ValueError) as exc:
                fail(name, exc)
                continue
            series.to_csv(out / name, unit)
            log.files.append(name)
            if series.truncated:
                log.notes.append(f"{method} propagation stopped at t = {series.grid[-1]!r} "
                                 f"before the generator ceases to exist at {series.stop_time!r}")
            det[method] = series
            if method == "exact":
                exact = series
        if exact is not None:
            for method, series in det.items():
                if method == "exact":
                    continue
                n = min(series.grid.size, exact.grid.size)
                name = f"deviation_{method}{tag}.csv"
                dev = series.population()[:n] - exact.population()[:n]
                _write_table(out / name, ["t", "rho11_minus_exact"], [series.grid[:n], dev], unit)
                log.files.append(name)

        if sc.n_traj == 0:
            continue
        for method in sc.ensemble_methods:
            name = f"ensemble_{method}{tag}.csv"
            try:
                g = mastereq.tcl_generator(sc.model, method, horizon)
                cfg = TrajectoryConfig(dt=sc.dt, t_end=sc.t_end, seed=sc.seed)
                est = ensemble.run_ensemble(g, _rho0(p, c), sc.n_traj, cfg, output_times=out_t,
                                            mode=sc.unraveling, workers=sc.workers)
            except TrajectoryAbort as exc:
                fail(name, exc, EXIT_ABORT)
                continue
            except (ModelError, RateDivergenceError, PropagationError, QuadratureError,
                    ValueError) as exc:
                fail(name, exc)
                continue
            est.to_csv(out / name, unit)
            log.files.append(name)

    manifest = {
        "package_version": __version__,
        "scenario": sc.to_dict(),
        "files": log.files,
        "notes": log.notes,
        "errors": log.errors,
        "exit_code": status,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return status, log


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tcljump",
        description="TCL master equations, exact reference solutions and jump unravelings.",
    )
    ap.add_argument("--scenario", help="preset name (see --list)")
    ap.add_argument("--config", help="JSON file with scenario fields; applied on top of --scenario")
    ap.add_argument("--trajectories", type=int, help="ensemble size (0: deterministic only)")
    ap.add_argument("--dt", type=float, help="trajectory time step")
    ap.add_argument("--seed", type=int, help="64-bit seed of the trajectory streams")
    ap.add_argument("--t-end", type=float, help="final time")
    ap.add_argument("--workers", type=int, help="worker processes for ensembles")
    ap.add_argument("--out", default="tcljump_out", help="output directory")
    ap.add_argument("--list", action="store_true", help="list presets and exit")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list:
        for name, sc in PRESETS.items():
            print(f"{name:16s} {models.model_id(sc.model)}")
        return EXIT_OK
    if not args.scenario and not args.config:
        ap.print_usage(sys.stderr)
        print("tcljump: error [usage]: give --scenario or --config", file=sys.stderr)
        return EXIT_USAGE
    try:
        sc = preset(args.scenario) if args.scenario else None
        if args.config:
            with open(args.config) as fh:
                sc = scenario_from_dict(json.load(fh), sc)
        overrides = {"n_traj": args.trajectories, "dt": args.dt, "seed": args.seed,
                     "t_end": args.t_end, "workers": args.workers}
        sc = replace(sc, **{k: v for k, v in overrides.items() if v is not None})
        if sc.n_traj < 0 or sc.n_traj == 1:
            raise ValueError("--trajectories must be 0 or at least 2")
    except OSError as exc:
        print(f"tcljump: error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, ModelError, json.JSONDecodeError) as exc:
        print(f"tcljump: error [config]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        status, log = run(sc, args.out)
    except OSError as exc:
        print(f"tcljump: error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    for note in log.notes:
        print(f"tcljump: note: {note}", file=sys.stderr)
    for err in log.errors:
        print(f"tcljump: error [{err['category']}] {err['output']}: {err['message']}",
              file=sys.stderr)
    print(f"wrote {len(log.files)} files to {args.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())

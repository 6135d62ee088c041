"""Command-line driver for the experiment grids and theory checks.

Subcommands: figure3 | biasvar | ipwdr | table2 | noise-robustness | checks |
export-world.  Every run is deterministic given --seed (or the PPGEN_SEED
environment variable) and emits CSV and/or JSON into --out.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .checks import run_checks
from .dgp import World, draw_trial, generate_os, os_arm_arrays, sample_gp, world_lattice_table
from .domain import CompositeSample, derive_seed
from .grid import (
    ALL_ESTIMATORS,
    DEFAULT_DEGREES,
    FOM0_KERNEL,
    GP_ESTIMATORS,
    PS_KERNEL,
    GridResult,
    benchmark_grid,
    combo_id,
    fom1_kernel,
    pa_kernel,
    run_scenario_grid,
    run_table2,
)
from .regression import flexible_fit, ridge_cv

DEFAULT_SEED = 1729


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override it")
    parser.add_argument("--scale", type=float, default=None, help="count multiplier in (0, 1]")
    parser.add_argument("--seed", type=int, default=None, help="master seed (env PPGEN_SEED fallback)")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--format", choices=("csv", "json", "both"), default=None, help="output format")
    parser.add_argument("--workers", type=int, default=None, help="process pool size")
    parser.add_argument(
        "--combo",
        action="append",
        default=None,
        metavar="n1=200,lx=0.2,conf=none",
        help="restrict to matching grid combos (repeatable)",
    )
    parser.add_argument("--estimators", default=None, help="comma-separated estimator names")
    parser.add_argument("--degrees", default=None, help="comma-separated polynomial degrees")
    parser.add_argument("--check", action="append", default=None, help="check name (repeatable)")
    parser.add_argument("--max-failures", type=int, default=None, help="failed replications tolerated")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("figure3", "RMSE of OM / OS-OM / ABC / AOM over the 12-combo grid"),
        ("biasvar", "squared bias and variance over the 12-combo grid"),
        ("ipwdr", "the grid with IPW and doubly-robust estimators included"),
        ("table2", "the linear-model benchmark rows"),
        ("noise-robustness", "the grid with the i.i.d.-noise predictor"),
        ("checks", "run the theory checks and report PASS/FAIL"),
        ("export-world", "write one world's lattice and fitted curves as CSV"),
    ]:
        _add_common(sub.add_parser(name, help=help_text))
    return parser


class RunConfig:
    """Merged view of defaults, the config file and explicit flags."""

    def __init__(self, args: argparse.Namespace):
        file_cfg = {}
        if args.config:
            file_cfg = json.loads(Path(args.config).read_text())

        def pick(name, default):
            flag = getattr(args, name.replace("-", "_"), None)
            if flag is not None:
                return flag
            return file_cfg.get(name, default)

        self.command = args.command
        self.scale = float(pick("scale", 1.0))
        if not 0.0 < self.scale <= 1.0:
            raise SystemExit("--scale must lie in (0, 1]")
        env_seed = os.environ.get("PPGEN_SEED")
        self.seed = int(pick("seed", env_seed if env_seed is not None else DEFAULT_SEED))
        self.out = Path(pick("out", "ppgen-out"))
        self.format = pick("format", "both")
        self.workers = int(pick("workers", os.cpu_count() or 1))
        self.combos = pick("combo", None)
        est = pick("estimators", None)
        self.estimators = tuple(est.split(",")) if isinstance(est, str) else est
        deg = pick("degrees", None)
        if isinstance(deg, str):
            deg = [int(d) for d in deg.split(",")]
        self.degrees = tuple(deg) if deg else DEFAULT_DEGREES
        self.checks = pick("check", None)
        self.max_failures = int(pick("max-failures", 0))

    def scaled(self, n: int) -> int:
        return max(1, math.ceil(n * self.scale))


def _parse_combo_filter(text: str) -> dict:
    out = {}
    for part in text.replace(";", ",").split(","):
        key, value = part.split("=")
        out[key.strip()] = value.strip()
    return out


def _filter_grid(grid, combo_filters):
    if not combo_filters:
        return grid
    keep = []
    for spec in grid:
        cid = combo_id(spec)
        fields = _parse_combo_filter(cid)
        for flt in combo_filters:
            wanted = _parse_combo_filter(flt)
            if all(fields.get(k) == v for k, v in wanted.items()):
                keep.append(spec)
                break
    if not keep:
        raise SystemExit(f"no combos match {combo_filters}")
    return keep


def _write_outputs(cfg: RunConfig, stem: str, csv_text: str, payload: dict) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.format in ("csv", "both"):
        (cfg.out / f"{stem}.csv").write_text(csv_text)
    if cfg.format in ("json", "both"):
        (cfg.out / f"{stem}.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _grid_command(cfg: RunConfig, stem: str, estimators, predictor_kind: str = "learned") -> int:
    started = time.time()
    n_scenarios = cfg.scaled(100)
    n_runs = cfg.scaled(100)
    grid = _filter_grid(benchmark_grid(cfg.seed, predictor_kind=predictor_kind), cfg.combos)
    estimators = cfg.estimators or estimators
    print(
        f"{stem}: {len(grid)} combos x {n_scenarios} scenarios x {n_runs} runs, "
        f"estimators {','.join(estimators)}, workers {cfg.workers}",
        flush=True,
    )
    result = run_scenario_grid(
        grid,
        estimators=estimators,
        degrees=cfg.degrees,
        n_scenarios=n_scenarios,
        n_runs=n_runs,
        workers=cfg.workers,
    )
    payload = {
        "command": stem,
        "master_seed": cfg.seed,
        "scale": cfg.scale,
        "n_scenarios": n_scenarios,
        "n_runs": n_runs,
        "runtime_seconds": round(time.time() - started, 3),
        "rows": result.combo_rows,
    }
    if predictor_kind == "iid_noise":
        payload["robustness_report"] = _noise_robustness_report(result, cfg.degrees)
        for line in payload["robustness_report"]["lines"]:
            print(line)
    _write_outputs(cfg, stem, result.combo_csv_text(), payload)
    failures = sum(r["n_failures"] for r in result.combo_rows)
    print(f"{stem}: wrote {cfg.out}/{stem}.* ({failures} failed replications)")
    return 0 if failures <= cfg.max_failures else 1


def _noise_robustness_report(result: GridResult, degrees) -> dict:
    """Per-combo paired AOM-vs-OM gap in units of its Monte Carlo SE."""
    combos = sorted({r["combo_id"] for r in result.combo_rows})
    lines, entries = [], []
    for cid in combos:
        try:
            gap, se = result.rmse_gap(cid, "aom", "om", degrees)
        except ValueError:
            continue
        within = abs(gap) <= 2 * se
        entries.append({"combo_id": cid, "gap": gap, "se": se, "within_2se": within})
        lines.append(
            f"  {cid}: AOM-OM gap {gap:+.4f} ({'<=' if within else '>'} 2*SE {2 * se:.4f})"
        )
    return {"lines": lines, "entries": entries}


def cmd_figure3(cfg: RunConfig) -> int:
    return _grid_command(cfg, "figure3", GP_ESTIMATORS)


def cmd_biasvar(cfg: RunConfig) -> int:
    return _grid_command(cfg, "biasvar", GP_ESTIMATORS)


def cmd_ipwdr(cfg: RunConfig) -> int:
    return _grid_command(cfg, "ipwdr", ALL_ESTIMATORS)


def cmd_noise_robustness(cfg: RunConfig) -> int:
    return _grid_command(cfg, "noise_robustness", GP_ESTIMATORS, predictor_kind="iid_noise")


def cmd_table2(cfg: RunConfig) -> int:
    started = time.time()
    n_ground_truths = cfg.scaled(100)
    print(f"table2: 6 rows x {n_ground_truths} ground truths x 100 runs, workers {cfg.workers}", flush=True)
    result = run_table2(cfg.seed, n_ground_truths=n_ground_truths, n_runs=100, workers=cfg.workers)
    payload = {
        "command": "table2",
        "master_seed": cfg.seed,
        "scale": cfg.scale,
        "n_ground_truths": n_ground_truths,
        "n_runs": 100,
        "n1": 200,  # the linear-model benchmark runs a fixed 200-patient trial
        "runtime_seconds": round(time.time() - started, 3),
        "rows": result.table_rows,
    }
    _write_outputs(cfg, "table2", result.csv_text(), payload)
    print(f"table2: wrote {cfg.out}/table2.*")
    return 0


def cmd_checks(cfg: RunConfig) -> int:
    names = None
    if cfg.checks:
        names = [n for spec in cfg.checks for n in spec.split(",")]
    results = run_checks(names, seed=cfg.seed, scale=cfg.scale)
    for res in results:
        print(res.line())
    payload = {
        "command": "checks",
        "master_seed": cfg.seed,
        "scale": cfg.scale,
        "results": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
    }
    csv_text = "name,passed,detail\n" + "".join(
        f"{r.name},{int(r.passed)},\"{r.detail}\"\n" for r in results
    )
    _write_outputs(cfg, "checks", csv_text, payload)
    return 0 if all(r.passed for r in results) else 1


def cmd_export_world(cfg: RunConfig) -> int:
    seed = cfg.seed
    world = World(
        "gp",
        (
            sample_gp(FOM0_KERNEL, seed=derive_seed(seed, "export", "fom", 0)),
            sample_gp(fom1_kernel(0.2), seed=derive_seed(seed, "export", "fom", 1)),
        ),
        sample_gp(PS_KERNEL, seed=derive_seed(seed, "export", "ps")),
        sample_gp(pa_kernel(0.5, 0.0), seed=derive_seed(seed, "export", "pa")),
        0.0,
    )
    table = world_lattice_table(world)
    lattice_lines = ["x,u,fom0,fom1,ps,pa"]
    for i in range(table["x"].shape[0]):
        lattice_lines.append(",".join(repr(float(table[c][i])) for c in ("x", "u", "fom0", "fom1", "ps", "pa")))

    os_records = generate_os(world, 50_000, derive_seed(seed, "export", "os"))
    x_os, y_os = os_arm_arrays(os_records, a=1)
    f = flexible_fit(x_os, y_os, seed=derive_seed(seed, "export", "fpred"))
    trial = draw_trial(world, 200, derive_seed(seed, "export", "trial"))
    sample = CompositeSample.from_records(trial)
    x1, y1 = sample.trial_arm_arrays(1)
    degree = cfg.degrees[0]
    fold_seed = derive_seed(seed, "export", "folds")
    g_fit = ridge_cv(x1, y1, degree, fold_seed=fold_seed)
    b_fit = ridge_cv(x1, f.predict(x1) - y1, degree, fold_seed=fold_seed)
    xs = np.linspace(-1.0, 1.0, 201)
    fit_lines = ["x,f1,g_hat,b_hat"]
    f_xs, g_xs, b_xs = f.predict(xs), g_fit.predict(xs), b_fit.predict(xs)
    for i, x in enumerate(xs):
        fit_lines.append(f"{x!r},{f_xs[i]!r},{g_xs[i]!r},{b_xs[i]!r}")

    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "world_grid.csv").write_text("\n".join(lattice_lines) + "\n")
    (cfg.out / "world_fits.csv").write_text("\n".join(fit_lines) + "\n")
    if cfg.format in ("json", "both"):
        payload = {"command": "export-world", "master_seed": seed, "degree": degree}
        (cfg.out / "export_world.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"export-world: wrote {cfg.out}/world_grid.csv and world_fits.csv")
    return 0


COMMANDS = {
    "figure3": cmd_figure3,
    "biasvar": cmd_biasvar,
    "ipwdr": cmd_ipwdr,
    "table2": cmd_table2,
    "noise-robustness": cmd_noise_robustness,
    "checks": cmd_checks,
    "export-world": cmd_export_world,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(args)
    return COMMANDS[cfg.command](cfg)


if __name__ == "__main__":
    sys.exit(main())

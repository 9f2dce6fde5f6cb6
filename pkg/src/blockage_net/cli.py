"""Command-line front end.

Reads a JSON run configuration, runs the analytic and/or Monte Carlo
pipelines and writes CSV curves into an output directory::

    blockage-net --config run.json --mode analyze --out results/

Exit codes: 0 on success, 1 for configuration errors (the message names the
offending field), 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .link_stats import GammaModel
from .montecarlo import (
    Scenario, compare_models, connectivity_from_batch, coverage_from_batch, run_trials,
)
from .network_analytics import (
    NetworkParams, QuadratureConfig, QuadratureError, average_rate, baseline_coverage_no_blockage,
    coverage_probability, db_to_linear, effective_visible_range, mean_visible_area,
    mean_visible_bs, silent_fraction,
)
from .processes import BlockageParams, Window, dist_from_dict

MODES = ("analyze", "simulate", "compare", "sweep")
SWEEP_VARIABLES = ("mu", "lambda")
U64_MAX = 2**64 - 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class NumericalError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    mode: str
    scenario: Scenario
    t_grid_db: np.ndarray
    out_dir: Path
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    sweep_variable: Optional[str] = None
    sweep_values: Optional[np.ndarray] = None
    n_rays: int = 32
    link_lengths: tuple = (50.0, 100.0, 200.0)
    ccdf_grid: tuple = (50.0, 100.0, 200.0)
    compare_lattice: bool = False

    @property
    def seed(self) -> int:
        return self.scenario.seed

    def network(self, mu: Optional[float] = None, lam: Optional[float] = None) -> NetworkParams:
        sc = self.scenario
        bp = sc.blockage if lam is None else sc.blockage.with_density(lam)
        return NetworkParams(sc.mu if mu is None else mu, sc.alpha, bp.beta, bp.p, sc.t_max_db)


_TOP_KEYS = {"mode", "seed", "blockage", "network", "gamma", "tGridDb", "montecarlo", "sweep", "quadrature"}
_SECTION_KEYS = {
    "blockage": {"lambda", "length", "width"},
    "network": {"mu", "alpha", "tMaxDb"},
    "montecarlo": {"trials", "geometry", "conditionOutdoorUser", "windowRadius", "nRays",
                   "linkLengths", "ccdfGrid", "compareLattice"},
    "sweep": {"variable", "values"},
    "quadrature": {"relTol", "absTol", "outerTailMass", "maxDepth"},
}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected a JSON object")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}" if where else k, "unknown field")


def _number(d, key, where, default=None, required=False):
    path = f"{where}.{key}" if where else key
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(path, "required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _integer(d, key, where, default):
    path = f"{where}.{key}" if where else key
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _grid(d, key, where, required=True, positive=False):
    path = f"{where}.{key}" if where else key
    if key not in d:
        if required:
            raise ConfigError(path, "required field missing")
        return None
    v = d[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list of numbers")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) for x in v):
        raise ConfigError(path, "entries must be finite numbers")
    arr = np.asarray(v, dtype=float)
    if np.any(np.diff(arr) <= 0):
        raise ConfigError(path, "values must be strictly increasing")
    if positive and arr[0] <= 0:
        raise ConfigError(path, "values must be > 0")
    return arr


def _dist(d, key, where):
    path = f"{where}.{key}"
    if key not in d:
        raise ConfigError(path, "required field missing")
    try:
        dist = dist_from_dict(d[key])
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(path, f"bad distribution ({exc})") from None
    if dist.mean < 0:
        raise ConfigError(path, "mean size must be >= 0")
    return dist


def parse_seed(text) -> int:
    """Seeds are unsigned 64-bit integers."""
    try:
        seed = int(text)
    except (TypeError, ValueError):
        raise ConfigError("seed", f"expected an unsigned 64-bit integer, got {text!r}") from None
    if isinstance(text, (bool, float)) or not 0 <= seed <= U64_MAX:
        raise ConfigError("seed", f"expected an unsigned 64-bit integer, got {text!r}")
    return seed


def load_config(raw: dict, mode: Optional[str] = None, seed: Optional[int] = None,
                out_dir="out") -> RunConfig:
    """Validate a parsed JSON document. ``mode`` and ``seed`` override the file."""
    _check_keys(raw, _TOP_KEYS, "")
    mode = mode or raw.get("mode")
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {', '.join(MODES)}, got {mode!r}")
    seed = parse_seed(raw.get("seed", 0)) if seed is None else parse_seed(seed)

    b = raw.get("blockage")
    if b is None:
        raise ConfigError("blockage", "required section missing")
    _check_keys(b, _SECTION_KEYS["blockage"], "blockage")
    lam = _number(b, "lambda", "blockage", required=True)
    if lam < 0:
        raise ConfigError("blockage.lambda", "density must be >= 0")
    length, width = _dist(b, "length", "blockage"), _dist(b, "width", "blockage")

    n = raw.get("network")
    if n is None:
        raise ConfigError("network", "required section missing")
    _check_keys(n, _SECTION_KEYS["network"], "network")
    mu = _number(n, "mu", "network", required=True)
    if not mu > 0:
        raise ConfigError("network.mu", "base station density must be > 0")
    alpha = _number(n, "alpha", "network", default=4.0)
    if not alpha > 2:
        raise ConfigError("network.alpha", f"path-loss exponent must exceed 2, got {alpha:g}")
    t_max_db = _number(n, "tMaxDb", "network", default=40.0)

    try:
        gamma = GammaModel.from_dict(raw.get("gamma", {"kind": "impenetrable"}))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError("gamma", str(exc)) from None
    if mode != "simulate" and not gamma.is_impenetrable:
        raise ConfigError("gamma.kind", f"the {mode} mode needs impenetrable blockages")

    t_grid = _grid(raw, "tGridDb", "")

    q = raw.get("quadrature", {})
    _check_keys(q, _SECTION_KEYS["quadrature"], "quadrature")
    try:
        quad = QuadratureConfig(
            rel_tol=_number(q, "relTol", "quadrature", 1e-6),
            abs_tol=_number(q, "absTol", "quadrature", 1e-10),
            outer_tail_mass=_number(q, "outerTailMass", "quadrature", 1e-8),
            max_depth=_integer(q, "maxDepth", "quadrature", 200),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("quadrature", str(exc)) from None

    m = raw.get("montecarlo", {})
    _check_keys(m, _SECTION_KEYS["montecarlo"], "montecarlo")
    if mode in ("simulate", "compare") and "trials" not in m:
        raise ConfigError("montecarlo.trials", f"required in {mode} mode")
    trials = _integer(m, "trials", "montecarlo", 1000)
    if trials < 1:
        raise ConfigError("montecarlo.trials", "must be >= 1")
    geometry = m.get("geometry", "boolean")
    if geometry not in ("boolean", "lattice"):
        raise ConfigError("montecarlo.geometry", f"expected boolean or lattice, got {geometry!r}")
    if mode == "compare" and geometry != "boolean":
        raise ConfigError("montecarlo.geometry", "compare mode runs the boolean layout")
    outdoor = m.get("conditionOutdoorUser", False)
    if not isinstance(outdoor, bool):
        raise ConfigError("montecarlo.conditionOutdoorUser", "expected true or false")
    compare_lattice = m.get("compareLattice", False)
    if not isinstance(compare_lattice, bool):
        raise ConfigError("montecarlo.compareLattice", "expected true or false")
    radius = _number(m, "windowRadius", "montecarlo")
    if radius is not None and not radius > 0:
        raise ConfigError("montecarlo.windowRadius", "must be > 0")
    n_rays = _integer(m, "nRays", "montecarlo", 32)
    if n_rays < 0:
        raise ConfigError("montecarlo.nRays", "must be >= 0")
    link_lengths = _grid(m, "linkLengths", "montecarlo", required=False, positive=True)
    ccdf_grid = _grid(m, "ccdfGrid", "montecarlo", required=False, positive=True)

    sweep_var = sweep_values = None
    if mode == "sweep":
        s = raw.get("sweep")
        if s is None:
            raise ConfigError("sweep", "required in sweep mode")
        _check_keys(s, _SECTION_KEYS["sweep"], "sweep")
        sweep_var = s.get("variable")
        if sweep_var not in SWEEP_VARIABLES:
            raise ConfigError("sweep.variable", f"expected mu or lambda, got {sweep_var!r}")
        sweep_values = _grid(s, "values", "sweep")
        if sweep_var == "mu" and sweep_values[0] <= 0:
            raise ConfigError("sweep.values", "base station densities must be > 0")
        if sweep_var == "lambda" and sweep_values[0] < 0:
            raise ConfigError("sweep.values", "blockage densities must be >= 0")

    try:
        blockage = BlockageParams(lam, length, width)
        scenario = Scenario(blockage, mu, alpha=alpha, gamma=gamma, t_max_db=t_max_db,
                            trials=trials, seed=seed, geometry=geometry,
                            condition_outdoor_user=outdoor)
        if radius is not None:
            scenario.window = Window(radius, guard=scenario.window.guard)
    except ValueError as exc:
        raise ConfigError("blockage", str(exc)) from None

    return RunConfig(
        mode=mode, scenario=scenario, t_grid_db=t_grid, out_dir=Path(out_dir), quadrature=quad,
        sweep_variable=sweep_var, sweep_values=sweep_values, n_rays=n_rays,
        link_lengths=tuple(link_lengths) if link_lengths is not None else (50.0, 100.0, 200.0),
        ccdf_grid=tuple(ccdf_grid) if ccdf_grid is not None else (50.0, 100.0, 200.0),
        compare_lattice=compare_lattice,
    )


# ---------------------------------------------------------------------------
# CSV output


def fmt_g(x) -> str:
    """Distances, areas, densities and dB values: 6 significant digits."""
    return f"{float(x):.6g}"


def fmt_p(x) -> str:
    """Probabilities: 6 decimal places."""
    return f"{float(x):.6f}"


def fmt_int(x) -> str:
    return str(int(x))


def write_csv(path: Path, header, rows, formats, comments=()):
    """Write rows with one formatter per column; ``comments`` become ``# `` lines."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f(v) if not isinstance(v, str) else v for f, v in zip(formats, row)])
    path.write_text(buf.getvalue())
    return path


def read_csv(path):
    """Parse a file written by :func:`write_csv`.

    Returns ``(header, rows, comments)``; numeric cells become floats.
    """
    comments, lines = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for rec in reader:
        row = []
        for cell in rec:
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return header, rows, comments


def _finite(values, what):
    arr = np.asarray(values, dtype=float)
    if np.any(np.isnan(arr)):
        raise NumericalError(f"{what}: non-finite result")
    return arr


# ---------------------------------------------------------------------------
# commands


def _analytic_curve(cfg: RunConfig, params: NetworkParams) -> np.ndarray:
    out = []
    for t in cfg.t_grid_db:
        T = db_to_linear(t)
        if params.beta == 0 and params.p == 0:
            out.append(baseline_coverage_no_blockage(T, params.alpha, cfg.quadrature))
        else:
            out.append(coverage_probability(T, params, cfg.quadrature))
    return _finite(out, "coverage")


def cmd_analyze(cfg: RunConfig):
    net = cfg.network()
    pc = _analytic_curve(cfg, net)
    xi = silent_fraction(net.mu, net.beta, net.p)
    cond = pc / (1.0 - xi)
    out = cfg.out_dir
    files = [
        write_csv(out / "analytic_coverage.csv", ["T_dB", "Pc", "Pc_conditional"],
                  zip(cfg.t_grid_db, pc, cond), [fmt_g, fmt_p, fmt_p]),
        write_csv(out / "connectivity.csv",
                  ["beta", "p", "meanVisibleArea", "R_eff", "meanVisibleBs", "xi"],
                  [(net.beta, net.p, mean_visible_area(net.beta, net.p),
                    effective_visible_range(net.beta, net.p), mean_visible_bs(net.mu, net.beta, net.p), xi)],
                  [fmt_g, fmt_p, fmt_g, fmt_g, fmt_g, fmt_p]),
    ]
    tau = float(_finite([average_rate(net, cfg.quadrature)], "rate")[0])
    files.append(write_csv(out / "rate.csv", ["tau"], [(tau,)], [fmt_g]))
    print(f"analyze: beta={net.beta:.6g} p={net.p:.6f} xi={xi:.6f} tau={tau:.6g} bit/s/Hz")
    return files


def _mc_connectivity_rows(est):
    rows = []
    for R, m, mh, q, qh in zip(est.link_lengths, est.mean_blockages, est.mean_blockages_hw,
                               est.los_prob, est.los_prob_hw):
        rows.append(("meanBlockages", fmt_g(R), fmt_g(m), fmt_g(mh), fmt_int(est.n)))
        rows.append(("losProb", fmt_g(R), fmt_p(q), fmt_p(qh), fmt_int(est.n)))
    rows.append(("meanVisibleBs", "", fmt_g(est.mean_visible_bs), fmt_g(est.mean_visible_bs_hw), fmt_int(est.n)))
    rows.append(("silentFraction", "", fmt_p(est.silent_fraction), fmt_p(est.silent_fraction_hw), fmt_int(est.n)))
    if not math.isnan(est.mean_visible_area):
        rows.append(("meanVisibleArea", "", fmt_g(est.mean_visible_area),
                     fmt_g(est.mean_visible_area_hw), fmt_int(est.n)))
    rows.append(("indoorFraction", "", fmt_p(est.indoor_fraction), "", fmt_int(est.n)))
    c = est.nearest_visible_ccdf
    for x, v, h in zip(c.grid, c.values, c.half_widths):
        rows.append(("nearestVisibleCcdf", fmt_g(x), fmt_p(v), fmt_p(h), fmt_int(c.n)))
    return rows


def cmd_simulate(cfg: RunConfig):
    sc = cfg.scenario
    batch = run_trials(sc, n_rays=cfg.n_rays, link_lengths=cfg.link_lengths)
    cov = coverage_from_batch(batch, cfg.t_grid_db)
    _finite(cov.values, "Monte Carlo coverage")
    est = connectivity_from_batch(batch, cfg.ccdf_grid)
    meta = [f"seed={sc.seed}", f"trials={sc.trials}", f"geometry={sc.geometry}",
            f"windowRadius={sc.window.radius:.6g}"]
    out = cfg.out_dir
    files = [
        write_csv(out / "mc_coverage.csv", ["T_dB", "Pc", "ciHalfWidth", "n"],
                  [(t, v, h, cov.n) for t, v, h in zip(cov.grid, cov.values, cov.half_widths)],
                  [fmt_g, fmt_p, fmt_p, fmt_int], comments=meta),
        write_csv(out / "mc_connectivity.csv", ["quantity", "x", "value", "ciHalfWidth", "n"],
                  _mc_connectivity_rows(est), [str] * 5, comments=meta),
    ]
    print(f"simulate: {sc.trials} trials, seed={sc.seed}, silent={est.silent_fraction:.6f}, "
          f"mean visible BS={est.mean_visible_bs:.6g}")
    return files


def cmd_compare(cfg: RunConfig):
    sc = cfg.scenario
    pc = _analytic_curve(cfg, cfg.network())
    batch = run_trials(sc)
    cov = coverage_from_batch(batch, cfg.t_grid_db)
    gap = cov.values - pc
    meta = [f"seed={sc.seed}", f"trials={sc.trials}"]
    out = cfg.out_dir
    files = [write_csv(out / "comparison.csv", ["T_dB", "Pc_analytic", "Pc_mc", "ciHalfWidth", "n", "gap"],
                       [(t, a, m, h, cov.n, g) for t, a, m, h, g in
                        zip(cfg.t_grid_db, pc, cov.values, cov.half_widths, gap)],
                       [fmt_g, fmt_p, fmt_p, fmt_p, fmt_int, fmt_p], comments=meta)]
    print(f"compare: max |analytic - MC| = {np.max(np.abs(gap)):.6f} over {len(gap)} thresholds")
    if cfg.compare_lattice:
        res = compare_models(sc, sc.with_(geometry="lattice"), cfg.t_grid_db)
        files.append(write_csv(
            out / "model_comparison.csv",
            ["T_dB", "Pc_boolean", "ci_boolean", "Pc_lattice", "ci_lattice", "jointHalfWidth", "separated"],
            [(t, b, bh, l, lh, j, int(s)) for t, b, bh, l, lh, j, s in zip(
                res.boolean.grid, res.boolean.values, res.boolean.half_widths, res.lattice.values,
                res.lattice.half_widths, res.joint_half_widths, res.separated)],
            [fmt_g, fmt_p, fmt_p, fmt_p, fmt_p, fmt_p, fmt_int], comments=meta))
        print(f"compare: boolean vs lattice max gap {res.max_gap:.6f} at {res.max_gap_at_db:g} dB")
    return files


def cmd_sweep(cfg: RunConfig):
    var = cfg.sweep_variable
    rows = []
    for v in cfg.sweep_values:
        net = cfg.network(mu=v) if var == "mu" else cfg.network(lam=v)
        rows.append((v, *_analytic_curve(cfg, net)))
    header = [var] + [f"Pc@{fmt_g(t)}dB" for t in cfg.t_grid_db]
    path = write_csv(cfg.out_dir / f"sweep_{var}.csv", header, rows,
                     [fmt_g] + [fmt_p] * len(cfg.t_grid_db))
    print(f"sweep: {len(rows)} values of {var} x {len(cfg.t_grid_db)} thresholds")
    return [path]


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "compare": cmd_compare, "sweep": cmd_sweep}


def run(cfg: RunConfig):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return COMMANDS[cfg.mode](cfg)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockage-net", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", help="master seed (unsigned 64-bit), overrides the config")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--mode", choices=MODES, help="overrides the config's mode")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc})") from None
        cfg = load_config(raw, mode=args.mode, seed=args.seed, out_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = run(cfg)
    except (QuadratureError, NumericalError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

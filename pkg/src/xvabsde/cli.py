"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(including Picard non-convergence; the diagnostics are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .claims import ValueSurface
from .config import MODES, PRESETS, RunConfig, config_from_dict, dump_config, parse_config
from .errors import ConfigError, InputError, NumericalError, SimulationError
from .exposure_metrics import emit_csv, profile
from .portfolio import build_market, incremental_charge, portfolio_value, solve_portfolio
from .xva_solver import XvaReport, g_level_estimate, solve_predefault_xva

logger = logging.getLogger("xvabsde")

REPORT_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xvabsde", description="xVA engine for netted portfolios.")
    p.add_argument("--config", required=False,
                   help=f"JSON config file or preset name ({', '.join(sorted(PRESETS))})")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    p.add_argument("--steps", type=int, help="number of time steps")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--mode", choices=MODES, help="run mode")
    p.add_argument("--out", help="output directory")
    p.add_argument("--quantile", type=float, help="PFE quantile level")
    p.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective configuration and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    data = cfg.model_dump(mode="json")
    table = (("paths", ("simulation", "n_paths")), ("steps", ("simulation", "n_steps")),
             ("seed", ("simulation", "seed")), ("mode", ("mode",)),
             ("out", ("output", "directory")), ("quantile", ("output", "quantile")))
    for flag, path in table:
        value = getattr(args, flag)
        if value is None:
            continue
        node = data
        for key in path[:-1]:
            node = node[key]
        logger.info("override: %s %r -> %r (--%s)", ".".join(path), node[path[-1]], value, flag)
        node[path[-1]] = value
    return config_from_dict(data, "command line")


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _summary_lines(title: str, rep: XvaReport) -> list[str]:
    lines = [title]
    for name in XvaReport.FIELDS:
        se = rep.se.get(name)
        tail = f"  (se {se:.4f})" if se is not None else ""
        lines.append(f"  {name.replace('_', ' ')}: {_fmt(getattr(rep, name))}{tail}")
    lines.append(f"  picard iterations: {rep.picard_iterations} "
                 f"(converged: {'yes' if rep.converged else 'no'})")
    lines.append(f"  time discretization bound: {rep.discretization_bound:.3e}")
    return lines


class _Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.env, self.assets, self.portfolio, self.candidate, self.solver = cfg.build()
        self.out = Path(cfg.output.directory)
        sim = cfg.simulation
        extra = [self.candidate[0]] if self.candidate else []
        self.market = build_market(
            self.portfolio, self.assets, self.env, n_paths=sim.n_paths, n_steps=sim.n_steps,
            seed=sim.seed, reg=self.solver.regression, horizon=sim.horizon,
            csa_discounting=cfg.csa_discounting, extra_claims=extra, workers=sim.workers)
        self.report: dict = {"schema_version": REPORT_SCHEMA_VERSION, "mode": cfg.mode,
                             "config": json.loads(dump_config(cfg))}
        self.summary: list[str] = [f"mode: {cfg.mode}",
                                   f"paths: {sim.n_paths}  steps: {sim.n_steps}  seed: {sim.seed}"]
        self.converged = True

    def value(self):
        results = solve_portfolio(self.portfolio, self.market, self.env, self.solver)
        pf = portfolio_value(results)
        self.converged = pf.totals.converged
        self.report["portfolio"] = pf.totals.to_dict()
        self.report["netting_sets"] = {k: r.to_dict() for k, r in pf.netting_sets.items()}
        self.summary += _summary_lines("portfolio", pf.totals)
        for k, r in pf.netting_sets.items():
            self.summary += _summary_lines(f"netting set {k}", r)
        (self.out / "report.csv").write_text(pf.totals.csv_header() + "\n"
                                             + pf.totals.csv_row() + "\n")

    def incremental(self):
        claim, placement = self.candidate
        rec = incremental_charge(self.portfolio, claim, placement, self.market, self.env,
                                 self.solver)
        self.converged = rec.full.totals.converged and rec.base.totals.converged
        self.report["incremental"] = rec.to_dict()
        self.summary.append(f"candidate {claim.id} in margin set {placement.margin_set_id}, "
                            f"netting set {placement.netting_set_id}")
        self.summary.append(f"  delta value: {_fmt(rec.delta_value)}")
        for key in ("xva", "cva", "dva", "fva", "colva", "mva"):
            self.summary.append(
                f"  {key}: base {_fmt(getattr(rec.base.totals, key))}  "
                f"full {_fmt(getattr(rec.full.totals, key))}  "
                f"delta {_fmt(rec.delta[key])} (se {rec.se['delta_' + key]:.4f})  "
                f"standalone {_fmt(rec.standalone[key])}  "
                f"NL {_fmt(rec.nl[key])} (se {rec.se['nl_' + key]:.4f})")
        (self.out / "report.csv").write_text(
            "delta_value,delta_xva,delta_cva,standalone_cva,nl_xva,nl_cva\n"
            + ",".join(f"{v:.10f}" for v in (rec.delta_value, rec.delta["xva"], rec.delta["cva"],
                                             rec.standalone["cva"], rec.nl["xva"], rec.nl["cva"]))
            + "\n")

    def validate_g(self):
        out = {}
        for nid in sorted(self.portfolio.netting_sets):
            state = self.market.netting_state(self.portfolio, nid, self.env)
            _, rep = solve_predefault_xva(state, self.env, self.solver)
            self.converged &= rep.converged
            cmp = g_level_estimate(state, self.env, rep, self.cfg.simulation.seed)
            out[nid] = {"g_level": cmp.g_estimate, "g_se": cmp.g_se,
                        "f_level": cmp.f_estimate, "f_se": cmp.f_se,
                        "diff_se": cmp.diff_se, "n_defaults": cmp.n_defaults,
                        "agrees_3se": bool(cmp.agrees())}
            self.summary.append(
                f"netting set {nid}: G-level {_fmt(cmp.g_estimate)} vs F-level "
                f"{_fmt(cmp.f_estimate)} (diff se {cmp.diff_se:.4f}, "
                f"{'agree' if cmp.agrees() else 'DISAGREE'} at 3 se)")
        self.report["validate_g"] = out

    def exposure(self):
        opts = self.cfg.output
        deflate = self.env.r if opts.deflate_exposure else None
        files = {}
        for nid in sorted(self.portfolio.netting_sets):
            state = self.market.netting_state(self.portfolio, nid, self.env)
            coll = sum(leg.collateral.values for leg in state.legs)
            residual = ValueSurface(state.grid, state.exposure.values - coll, "residual")
            prof = profile(residual, opts.quantile, deflate_with=deflate)
            path = emit_csv(prof, self.out / f"exposure_{nid}.csv", gnuplot=opts.gnuplot)
            files[nid] = path.name
            self.summary.append(
                f"netting set {nid}: exposure profile -> {path.name} "
                f"(PFE{opts.quantile:g} range {_fmt(float(prof.pfe.max() - prof.pfe.min()))})")
        self.report["exposure_files"] = files

    def execute(self) -> int:
        self.out.mkdir(parents=True, exist_ok=True)
        getattr(self, self.cfg.mode.replace("-", "_"))()
        if self.cfg.mode in ("value", "incremental", "validate-g"):
            self.exposure()
        self.report["converged"] = self.converged
        (self.out / "report.json").write_text(json.dumps(self.report, sort_keys=True, indent=2)
                                              + "\n")
        (self.out / "summary.txt").write_text("\n".join(self.summary) + "\n")
        if not self.converged:
            logger.error("Picard iteration did not converge; see report.json")
            return EXIT_NUMERICAL
        return EXIT_OK


def run(cfg: RunConfig) -> int:
    return _Run(cfg).execute()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if args.list_presets:
        print("\n".join(sorted(PRESETS)))
        return EXIT_OK
    if not args.config:
        logger.error("--config is required")
        return EXIT_CONFIG
    try:
        cfg = apply_overrides(parse_config(args.config), args)
        if args.print_config:
            print(dump_config(cfg))
            return EXIT_OK
        return run(cfg)
    except (ConfigError, InputError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, SimulationError) as exc:
        diag = getattr(exc, "diagnostics", {})
        logger.error("%s %s", exc, json.dumps(diag, sort_keys=True) if diag else "")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""``simulate``: run one sweep scenario and write the result CSV (and optionally JSON)."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .jpps import InfeasibleError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=__doc__)
    p.add_argument("--scenario", required=True, choices=ex.SCENARIOS)
    p.add_argument("--profile", default="paper-default", choices=sorted(ex.PROFILES))
    p.add_argument("--config", type=Path, help="flat key = value file applied over the profile")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True, help="result CSV path")
    p.add_argument("--json", action="store_true", help="also write <out>.json")
    p.add_argument("--oracle", action="store_true", help="add the exhaustive-selection scheme")
    return p


def load_config(args) -> ex.ScenarioConfig:
    cfg = ex.PROFILES[args.profile]
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ex.ConfigError(f"{args.config}: {exc.strerror}") from None
        cfg = ex.parse_config(text, cfg, str(args.config))
    cfg = ex.parse_set(args.overrides, cfg)
    pairs = []
    if args.trials is not None:
        pairs.append((" --trials", "trials", str(args.trials)))
    if args.seed is not None:
        pairs.append((" --seed", "seed", str(args.seed)))
    cfg = ex.apply_overrides(cfg, pairs, "")
    if args.oracle:
        if "exhaustive" not in cfg.schemes:
            cfg = replace(cfg, schemes=(*cfg.schemes, "exhaustive"))
        sizes = [cfg.n_ports] if args.scenario != "ports" else list(cfg.ns_grid)
        for n in sizes:
            count = math.comb(n, cfg.n_active)
            if count > ex.ORACLE_LIMIT:
                raise ex.ConfigError(f"--oracle: {count} selections at N_s={n} exceed the limit "
                                     f"{ex.ORACLE_LIMIT}")
    return cfg


def _infeasible(rows) -> list:
    """Grid points where every scheme missed the radar floor on every trial."""
    by_point = {}
    for r in rows:
        by_point.setdefault(r.param, []).append(r.miss_frac)
    return [p for p, fr in by_point.items() if all(f >= 1.0 for f in fr)]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        workers = ex.worker_count()
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    extra = {"scenario": args.scenario, "config": ex.dump_config(cfg)}
    try:
        if args.scenario == "beampattern":
            rows, pat = ex.beam_rows(cfg, workers)
            pattern_path = args.out.with_suffix(".pattern.csv")
            pattern_path.write_text(ex.pattern_csv(pat["angles_deg"], pat))
        elif args.scenario == "convergence":
            rows, summary = ex.convergence_rows(cfg, workers)
            extra["iterations"] = summary.iterations
        else:
            rows = ex.run_sweep(cfg, args.scenario, workers)
    except InfeasibleError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    args.out.write_text(ex.rows_to_csv(rows))
    if args.json:
        args.out.with_suffix(".json").write_text(ex.rows_to_json(rows, extra))
    bad = _infeasible(rows)
    if bad:
        print(f"infeasible scenario: radar floor missed on every trial at {', '.join(bad)}",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

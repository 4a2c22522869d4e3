"""Command-line front end: single runs, the full experiment matrix, CSV output.

Configuration comes from an INI file (section/key layout below) and/or
command-line flags; flags win.  Exit codes: 0 success, 2 configuration
error, 3 run failure.

INI layout (every key optional)::

    [scenario]
    seed = 1
    of = mrhof-etx            ; of0 | mrhof-etx | mrhof-energy
    attack = dis-flood        ; none | version | dis-flood | worst-parent
    density_pct = 10          ; 0 | 2 | 6 | 10
    mobile = true
    node_count = 51
    area_m = 200
    duration_s = 3600
    traffic_period_s = 60
    p_max_mw = 1.0

    [medium]
    tx_range_m = 50
    int_range_m = 100
    success_tx = 1.0
    success_rx = 1.0

    [trickle]
    i_min_ms = 4096
    doublings = 8
    redundancy_k = 10

    [mobility]
    speed_mps = 1.389
    step_period_s = 1.0
    direction_epoch_s = 10.0
    trace_file = movements.txt
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import replace

from .scenario import (
    ATTACK_CHOICES,
    DENSITY_TO_COUNT,
    OF_NAMES,
    ConfigError,
    ScenarioConfig,
    format_delta_table,
    delta_report,
    run_matrix,
    run_scenario,
    write_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3

_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOLS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"not a boolean: {text!r}") from None


def load_config_file(path: str) -> ScenarioConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as err:
        raise ConfigError(f"bad config file: {err}") from err
    cfg = ScenarioConfig()
    known = {
        "scenario": {
            "seed": ("seed", int),
            "of": ("of", str),
            "attack": ("attack", str),
            "density_pct": ("density_pct", int),
            "mobile": ("attackers_mobile", _parse_bool),
            "node_count": ("node_count", int),
            "area_m": ("area_m", float),
            "duration_s": ("duration_s", float),
            "traffic_period_s": ("traffic_period_s", float),
            "p_max_mw": ("p_max_mw", float),
        },
        "mobility": {
            "speed_mps": ("walk_speed_mps", float),
            "step_period_s": ("walk_step_period_s", float),
            "direction_epoch_s": ("walk_direction_epoch_s", float),
            "trace_file": ("mobility_trace", str),
        },
    }
    sub = {
        "medium": ("medium", {"tx_range_m": float, "int_range_m": float, "success_tx": float, "success_rx": float}),
        "trickle": ("trickle", {"i_min_ms": int, "doublings": int, "redundancy_k": int}),
    }
    for section in parser.sections():
        if section in known:
            for key, value in parser.items(section):
                if key not in known[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                attr, conv = known[section][key]
                try:
                    setattr(cfg, attr, conv(value))
                except ValueError as err:
                    raise ConfigError(f"bad value for [{section}] {key}: {value!r}") from err
        elif section in sub:
            attr, keys = sub[section]
            obj = getattr(cfg, attr)
            for key, value in parser.items(section):
                if key not in keys:
                    raise ConfigError(f"unknown key [{section}] {key}")
                try:
                    setattr(obj, key, keys[key](value))
                except ValueError as err:
                    raise ConfigError(f"bad value for [{section}] {key}: {value!r}") from err
        else:
            raise ConfigError(f"unknown config section [{section}]")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rplmob",
        description="Simulate RPL networks under version-number, DIS-flooding and "
        "worst-parent insider attacks, with static or mobile attackers.",
    )
    parser.add_argument("--config", help="INI config file; flags override its values")
    parser.add_argument("--seed", help="seed, or comma-separated seeds for --matrix")
    parser.add_argument("--of", choices=OF_NAMES, help="objective function")
    parser.add_argument("--attack", choices=ATTACK_CHOICES, help="attack kind")
    parser.add_argument(
        "--density",
        type=int,
        choices=sorted(DENSITY_TO_COUNT),
        help="attacker density in percent of all nodes",
    )
    parser.add_argument(
        "--mobile",
        nargs="?",
        const="true",
        choices=list(_BOOLS),
        help="make the attackers mobile (optionally pass true/false)",
    )
    parser.add_argument("--out", help="CSV output path (default: stdout)")
    parser.add_argument("--trace-dir", help="directory for per-run event traces")
    parser.add_argument(
        "--matrix",
        action="store_true",
        help="run the full OF x attack x density x mobility grid over the seeds",
    )
    return parser


def _seed_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad seed list: {text!r}") from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config_file(args.config) if args.config else ScenarioConfig()
        seeds = _seed_list(args.seed) if args.seed else [cfg.seed]
        if not seeds:
            raise ConfigError("no seeds given")
        if args.of:
            cfg = replace(cfg, of=args.of)
        if args.attack:
            cfg = replace(cfg, attack=args.attack)
        if args.density is not None:
            cfg = replace(cfg, density_pct=args.density)
        if args.mobile is not None:
            cfg = replace(cfg, attackers_mobile=_parse_bool(args.mobile))
        if args.attack == "none":
            cfg = replace(cfg, density_pct=0)

        trace_dir = args.trace_dir
        if trace_dir:
            os.makedirs(trace_dir, exist_ok=True)

        if args.matrix:
            base = replace(cfg, attack="none", density_pct=0, attackers_mobile=False)
            base.validate()
            if trace_dir:
                raise ConfigError("--trace-dir is only supported for single runs")
            results = run_matrix(base, seeds)
        else:
            results = []
            for seed in seeds:
                one = replace(cfg, seed=seed)
                one.validate()
                trace_path = (
                    os.path.join(trace_dir, one.fingerprint() + ".trace") if trace_dir else None
                )
                results.append(run_scenario(one, trace_path=trace_path))
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - any run failure maps to exit 3
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUN

    if args.out:
        with open(args.out, "w") as fh:
            write_csv(results, fh)
    else:
        write_csv(results, sys.stdout)
    if args.matrix:
        print(format_delta_table(delta_report(results)), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

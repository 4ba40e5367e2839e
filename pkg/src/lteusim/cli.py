"""Command-line front end: single runs, sweeps, coexistence tables, and
equilibrium checks, all writing CSV/text outputs into a chosen directory."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import game, harness, wifi
from .scenario import ALGORITHMS, ScenarioConfig, desk_config

FLOAT_FORMAT = harness.FLOAT_FORMAT


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    return str(value)


def _parse_sets(pairs):
    mapping = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _build_config(args, defaults=None) -> ScenarioConfig:
    if args.config:
        base = ScenarioConfig.from_file(args.config)
    elif defaults:
        base = desk_config(**defaults)
    else:
        base = desk_config()
    overrides = _parse_sets(args.set)
    if not overrides:
        return base
    mapping = base.to_mapping()
    mapping.update(overrides)
    return ScenarioConfig.from_mapping(mapping)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, config: ScenarioConfig) -> int:
    return config.rng_seed if args.seed is None else args.seed


def _run_summary_lines(result) -> list[str]:
    m = result.metrics
    lines = [
        f"algorithm = {result.algorithm}",
        f"seed = {result.seed}",
        f"rounds = {len(result.records)}",
        f"converged_at = {result.converged_at}",
        f"lte_fraction = {_fmt(result.lte_fraction)}",
        f"wifi_overloaded = {result.wifi_overloaded}",
        f"sum_rate_bps = {_fmt(m['sum_rate_bps'])}",
        f"median_user_rate_bps = {_fmt(m['median_user_rate_bps'])}",
        f"decoupled_users = {result.decoupled_users}",
    ]
    for n, value in enumerate(m["per_bs_utility"]):
        lines.append(f"utility_bs{n} = {_fmt(float(value))}")
    return lines


def cmd_run(args) -> int:
    config = _build_config(args)
    out = _out_dir(args)
    result = harness.run(config, args.algorithm, _seed(args, config))
    config.echo(out / "config_echo.txt")
    harness.write_trace_csv(result, out / "trace.csv")
    harness.write_cdf_csv(result.metrics["rate_cdf_bps"], out / "cdf.csv")
    lines = _run_summary_lines(result)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    result.final_rates.write_csv(out / "rates.csv")
    for line in lines:
        print(line)
    print(f"outputs in {out}")
    return 0


def cmd_sweep(args) -> int:
    config = _build_config(args)
    out = _out_dir(args)
    values = [float(v) for v in args.values.split(",") if v]
    algorithms = [a for a in args.algorithms.split(",") if a]
    for algorithm in algorithms:
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    cells = harness.sweep(config, args.axis, values, algorithms,
                          n_runs=args.runs, base_seed=_seed(args, config))
    config.echo(out / "config_echo.txt")
    harness.write_sweep_csv(cells, out / "sweep.csv")
    lines = [f"axis = {args.axis}", f"cells = {len(cells)}",
             f"runs_per_cell = {args.runs}"]
    for cell in cells:
        lines.append(f"{args.axis}={_fmt(cell.value)} {cell.algorithm}: "
                     f"sum_rate_mean={_fmt(cell.sum_rate_mean)} "
                     f"median_rate_mean={_fmt(cell.median_rate_mean)}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"outputs in {out}")
    return 0


def cmd_coexistence(args) -> int:
    config = _build_config(args)
    out = _out_dir(args)
    users = [int(v) for v in args.wifi_users.split(",") if v]
    rates = ([float(v) for v in args.rates.split(",") if v]
             if args.rates else [config.wifi_rate_req_bps])
    config.echo(out / "config_echo.txt")
    path = out / "coexistence.csv"
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n_wifi", "rate_req_bps", "tx_probability",
                         "throughput_bps", "lte_fraction", "wifi_overloaded"])
        for n_wifi in users:
            params = wifi.default_params(n_wifi)
            tau = params.tau_prob
            throughput = wifi.saturation_throughput(params)
            for r_w in rates:
                duty = wifi.lte_fraction(params, r_w)
                writer.writerow([n_wifi, _fmt(r_w), _fmt(tau),
                                 _fmt(throughput), _fmt(duty.lte_share),
                                 duty.wifi_overloaded])
    print(f"wrote {path}")
    return 0


NE_CHECK_DEFAULTS = dict(n_sbs=2, n_users=4, action_set_size=5,
                         reservoir_units=40, max_iterations=800,
                         convergence_window=40)


def cmd_ne_check(args) -> int:
    # defaults keep the joint space small enough for exact enumeration
    config = _build_config(args, defaults=NE_CHECK_DEFAULTS)
    out = _out_dir(args)
    seed = _seed(args, config)
    result = harness.run(config, "esn", seed)
    if not result.records:
        raise ValueError("ne-check needs at least one round; "
                         "raise max_iterations")
    inputs = harness.prepare_run(config, "esn", seed)
    best = result.records[-1].greedy_action
    profile = [game.MixedStrategy.epsilon_greedy(space, best[n], config.epsilon)
               for n, space in enumerate(inputs.spaces)]
    probe = game.verify_mixed_ne(profile, inputs.capacities, tolerance=0.0,
                                 eta=config.eta)
    lines = [f"seed = {seed}", f"converged_at = {result.converged_at}",
             f"epsilon = {_fmt(config.epsilon)}"]
    all_ok = True
    for n, table in enumerate(probe.expected_by_action):
        table = np.asarray(table)
        current = probe.expected_current[n]
        gain = float(table.max() - current)
        # exploration keeps (1 - epsilon) weight off the best reply, so a
        # matching slack is the tightest certificate this profile can earn
        tol = config.epsilon * float(table.max() - table.mean()) + 1e-6
        ok = gain <= tol
        all_ok = all_ok and ok
        lines.append(f"bs{n}: best_swap_gain={_fmt(gain)} "
                     f"tolerance={_fmt(tol)} ok={ok}")
    lines.append(f"equilibrium = {all_ok}")
    game.export_small_game(inputs.spaces, inputs.capacities,
                           out / "small_game.txt", eta=config.eta)
    config.echo(out / "config_echo.txt")
    (out / "ne_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"outputs in {out}")
    return 0 if all_ok else 1


def _add_common(sub):
    sub.add_argument("--config", help="config file (JSON or key = value)")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config field (repeatable)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default="lteusim_out",
                     help="output directory (created if missing)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lteusim",
        description="Learning-based spectrum allocation simulator")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="one learning run")
    _add_common(p_run)
    p_run.add_argument("--algorithm", choices=ALGORITHMS, default="esn")
    p_run.set_defaults(func=cmd_run)

    p_sweep = subs.add_parser("sweep", help="Monte-Carlo parameter sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", choices=sorted(harness.SWEEP_AXES),
                         required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--algorithms", default=",".join(ALGORITHMS),
                         help="comma-separated algorithm names")
    p_sweep.add_argument("--runs", type=int, default=100,
                         help="Monte-Carlo replications per cell")
    p_sweep.set_defaults(func=cmd_sweep)

    p_coex = subs.add_parser("coexistence",
                             help="WiFi contention and duty-cycle table")
    _add_common(p_coex)
    p_coex.add_argument("--wifi-users", default="1,2,4,8",
                        help="comma-separated stations per WAP")
    p_coex.add_argument("--rates", default="",
                        help="comma-separated WiFi rate demands in bps "
                             "(default: the configured demand)")
    p_coex.set_defaults(func=cmd_coexistence)

    p_ne = subs.add_parser("ne-check",
                           help="run a small game and verify the converged "
                                "profile is an approximate equilibrium")
    _add_common(p_ne)
    p_ne.set_defaults(func=cmd_ne_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Every subcommand reads a flat config file (``--config``), applies
command-line overrides and writes CSV files into ``--out``. Floats are
written with 6 significant digits. Exit status: 0 success, 2 config error,
3 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import baseband, benchmarks
from .config import KEYS, SWEEP_PARAMS, ConfigError, RunConfig, apply_overrides, load
from .montecarlo import mc_throughput, task_rng
from .scenarios import (
    CalibrationError,
    calibrate_links,
    enumerate_scenarios,
    label_chain,
    mac_throughput,
    resolution_probability,
    sensitivity_table,
    slotted_aloha_throughput,
    total_throughput,
)

log = logging.getLogger("iesic")

FLOAT_FORMAT = "%.6g"


# ---------------------------------------------------------------- csv

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return FLOAT_FORMAT % v
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            vals = [r[h] for h in header] if isinstance(r, dict) else r
            w.writerow([fmt(v) for v in vals])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------ commands

def cmd_enumerate(cfg: RunConfig) -> list[Path]:
    rows = []
    for M in cfg.users:
        sc = enumerate_scenarios(cfg.address(M), cfg.links_for(M), cfg.rician(),
                                 cfg.count_idle_slots, cfg.eq3_as_printed)
        cum = 0.0
        for s in sc:
            cum += s.contribution
            rows.append({
                "M": M, "label": s.label, "slots": s.slots_used,
                "latency_ms": s.slots_used * benchmarks.SLOT_DURATION_MS,
                "p_occ": s.p_occ, "rho": s.rho, "p_res": s.p_res,
                "contribution": s.contribution, "cumulative": cum,
            })
    header = ["M", "label", "slots", "latency_ms", "p_occ", "rho", "p_res", "contribution", "cumulative"]
    return [write_csv(Path(cfg.out) / "scenarios.csv", header, rows)]


def _throughput_row(cfg: RunConfig, M: int) -> dict:
    model = cfg.address(M)
    links = cfg.links_for(M)
    sc = enumerate_scenarios(model, links, cfg.rician(), cfg.count_idle_slots, cfg.eq3_as_printed)
    mass = sum(s.p_occ for s in sc)
    mean_slots = sum(s.p_occ * s.slots_used for s in sc) / mass
    row = {
        "M": M, "u": cfg.address_bits,
        "mac_tpt": sum(s.p_occ * s.rho for s in sc) / mass,
        "total_tpt": sum(s.contribution for s in sc) / mass,
        "aloha_baseline": slotted_aloha_throughput(1.0),
        "mean_slots": mean_slots,
        "mean_latency_ms": mean_slots * benchmarks.SLOT_DURATION_MS,
    }
    if cfg.mc_trials:
        if cfg.user_gamma:
            raise ConfigError("mc_trials", "Monte Carlo columns need a shared link (no user_gamma)")
        a = mc_throughput(model, cfg.mc_trials, task_rng(cfg.seed, M, cfg.address_bits, 0),
                          count_idle_slots=cfg.count_idle_slots)
        b = mc_throughput(model, cfg.mc_trials, task_rng(cfg.seed, M, cfg.address_bits, 1),
                          links=links, rician=cfg.rician(), count_idle_slots=cfg.count_idle_slots,
                          eq3_as_printed=cfg.eq3_as_printed)
        row.update(mc_mac_tpt=a.mean, mc_mac_se=a.stderr, mc_total_tpt=b.mean, mc_total_se=b.stderr)
    return row


def cmd_throughput(cfg: RunConfig) -> list[Path]:
    rows = [_throughput_row(cfg, M) for M in cfg.users]
    header = ["M", "u", "mac_tpt", "total_tpt", "aloha_baseline", "mean_slots", "mean_latency_ms"]
    if cfg.mc_trials:
        header += ["mc_mac_tpt", "mc_mac_se", "mc_total_tpt", "mc_total_se"]
    return [write_csv(Path(cfg.out) / "throughput.csv", header, rows)]


def _calibrate(cfg: RunConfig):
    return calibrate_links(free=cfg.calibrate_free, base=cfg.link(), rician=cfg.rician(),
                           u=cfg.address_bits)


def cmd_calibrate(cfg: RunConfig) -> list[Path]:
    link = _calibrate(cfg)
    rows = [
        ("free", ",".join(cfg.calibrate_free)),
        ("gamma", link.gamma), ("noise_power", link.noise_power),
        ("snr_db", 10 * math.log10(link.snr)), ("sigma_v2", link.sigma_v2),
        ("eps_self", link.eps_self), ("eps_cross", link.eps_cross),
    ]
    for lb, target in benchmarks.CALIBRATION_TARGETS.items():
        got = resolution_probability(label_chain(lb, cfg.address_bits), link, cfg.rician())
        rows.append((f"p_res_{lb}", got))
        rows.append((f"target_{lb}", target))
    return [write_csv(Path(cfg.out) / "calibration.csv", ["key", "value"], rows)]


def sweep_links(cfg: RunConfig, value: float):
    """(ideal, measured) links at one sweep value.

    The ideal set has no estimation error or hardware noise and, except in a
    channel-gain sweep, the vanishing noise ``ideal_noise_power``.
    """
    measured = cfg.link()
    ideal = measured.with_(eps_self=0.0, eps_cross=0.0, sigma_v2=0.0)
    if cfg.sweep_param != "channel_gain":
        ideal = ideal.with_(noise_power=cfg.ideal_noise_power)
    if cfg.sweep_param == "channel_gain":
        g = value ** 2 * cfg.tx_power
        return ideal.with_(gamma=g), measured.with_(gamma=g)
    if cfg.sweep_param == "eps_cross":
        return (ideal.with_(eps_cross=value),
                measured.with_(eps_cross=value, eps_self=min(measured.eps_self, value)))
    return ideal.with_(**{cfg.sweep_param: value}), measured.with_(**{cfg.sweep_param: value})


def _sweep_point(args):
    cfg, value = args
    ideal, measured = sweep_links(cfg, value)
    rows = []
    for name, link in (("ideal", ideal), ("measured", measured)):
        for M in cfg.users:
            model = cfg.address(M)
            rows.append({
                "param": cfg.sweep_param, "value": value, "set": name, "M": M,
                "total_tpt": total_throughput(model, link, cfg.rician(), cfg.count_idle_slots,
                                              cfg.eq3_as_printed),
            })
    return rows


def run_sweep(cfg: RunConfig) -> list[dict]:
    tasks = [(cfg, v) for v in cfg.sweep_values()]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(_sweep_point, tasks))
    else:
        parts = [_sweep_point(t) for t in tasks]
    return [r for p in parts for r in p]


def cmd_sweep(cfg: RunConfig) -> list[Path]:
    rows = run_sweep(cfg)
    return [write_csv(Path(cfg.out) / "sweep.csv", ["param", "value", "set", "M", "total_tpt"], rows)]


def cmd_validate_baseband(cfg: RunConfig) -> list[Path]:
    rows = baseband.fig1_rows(cfg.link(), cfg.n_symbols, cfg.seed)
    for r in rows:
        r["delta_db"] = r["empirical_db"] - r["analytical_db"]
    header = ["cancelled_others", "analytical_db", "empirical_db", "ci_db", "delta_db",
              "analytical_sinr", "empirical_sinr"]
    return [write_csv(Path(cfg.out) / "fig1.csv", header, rows)]


def table2_rows(cfg: RunConfig, link) -> list[dict]:
    rows = []
    for lb, (meas, model) in benchmarks.RESOLUTION_REF.items():
        try:
            chain = label_chain(lb, cfg.address_bits, cfg.address_model)
        except KeyError:
            got = None
        else:
            got = resolution_probability(chain, link, cfg.rician(), cfg.eq3_as_printed)
        rows.append({
            "label": lb, "measured": meas, "printed_model": model, "reproduced": got,
            "abs_dev": None if got is None else abs(got - model),
            "fit_target": lb in benchmarks.CALIBRATION_TARGETS,
        })
    return rows


def table1_rows(cfg: RunConfig, link) -> list[dict]:
    rows = []
    for M in sorted(benchmarks.MAC_THROUGHPUT_REF, reverse=True):
        model = cfg.address(M)
        mac = mac_throughput(model, cfg.count_idle_slots)
        tot = total_throughput(model, link, cfg.rician(), cfg.count_idle_slots, cfg.eq3_as_printed)
        rows.append({
            "M": M,
            "printed_mac": benchmarks.MAC_THROUGHPUT_REF[M], "reproduced_mac": mac,
            "mac_dev": abs(mac - benchmarks.MAC_THROUGHPUT_REF[M]),
            "printed_measured": benchmarks.MEASURED_THROUGHPUT_REF[M],
            "printed_model": benchmarks.MODEL_THROUGHPUT_REF[M], "reproduced_model": tot,
            "model_dev": abs(tot - benchmarks.MODEL_THROUGHPUT_REF[M]),
        })
    return rows


def cmd_report_tables(cfg: RunConfig) -> list[Path]:
    link = _calibrate(cfg)
    out = Path(cfg.out)
    t2 = table2_rows(cfg, link)
    t1 = table1_rows(cfg, link)
    sens = sensitivity_table()
    return [
        write_csv(out / "table1.csv", list(t1[0]), t1),
        write_csv(out / "table2.csv", list(t2[0]), t2),
        write_csv(out / "sensitivity.csv", list(sens[0]), sens),
    ]


COMMANDS = {
    "enumerate": cmd_enumerate,
    "throughput": cmd_throughput,
    "calibrate": cmd_calibrate,
    "sweep": cmd_sweep,
    "validate-baseband": cmd_validate_baseband,
    "report-tables": cmd_report_tables,
}

# flag dest -> config key
_FLAG_KEYS = {
    "seed": "seed", "out": "out", "users": "users", "address_bits": "address_bits",
    "address_model": "address_model", "param": "sweep_param", "from_": "sweep_from",
    "to": "sweep_to", "steps": "sweep_steps", "calibrate_free": "calibrate_free",
    "workers": "workers",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=str)
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--users", type=str, help="M or comma list of M")
    common.add_argument("--address-bits", type=str, help="address size u")
    common.add_argument("--address-model", type=str)
    common.add_argument("--param", type=str, choices=SWEEP_PARAMS)
    common.add_argument("--from", dest="from_", type=str)
    common.add_argument("--to", type=str)
    common.add_argument("--steps", type=str)
    common.add_argument("--calibrate-free", type=str, help="comma list, e.g. snr,sigma_v2")
    common.add_argument("--workers", type=str)
    common.add_argument("--eq3-as-printed", action="store_const", const="true")
    common.add_argument("--mgf-as-printed", action="store_const", const="true")
    common.add_argument("--count-idle-slots", dest="count_idle_slots", action="store_const", const="true")
    common.add_argument("--no-count-idle-slots", dest="count_idle_slots", action="store_const",
                        const="false")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help=f"override any config key ({', '.join(KEYS)})")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="iesic", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def config_from_args(args) -> RunConfig:
    cfg = load(args.config) if args.config else RunConfig()
    pairs = []
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest)
        if v is not None:
            pairs.append((key, v))
    for key in ("eq3_as_printed", "mgf_as_printed", "count_idle_slots"):
        v = getattr(args, key)
        if v is not None:
            pairs.append((key, v))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        k, v = item.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return apply_overrides(cfg, pairs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        paths = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(str(exc).splitlines()[0], file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: cannot read or write: {exc}", file=sys.stderr)
        return 2
    except CalibrationError as exc:
        print(f"calibration failed: {str(exc).splitlines()[0]}", file=sys.stderr)
        return 3
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())

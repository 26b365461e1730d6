"""Acceptance gate: one PASS/FAIL line per criterion.

Tolerances are fixed here and never relaxed. Lines are printed even when
output capture is on, so ``pytest -v`` shows the verdicts.
"""

import math
import time

import numpy as np
import pytest

from iesic import benchmarks, cli
from iesic.baseband import cancel_and_measure, synthesize_slot
from iesic.link_abstraction import rician_ser, rician_ser_mc
from iesic.montecarlo import mc_throughput, task_rng
from iesic.phy_model import CancellationContext, LinkParams, ssinr
from iesic.scenarios import (
    AddressModel,
    CalibrationError,
    calibrate_links,
    group_factor,
    label_chain,
    mac_throughput,
    resolution_probability,
    sensitivity_table,
    slotted_aloha_throughput,
    total_throughput,
)

MAC_TOL = 0.005
ALOHA_TOL = 0.0005
TABLE2_TOL = 0.07
TABLE1_TOL = 0.05
SSINR_TOL_DB = 0.5
EQUAL_TOL = 1e-6
SWEEP_SPREAD = 0.02
PLATEAU_RISE = 0.01

FALLBACK_BASE = LinkParams(1.0, 0.0, 0.001, 0.2, 0.1)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return emit


_calibrated = {}


def calibrated_link():
    """Fit on the two targets with the default free pair, else the documented fallback."""
    if not _calibrated:
        try:
            _calibrated["link"] = calibrate_links()
            _calibrated["how"] = "snr,sigma_v2"
        except CalibrationError as exc:
            _calibrated["default_error"] = exc.best_residual
            _calibrated["link"] = calibrate_links(free=("snr", "eps_cross"), base=FALLBACK_BASE)
            _calibrated["how"] = "snr,eps_cross (sigma_v2=0)"
    return _calibrated["link"]


def test_c01_mac_throughput(verdict):
    t0 = time.perf_counter()
    lit = {M: mac_throughput(AddressModel("distinct-uniform", 3, M)) for M in (2, 3, 4)}
    elapsed = time.perf_counter() - t0
    ref = benchmarks.MAC_THROUGHPUT_REF
    ok_lit = all(abs(lit[M] - ref[M]) <= MAC_TOL for M in ref)
    settings = {}
    for r in sensitivity_table():
        key = (r["address_model"], r["count_idle_slots"], r["u"])
        settings.setdefault(key, {})[r["M"]] = r["mac_tpt"]
    matching = [k for k, v in settings.items() if all(abs(v[M] - ref[M]) <= MAC_TOL for M in ref)]
    per_m = {M: [f"{k[0]}/u={k[2]}/idle={'on' if k[1] else 'off'}"
                 for k, v in settings.items() if abs(v[M] - ref[M]) <= MAC_TOL] for M in ref}
    ok = elapsed < 1.0 and (ok_lit or bool(matching))
    dflt = {M: mac_throughput(AddressModel("branch-split", 3, M)) for M in (2, 3, 4)}
    verdict(1, ok,
            f"u=3 distinct-uniform {[round(lit[M], 4) for M in (2, 3, 4)]} vs "
            f"{[ref[M] for M in (2, 3, 4)]} ({elapsed:.2f}s); branch-split u=3 "
            f"{[round(dflt[M], 4) for M in (2, 3, 4)]}; settings matching all M: {matching or 'none'}; "
            f"per-M matches {per_m}")
    assert ok


def test_c02_slotted_aloha(verdict):
    g = np.linspace(0, 5, 5001)
    s = slotted_aloha_throughput(g)
    peak, at = float(s.max()), float(g[s.argmax()])
    ok = abs(slotted_aloha_throughput(1.0) - 0.3679) <= ALOHA_TOL and abs(peak - 0.3679) <= ALOHA_TOL \
        and abs(at - 1.0) < 1e-3
    verdict(2, ok, f"G*exp(-G) at G=1 is {slotted_aloha_throughput(1.0):.5f}, grid peak {peak:.5f} at G={at:.3f}")
    assert ok


def test_c03_rician_mapping(verdict):
    t0 = time.perf_counter()
    zero = rician_ser(0.0, 4.0)
    grid = np.logspace(-2, 3, 100)
    vals = [rician_ser(g, 4.0) for g in grid]
    mono = all(a > b for a, b in zip(vals, vals[1:]))
    mc = []
    for i, g in enumerate((1.0, 10.0, 100.0)):
        p, se = rician_ser_mc(g, 4.0, 10_000_000, task_rng(2024, 3, i))
        mc.append((g, rician_ser(g, 4.0), p, se, abs(p - rician_ser(g, 4.0)) <= 3 * se))
    elapsed = time.perf_counter() - t0
    ok = zero == 0.75 and mono and all(m[-1] for m in mc) and elapsed < 60
    detail = "; ".join(f"g={g:g} quad {q:.6f} mc {p:.6f}+-{se:.1e}" for g, q, p, se, _ in mc)
    verdict(3, ok, f"ser(0)={zero}, monotone={mono}, {detail} ({elapsed:.1f}s)")
    assert ok


def test_c04_table2_model_column(verdict):
    t0 = time.perf_counter()
    link = calibrated_link()
    fit = {lb: resolution_probability(label_chain(lb), link) for lb in benchmarks.CALIBRATION_TARGETS}
    fit_ok = all(abs(fit[lb] - t) <= 1e-4 for lb, t in benchmarks.CALIBRATION_TARGETS.items())
    errs = {}
    for lb, (_meas, model) in benchmarks.RESOLUTION_REF.items():
        if lb in benchmarks.CALIBRATION_TARGETS:
            continue
        errs[lb] = resolution_probability(label_chain(lb), link) - model
    worst = max(errs, key=lambda k: abs(errs[k]))
    misses = sorted(lb for lb, e in errs.items() if abs(e) > TABLE2_TOL)
    same_shape = label_chain("21").signature() == label_chain("3121").signature()
    p21 = resolution_probability(label_chain("21"), link)
    p3121 = resolution_probability(label_chain("3121"), link)
    pair_ok = abs(p21 - p3121) <= EQUAL_TOL if same_shape else True
    elapsed = time.perf_counter() - t0
    ok = fit_ok and not misses and pair_ok and elapsed < 60
    note = "" if "default_error" not in _calibrated else \
        f"default snr/sigma_v2 fit infeasible (residual {_calibrated['default_error']:.3f}); "
    verdict(4, ok,
            f"{note}fit {_calibrated['how']}: {link}; {len(errs)} predictions, worst {worst} "
            f"{errs[worst]:+.3f}, outside +-{TABLE2_TOL}: {misses}; 21 vs 3121 chains "
            f"{'identical' if same_shape else 'differ'}: {p21:.6f} vs {p3121:.6f} "
            f"(discrepancy {p21 - p3121:.2e} reported)")
    assert ok


def test_c05_table1_model_column(verdict):
    link = calibrated_link()
    got = {M: total_throughput(AddressModel("branch-split", 3, M), link) for M in (2, 3, 4)}
    ref = benchmarks.MODEL_THROUGHPUT_REF
    ok = all(abs(got[M] - ref[M]) <= TABLE1_TOL for M in ref)
    detail = ", ".join(f"M={M} {got[M]:.4f} vs {ref[M]} (d={got[M] - ref[M]:+.4f})" for M in (2, 3, 4))
    verdict(5, ok, f"calibrated {_calibrated['how']}: {detail}")
    assert ok


def ssinr_configs():
    """12 (gammas, |C|) cases: every |C| for |S| = 2, 3, 4 plus three unequal-power slots."""
    cases = [((1.0,) * s, c) for s in (2, 3, 4) for c in range(1, s + 1)]
    cases += [((1.0, 0.6, 0.3), c) for c in (1, 2, 3)]
    return cases


def test_c06_ssinr_oracle(verdict):
    t0 = time.perf_counter()
    worst, fails, rows = 0.0, 0, []
    for idx, (gammas, n_c) in enumerate(ssinr_configs()):
        links = {k: LinkParams(g, 0.001, 0.001, 0.2, 0.1) for k, g in enumerate(gammas)}
        slot = synthesize_slot({k: (lk, 100 + k) for k, lk in links.items()}, seed=600 + idx,
                               n_symbols=100_000)
        cancelled = list(range(1, n_c))
        m = cancel_and_measure(slot, 0, cancelled, seed=700 + idx)
        ctx = CancellationContext(frozenset(links), frozenset(cancelled) | {0}, 0)
        d = m.sinr_db - 10 * math.log10(ssinr(ctx, links))
        worst = max(worst, abs(d))
        fails += abs(d) > SSINR_TOL_DB
        rows.append(f"{len(gammas)}/{n_c}:{d:+.3f}")
    elapsed = time.perf_counter() - t0
    ok = fails == 0 and elapsed < 300
    verdict(6, ok, f"12 configs |S|/|C|:dB-error {' '.join(rows)}; worst {worst:.3f} dB, "
                   f"CI ~0.03 dB ({elapsed:.1f}s)")
    assert ok


def test_c07_repeat_group_factor(verdict):
    ok = True
    for pd in (0.5, 0.9, 0.99):
        vals = [group_factor(pd, k) for k in range(1, 6)]
        ok &= all(v == 1 - (1 - pd) ** k for k, v in zip(range(1, 6), vals))
        ok &= all(a < b for a, b in zip(vals, vals[1:]))
    verdict(7, ok, "1-(1-Pd)^k exact and strictly increasing for Pd in {0.5,0.9,0.99}, k=1..5")
    assert ok


def test_c08_enumeration_vs_monte_carlo(verdict):
    t0 = time.perf_counter()
    link = calibrated_link()
    worst, bad, n = 0.0, [], 0
    for u in range(1, 6):
        for M in range(1, 5):
            if M > 2 ** u:
                continue
            m = AddressModel("branch-split", u, M)
            for j, (exact, links) in enumerate(((mac_throughput(m), None),
                                                (total_throughput(m, link), link))):
                est = mc_throughput(m, 1_000_000, task_rng(88, u, M, j), links=links)
                z = 0.0 if est.stderr == 0 else (est.mean - exact) / est.stderr
                n += 1
                worst = max(worst, abs(z))
                if not est.within(exact):
                    bad.append(f"u={u},M={M},{'total' if j else 'mac'} z={z:+.2f}")
    ok = not bad
    verdict(8, ok, f"{n} comparisons at 1e6 trials, worst |z|={worst:.2f}, outside 3 sigma: "
                   f"{bad or 'none'} ({time.perf_counter() - t0:.0f}s)")
    assert ok


def test_c09_sweep_properties(verdict):
    from iesic.config import apply_overrides, RunConfig

    cfg = apply_overrides(RunConfig(), [("sweep_param", "sigma_v2"), ("sweep_from", "0.03"),
                                        ("sweep_to", "0.1"), ("sweep_steps", "8")])
    data = [r for r in cli.run_sweep(cfg) if r["set"] == "ideal"]
    spread = 0.0
    for v in sorted({r["value"] for r in data}):
        t = [r["total_tpt"] for r in data if r["value"] == v]
        spread = max(spread, max(t) - min(t))
    cfg = apply_overrides(RunConfig(), [("sweep_param", "channel_gain"), ("sweep_from", "0.01"),
                                        ("sweep_to", "0.05"), ("sweep_steps", "9")])
    data = [r for r in cli.run_sweep(cfg) if r["set"] == "measured"]
    rise = 0.0
    top = 0.0
    for M in cfg.users:
        t = [r["total_tpt"] for r in data if r["M"] == M]
        rise = max(rise, max(t) - t[0])
        top = max(top, max(t))
    ok = spread <= SWEEP_SPREAD and rise < PLATEAU_RISE
    verdict(9, ok, f"ideal sigma_v2>=0.03 max spread {spread:.3g}; measured |h|>=0.01 max rise "
                   f"{rise:.3g} (throughput level at most {top:.3g}, so both checks hold at a near-zero level)")
    assert ok


def test_c10_determinism(verdict, tmp_path):
    commands = [
        ["enumerate"],
        ["throughput", "--set", "mc_trials=20000"],
        ["sweep", "--steps", "3"],
        ["validate-baseband", "--set", "n_symbols=5000"],
        ["calibrate", "--calibrate-free", "snr,eps_cross", "--set", "sigma_v2=0"],
    ]
    same = True
    names = []
    for cmd in commands:
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / f"{cmd[0]}_{rep}"
            assert cli.main([*cmd, "--seed", "17", "--out", str(d)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
        same &= outs[0] == outs[1] and bool(outs[0])
        names += list(outs[0])
    verdict(10, same, f"byte-identical reruns for {', '.join(names)}")
    assert same

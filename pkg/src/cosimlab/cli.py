"""Command line: ``cosimlab simulate|analyze|design --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 simulation diverged,
4 a stability verdict was marginal, 5 design did not improve.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .compensator import ExtrapolatorParams, all_region_params, init_from_linear, save_weights
from .design import band_errors, objective, optimize
from .freq import (aliasing_check, derive_plant_tf, empirical_frequency_response, eval_Gp, log_grid,
                   nyquist_verdict, open_loop_curve, OracleError)
from .metrics import amplitude_ratio, overshoot_factor, window_amplitudes
from .core import run_cosim
from .twomass import make_compensators, make_plants, make_trainers

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_MARGINAL = 4
EXIT_NO_IMPROVEMENT = 5

log = logging.getLogger("cosimlab")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def _compensation_laws(cfg: cfgmod.ScenarioFile) -> dict:
    """Linear laws the configured compensator realises, keyed by curve label."""
    sc = cfg.scenario()
    kind = sc.compensator_kind
    if kind == "zoh":
        return {"compensation": ExtrapolatorParams.zoh(sc.history_len)}
    if kind == "foh":
        return {"compensation": ExtrapolatorParams.foh(sc.delay_steps, max(sc.history_len, 2))}
    if kind == "linear_ar":
        return {"compensation": cfg.extrapolator()}
    setup = cfg.compensator_setup()
    net = setup.net or init_from_linear(setup.params, setup.slope)
    regions = all_region_params(net)
    return {"compensation_region_" + "".join("1" if on else "0" for on in pat): law
            for pat, law in regions.items()}


def cmd_simulate(cfg: cfgmod.ScenarioFile, out: Path) -> int:
    sc = cfg.scenario()
    t0 = time.perf_counter()
    plants = make_plants(sc, cfg.oscillator(), cfg.x0(), cfg.stop())
    comps = make_compensators(sc, cfg.compensator_setup())
    trainers = make_trainers(sc, comps, cfg.trainer_config(), cfg["training"]["deterministic"])
    trace = run_cosim(sc, plants, comps, trainers)
    elapsed = time.perf_counter() - t0

    for name, ch in trace.channels.items():
        _write_csv(out / f"channel_{name}.csv", ["time", "sent", "delayed", "compensated"],
                   zip(trace.time.tolist(), ch.sent.tolist(), ch.delayed.tolist(), ch.compensated.tolist()))
    for name, st in trace.states.items():
        _write_csv(out / f"state_{name}.csv", ["time", "x", "v"],
                   zip(trace.state_time.tolist(), st[:, 0].tolist(), st[:, 1].tolist()))
    _write_csv(out / "events.csv", ["time", "v_before", "v_after"],
               [(e.time, e.v_before, e.v_after) for e in trace.events])
    _write_csv(out / "training.csv",
               ["channel", "trigger_step", "apply_step", "n_samples", "loss_before", "loss_after", "accepted"],
               [(c.channel, c.trigger_step, c.apply_step, c.n_samples, c.loss_before, c.loss_after,
                 int(c.accepted)) for c in trace.training_log])
    if sc.compensator_kind == "network":
        for name, comp in comps.items():
            save_weights(comp.net, out / f"weights_{name}.txt")
    window = min(cfg["output"]["window"], sc.duration / 2)
    x1 = trace.states["mass1"][:, 0]
    amps = window_amplitudes(trace.state_time, x1, window) if not trace.diverged else np.array([])
    ratio = amplitude_ratio(trace.state_time, x1, window) if not trace.diverged else float("nan")
    bounces = []
    for e in trace.events:
        f = overshoot_factor(trace, "v1", e.time, sc.delay_steps, sc.history_len)
        bounces.append({"time": e.time, "v_before": e.v_before, "v_after": e.v_after,
                        "overshoot_factor": f})
    summary = {
        "duration": sc.duration,
        "wall_time_s": elapsed,
        "diverged": trace.diverged,
        "diverged_at": trace.diverged_at,
        "amplitude_window_s": window,
        "amplitude_first": float(amps[0]) if amps.size else None,
        "amplitude_last": float(amps[-1]) if amps.size else None,
        "amplitude_ratio": None if math.isnan(ratio) else ratio,
        "trend": "diverged" if trace.diverged else ("growing" if ratio > 1 else "decaying"),
        "bounces": bounces,
        "training_cycles": len(trace.training_log),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"simulated {sc.duration:g} s in {elapsed:.1f} s; x1 amplitude "
          f"{summary['amplitude_first']} -> {summary['amplitude_last']} ({summary['trend']})")
    for b in bounces[:5]:
        f = b["overshoot_factor"]
        print(f"bounce at {b['time']:.4f} s, overshoot factor {'n/a' if f is None else format(f, '.4f')}")
    if trace.diverged:
        print(f"diverged at t = {trace.diverged_at:g} s", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_analyze(cfg: cfgmod.ScenarioFile, out: Path) -> int:
    sc = cfg.scenario()
    an = cfg["analysis"]
    dT, tau = sc.macro_step, sc.delay
    plants = derive_plant_tf(cfg.oscillator())
    curves = {"reference": None, "faults": ExtrapolatorParams.zoh(1)}
    curves.update(_compensation_laws(cfg))
    report = {"curves": {}}
    marginal = False
    for label, law in curves.items():
        curve = open_loop_curve(plants, law, dT, tau, an["grid_min"], None, an["grid_points"], label)
        curve.to_csv(out / f"nyquist_{label}.csv")
        v = nyquist_verdict(curve, eps=an["marginal_eps"])
        marginal |= v.verdict == "marginal"
        report["curves"][label] = {"verdict": v.verdict, "encirclements": v.encirclements,
                                   "unstable_poles": v.unstable_poles, "min_distance": v.min_distance,
                                   "coefficients": None if law is None else [float(x) for x in law.a],
                                   "bias": None if law is None else law.b}
        print(f"{label}: {v.verdict} (N = {v.encirclements}, min |L + 1| = {v.min_distance:.3g})")

    alias = aliasing_check(cfg["design"]["band_max"], dT, an["aliasing_margin"])
    report["aliasing"] = {"ratio": alias.ratio, "margin": alias.margin, "ok": alias.ok}
    print(f"aliasing: w_max*dT = {alias.ratio:.4g} vs margin {alias.margin:.4g} -> {'ok' if alias.ok else 'FAIL'}")

    w = log_grid(an["empirical_min"], an["empirical_max"], an["empirical_points"])
    rows, worst_mag, worst_ph = [], 0.0, 0.0
    for label, law in curves.items():
        if law is None:
            continue
        g = eval_Gp(w, law, dT, tau)
        for wi, gi in zip(w, g):
            try:
                ge = empirical_frequency_response(law, dT, sc.delay_steps, float(wi))
            except OracleError as exc:
                log.warning("%s", exc)
                ge = complex("nan")
            rows.append((label, float(wi), gi.real, gi.imag, ge.real, ge.imag))
            worst_mag = max(worst_mag, abs(abs(ge) / abs(gi) - 1))
            worst_ph = max(worst_ph, abs(math.degrees(np.angle(ge / gi))))
    _write_csv(out / "coupling_process.csv",
               ["curve", "omega", "analytic_re", "analytic_im", "empirical_re", "empirical_im"], rows)
    report["coupling_process_check"] = {"max_rel_mag_error": worst_mag, "max_phase_error_deg": worst_ph}
    print(f"G_p analytic vs sampled: max |mag| error {worst_mag:.2e}, max phase error {worst_ph:.2e} deg")
    (out / "analysis.json").write_text(json.dumps(report, indent=2))
    return EXIT_MARGINAL if marginal else EXIT_OK


def cmd_design(cfg: cfgmod.ScenarioFile, out: Path) -> int:
    spec = cfg.design_spec()
    t0 = time.perf_counter()
    res = optimize(spec, n_starts=cfg["design"]["starts"], seed=cfg["run"]["seed"])
    elapsed = time.perf_counter() - t0
    zoh = objective(ExtrapolatorParams.zoh(spec.p), spec)
    phase, mag = band_errors(res.params, spec)
    report = {
        "a": [float(x) for x in res.params.a], "b": res.params.b,
        "J": vars(res.breakdown), "J_zoh": vars(zoh), "improved": res.improved,
        "band_max_phase_deg": phase, "band_max_mag_error": mag, "wall_time_s": elapsed,
    }
    (out / "design_report.json").write_text(json.dumps(report, indent=2))
    designed = cfgmod.loads(cfg.dumps(), env={})
    designed["compensator"]["kind"] = "linear_ar"
    designed["compensator"]["a"] = report["a"]
    designed["compensator"]["b"] = res.params.b
    designed["compensator"]["weights_file"] = ""
    designed.write(out / "design.ini")
    print(f"a = {report['a']}, b = {res.params.b:.6g}")
    print(f"J = {res.breakdown.J_total:.6g} (zero-order hold: {zoh.J_total:.6g}); "
          f"in band max |phase| {phase:.3g} deg, max | |G_p|-1 | {mag:.3g}; {elapsed:.1f} s")
    print(f"wrote {out / 'design.ini'} (usable with: cosimlab simulate --config {out / 'design.ini'})")
    return EXIT_OK if res.improved else EXIT_NO_IMPROVEMENT


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "design": cmd_design}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cosimlab", description="Delay-compensated co-simulation of a two-mass oscillator.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI scenario file (defaults are used for missing keys)")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--seed", type=int, help="overrides [run] seed")
    ap.add_argument("--deterministic-training", action="store_true",
                    help="train inline with fixed hand-off steps (bit-reproducible)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.loads("")
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.deterministic_training:
            cfg["training"]["deterministic"] = True
        if args.out:
            cfg["output"]["directory"] = args.out
        cfg.validate()
        if cfg["compensator"]["weights_file"]:
            cfg.compensator_setup()
    except cfgmod.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, out)


if __name__ == "__main__":
    sys.exit(main())

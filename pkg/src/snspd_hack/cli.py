"""``snspd-hack`` command line: one subcommand per experiment, each writing CSV/JSON plus a manifest.

Exit status: 0 success, 1 configuration error, 2 infeasible or failed experiment.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, analysis, attack, countermeasure, optimizer
from .config import RunConfig, load_config, manifest_dict, write_manifest
from .engine import export_record, simulate
from .errors import ConfigError, ModelDomainError
from .presets import all_presets
from .stimulus import DEFAULT_SETTLE, OpticalWaveform, build_control_diagram, photon_energy

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


class ExperimentFailed(RuntimeError):
    pass


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _dump(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
    return path


# --- subcommands ---------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    """Single-photon pulse, or the blinded detector with one fake click at t = 0."""
    blk = cfg.block("simulate")
    mode = blk["mode"]
    thr = analysis.default_threshold(cfg.device, cfg.circuit)
    if mode == "photon":
        w = OpticalWaveform((), ((blk["t_photon"], photon_energy(1550e-9)),))
        span = (0.0, blk["span"])
    elif mode == "attack":
        b0 = -DEFAULT_SETTLE
        w, _ = build_control_diagram(cfg.attack, [0.0], b0, blk["span"] / 2)
        span = (b0 - 50e-9, blk["span"] / 2)
    else:
        raise ConfigError(f"[simulate] mode must be 'photon' or 'attack', got {mode!r}")
    rec = simulate(cfg.device, cfg.circuit, w, span, cfg.dt, cfg.seed)
    files = export_record(rec, out, mode, manifest_dict(cfg))
    clicks = analysis.discriminate(rec.trace, thr)
    p = out / f"{mode}_clicks.csv"
    clicks.to_csv(p)
    p2 = out / f"{mode}_optical.csv"
    w.to_csv(p2)
    return files + [p, p2]


def cmd_attack(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    blk = cfg.block("scenario")
    sc = attack.AttackScenario(blk["clicks_det0"], blk["clicks_det1"], cfg.attack,
                               (blk["blind_start"], blk["blind_end"]))
    rep = attack.run_scenario(sc, cfg.device, cfg.circuit, cfg.seed, cfg.dt)
    files = rep.export(out, manifest_dict(cfg))
    w0, w1 = attack.compile_scenario(sc)
    for k, w in enumerate((w0, w1)):
        p = out / f"det{k}_optical.csv"
        w.to_csv(p)
        files.append(p)
    ok = all(d.n_matched == d.n_planned and d.n_extra == 0 and d.n_premature == 0 for d in rep.detectors)
    if blk["trials"] > 0:
        summ = attack.scenario_trials(sc, cfg.device, cfg.circuit, blk["trials"], cfg.seed, cfg.dt)
        files.append(_dump(out / "trials.json", summ.to_dict()))
        ok = ok and summ.n_matched == summ.n_planned and sum(summ.n_extra) == 0 and sum(summ.n_premature) == 0
    if not ok:
        raise ExperimentFailed("planned clicks were missed or unplanned clicks occurred; see attack_report.json")
    return files


def cmd_optimize(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    blk = cfg.block("optimizer")
    bounds = optimizer.Bounds(tuple(blk["p_blind_bounds"]), tuple(blk["tau_off_bounds"]),
                              tuple(blk["tau_rearm_bounds"]))
    res = optimizer.optimize(bounds, cfg.device, cfg.circuit, blk["budget"], cfg.seed, blk["trials"],
                             cfg.attack, blk["grid_points"], blk["n_clicks"], cfg.dt)
    p1, p2 = out / "search_log.csv", out / "best.json"
    res.write_log(p1)
    res.write_best(p2)
    if not res.feasible:
        raise ExperimentFailed("no feasible point found within the budget; best infeasible point written")
    return [p1, p2]


def cmd_jitter(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    blk = cfg.block("jitter")
    real = analysis.single_photon_jitter(cfg.device, cfg.circuit, blk["n_photons"], blk["spacing"], cfg.seed,
                                         blk["bin"], cfg.dt)
    stats = analysis.fake_click_determinism(cfg.device, cfg.circuit, cfg.attack, blk["n_fakes"], blk["trials"],
                                            cfg.seed, cfg.dt, return_stats=True)
    fake = analysis.jitter_from_delays(stats.delays, blk["bin"], int(round((1 - stats.p_click) * stats.n_planned)))
    files = []
    for name, r in (("real", real), ("fake", fake)):
        p = out / f"jitter_{name}.csv"
        r.to_csv(p)
        files.append(p)
    files.append(_dump(out / "jitter.json", {"real": real.summary(), "fake": fake.summary()}))
    return files


def _afterpulse_point(args):
    cfg, d = args
    blk = cfg.block("afterpulse")
    return analysis.afterpulse_probability(cfg.device, cfg.circuit, cfg.attack, d, blk["rep_period"],
                                           blk["trials"], cfg.seed, cfg.dt)


def cmd_afterpulse(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    blk = cfg.block("afterpulse")
    ds = list(blk["blind_durations"])
    probs = _map(_afterpulse_point, [(cfg, d) for d in ds], jobs)
    p = out / "afterpulse.csv"
    with open(p, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["blind_duration_s", "duty", "probability", "per_fake_at_max_rate"])
        for d, pr in zip(ds, probs):
            n_fakes = max(1, int(d // cfg.attack.period))
            w.writerow([repr(d), repr(d / blk["rep_period"]), repr(pr), repr(pr / n_fakes)])
    return [p]


def cmd_countermeasure(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    blk = cfg.block("countermeasure")
    res = blk["resolution"] * 1e3 or None
    sweep = countermeasure.v2_sweep(cfg.device, cfg.circuit, blk["duty_grid"], cfg.attack, cfg.seed,
                                    quiescent_mv=blk["quiescent"] * 1e3, resolution_mv=res,
                                    alarm_mv=blk["alarm"] * 1e3, dt=cfg.dt)
    dc = cfg.circuit.replace(f_hp="dc")
    shape = countermeasure.shape_discrimination(cfg.device, dc, cfg.attack, blk["n_pulses"], cfg.seed, dt=cfg.dt)
    ev = countermeasure.evasion(cfg.device, cfg.circuit, cfg.attack, blk["evasion_duty"], blk["photon_rate"],
                                seed=cfg.seed, alarm_mv=blk["alarm"] * 1e3, dt=cfg.dt)
    p1 = out / "countermeasure.json"
    countermeasure.write_report(p1, sweep, shape, ev)
    p2 = out / "roc.csv"
    countermeasure.write_roc(shape.roc, p2)
    p3 = out / "v2.csv"
    with open(p3, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["duty", "v2_mV", "alarm"])
        for d, v, a in zip(sweep.duty, sweep.mv, sweep.alarms()):
            w.writerow([repr(d), repr(v), int(a)])
    return [p1, p2, p3]


def cmd_presets(cfg: RunConfig, out: Path, jobs: int) -> list[Path]:
    data = [p.to_dict() for p in all_presets()]
    for d in data:
        print(f"{d['name']}: {d['device']['device_class']}, i_c = {d['device']['i_c']:.4g} A, "
              f"l_k = {d['device']['l_k']:.3g} H, noise_rms = {d['circuit']['noise_rms']:.4g} V")
    return [_dump(out / "presets.json", data)]


COMMANDS = {
    "simulate": (cmd_simulate, "single-photon or fake-click trace (overlay-ready CSV)"),
    "attack": (cmd_attack, "two-detector faked-state scenario"),
    "optimize": (cmd_optimize, "search attack parameters"),
    "jitter": (cmd_jitter, "timing histograms of real and fake clicks"),
    "afterpulse": (cmd_afterpulse, "afterpulse probability against blinding duration"),
    "countermeasure": (cmd_countermeasure, "V2 monitor sweep, shape classifier, evasion"),
    "presets": (cmd_presets, "list the device presets with provenance flags"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snspd-hack", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("-c", "--config", help="INI configuration (a manifest.ini also works)")
        sp.add_argument("-o", "--out", default=f"runs/{name}", help="output directory (default: %(default)s)")
        sp.add_argument("--preset", help="override [run] preset")
        sp.add_argument("--seed", type=int, help="override [run] seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps (default: 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, _ = COMMANDS[args.command]
    try:
        text = Path(args.config).read_text() if args.config else ""
        extra = []
        if args.preset is not None:
            extra.append(f"preset = {args.preset}")
        if args.seed is not None:
            extra.append(f"seed = {args.seed}")
        if extra:
            text = _override_run(text, extra)
        cfg = load_config(args.config, text=text, command=args.command)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = fn(cfg, out, max(1, args.jobs))
        write_manifest(cfg, out, files)
    except (ConfigError, ModelDomainError, OSError) as exc:
        print(f"snspd-hack: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentFailed as exc:
        write_manifest(cfg, out)
        print(f"snspd-hack: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    print(f"wrote {len(files) + 1} files to {out}")
    return EXIT_OK


def _override_run(text: str, lines: list[str]) -> str:
    # command-line overrides go into a trailing [run] block; configparser
    # rejects duplicate sections, so merge into an existing one
    keys = {ln.split("=")[0].strip() for ln in lines}
    out, in_run, done = [], False, False
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("["):
            if in_run and not done:
                out += lines
                done = True
            in_run = s == "[run]"
        elif in_run and s.split("=")[0].strip() in keys:
            continue
        out.append(ln)
    if in_run and not done:
        out += lines
        done = True
    if not done:
        out += ["[run]"] + lines
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    sys.exit(main())

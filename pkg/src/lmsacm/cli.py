"""Command-line front end: ``lms-acm {calibrate,run,validate,trace}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime/numeric
error or failed validation check.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__, channel, esm, rtnlink, sim
from .channel import ConfigError

log = logging.getLogger("lmsacm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", type=Path, required=config_required, help="campaign YAML file")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed override (u64)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweep points")
    p.add_argument("--quiet", action="store_true", help="only print errors")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lms-acm", description="ACM for land mobile satellite links")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="build MI tables and fit exponential ESM parameters")
    _common(p)
    p.add_argument("--constellations", nargs="+", default=list(esm.CONSTELLATION_NAMES),
                   choices=list(esm.CONSTELLATION_NAMES))

    p = sub.add_parser("run", help="run a Monte Carlo campaign")
    _common(p, config_required=True)
    p.add_argument("--decision-log", action="store_true",
                   help="return link: also write per-burst decision logs")

    p = sub.add_parser("validate", help="run numerical oracle and invariant checks")
    _common(p)
    p.add_argument("--env", nargs="*", type=Path, default=[], help="extra environment files to check")
    p.add_argument("--ks-threshold", type=float, default=0.05, help="log-normal fit KS limit")

    p = sub.add_parser("trace", help="write a channel trace CSV")
    _common(p)
    p.add_argument("--env", default="its", help="built-in name or YAML path")
    p.add_argument("--speed", type=float, default=10.0, help="m/s")
    p.add_argument("--los-snr-db", type=float, default=10.0)
    p.add_argument("--symbols", type=int, default=81_000)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        log.error("--seed must be a 64-bit unsigned integer")
        return EXIT_CONFIG
    try:
        return {"calibrate": cmd_calibrate, "run": cmd_run, "validate": cmd_validate, "trace": cmd_trace}[
            args.command
        ](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_RUNTIME
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        log.error("runtime error: %s", exc)
        return EXIT_RUNTIME


def _outdir(args, default: Path) -> Path:
    out = args.out or default
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# calibrate
# --------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    out = _outdir(args, channel.data_dir())
    fits = []
    for name in args.constellations:
        table = esm.build_mi_table(esm.constellation(name))
        esm.mi_table_path(name, out).write_text(table.to_csv())
        for variant in ("one-term", "two-term"):
            f = esm.calibrate_exp_approx(table, variant)
            fits.append(f)
            log.info("%-6s %-8s max |dPhi| = %.4g  rms = %.4g", name, variant, f.max_abs_error, f.rms_error)
    esm.exp_approx_path(out).write_text(esm.exp_approx_to_json(fits))
    log.info("wrote %d table(s) and %s", len(args.constellations), esm.exp_approx_path(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def cmd_run(args) -> int:
    camp = sim.Campaign.load(args.config, seed=args.seed)
    camp.threads = args.threads
    out = _outdir(args, Path("results"))
    comment = f"seed={camp.seed} config_hash={camp.config_hash} link={camp.link}"
    logs = {} if (args.decision_log and camp.link == "rl") else None
    if logs is not None:
        results = _run_rl_with_logs(camp, logs)
    else:
        results = sim.run_campaign(camp)
    sim.write_results_csv(out / "results.csv", results, comment)
    written = [out / "results.csv"]
    if camp.link == "fl":
        written += write_fl_plot_data(out, results, camp, comment)
    else:
        written += write_rl_plot_data(out, results, comment)
    if logs:
        for (speed, snr, method, pen), rows in sorted(logs.items()):
            path = out / f"decisions_v{_tag(speed)}_snr{_tag(snr)}_{method}_pen{pen}.csv"
            rtnlink.write_decision_log(path, rows, comment)
            written.append(path)
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


def _run_rl_with_logs(camp: sim.Campaign, logs: dict) -> list:
    mu, theta2 = sim.rl_state_params(camp.env, camp.rl_state)
    results = []
    for i, (speed, snr) in enumerate(camp.points()):
        point_log: dict = {}
        params = rtnlink.RicianLinkParams.from_mean_snr(mu, theta2, snr)
        results += sim.run_rl_point(
            params, camp.mobility(speed), camp.modcods, camp.p_out, camp.codewords, camp.codeword_length,
            sim.RngStream(camp.seed, i + 1), methods=camp.methods, penalizations=camp.penalizations,
            window=camp.window, channel=camp.channel, los_snr_db=snr, decision_log=point_log,
        )
        for (method, pen), rows in point_log.items():
            logs[(speed, snr, method, pen)] = rows
    return results


def _tag(x: float) -> str:
    return f"{x:g}".replace("-", "m").replace(".", "p")


def _write_wide(path: Path, comment: str, xname: str, xs, columns: dict) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        names = list(columns)
        w.writerow([xname] + names)
        for i, x in enumerate(xs):
            w.writerow([sim._fmt(float(x))] + [sim._fmt(float(columns[n][i])) for n in names])
    return path


def write_fl_plot_data(out: Path, results, camp: sim.Campaign, comment: str) -> list[Path]:
    """ASE versus LOS SNR (one series per speed and scheme) and outage versus speed."""
    idx = {(r.speed, r.los_snr_db, r.method): r for r in results}
    snrs, speeds = camp.los_snr_db, camp.speeds
    ase_cols, out_cols = {}, {}
    for v in speeds:
        for m in ("mlc", "slc"):
            rs = [idx[(v, s, m)] for s in snrs]
            ase_cols[f"{m}_ase_v{v:g}"] = [r.achieved_ase for r in rs]
            ase_cols[f"{m}_ase_ci_v{v:g}"] = [r.ase_ci for r in rs]
            if v == speeds[0]:
                ase_cols[f"{m}_ase_analytic"] = [r.predicted_ase for r in rs]
    for s in snrs:
        rs = [idx[(v, s, "mlc")] for v in speeds]
        out_cols[f"mlc_outage_snr{s:g}"] = [r.achieved_outage for r in rs]
        out_cols[f"mlc_outage_ci_snr{s:g}"] = [r.outage_ci for r in rs]
    out_cols["target"] = [camp.p_out] * len(speeds)
    return [
        _write_wide(out / "fig_fl_ase_vs_snr.csv", comment, "los_snr_db", snrs, ase_cols),
        _write_wide(out / "fig_fl_outage_vs_speed.csv", comment, "speed", speeds, out_cols),
    ]


def write_rl_plot_data(out: Path, results, comment: str) -> list[Path]:
    """Outage and ASE versus average SNR, one series per (speed, method, penalization)."""
    series = defaultdict(dict)
    snrs = sorted({r.los_snr_db for r in results})
    for r in results:
        series[(r.speed, r.method, r.penalization)][r.los_snr_db] = r
    o_cols, a_cols = {}, {}
    for (v, m, pen), by_snr in sorted(series.items()):
        tag = f"{m}_pen{pen}_v{v:g}"
        rs = [by_snr[s] for s in snrs]
        o_cols[f"outage_{tag}"] = [r.achieved_outage for r in rs]
        o_cols[f"outage_ci_{tag}"] = [r.outage_ci for r in rs]
        a_cols[f"ase_{tag}"] = [r.achieved_ase for r in rs]
        a_cols[f"ase_ci_{tag}"] = [r.ase_ci for r in rs]
    return [
        _write_wide(out / "fig_rl_outage_vs_snr.csv", comment, "avg_snr_db", snrs, o_cols),
        _write_wide(out / "fig_rl_ase_vs_snr.csv", comment, "avg_snr_db", snrs, a_cols),
    ]


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def _check(report: list, name: str, ok: bool, detail: str) -> None:
    report.append((name, bool(ok), detail))
    (log.info if ok else log.error)("%s %-34s %s", "PASS" if ok else "FAIL", name, detail)


def cmd_validate(args) -> int:
    from scipy import integrate, stats
    from scipy.special import i0e

    from .mathx import RngStream, marcum_q1

    seed = 1 if args.seed is None else args.seed
    report: list = []

    # Marcum Q against direct integration of the Rician density tail
    worst = 0.0
    for a in (0.0, 0.5, 2.0, 5.0, 9.0):
        for b in (0.1, 1.0, 3.0, 6.0, 10.0):
            f = lambda r: r * math.exp(-0.5 * (r - a) ** 2) * i0e(a * r)
            ref = integrate.quad(f, b, math.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
            worst = max(worst, abs(float(marcum_q1(a, b)) - ref))
    _check(report, "marcum_q1 vs quadrature", worst <= 1e-8, f"max abs err {worst:.2e}")

    # closed-form exponential moments against sampling
    rng = RngStream(seed, 101).generator
    p = rtnlink.RicianLinkParams(1.0, 0.25, 1.0)
    e1, e2 = rtnlink.exp_mi_moments(p, 1.0)
    x = rng.noncentral_chisquare(2, p.lam, 400_000) * p.zeta**2
    r1 = abs(np.mean(np.exp(-x)) / e1 - 1)
    r2 = abs(np.mean(np.exp(-2 * x)) / e2 - 1)
    _check(report, "exp moments vs sampling", max(r1, r2) <= 0.01, f"rel err {r1:.2e}, {r2:.2e}")

    # log-normal fit quality on simulated bursts
    env = channel.builtin_environment("its")
    mu, theta2 = sim.rl_state_params(env, 2)
    prm = rtnlink.RicianLinkParams.from_mean_snr(mu, theta2, 10.0)
    mob = channel.MobilityConfig(40.0)
    beta = esm.load_exp_approx("QPSK").beta
    g = sim.burst_effective_snrs(prm, mob, 2000, 8100, {"QPSK": beta}, RngStream(seed, 102))["QPSK"]
    ln = rtnlink.lognormal_from_moments(float(np.mean(g)), float(np.mean(g * g)), "sample-moments")
    ks = stats.kstest(g, ln.cdf).statistic
    _check(report, "log-normal fit KS", ks <= args.ks_threshold, f"KS {ks:.4f} (limit {args.ks_threshold})")

    # environment invariants
    for name in channel.builtin_environment_names():
        _env_check(report, f"env {name}", lambda n=name: channel.builtin_environment(n))
    for path in args.env:
        _env_check(report, f"env {path}", lambda p=path: channel.EnvironmentModel.load(p))

    failed = [r for r in report if not r[1]]
    if args.out is not None:
        out = _outdir(args, args.out)
        with open(out / "validate.csv", "w", newline="") as fh:
            fh.write(f"# seed={seed}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "passed", "detail"])
            w.writerows([(n, int(ok), d) for n, ok, d in report])
    log.info("%d/%d checks passed", len(report) - len(failed), len(report))
    return EXIT_RUNTIME if failed else EXIT_OK


def _env_check(report, name, loader) -> None:
    try:
        env = loader()
        pi = channel.stationary_distribution(env.transition_matrix)
        dev = float(np.max(np.abs(pi - env.state_probs)))
        _check(report, name, dev <= 1e-6, f"{env.num_states} states, stationary dev {dev:.1e}")
    except ConfigError as exc:
        _check(report, name, False, str(exc))


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------


def cmd_trace(args) -> int:
    from .mathx import RngStream

    env = sim._resolve_env(args.env, Path.cwd())
    if args.symbols < 1:
        raise ConfigError("--symbols must be >= 1")
    seed = 1 if args.seed is None else args.seed
    mob = channel.MobilityConfig(args.speed)
    noise = 10.0 ** (-args.los_snr_db / 10.0)
    tr = channel.generate_trace(env, mob, noise, 1, args.symbols, RngStream(seed, 0))
    out = _outdir(args, Path("."))
    path = out / f"trace_{env.name}_v{_tag(args.speed)}.csv"
    tr.to_csv(path, f"seed={seed} env={env.name} speed={args.speed:g} los_snr_db={args.los_snr_db:g}")
    log.info("wrote %s", path)
    return EXIT_OK

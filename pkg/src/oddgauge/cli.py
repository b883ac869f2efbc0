"""Command-line entry point ``oddgauge``.

Subcommands and exit codes::

    harmonics-selftest   0 all identities hold, 1 otherwise
    certify [FILTER]     0 all certified, 1 some failed, 2 some inconclusive
    evolve CONFIG        0 ok, 64 bad config, 70 instability (partial output kept)
    report CSV LO HI     0 ok, 65 unreadable CSV or empty window

Floats are written with 17 significant digits and LF line endings, so equal
inputs give byte-identical files.  ``ODDGAUGE_WORKERS`` sets the worker count
for certificate runs (default 1).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from oddgauge import certificates
from oddgauge.config import ConfigError, RunConfig, dump, load
from oddgauge.diagnostics import DEFAULT_DELTA, FieldId, fit_decay, mode_energy
from oddgauge.evolve import EvolutionConfig, InstabilityError, evolve
from oddgauge.geometry import DomainError
from oddgauge.harmonics import corrupted_weights, quadrature_selftest, weights
from oddgauge.modesystem import GeneratorFields, ModeFields

log = logging.getLogger("oddgauge")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_SOFTWARE = 70
WORKERS_ENV = "ODDGAUGE_WORKERS"


def fmt(x) -> str:
    return "%.17g" % x


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


# --- harmonics-selftest -------------------------------------------------------


def cmd_harmonics_selftest(args) -> int:
    fn = corrupted_weights if args.corrupt else weights
    try:
        rep = quadrature_selftest(args.ell_max, weights_fn=fn)
    except DomainError as err:
        log.error("%s", err)
        return EXIT_USAGE
    text = "\n".join(rep.lines()) + "\n"
    Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    return EXIT_OK if rep.passed else EXIT_FAILED


# --- certify ------------------------------------------------------------------


def cmd_certify(args) -> int:
    try:
        workers = workers_from_env()
    except ValueError as err:
        log.error("%s", err)
        return EXIT_USAGE
    reports = certificates.run_claims(args.filter, workers=workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificates.csv").write_text(certificates.report_csv(reports), encoding="utf-8", newline="\n")
    for rep in reports:
        (out / f"{rep.claim_id}.csv").write_text(certificates.report_csv([rep]), encoding="utf-8", newline="\n")
    if not reports:
        log.warning("no claim matches %r", args.filter)
        return EXIT_OK
    sys.stdout.write(certificates.report_table(reports))
    statuses = {rep.status for rep in reports}
    if certificates.Status.FAILED in statuses:
        return EXIT_FAILED
    if certificates.Status.INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# --- evolve -------------------------------------------------------------------


def field_ids_for(state):
    """Energy field groups available for a state type."""
    if isinstance(state, ModeFields):
        return [FieldId.H0, FieldId.H1H2]
    if isinstance(state, GeneratorFields):
        return [FieldId.X]
    return [FieldId.P] + ([FieldId.Q] if state.q is not None else [])


def _energy_rows(state, bg, cfg: RunConfig):
    rows = []
    for fid in field_ids_for(state):
        for p in cfg.energies:
            e = mode_energy(state, bg, p, False, fid).value
            e_deg = mode_energy(state, bg, p, True, fid).value
            rows.append((float(state.time), fid.value, float(p), e, e_deg))
    return rows


def _snapshot(path: Path, state):
    grid = state.grid
    names = list(state.names)
    header = ["rstar", "r"] + names + [f"dt_{n}" for n in names]
    cols = [grid.rstar, grid.r, *state.fields(), *state.rates()]
    _write_csv(path, header, ([float(c[i]) for c in cols] for i in range(grid.n)))


def run_evolution(cfg: RunConfig, outdir: Path) -> int:
    """Run ``cfg`` and write probes.csv, energy.csv and snapshots into ``outdir``."""
    bg = cfg.background
    grid = cfg.grid.build(bg)
    econf = EvolutionConfig(
        system=cfg.system,
        mode=cfg.mode,
        t_final=cfg.t_final,
        snapshot_stride=cfg.snapshot_stride,
        probe_radii=cfg.probes,
        initial_data=cfg.initial_data,
        monitor_window=tuple(cfg.monitor_window) or None,
    )
    energy = []
    counter = [0]

    def observer(state):
        if counter[0] % cfg.energy_stride == 0:
            energy.extend(_energy_rows(state, bg, cfg))
        counter[0] += 1
        return {}

    code = EXIT_OK
    try:
        result = evolve(econf, grid, bg, observers=[observer])
    except InstabilityError as err:
        log.error("%s; writing partial output", err)
        result, code = err.partial, EXIT_SOFTWARE
    # the final state always gets an energy row
    last = result.final
    if last is not None and (not energy or energy[-1][0] != float(last.time)):
        energy.extend(_energy_rows(last, bg, cfg))

    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.ini").write_text(dump(cfg), encoding="utf-8", newline="\n")
    cols = list(result.probes)
    n = len(result.times)
    _write_csv(
        outdir / "probes.csv",
        ["time"] + cols,
        ([float(result.times[i])] + [float(result.probes[c][i]) for c in cols] for i in range(n)),
    )
    _write_csv(outdir / "energy.csv", ["time", "field_id", "p", "E_p", "E_p_deg"], energy)
    for k, snap in enumerate(result.snapshots):
        _snapshot(outdir / f"snapshot_{k * cfg.snapshot_stride:07d}.csv", snap)
    return code


def cmd_evolve(args) -> int:
    try:
        cfg = load(args.config)
    except (OSError, ConfigError) as err:
        log.error("config error: %s", err)
        return EXIT_USAGE
    outdir = Path(args.out) if args.out else Path(cfg.outputs)
    try:
        return run_evolution(cfg, outdir)
    except DomainError as err:
        log.error("%s", err)
        return EXIT_USAGE


# --- report -------------------------------------------------------------------


def read_energy_csv(path):
    """Return ``{(field_id, p): (times, values)}`` from an energy CSV."""
    series = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"time", "field_id", "p", "E_p"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"missing columns: {', '.join(sorted(missing))}")
        for row in reader:
            key = (row["field_id"], float(row["p"]))
            t, v = series.setdefault(key, ([], []))
            t.append(float(row["time"]))
            v.append(float(row["E_p"]))
    return series


def decay_target(p: float, delta: float = DEFAULT_DELTA) -> float:
    """Qualitative exponent ``-2 + p + delta``; fitted slopes above it are flagged."""
    return -2.0 + p + delta


def report_rows(series, window, delta=DEFAULT_DELTA):
    rows = []
    for (fid, p), (t, v) in sorted(series.items()):
        fit = fit_decay(t, v, window)
        target = decay_target(p, delta)
        flag = "above_target" if fit.slope > target else "ok"
        rows.append((fid, p, fit.slope, fit.intercept, fit.residual, target, flag))
    return rows


REPORT_HEADER = ["field_id", "p", "slope", "intercept", "residual", "target", "flag"]


def cmd_report(args) -> int:
    try:
        series = read_energy_csv(args.csv)
    except (OSError, ValueError, KeyError, csv.Error) as err:
        log.error("cannot read %s: %s", args.csv, err)
        return EXIT_DATA
    if not series:
        log.error("%s contains no energy rows", args.csv)
        return EXIT_DATA
    try:
        rows = report_rows(series, (args.lo, args.hi))
    except DomainError as err:
        log.error("window [%s, %s]: %s", args.lo, args.hi, err)
        return EXIT_DATA
    if args.out:
        _write_csv(Path(args.out), REPORT_HEADER, rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return EXIT_OK


# --- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="oddgauge", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("harmonics-selftest", help="angular identity residuals by quadrature")
    s.add_argument("--ell-max", type=int, default=4)
    s.add_argument("--out", default="harmonics_selftest.csv")
    s.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_harmonics_selftest)

    s = sub.add_parser("certify", help="exact positivity certificates")
    s.add_argument("filter", nargs="?", default="", help="substring of claim ids")
    s.add_argument("--out", default="certificates")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("evolve", help="run an evolution from a config file")
    s.add_argument("config")
    s.add_argument("--out", default=None, help="output directory (overrides the config)")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("report", help="log-log decay slopes from an energy CSV")
    s.add_argument("csv")
    s.add_argument("lo", type=float)
    s.add_argument("hi", type=float)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 validation (bad configuration or input
files), 3 computation (no bound mode, no equilibrium, failed fit).
Diagnostics go to stderr; results go to stdout or ``--out``.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, ToolConfig, parse_config
from .cqed import (
    coupling_rates,
    design_waist,
    finesse_from_linewidth,
    finesse_from_losses,
    free_spectral_range,
    propagate_uncertainty,
    table_report,
)
from .errors import DomainError
from .instrument import fit_sweep, roc_round_trip, simulate_sweep, write_scan_csv, write_trace_csv
from .metrology import (
    fit_circle,
    fit_polynomial,
    read_profile_csv,
    residual_periodogram,
    roughness_to_loss,
    write_residuals_csv,
)
from .optics import FLAT, BeamParams, cavity_stability
from .reflow import (
    ReflowRecipe,
    anneal_schedule,
    equilibrium_deformation,
    predict_roc_sweep,
    validate_schedule,
)
from .report import FORMATS, emit_report, integer, render_records, render_text, scaled, sig4

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_COMPUTATION = 0, 1, 2, 3
COMMANDS = ("design", "reflow", "metrology", "simulate", "report")
DEFAULT_LINEWIDTH = 2.24e6  # Hz, used by `simulate` without a configuration


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file")
    common.add_argument("--out", type=Path, help="write the report here instead of stdout")
    common.add_argument("--format", choices=FORMATS, default="text")
    common.add_argument("--seed", type=int, default=0, help="base seed for simulations (u64)")

    p = _Parser(prog="microcav", description="Microcavity design, fabrication and metrology toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    s = sub.add_parser("design", parents=[common], help="cavity metrics per design")
    s.add_argument("inputs", nargs="*", type=Path, help="configuration file")
    s = sub.add_parser("reflow", parents=[common], help="reflow deformation and furnace schedule")
    s.add_argument("inputs", nargs="*", type=Path, help="configuration file")
    s = sub.add_parser("metrology", parents=[common], help="fit surface profiles (x_um,z_nm CSV)")
    s.add_argument("inputs", nargs="*", type=Path, help="profile CSV files")
    s.add_argument("--export", type=Path, help="directory for residual CSVs")
    s = sub.add_parser("simulate", parents=[common], help="instrument round trips")
    s.add_argument("inputs", nargs="*", type=Path, help="configuration file")
    s.add_argument("--export", type=Path, help="directory for trace and scan CSVs")
    s = sub.add_parser("report", parents=[common], help="cavity summary table")
    s.add_argument("inputs", nargs="*", type=Path, help="configuration file")
    return p


def _config_path(args, required):
    if args.config is not None and args.inputs:
        raise UsageError(f"{args.command}: give the configuration positionally or with --config, not both")
    if len(args.inputs) > 1:
        raise UsageError(f"{args.command}: expected one configuration file, got {len(args.inputs)}")
    path = args.config or (args.inputs[0] if args.inputs else None)
    if path is None and required:
        raise UsageError(f"{args.command}: a configuration file is required")
    return path


def _load(args, required=True) -> ToolConfig:
    path = _config_path(args, required)
    return parse_config(path) if path is not None else ToolConfig()


def _fail(msg):
    print(f"microcav: {msg}", file=sys.stderr)


# -- subcommands --------------------------------------------------------------

DESIGN_COLUMNS = [
    ("name", "name", lambda r: r["name"], str),
    ("g1*g2", "g_product", lambda r: r["g_product"], sig4),
    ("w0(um)", "waist_m", lambda r: r["waist"], scaled(1e-6, sig4)),
    ("FSR(GHz)", "fsr_hz", lambda r: r["fsr"], scaled(1e9, sig4)),
    ("F_expected", "finesse_expected", lambda r: r["finesse_expected"], integer),
    ("F_obtained", "finesse_obtained", lambda r: r["finesse"], integer),
    ("dF", "finesse_std", lambda r: r["finesse_std"], integer),
    ("eta", "cooperativity", lambda r: r["eta"], sig4),
    ("d_eta", "cooperativity_std", lambda r: r["eta_std"], sig4),
    ("g/2pi(MHz)", "g_rad_s", lambda r: r["g"], scaled(2e6 * math.pi, sig4)),
    ("kappa/2pi(MHz)", "kappa_rad_s", lambda r: r["kappa"], scaled(2e6 * math.pi, sig4)),
    ("gamma/2pi(MHz)", "gamma_rad_s", lambda r: r["gamma"], scaled(2e6 * math.pi, sig4)),
    ("strong", "strong_coupling", lambda r: r["strong"], lambda v: "-" if v is None else ("yes" if v else "no")),
]


def _design_row(entry, atom):
    d = entry.design
    rep = cavity_stability(d.geometry)
    if not rep.stable:
        g1, g2 = rep.g1, rep.g2
        raise DomainError(f"design {d.name!r} is unstable: g1 = {g1:.6g}, g2 = {g2:.6g}, "
                          f"g1*g2 = {rep.product:.6g} (need 0 < g1*g2 < 1)")
    row = dict(name=d.name, g_product=rep.product, waist=design_waist(d),
               fsr=free_spectral_range(d.length), finesse_expected=None, finesse=None,
               finesse_std=None, eta=None, eta_std=None, g=None, kappa=None,
               gamma=atom.dipole_decay, strong=None)
    try:
        row["finesse_expected"] = finesse_from_losses([d.mirror_1, d.mirror_2])
    except DomainError:
        pass
    if entry.linewidth is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            unc = propagate_uncertainty(d, entry.linewidth, entry.linewidth * entry.linewidth_rel_unc)
        rates = coupling_rates(d, atom, finesse_from_linewidth(d.length, entry.linewidth))
        row.update(finesse=unc.finesse.value, finesse_std=unc.finesse.std,
                   eta=unc.cooperativity.value, eta_std=unc.cooperativity.std,
                   g=rates.g, kappa=rates.kappa, strong=rates.strong_coupling)
    return row


def cmd_design(args):
    cfg = _load(args)
    rows, status = [], EXIT_OK
    for entry in cfg.designs:
        try:
            rows.append(_design_row(entry, cfg.atom))
        except (DomainError, ArithmeticError) as exc:
            _fail(str(exc))
            status = EXIT_COMPUTATION
    if args.format == "records":
        text = render_records(DESIGN_COLUMNS, rows)
    else:
        text = render_text(DESIGN_COLUMNS, rows, "Cavity designs")
    return text, status


def cmd_report(args):
    cfg = _load(args)
    rows = table_report([(e.design, e.linewidth) for e in cfg.designs])
    for r in rows:
        if r.error:
            _fail(f"design {r.name!r}: {r.error}")
    status = EXIT_COMPUTATION if any(r.error for r in rows) else EXIT_OK
    return emit_report(rows, args.format).decode(), status


DEFORM_COLUMNS = [
    ("a(mm)", "hole_radius_m", lambda r: r["a"], scaled(1e-3, sig4)),
    ("P_ext(mbar)", "forming_pressure_pa", lambda r: r["p"], scaled(100.0, sig4)),
    ("h(mm)", "sag_m", lambda r: r["h"], scaled(1e-3, sig4)),
    ("RoC(mm)", "roc_m", lambda r: r["roc"], scaled(1e-3, sig4)),
    ("P_int(mbar)", "internal_pressure_pa", lambda r: r["p_int"], scaled(100.0, sig4)),
    ("note", "error", lambda r: r["error"], lambda v: v or ""),
]

SCHEDULE_COLUMNS = [
    ("segment", "kind", lambda s: s.kind, str),
    ("T_start(C)", "start_temperature_k", lambda s: s.start_temperature, lambda t: f"{t - 273.15:.1f}"),
    ("T_end(C)", "end_temperature_k", lambda s: s.end_temperature, lambda t: f"{t - 273.15:.1f}"),
    ("duration(min)", "duration_s", lambda s: s.duration, lambda t: f"{t / 60:.1f}"),
    ("rate(C/min)", "ramp_rate_k_per_s", lambda s: s.ramp_rate, lambda r: f"{r * 60:+.2f}"),
    ("P(mbar)", "pressure_pa", lambda s: s.pressure, lambda p: f"{p / 100:.0f}"),
]


def _deform_row(recipe, result=None, error=None):
    return dict(a=recipe.hole_radius, p=recipe.forming_pressure,
                h=None if result is None else result.sag,
                roc=None if result is None else result.roc,
                p_int=None if result is None else result.internal_pressure, error=error)


def cmd_reflow(args):
    cfg = _load(args, required=False)
    recipe = cfg.reflow if cfg.reflow is not None else ReflowRecipe()
    result = equilibrium_deformation(recipe)
    rows = [_deform_row(recipe, result)]
    status = EXIT_OK
    if cfg.sweep_hole_radii or cfg.sweep_forming_pressures:
        for pt in predict_roc_sweep(recipe, cfg.sweep_hole_radii or None,
                                    cfg.sweep_forming_pressures or None):
            r = replace(recipe, hole_radius=pt.hole_radius, forming_pressure=pt.forming_pressure)
            rows.append(_deform_row(r, pt.result, pt.error))
    schedule = anneal_schedule(recipe, cfg.anneal)
    violations = validate_schedule(schedule, cfg.anneal)
    for v in violations:
        _fail(f"schedule: {v}")
        status = EXIT_VALIDATION
    if args.format == "records":
        text = (render_records(DEFORM_COLUMNS, rows)
                + render_records(SCHEDULE_COLUMNS, list(schedule)))
    else:
        text = (render_text(DEFORM_COLUMNS, rows, "Reflow equilibrium") + "\n"
                + render_text(SCHEDULE_COLUMNS, list(schedule),
                              f"Furnace schedule ({schedule.total_duration / 3600:.2f} h)"))
    return text, status


FIT_COLUMNS = [
    ("file", "file", lambda r: r["file"], str),
    ("samples", "samples", lambda r: r["n"], str),
    ("RoC(mm)", "roc_m", lambda r: r["roc"], scaled(1e-3, sig4)),
    ("circle_rms(nm)", "circle_rms_m", lambda r: r["circle_rms"], scaled(1e-9, sig4)),
    ("poly_rms(nm)", "poly_rms_m", lambda r: r["poly_rms"], scaled(1e-9, sig4)),
    ("period(um)", "period_m", lambda r: r["period"], scaled(1e-6, sig4)),
    ("fraction", "variance_fraction", lambda r: r["fraction"], sig4),
    ("artifact", "artifact", lambda r: r["artifact"], lambda v: "yes" if v else "no"),
    ("loss(ppm)", "scatter_loss", lambda r: r["loss"], scaled(1e-6, sig4)),
]


def cmd_metrology(args):
    if not args.inputs:
        raise UsageError("metrology: at least one profile CSV is required")
    cfg = parse_config(args.config) if args.config is not None else ToolConfig()
    m = cfg.metrology
    profiles = []
    for path in args.inputs:
        profiles.append((path, read_profile_csv(path)))
    rows = []
    for path, prof in profiles:
        circ = fit_circle(prof, noise_floor=m.noise_floor, sag_factor=m.sag_factor)
        poly = fit_polynomial(prof, m.degree)
        per = residual_periodogram(circ.residuals, prof.x, threshold=m.artifact_threshold)
        rows.append(dict(file=path.name, n=len(prof), roc=circ.radius, circle_rms=circ.rms,
                         poly_rms=poly.rms, period=per.period, fraction=per.fraction,
                         artifact=per.artifact, loss=roughness_to_loss(poly, m.wavelength)))
        if args.export is not None:
            args.export.mkdir(parents=True, exist_ok=True)
            write_residuals_csv(args.export / f"{path.stem}_residuals.csv", prof, circ, poly)
    if args.format == "records":
        return render_records(FIT_COLUMNS, rows), EXIT_OK
    return render_text(FIT_COLUMNS, rows, "Surface fits"), EXIT_OK


SIM_COLUMNS = [
    ("name", "name", lambda r: r["name"], str),
    ("quantity", "quantity", lambda r: r["quantity"], str),
    ("true", "true", lambda r: r["true"], sig4),
    ("measured", "measured", lambda r: r["measured"], sig4),
    ("std", "std", lambda r: r["std"], sig4),
    ("rel_error", "relative_error", lambda r: r["rel"], lambda v: f"{v:+.2e}"),
    ("unit", "unit", lambda r: r["unit"], str),
]


def cmd_simulate(args):
    cfg = _load(args, required=False)
    ins = cfg.instrument
    entries = [(e.name, e.linewidth, e.design.curved_roc) for e in cfg.designs]
    if not entries:
        entries = [("default", DEFAULT_LINEWIDTH, 0.7e-3)]
    beam = BeamParams(ins.probe_wavelength, ins.probe_waist)
    rows = []
    if args.export is not None:
        args.export.mkdir(parents=True, exist_ok=True)
    for i, (name, lw, roc) in enumerate(entries):
        seed = args.seed + i
        if lw is not None:
            f_mod = ins.f_mod if ins.f_mod is not None else ins.f_mod_factor * lw
            trace = simulate_sweep(lw, f_mod, ins.slope, ins.depth, ins.noise, seed, ins.samples)
            fit = fit_sweep(trace, f_mod)
            rows.append(dict(name=name, quantity="linewidth", true=lw / 1e6,
                             measured=fit.linewidth / 1e6, std=fit.linewidth_std / 1e6,
                             rel=fit.linewidth / lw - 1, unit="MHz"))
            if args.export is not None:
                write_trace_csv(args.export / f"{name}_sweep.csv", trace)
        if roc is not FLAT and roc > 2 * beam.rayleigh_length:
            scan, meas = roc_round_trip(roc, beam, ins.position_noise, seed)
            rows.append(dict(name=name, quantity="roc", true=roc * 1e3, measured=meas.roc * 1e3,
                             std=meas.uncertainty * 1e3, rel=meas.roc / roc - 1, unit="mm"))
            if args.export is not None:
                write_scan_csv(args.export / f"{name}_scan.csv", scan)
        elif roc is not FLAT:
            _fail(f"{name}: R = {roc:.4g} m is below 2 z_R of the probe; single-maximum scan, "
                  "radius not measurable")
    if args.format == "records":
        return render_records(SIM_COLUMNS, rows), EXIT_OK
    return render_text(SIM_COLUMNS, rows, f"Instrument round trips (seed {args.seed})"), EXIT_OK


HANDLERS = {"design": cmd_design, "reflow": cmd_reflow, "metrology": cmd_metrology,
            "simulate": cmd_simulate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.seed < 0 or args.seed >= 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        text, status = HANDLERS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        _fail(f"invalid configuration:\n{exc}")
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        _fail(str(exc))
        return EXIT_VALIDATION
    except DomainError as exc:
        _fail(str(exc))
        return EXIT_VALIDATION
    except (RuntimeError, ArithmeticError, ValueError) as exc:
        _fail(f"{type(exc).__name__}: {exc}")
        return EXIT_COMPUTATION
    if args.out is not None:
        try:
            args.out.write_bytes(text.encode())
        except OSError as exc:
            _fail(f"cannot write {args.out}: {exc}")
            return EXIT_VALIDATION
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())

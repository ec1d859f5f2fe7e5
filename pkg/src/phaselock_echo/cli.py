"""Batch front end: ``phaselock-echo run|sweep|validate|fit``.

Exit codes: 0 ok, 2 config/input error, 3 protocol violation,
4 numerical failure, 5 degenerate fit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import (
    DegenerateFit,
    SweepAxis,
    default_window,
    detect_echo,
    fit_decay,
    reference_echo,
    run_sweep,
    signed_efficiency,
    spin_width,
)
from .config import ConfigError, ScenarioConfig, load_scenario, parse_angle
from .core import SequenceKind, validate_sequence
from .integrator import IntegrationDiverged
from .protocol import DegenerateGeometry, ProtocolError, classify_areas, phase_match

log = logging.getLogger("phaselock_echo")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_FIT = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _load(path: str, threads: int) -> ScenarioConfig:
    try:
        cfg = load_scenario(path)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from exc
    if threads != 1:
        from dataclasses import replace

        cfg = replace(cfg, experiment=replace(cfg.experiment, threads=threads))
    return cfg


def _areas_json(exp) -> dict:
    p = exp.params
    c = classify_areas(p.area_R, p.area_B1, p.area_B2)
    return {"class": c.kind.value, "rule": c.rule, "n": c.n, "m": c.m, "sum_is_4n_pi": c.sum_is_4n_pi}


def _sequence(cfg: ScenarioConfig):
    try:
        return cfg.experiment.sequence()
    except ProtocolError as exc:
        raise CliError(EXIT_VALIDATION, f"validation failed: {exc}") from exc


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _load(args.config, args.threads)
    exp = cfg.experiment
    seq = _sequence(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with_pops = cfg.populations or args.populations
    try:
        sig = exp.simulate(seq, with_populations=with_pops)
        echo = detect_echo(sig, default_window(seq), seq)
        ref = reference_echo(exp) if exp.reference_T_R is not None else None
    except IntegrationDiverged as exc:
        raise CliError(EXIT_NUMERICAL, f"numerical failure: {exc}") from exc
    if echo.edge_peak:
        log.warning("echo maximum sits on the search-window edge (%.3f us)", echo.t_peak)

    csv_path = out_dir / f"{cfg.name}.csv"
    header = ["t_us", "re_P", "im_P", "intensity"] + (["pop1", "pop2", "pop3"] if with_pops else [])
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        inten = sig.intensity
        for i, t in enumerate(sig.times):
            row = [_fmt(t), _fmt(sig.P[i].real), _fmt(sig.P[i].imag), _fmt(inten[i])]
            if with_pops:
                row += [_fmt(x) for x in sig.populations[i]]
            w.writerow(row)

    summary = {
        "scenario": cfg.name,
        "kind": exp.kind.value,
        "echo_time_us": echo.t_peak,
        "echo_amplitude_re": echo.amplitude.real,
        "echo_amplitude_im": echo.amplitude.imag,
        "echo_intensity": echo.intensity,
        "edge_peak": echo.edge_peak,
        "search_window_us": list(echo.window),
        "predicted_echo_time_us": exp.predicted_echo_time(),
    }
    if ref is not None:
        summary["efficiency"] = signed_efficiency(echo, ref)
        summary["reference_echo_time_us"] = ref.t_peak
    if exp.kind is SequenceKind.PHASE_LOCKED:
        summary["area_classification"] = _areas_json(exp)
    summary["config"] = cfg.raw
    json_path = out_dir / f"{cfg.name}.summary.json"
    _write_json(json_path, summary)

    if args.svg or cfg.svg:
        from .plotting import plot_signal_csv

        marks = {p.label: p.t_start for p in seq.pulses}
        marks["E"] = summary["predicted_echo_time_us"]
        plot_signal_csv(csv_path, out_dir / f"{cfg.name}.svg", title=cfg.name, marks=marks)
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def parse_values(text: str) -> list[float]:
    """'10,20,30' or an inclusive range 'start:stop:step'; pi-literals allowed."""
    text = text.strip()
    if not text:
        raise ValueError("empty value list")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:step")
        start, stop, step = (parse_angle(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError("range needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9))
        return [start + k * step for k in range(n + 1)]
    return [parse_angle(p) for p in text.split(",") if p.strip()]


def cmd_sweep(args) -> int:
    cfg = _load(args.config, 1)
    try:
        axis = SweepAxis.parse(args.axis)
        values = parse_values(args.values)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from exc
    _sequence(cfg)  # base scenario must itself be valid
    try:
        rows = run_sweep(cfg.experiment, axis, values, threads=args.threads)
    except IntegrationDiverged as exc:
        raise CliError(EXIT_NUMERICAL, f"numerical failure: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{cfg.name}.sweep-{axis.value}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "echo_time", "efficiency", "intensity"])
        for r in rows:
            if r.echo is None:
                w.writerow([_fmt(r.value), "", "", ""])
            else:
                w.writerow([_fmt(r.value), _fmt(r.echo.t_peak), _fmt(r.efficiency), _fmt(r.echo.intensity)])
    if args.svg:
        from .plotting import plot_sweep_csv

        label = {"b2-area": "B2 area (rad)"}.get(axis.value, f"{axis.value} (us)")
        plot_sweep_csv(path, path.with_suffix(".svg"), label)
    skipped = sum(r.echo is None for r in rows)
    print(f"wrote {path} ({len(rows)} rows, {skipped} skipped)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = _load(args.config, 1)
    exp = cfg.experiment
    p = exp.params
    report = {"scenario": cfg.name, "kind": exp.kind.value}
    code = EXIT_OK
    try:
        seq = exp.sequence()
        vr = validate_sequence(seq, exp.kind)
        report["sequence"] = {"valid": vr.ok, "violations": [{"code": v.code, "message": v.message} for v in vr.violations]}
    except ProtocolError as exc:
        report["sequence"] = {"valid": False, "violations": [{"code": exc.code, "message": str(exc)}]}
        code = EXIT_VALIDATION
    try:
        report["predicted_echo_time_us"] = exp.predicted_echo_time()
    except ValueError as exc:
        report["predicted_echo_time_us"] = None
        report["prediction_error"] = str(exc)
    if exp.kind is SequenceKind.PHASE_LOCKED:
        report["area_classification"] = _areas_json(exp)
    if None not in (p.k_D, p.k_B1, p.k_B2):
        try:
            pm = phase_match(p.k_D, p.k_B1, p.k_B2, p.omega_D, p.omega_B1, p.omega_B2)
            report["phase_matching"] = {"k_E": pm.k_E.tolist(), "omega_E_mhz": pm.omega_E, "backwardness": pm.backwardness}
        except DegenerateGeometry as exc:
            report["phase_matching"] = {"error": str(exc)}
    lines = [f"scenario {cfg.name} ({exp.kind.value})"]
    seq_info = report["sequence"]
    lines.append("  sequence: " + ("valid" if seq_info["valid"] else
                 "INVALID " + ", ".join(v["code"] for v in seq_info["violations"])))
    if report.get("predicted_echo_time_us") is not None:
        lines.append(f"  predicted echo: {report['predicted_echo_time_us']:.4g} us")
    if "area_classification" in report:
        a = report["area_classification"]
        lines.append(f"  areas: {a['class']} ({a['rule']}), B1+B2 = 4n*pi: {a['sum_is_4n_pi']}")
    if "phase_matching" in report and "backwardness" in report["phase_matching"]:
        lines.append(f"  backwardness: {report['phase_matching']['backwardness']:.6f}")
    print("\n".join(lines), file=sys.stderr)
    print(json.dumps(report, indent=2))
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / f"{cfg.name}.validate.json", report)
    return code


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _read_xy(path: str, columns: Optional[str]) -> list[tuple[float, float]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise CliError(EXIT_CONFIG, f"{path}: need a header row and data")
    header = [h.strip() for h in rows[0]]
    names = [c.strip() for c in columns.split(",")] if columns else header[:2]
    if len(names) != 2:
        raise CliError(EXIT_CONFIG, "--columns needs exactly two names, e.g. t,I")
    idx = []
    for n in names:
        if n in header:
            idx.append(header.index(n))
        elif n.isdigit() and int(n) < len(header):
            idx.append(int(n))
        else:
            raise CliError(EXIT_CONFIG, f"{path}: no column {n!r} (have {', '.join(header)})")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            cells = [row[i].strip() for i in idx]
        except IndexError:
            raise CliError(EXIT_CONFIG, f"{path}:{lineno}: short row") from None
        if "" in cells:
            continue  # skipped sweep point
        try:
            pts.append((float(cells[0]), float(cells[1])))
        except ValueError:
            raise CliError(EXIT_CONFIG, f"{path}:{lineno}: non-numeric cell") from None
    return pts


def cmd_fit(args) -> int:
    pts = _read_xy(args.csv, args.columns)
    try:
        fit = fit_decay(pts)
    except DegenerateFit as exc:
        raise CliError(EXIT_FIT, f"degenerate fit: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_FIT, f"degenerate fit: {exc}") from exc
    out = {
        "tau_us": fit.tau,
        "I0": fit.I0,
        "residual": fit.residual,
        "spin_width_khz": spin_width(fit.tau),
        "model": fit.model,
        "n_points": len(pts),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phaselock-echo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="."):
        p.add_argument("--config", "-c", required=True, help="scenario file or bundled scenario name")
        p.add_argument("--out-dir", "-o", default=out_default)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("run", help="simulate one scenario, write signal CSV + summary JSON")
    common(p)
    p.add_argument("--svg", action="store_true", help="also render the signal to SVG")
    p.add_argument("--populations", action="store_true", help="add averaged population columns")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one protocol parameter")
    common(p)
    p.add_argument("--axis", required=True, help="r-delay | lock-duration | b1-delay | b2-area")
    p.add_argument("--values", required=True, help="'10,20,30' or 'start:stop:step' (pi-literals ok)")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="algebraic checks only, no simulation")
    common(p, out_default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", help="fit I(t) = I0 exp(-2t/tau) to a CSV")
    p.add_argument("csv")
    p.add_argument("--columns", default=None, help="two column names or indices, e.g. t,I")
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

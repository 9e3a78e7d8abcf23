"""Command-line entry point: `python -m weyl_abc <subcommand> [--preset NAME] [--config FILE]`."""

import argparse
import json
import logging
from pathlib import Path
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from weyl_abc.config import get_settings
from weyl_abc.errors import ConfigError, WeylAbcError
from weyl_abc.models import ErrorSeries, RunConfig, RunSummary, Side
from weyl_abc.presets import get_preset, list_presets
from weyl_abc.services import io
from weyl_abc.services.core import WaveField
from weyl_abc.services.experiments import ExperimentService
from weyl_abc.services.fem import interpolate
from weyl_abc.services.mfunction import ContourSample, samples_to_arrays
from weyl_abc.services.rational import RationalDtN, to_report
from weyl_abc.services.reference import error_series, table_text

logger = logging.getLogger("weyl_abc")

SUBCOMMANDS = ("mfunc", "fit", "solve-freq", "solve-time", "reference", "compare")


# Configuration


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def config_error(e: ValidationError, what: str = "configuration") -> ConfigError:
    """The first pydantic error as a ConfigError naming its dotted key."""
    first = e.errors()[0]
    key = ".".join(str(p) for p in first["loc"]) or "<root>"
    return ConfigError(
        f"Invalid {what} at '{key}': {first['msg']}",
        {"key": key, "model": e.title, "errors": len(e.errors())},
    )


def validate_config(doc: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as e:
        raise config_error(e) from e


def parse_config(text: str) -> RunConfig:
    """JSON document -> validated RunConfig with defaults applied."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Configuration is not valid JSON: {e.msg}", {"line": e.lineno}) from e
    if not isinstance(doc, dict):
        raise ConfigError("Configuration must be a JSON object")
    return validate_config(doc)


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2)


def _read_document(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"Configuration file not found: {path}", {"path": str(path)})
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Configuration is not valid JSON: {e.msg}", {"path": str(path), "line": e.lineno}) from e
    if not isinstance(doc, dict):
        raise ConfigError("Configuration must be a JSON object", {"path": str(path)})
    return doc


def config_from_documents(preset: Optional[str] = None, override: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Preset document with `override` deep-merged over it, then validated."""
    doc: Dict[str, Any] = get_preset(preset) if preset else {}
    if override:
        override = dict(override)
        # a potential is replaced whole; its fields depend on its type
        potential = override.pop("potential", None)
        doc = deep_merge(doc, override)
        if potential is not None:
            doc["potential"] = potential
    return validate_config(doc)


def load_config(config_path: Optional[str] = None, preset: Optional[str] = None) -> RunConfig:
    override = _read_document(Path(config_path)) if config_path else None
    return config_from_documents(preset, override)


# Output writers

_SIDE_CODE = {Side.LEFT: -1.0, Side.RIGHT: 1.0}


def _mfunc_rows(samples: Dict[Side, List[ContourSample]]) -> np.ndarray:
    rows = []
    for side in (Side.LEFT, Side.RIGHT):
        f, lam, _, m = samples_to_arrays(samples[side])
        rows.append(np.column_stack([f, lam.real, lam.imag, m.real, m.imag, np.full(f.size, _SIDE_CODE[side])]))
    return np.vstack(rows)


def _pole_rows(fits: Dict[Side, RationalDtN]) -> np.ndarray:
    rows = [
        [_SIDE_CODE[side], b.real, b.imag, a.real, a.imag]
        for side in (Side.LEFT, Side.RIGHT)
        for a, b in zip(fits[side].residues, fits[side].poles)
    ]
    return np.asarray(rows, dtype=float).reshape(-1, 5)


class OutputWriter:
    """Writes the artifacts of one run into a directory and remembers their names."""

    def __init__(self, directory: Path, formats: Sequence[str]):
        self.directory = Path(directory)
        self.formats = set(formats)
        self.written: List[str] = []

    def _track(self, path: Path) -> None:
        self.written.append(path.name)

    def csv(self, name: str, columns: Sequence[str], data: np.ndarray, meta: Dict[str, Any] = None) -> None:
        if "csv" in self.formats:
            self._track(io.write_csv(self.directory / name, columns, data, meta))

    def json(self, name: str, payload: Any) -> None:
        if "json" in self.formats:
            self._track(io.write_json(self.directory / name, payload))

    def snapshots(self, mesh, fields: Dict[float, WaveField], meta: Dict[str, Any]) -> None:
        for t in sorted(fields):
            self._track(io.write_snapshot(self.directory, mesh, fields[t], meta))

    def errors(self, series: ErrorSeries) -> None:
        self._track(io.write_error_series(self.directory, series.times, series.rel_l2))
        path = self.directory / "table.txt"
        path.write_text(table_text(series), encoding="utf-8", newline="\n")
        self._track(path)


# Subcommands


def _fit_payload(service: ExperimentService, fits: Dict[Side, RationalDtN]) -> Dict[str, Any]:
    return {
        side.value: to_report(r, service.herglotz(r)).model_dump(mode="json")
        for side, r in fits.items()
    }


def cmd_mfunc(service: ExperimentService, out: OutputWriter, summary: RunSummary) -> None:
    abc = service.config.abc
    samples = service.mfunc()
    meta = {"sigma": abc.sigma, "f_c": abc.f_cutoff, "side_code": "left=-1;right=1"}
    out.csv("mfunc.csv", ["f", "re_lambda", "im_lambda", "re_m", "im_m", "side"], _mfunc_rows(samples), meta)
    diag = service.diagnostics(samples)
    out.json("mfunc_diagnostics.json", {s.value: d.model_dump(mode="json", by_alias=True) for s, d in diag.items()})
    if any(d.herglotz_violations for d in diag.values()):
        summary.flags.append("herglotz_violation")


def cmd_fit(service: ExperimentService, out: OutputWriter, summary: RunSummary) -> Dict[Side, RationalDtN]:
    fits = service.fit()
    _record_fits(service, fits, out, summary)
    return fits


def _record_fits(service: ExperimentService, fits: Dict[Side, RationalDtN], out: OutputWriter, summary: RunSummary) -> None:
    out.json("poles.json", _fit_payload(service, fits))
    out.csv("poles.csv", ["side", "re_beta", "im_beta", "re_alpha", "im_alpha"], _pole_rows(fits),
            {"side_code": "left=-1;right=1"})
    summary.pole_count = {side.value: r.degree for side, r in fits.items()}
    for r in fits.values():
        if r.fit_error > r.tolerance:
            summary.flags.append(f"tolerance_not_reached_{r.side.value}")


def cmd_solve_freq(service: ExperimentService, out: OutputWriter, summary: RunSummary, rational: bool = False) -> None:
    c = service.config
    run, series, flags = service.solve_freq(use_rational=rational)
    summary.flags.extend(flags)
    meta = {"sigma": run.sigma, "f_c": c.freq.f_cutoff, "n_quad": c.freq.n_quad,
            "asymptotic_terms": c.freq.asymptotic_terms, "method": "frequency"}
    out.snapshots(service.mesh, run.snapshots, meta)
    if run.failures:
        out.json("failures.json", {"frequencies": run.failures})
    if series is not None:
        out.errors(series)
        summary.max_error = series.max_error


def cmd_solve_time(service: ExperimentService, out: OutputWriter, summary: RunSummary) -> None:
    c = service.config
    run, fits, flags = service.solve_time()
    summary.flags.extend(flags)
    _record_fits(service, fits, out, summary)
    meta = {"dt": c.time.dt, "method": "time", "soe_terms": run.soe_terms}
    out.snapshots(service.mesh, run.snapshots, meta)
    out.csv(
        "boundary.csv",
        ["t", "re_u_left", "im_u_left", "re_u_right", "im_u_right", "l2_norm"],
        np.column_stack([
            run.trace_t,
            run.trace_left.real, run.trace_left.imag,
            run.trace_right.real, run.trace_right.imag,
            run.norms,
        ]),
        {"dt": c.time.dt},
    )
    if run.errors:
        series = ErrorSeries(times=run.error_times, rel_l2=run.errors)
        out.errors(series)
        summary.max_error = series.max_error


def cmd_reference(service: ExperimentService, out: OutputWriter, summary: RunSummary) -> None:
    c = service.config
    ref = service.reference(c.time.snapshot_times)
    meta = {"dt": c.time.dt, "method": "reference", "half_width": c.reference.half_width}
    out.snapshots(service.mesh, ref.snapshots, meta)
    out.json("containment.json", {
        "trusted": ref.trusted,
        "containment": {f"{t:g}": v for t, v in sorted(ref.containment.items())},
        "tolerance": c.reference.containment_tol,
    })
    if not ref.trusted:
        summary.flags.append("reference_untrusted")


def compare_directories(candidate: Path, baseline: Path) -> ErrorSeries:
    """Relative L2 errors of matching snapshot files; the baseline is resampled if meshes differ."""
    cand = {p.name: p for p in io.list_snapshots(candidate)}
    base = {p.name: p for p in io.list_snapshots(baseline)}
    common = sorted(set(cand) & set(base))
    if not common:
        raise ConfigError("No matching snapshot files to compare", {"candidate": str(candidate), "baseline": str(baseline)})

    snaps, refs, mesh = {}, {}, None
    for name in common:
        _, mesh, fld = io.read_snapshot(cand[name])
        _, b_mesh, b_fld = io.read_snapshot(base[name])
        if b_mesh.n_nodes != mesh.n_nodes or not np.array_equal(b_mesh.nodes, mesh.nodes):
            b_fld = WaveField(b_fld.time, interpolate(b_mesh, b_fld.values, mesh.nodes))
        snaps[fld.time] = fld
        refs[fld.time] = WaveField(fld.time, b_fld.values)
    return error_series(snaps, refs, mesh)


def cmd_compare(args: argparse.Namespace, out: OutputWriter, summary: RunSummary) -> None:
    series = compare_directories(Path(args.candidate), Path(args.baseline))
    out.errors(series)
    summary.max_error = series.max_error


# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weyl_abc",
        description="Schrodinger equation on a truncated domain with m-function absorbing boundaries",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default from WEYL_ABC_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", default=None, help="Output directory")
        if name == "compare":
            p.add_argument("--candidate", required=True, help="Directory of candidate snapshots")
            p.add_argument("--baseline", required=True, help="Directory of baseline snapshots")
            continue
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument("--preset", default=None, help="One of: " + ", ".join(list_presets()))
        p.add_argument("--threads", type=int, default=None)
        if name == "solve-freq":
            p.add_argument("--rational", action="store_true", help="Use the fitted DtN maps instead of exact m")
    return parser


def configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )


def run(args: argparse.Namespace) -> RunSummary:
    started = time.perf_counter()
    summary = RunSummary(subcommand=args.command, wall_time_sec=0.0)

    if args.command == "compare":
        out = OutputWriter(Path(args.out or get_settings().output_dir), ["csv"])
        cmd_compare(args, out, summary)
    else:
        config = load_config(args.config, args.preset)
        directory = Path(args.out or config.outputs.directory)
        out = OutputWriter(directory, config.outputs.formats)
        service = ExperimentService(config, threads=args.threads)
        logger.info("Running %s into %s", args.command, directory)

        if args.command == "mfunc":
            cmd_mfunc(service, out, summary)
        elif args.command == "fit":
            cmd_fit(service, out, summary)
        elif args.command == "solve-freq":
            cmd_solve_freq(service, out, summary, rational=args.rational)
        elif args.command == "solve-time":
            cmd_solve_time(service, out, summary)
        elif args.command == "reference":
            cmd_reference(service, out, summary)
        out.json("config.json", json.loads(serialize_config(config)))

    summary.outputs = list(out.written)
    summary.wall_time_sec = time.perf_counter() - started
    return summary


def _fail(command: str, e: WeylAbcError) -> int:
    logger.error("%s failed: %s", command, e.message)
    print(json.dumps(e.to_payload(), sort_keys=True, default=str))
    return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        summary = run(args)
    except ValidationError as e:
        return _fail(args.command, config_error(e, "value"))
    except WeylAbcError as e:
        return _fail(args.command, e)
    print(summary.one_line())
    return 0


if __name__ == "__main__":
    sys.exit(main())

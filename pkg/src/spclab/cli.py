"""Manifest-driven command-line front end.

Commands read a JSON manifest describing the dataset (see README for the
schema), write result JSON plus plot-ready CSV files into an output
directory, and record provenance in ``run.json`` (config hash, versions,
seeds). Exit codes: 0 success, 2 validation error, 3 fit non-convergence,
4 I/O error.
"""

import functools
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__, anharm, ins, io, lattice, modes, relax, spc, synth, thermal
from .core import EnergyGrid, SpectrumSet
from .errors import DataFormatError, FitConvergenceError, ValidationError

EXIT_VALIDATION = 2
EXIT_FIT = 3
EXIT_IO = 4

SCHEMA_VERSION = 1


class Manifest:
    """Parsed + validated manifest with loaded-on-demand datasets."""

    def __init__(self, payload, base_dir, path):
        self.payload = payload
        self.base_dir = Path(base_dir)
        self.path = Path(path)
        self.label = payload.get("label", "dataset")

    # -- validation -------------------------------------------------------

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise DataFormatError(f"manifest: cannot read {path}: {exc}") from exc
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"manifest: {path} is not valid JSON ({exc})") from exc
        manifest = cls(payload, path.parent, path)
        manifest.validate()
        return manifest

    def _fail(self, field, message):
        raise ValidationError(f"manifest: {field}: {message}")

    def validate(self):
        p = self.payload
        if not isinstance(p, dict):
            self._fail("<root>", "expected a JSON object")
        if "schema_version" not in p:
            self._fail("schema_version", "missing required field")
        if p["schema_version"] != SCHEMA_VERSION:
            self._fail(
                "schema_version",
                f"unsupported version {p['schema_version']!r}, expected {SCHEMA_VERSION}",
            )
        for section, time_key in (("spectra", "temperature_K"), ("diffraction", "temperature_K")):
            entries = p.get(section, [])
            if not isinstance(entries, list):
                self._fail(section, "expected a list")
            temps = []
            for i, entry in enumerate(entries):
                if "path" not in entry:
                    self._fail(f"{section}[{i}].path", "missing required field")
                if not self._resolve(entry["path"]).exists():
                    self._fail(
                        f"{section}[{i}].path", f"file not found: {entry['path']}"
                    )
                if time_key not in entry:
                    self._fail(f"{section}[{i}].{time_key}", "missing required field")
                temps.append(float(entry[time_key]))
            if len(set(temps)) != len(temps):
                self._fail(section, "temperatures must be unique")
        for i, entry in enumerate(p.get("rates", [])):
            if "path" not in entry:
                self._fail(f"rates[{i}].path", "missing required field")
            if not self._resolve(entry["path"]).exists():
                self._fail(f"rates[{i}].path", f"file not found: {entry['path']}")
        if "modes_path" in p and p["modes_path"]:
            if not self._resolve(p["modes_path"]).exists():
                self._fail("modes_path", f"file not found: {p['modes_path']}")
        bg = p.get("correction", {}).get("background_path")
        if bg and not self._resolve(bg).exists():
            self._fail("correction.background_path", f"file not found: {bg}")

    def _resolve(self, rel):
        rel = Path(rel)
        return rel if rel.is_absolute() else self.base_dir / rel

    def sha256(self):
        canonical = json.dumps(self.payload, sort_keys=True).encode()
        return hashlib.sha256(canonical).hexdigest()

    # -- sections ---------------------------------------------------------

    def correction_config(self):
        c = dict(self.payload.get("correction", {}))
        bg_path = c.pop("background_path", None)
        background = None
        if bg_path:
            background = io.read_spectrum_csv(
                self._resolve(bg_path), temperature_K=300.0, provenance="raw"
            )
        try:
            return ins.CorrectionConfig(background=background, **c)
        except TypeError as exc:
            raise ValidationError(f"manifest: correction: {exc}")

    def fit_options(self):
        f = self.payload.get("fit", {})
        return spc.SpcFitOptions(
            t_floor_K=f.get("t_floor_K", 10.0),
            include_direct=f.get("include_direct", False),
            excluded_below_cm=f.get("excluded_below_cm"),
            interpolation=f.get("interpolation", "linear"),
        )

    def window_edges(self, override=None):
        if override:
            return tuple(float(x) for x in override.split(","))
        edges = self.payload.get("fit", {}).get("edges_cm")
        return tuple(edges) if edges else (0.0, 185.0, spc.DEFAULT_E_PH_MAX_CM)

    def cutoff_grid(self, override=None):
        if override:
            start, stop, step = (float(x) for x in override.split(":"))
            return np.arange(start, stop + step / 2, step)
        grid = self.payload.get("fit", {}).get("cutoff_grid_cm")
        return np.asarray(grid, dtype=float) if grid else None

    def load_spectra(self, corrected=True, representation=None):
        """Load spectrum files, grouped into one set; optionally correct them.

        Entries flagged ``"corrected": true`` are ingested as normalized
        G_T(E) and skip the pipeline.
        """
        entries = self.payload.get("spectra", [])
        if representation is not None:
            entries = [
                e for e in entries
                if e.get("representation", "instrument") == representation
            ]
        if not entries:
            raise ValidationError("manifest: spectra: no entries (for this representation)")
        cfg = self.correction_config()
        loaded = []
        for entry in entries:
            pre_corrected = bool(entry.get("corrected", False))
            spec = io.read_spectrum_csv(
                self._resolve(entry["path"]),
                temperature_K=float(entry["temperature_K"]),
                provenance="normalized" if pre_corrected else "raw",
            )
            if corrected and not pre_corrected:
                spec = ins.correct_spectrum(spec, cfg)
            loaded.append(spec)
        return SpectrumSet(tuple(loaded))

    def representations(self):
        entries = self.payload.get("spectra", [])
        return sorted({e.get("representation", "instrument") for e in entries})

    def load_rate_points(self):
        points = []
        for entry in self.payload.get("rates", []):
            points.extend(
                io.read_rate_csv(
                    self._resolve(entry["path"]),
                    default_orientation=entry.get("orientation", "unspecified"),
                    default_method=entry.get("method", "inversion"),
                )
            )
        if not points:
            raise ValidationError("manifest: rates: no entries")
        return points

    def assemble_rates(self):
        policy = relax.AssemblyPolicy(
            crossover_K=self.payload.get("assembly", {}).get("crossover_K", 30.0),
            orientation=self.payload.get("assembly", {}).get("orientation"),
        )
        return relax.assemble_rate_series(
            self.load_rate_points(), policy, label=self.label
        )

    def load_patterns(self):
        entries = self.payload.get("diffraction", [])
        if not entries:
            raise ValidationError("manifest: diffraction: no entries")
        return [
            io.read_pattern_csv(self._resolve(e["path"]), float(e["temperature_K"]))
            for e in entries
        ]

    def peak_seeds(self, kind):
        seeds = self.payload.get("peak_seeds", {}).get(kind)
        if not seeds:
            raise ValidationError(f"manifest: peak_seeds.{kind}: missing")
        return [(float(c), float(w)) for c, w in seeds]

    def load_modes(self):
        path = self.payload.get("modes_path")
        if not path:
            raise ValidationError("manifest: modes_path: missing")
        return io.read_modeset_json(self._resolve(path))


def _write_run_json(outdir, command, manifest=None, seeds=None, extras=None):
    payload = {
        "command": command,
        "package_version": __version__,
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
        "rng_algorithm": synth.RNG_ALGORITHM,
        "seeds": seeds or {},
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
    }
    import scipy

    payload["scipy_version"] = scipy.__version__
    if manifest is not None:
        payload["manifest_path"] = str(manifest.path)
        payload["config_sha256"] = manifest.sha256()
    if extras:
        payload.update(extras)
    io.write_json(payload, Path(outdir) / "run.json")


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _csv_row(*values):
    """Full-precision CSV row; NaN-safe, never numpy reprs."""
    cells = []
    for v in values:
        v = float(v)
        cells.append("" if np.isnan(v) else repr(v))
    return ",".join(cells) + "\n"


def wrap_errors(fn):
    """Map package exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def inner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"validation error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except FitConvergenceError as exc:
            click.echo(f"fit did not converge: {exc}", err=True)
            sys.exit(EXIT_FIT)
        except (DataFormatError, OSError) as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return inner


manifest_option = click.option(
    "-m", "--manifest", "manifest_path", required=True, type=click.Path(), help="Manifest JSON path."
)
outdir_option = click.option(
    "-o", "--outdir", default="spclab-out", show_default=True, help="Output directory."
)


@click.group()
@click.version_option(version=__version__)
def main():
    """Spin-phonon coupling analysis toolkit."""


# -- spectra ---------------------------------------------------------------


@main.command()
@manifest_option
@outdir_option
@wrap_errors
def correct(manifest_path, outdir):
    """Run the spectrum-correction pipeline and write corrected CSVs."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    for spec in spectra:
        io.write_spectrum_csv(spec, out / f"corrected_{spec.temperature_K:g}K.csv")
    io.write_json(
        {
            "label": manifest.label,
            "temperatures_K": list(spectra.temperatures),
            "normalization_cutoff_cm": manifest.correction_config().normalization_cutoff_cm,
        },
        out / "correct.json",
    )
    _write_run_json(out, "correct", manifest)
    click.echo(f"wrote {len(spectra)} corrected spectra to {out}")


@main.command()
@manifest_option
@outdir_option
@click.option("--temps", required=True, help="Comma-separated temperatures (K).")
@wrap_errors
def boseweight(manifest_path, outdir, temps):
    """Bose-weight corrected spectra at the requested temperatures."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    results = {}
    for t in (float(x) for x in temps.split(",")):
        spec = ins.interpolate_temperature(spectra, t)
        bw = thermal.bose_weight(spec)
        path = out / f"boseweight_{t:g}K.csv"
        with path.open("w", newline="") as fh:
            fh.write("energy_cm,weighted\n")
            for e, v in zip(bw.grid.centers, bw.weighted):
                fh.write(_csv_row(e, v))
        results[f"{t:g}"] = str(path.name)
    io.write_json({"label": manifest.label, "files": results}, out / "boseweight.json")
    _write_run_json(out, "boseweight", manifest)
    click.echo(f"wrote {len(results)} weighted spectra to {out}")


# -- t1 ----------------------------------------------------------------------


@main.group()
def t1():
    """Spin-lattice relaxation commands."""


@t1.command("fit-traces")
@click.argument("traces", nargs=-1, required=True, type=click.Path())
@click.option("--kind", default="inversion", show_default=True,
              type=click.Choice(["inversion", "saturation"]))
@outdir_option
@wrap_errors
def t1_fit_traces(traces, kind, outdir):
    """Fit stretched exponentials to recovery-trace CSVs."""
    out = _outdir(outdir)
    results = []
    for path in traces:
        trace = io.read_trace_csv(path, kind=kind)
        fit = relax.fit_recovery_trace(trace)
        results.append(
            {
                "path": str(path),
                "t1_us": fit.t1_us,
                "t1_err_us": fit.t1_err_us,
                "beta": fit.beta,
                "beta_err": fit.beta_err,
                "amplitude": fit.amplitude,
                "offset": fit.offset,
                "rmse": fit.rmse,
            }
        )
    io.write_json({"traces": results}, out / "t1_traces.json")
    _write_run_json(out, "t1 fit-traces")
    click.echo(f"fitted {len(results)} traces -> {out / 't1_traces.json'}")


@t1.command("assemble")
@manifest_option
@outdir_option
@wrap_errors
def t1_assemble(manifest_path, outdir):
    """Assemble rate files into one series using the method/orientation policy."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    series = manifest.assemble_rates()
    io.write_rate_csv(series.points, out / "rates_assembled.csv")
    io.write_json(
        {
            "label": series.label,
            "n_points": len(series),
            "t_min_K": float(series.temperatures[0]),
            "t_max_K": float(series.temperatures[-1]),
        },
        out / "t1_assemble.json",
    )
    _write_run_json(out, "t1 assemble", manifest)
    click.echo(f"assembled {len(series)} points -> {out / 'rates_assembled.csv'}")


@t1.command("localmode")
@manifest_option
@outdir_option
@click.option("--modes", "n_modes", default=2, show_default=True, type=int)
@click.option("--no-direct", is_flag=True, help="Drop the one-phonon (direct) term.")
@wrap_errors
def t1_localmode(manifest_path, outdir, n_modes, no_direct):
    """Fit the direct + local-mode rate model."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    series = manifest.assemble_rates()
    fit = relax.fit_local_modes(series, n_modes=n_modes, include_direct=not no_direct)
    io.write_json(
        {
            "label": series.label,
            "a_dir_per_us_K": fit.a_dir_per_us_K,
            "a_dir_err_per_us_K": fit.a_dir_err_per_us_K,
            "modes": [
                {
                    "c_per_us": m.c_per_us,
                    "c_err_per_us": m.c_err_per_us,
                    "e_cm": m.e_cm,
                    "e_err_cm": m.e_err_cm,
                }
                for m in fit.modes
            ],
            "rmse_log10": fit.rmse_log,
        },
        out / "t1_localmode.json",
    )
    _write_run_json(out, "t1 localmode", manifest)
    click.echo(f"local-mode fit -> {out / 't1_localmode.json'}")


@t1.command("debye")
@manifest_option
@outdir_option
@click.option("--no-direct", is_flag=True)
@wrap_errors
def t1_debye(manifest_path, outdir, no_direct):
    """Fit the Debye-model Raman alternative."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    series = manifest.assemble_rates()
    fit = relax.fit_debye_raman(series, include_direct=not no_direct)
    io.write_json(
        {
            "label": series.label,
            "a_dir_per_us_K": fit.a_dir_per_us_K,
            "c_raman": fit.c_raman,
            "theta_d_K": fit.theta_d_K,
            "theta_d_err_K": fit.theta_d_err_K,
            "rmse_log10": fit.rmse_log,
        },
        out / "t1_debye.json",
    )
    _write_run_json(out, "t1 debye", manifest)
    click.echo(f"debye fit -> {out / 't1_debye.json'}")


@t1.command("slope")
@manifest_option
@outdir_option
@click.option("--window", default=5, show_default=True, type=int)
@wrap_errors
def t1_slope(manifest_path, outdir, window):
    """Logarithmic slopes d ln(rate)/d ln(T) of the assembled series."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    series = manifest.assemble_rates()
    slopes = relax.log_slope(series, window=window)
    path = out / "t1_slope.csv"
    with path.open("w", newline="") as fh:
        fh.write("T_K,slope\n")
        for t, s in zip(series.temperatures, slopes):
            fh.write(_csv_row(t, s))
    io.write_json(
        {"label": series.label, "window": window, "n_points": len(series)},
        out / "t1_slope.json",
    )
    _write_run_json(out, "t1 slope", manifest)
    click.echo(f"slopes -> {path}")


# -- spc ---------------------------------------------------------------------


def _spc_fit_payload(fit: spc.SpcFit):
    return {
        "window_edges_cm": list(fit.profile.window_edges_cm),
        "excluded_below_cm": fit.profile.excluded_below_cm,
        "lambda_per_us": list(fit.profile.lambdas_per_us),
        "lambda_err_per_us": list(fit.lambda_errs_per_us),
        "a_dir_per_us_K": fit.a_dir_per_us_K,
        "rmse_log10": fit.rmse_log,
        "crossovers": [
            {"kind": c.kind, "temperature_K": c.temperature_K} for c in fit.crossovers
        ],
        "n_points": fit.n_points,
        "t_floor_K": fit.t_floor_K,
        "metadata": fit.metadata,
    }


@main.group("spc")
def spc_group():
    """Windowed spin-phonon coupling commands."""


@spc_group.command("fit")
@manifest_option
@outdir_option
@click.option("--edges", default=None, help="Window edges, e.g. 0,185,600.")
@wrap_errors
def spc_fit(manifest_path, outdir, edges):
    """Fit per-window coupling coefficients to the assembled rates."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    series = manifest.assemble_rates()
    options = manifest.fit_options()
    fit = spc.fit_lambda_windows(
        series,
        spectra,
        manifest.window_edges(edges),
        options=options,
        metadata={"label": manifest.label},
    )
    io.write_json(_spc_fit_payload(fit), out / "spc_fit.json")

    kept = series.restrict(t_min=options.t_floor_K)
    path = out / "spc_fit_curves.csv"
    with path.open("w", newline="") as fh:
        headers = ["T_K", "rate_data", "rate_model"] + [
            f"contrib_window{i + 1}" for i in range(fit.profile.n_windows)
        ]
        fh.write(",".join(headers) + "\n")
        for point in kept.points:
            t = point.temperature_K
            contribs = spc.window_contributions(
                fit.profile, spectra, t, options.interpolation
            )
            model = fit.a_dir_per_us_K * t + float(contribs.sum())
            row = [t, point.rate_per_us, model] + list(contribs)
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    _write_run_json(out, "spc fit", manifest)
    click.echo(f"coupling fit -> {out / 'spc_fit.json'}")


@spc_group.command("scan")
@manifest_option
@outdir_option
@click.option("--grid", default=None, help="Cutoff grid start:stop:step (cm^-1).")
@wrap_errors
def spc_scan(manifest_path, outdir, grid):
    """Scan the low/high window cutoff for the rmse minimum."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    series = manifest.assemble_rates()
    scan = spc.cutoff_scan(
        series, spectra, grid_cm=manifest.cutoff_grid(grid), options=manifest.fit_options()
    )
    io.write_json(
        {
            "label": manifest.label,
            "selected_cutoff_cm": scan.selected_cutoff_cm,
            "weakly_identified": scan.weakly_identified,
            "cutoffs_cm": list(scan.cutoffs_cm),
            "total_rmse_log10": list(scan.total_rmse_log),
        },
        out / "spc_scan.json",
    )
    path = out / "spc_scan.csv"
    with path.open("w", newline="") as fh:
        fh.write("cutoff_cm,rmse_log10\n")
        for c, r in zip(scan.cutoffs_cm, scan.total_rmse_log):
            fh.write(_csv_row(c, r))
    _write_run_json(out, "spc scan", manifest)
    click.echo(
        f"cutoff scan -> {out / 'spc_scan.json'} "
        f"(selected {scan.selected_cutoff_cm:g} cm^-1)"
    )


@spc_group.command("density")
@manifest_option
@outdir_option
@click.option("--temps", required=True, help="Comma-separated temperatures (K).")
@click.option("--edges", default=None, help="Window edges, e.g. 0,185,600.")
@wrap_errors
def spc_density(manifest_path, outdir, temps, edges):
    """Relaxation spectral densities at the requested temperatures."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    series = manifest.assemble_rates()
    options = manifest.fit_options()
    fit = spc.fit_lambda_windows(
        series, spectra, manifest.window_edges(edges), options=options
    )
    files = {}
    for t in (float(x) for x in temps.split(",")):
        density = spc.spectral_density(fit, spectra, t, options.interpolation)
        path = out / f"spc_density_{t:g}K.csv"
        with path.open("w", newline="") as fh:
            fh.write("energy_cm,density\n")
            for e, v in zip(spectra.grid.centers, density):
                fh.write(_csv_row(e, v))
        files[f"{t:g}"] = path.name
    io.write_json(
        {"label": manifest.label, "files": files, "fit": _spc_fit_payload(fit)},
        out / "spc_density.json",
    )
    _write_run_json(out, "spc density", manifest)
    click.echo(f"densities -> {out}")


@spc_group.command("sweep")
@manifest_option
@outdir_option
@click.option("--cutoffs", default="600,380", show_default=True,
              help="Normalization cutoffs (cm^-1), comma-separated.")
@click.option("--edges", default=None, help="Window edges, e.g. 0,185,600.")
@wrap_errors
def spc_sweep(manifest_path, outdir, cutoffs, edges):
    """Robustness sweep over normalization cutoffs and spectrum representations."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    series = manifest.assemble_rates()
    named_sets = {
        rep: manifest.load_spectra(corrected=True, representation=rep)
        for rep in manifest.representations()
    }
    cells = spc.robustness_sweep(
        series,
        named_sets,
        normalization_cutoffs_cm=tuple(float(x) for x in cutoffs.split(",")),
        window_edges_cm=manifest.window_edges(edges),
        options=manifest.fit_options(),
    )
    rows = []
    for (name, cutoff), cell in sorted(cells.items()):
        row = {"representation": name, "normalization_cutoff_cm": cutoff}
        if cell.fit is not None:
            row["lambda_per_us"] = list(cell.fit.profile.lambdas_per_us)
            row["lambda_ratio_high_low"] = cell.lambda_ratio
            row["rmse_log10"] = cell.fit.rmse_log
        else:
            row["error"] = cell.error
        rows.append(row)
    io.write_json({"label": manifest.label, "cells": rows}, out / "spc_sweep.json")
    path = out / "spc_sweep.csv"
    with path.open("w", newline="") as fh:
        fh.write("representation,normalization_cutoff_cm,lambda_low_per_us,lambda_high_per_us,ratio\n")
        for row in rows:
            lam = row.get("lambda_per_us")
            if lam:
                fh.write(
                    f"{row['representation']},"
                    + _csv_row(row["normalization_cutoff_cm"], lam[0], lam[-1], row["lambda_ratio_high_low"])
                )
            else:
                fh.write(
                    f"{row['representation']},{float(row['normalization_cutoff_cm'])!r},,,\n"
                )
    _write_run_json(out, "spc sweep", manifest)
    click.echo(f"sweep -> {out / 'spc_sweep.json'}")


# -- lattice -------------------------------------------------------------------


@main.group("lattice")
def lattice_group():
    """Diffraction commands."""


@lattice_group.command("volume")
@manifest_option
@outdir_option
@wrap_errors
def lattice_volume(manifest_path, outdir):
    """Track diffraction peaks and compute the fractional volume change."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    patterns = manifest.load_patterns()
    seeds = manifest.peak_seeds("diffraction")
    tracks = lattice.track_peaks(patterns, seeds)
    refs = manifest.payload.get("peak_seeds", {}).get("diffraction_references")
    vol = lattice.volume_expansion(tracks, reference_d=refs)
    path = out / "lattice_volume.csv"
    with path.open("w", newline="") as fh:
        fh.write("T_K,dv_over_v,spread\n")
        for t, v, s in zip(vol.temperatures_K, vol.dv_over_v, vol.spread):
            fh.write(_csv_row(t, v, s))
    io.write_json(
        {
            "label": manifest.label,
            "reference_source": vol.reference_source,
            "temperatures_K": list(vol.temperatures_K),
            "dv_over_v": list(vol.dv_over_v),
            "spread": list(vol.spread),
        },
        out / "lattice_volume.json",
    )
    _write_run_json(out, "lattice volume", manifest)
    click.echo(f"volume track -> {path}")


# -- anharm ---------------------------------------------------------------------


@main.group("anharm")
def anharm_group():
    """Phonon anharmonicity commands."""


@anharm_group.command("peaks")
@manifest_option
@outdir_option
@click.option("--profile", default="gaussian", show_default=True,
              type=click.Choice(list(anharm.PROFILES)))
@wrap_errors
def anharm_peaks(manifest_path, outdir, profile):
    """Track phonon peaks versus temperature."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    seeds = manifest.peak_seeds("phonon")
    tracks = anharm.fit_phonon_peaks(spectra, seeds, profile=profile)
    files = []
    for track in tracks:
        path = out / f"anharm_{track.label.replace('@', '_')}.csv"
        with path.open("w", newline="") as fh:
            fh.write("T_K,center_cm,center_err,fwhm_cm,fwhm_err\n")
            for i, t in enumerate(track.temperatures_K):
                fh.write(
                    _csv_row(
                        t,
                        track.centers_cm[i],
                        track.center_errs_cm[i],
                        track.fwhms_cm[i],
                        track.fwhm_errs_cm[i],
                    )
                )
        files.append(path.name)
    io.write_json(
        {"label": manifest.label, "profile": profile, "files": files},
        out / "anharm_peaks.json",
    )
    _write_run_json(out, "anharm peaks", manifest)
    click.echo(f"{len(tracks)} tracks -> {out}")


@anharm_group.command("gruneisen")
@manifest_option
@outdir_option
@click.option("--profile", default="gaussian", show_default=True,
              type=click.Choice(list(anharm.PROFILES)))
@wrap_errors
def anharm_gruneisen(manifest_path, outdir, profile):
    """Grueneisen parameters from phonon tracks plus the diffraction volume."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    spectra = manifest.load_spectra(corrected=True)
    tracks = anharm.fit_phonon_peaks(spectra, manifest.peak_seeds("phonon"), profile=profile)
    patterns = manifest.load_patterns()
    d_tracks = lattice.track_peaks(patterns, manifest.peak_seeds("diffraction"))
    refs = manifest.payload.get("peak_seeds", {}).get("diffraction_references")
    vol = lattice.volume_expansion(d_tracks, reference_d=refs)
    results = []
    for track in tracks:
        res = anharm.gruneisen(track, vol)
        results.append(
            {
                "track": track.label,
                "gamma": res.gamma,
                "gamma_err": res.gamma_err,
                "linearity_rmse": res.linearity_rmse,
                "base_energy_cm": res.base_energy_cm,
                "base_temperature_K": res.base_temperature_K,
                "n_points": res.n_points,
            }
        )
    io.write_json({"label": manifest.label, "modes": results}, out / "anharm_gruneisen.json")
    _write_run_json(out, "anharm gruneisen", manifest)
    click.echo(f"gruneisen -> {out / 'anharm_gruneisen.json'}")


# -- modes -----------------------------------------------------------------------


@main.group("modes")
def modes_group():
    """Eigenvector analytics commands."""


@modes_group.command("rmsd")
@manifest_option
@outdir_option
@click.option("--emax", default=400.0, show_default=True, type=float,
              help="Mode energy ceiling (cm^-1).")
@click.option("--temp", default=300.0, show_default=True, type=float,
              help="Temperature (K).")
@wrap_errors
def modes_rmsd(manifest_path, outdir, emax, temp):
    """Per-atom thermal displacement amplitudes."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    modeset, core = manifest.load_modes()
    values = modes.rmsd_per_atom(modeset, temperature_K=temp, e_max_cm=emax)
    payload = {
        "label": manifest.label,
        "temperature_K": temp,
        "e_max_cm": emax,
        "per_atom_A": list(values),
        "mean_all_A": modes.summarize_rmsd(values),
    }
    if core is not None:
        payload["mean_core_A"] = modes.summarize_rmsd(values, core.atom_indices)
    io.write_json(payload, out / "modes_rmsd.json")
    _write_run_json(out, "modes rmsd", manifest)
    click.echo(f"rmsd -> {out / 'modes_rmsd.json'}")


@modes_group.command("stretch")
@manifest_option
@outdir_option
@wrap_errors
def modes_stretch(manifest_path, outdir):
    """Rank modes by symmetric metal-ligand stretching character."""
    manifest = Manifest.load(manifest_path)
    out = _outdir(outdir)
    modeset, core = manifest.load_modes()
    if core is None:
        raise ValidationError("manifest: modes file lacks the 'core' section")
    ranking = modes.stretch_character(modeset, core)
    io.write_json(
        {
            "label": manifest.label,
            "ranking": [
                {
                    "mode_index": idx,
                    "freq_cm": modeset.modes[idx].freq_cm,
                    "score": score,
                }
                for idx, score in ranking
            ],
        },
        out / "modes_stretch.json",
    )
    _write_run_json(out, "modes stretch", manifest)
    click.echo(f"stretch ranking -> {out / 'modes_stretch.json'}")


# -- synth -----------------------------------------------------------------------


@main.group("synth")
def synth_group():
    """Synthetic data generators (round-trip validation)."""


@synth_group.command("spectra")
@outdir_option
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--temps", default="5,100,200,300", show_default=True)
@click.option("--peaks", default="40:12:0.7,265:25:0.3", show_default=True,
              help="center:fwhm:weight triples, comma-separated.")
@click.option("--grid-max", default=600.0, show_default=True, type=float)
@click.option("--grid-bins", default=300, show_default=True, type=int)
@wrap_errors
def synth_spectra(outdir, seed, temps, peaks, grid_max, grid_bins):
    """Generate a synthetic spectrum family and write spectrum CSVs."""
    out = _outdir(outdir)
    peak_list = []
    for token in peaks.split(","):
        center, fwhm, weight = (float(x) for x in token.split(":"))
        peak_list.append(synth.SynthPeak(center_cm=center, fwhm_cm=fwhm, weight=weight))
    recipe = synth.SynthSpec(
        peaks=tuple(peak_list),
        temperatures_K=tuple(float(x) for x in temps.split(",")),
        grid=EnergyGrid.uniform(0.0, grid_max, grid_bins),
        seed=seed,
    )
    spectra = synth.generate_spectrum_set(recipe)
    for spec in spectra:
        io.write_spectrum_csv(spec, out / f"synth_spectrum_{spec.temperature_K:g}K.csv")
    io.write_json(
        {
            "seed": seed,
            "temperatures_K": list(spectra.temperatures),
            "peaks": [
                {"center_cm": p.center_cm, "fwhm_cm": p.fwhm_cm, "weight": p.weight}
                for p in peak_list
            ],
        },
        out / "synth_spectra.json",
    )
    _write_run_json(out, "synth spectra", seeds={"synth": seed})
    click.echo(f"wrote {len(spectra)} spectra to {out}")


@synth_group.command("rates")
@outdir_option
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--lambdas", default="0.068,127", show_default=True)
@click.option("--edges", default="0,185,600", show_default=True)
@click.option("--temps", default=None, help="Comma-separated (default 20 log-spaced 10-300).")
@click.option("--noise", default=0.0, show_default=True, type=float)
@click.option("--a-dir", default=0.0, show_default=True, type=float)
@click.option("--spectra-manifest", "manifest_path", default=None, type=click.Path(),
              help="Manifest whose corrected spectra feed the forward model.")
@wrap_errors
def synth_rates(outdir, seed, lambdas, edges, temps, noise, a_dir, manifest_path):
    """Generate a synthetic rate series from the forward model."""
    out = _outdir(outdir)
    profile = spc.LambdaProfile(
        window_edges_cm=np.array([float(x) for x in edges.split(",")]),
        lambdas_per_us=np.array([float(x) for x in lambdas.split(",")]),
    )
    if manifest_path:
        spectra = Manifest.load(manifest_path).load_spectra(corrected=True)
    else:
        recipe = synth.SynthSpec(
            peaks=(
                synth.SynthPeak(center_cm=40.0, fwhm_cm=12.0, weight=0.7),
                synth.SynthPeak(center_cm=265.0, fwhm_cm=25.0, weight=0.3),
            ),
            temperatures_K=(5.0, 100.0, 200.0, 300.0),
            grid=EnergyGrid.uniform(0.0, 600.0, 300),
            seed=seed,
        )
        spectra = synth.generate_spectrum_set(recipe)
    if temps:
        t_list = np.array([float(x) for x in temps.split(",")])
    else:
        t_list = np.geomspace(10.0, 300.0, 20)
    series = synth.generate_rate_series(
        profile, spectra, t_list, noise_rel=noise, seed=seed, a_dir_per_us_K=a_dir
    )
    io.write_rate_csv(series.points, out / "synth_rates.csv")
    io.write_json(
        {
            "seed": seed,
            "noise_rel": noise,
            "a_dir_per_us_K": a_dir,
            "truth_lambda_per_us": list(profile.lambdas_per_us),
            "truth_edges_cm": list(profile.window_edges_cm),
        },
        out / "synth_rates.json",
    )
    _write_run_json(out, "synth rates", seeds={"synth": seed})
    click.echo(f"wrote {len(series)} rates to {out / 'synth_rates.csv'}")


@synth_group.command("trace")
@outdir_option
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--t1", "t1_us", default=100.0, show_default=True, type=float)
@click.option("--beta", default=1.0, show_default=True, type=float)
@click.option("--kind", default="inversion", show_default=True,
              type=click.Choice(["inversion", "saturation"]))
@click.option("--noise", default=0.0, show_default=True, type=float)
@wrap_errors
def synth_trace(outdir, seed, t1_us, beta, kind, noise):
    """Generate a stretched-exponential recovery trace."""
    out = _outdir(outdir)
    trace = synth.generate_recovery_trace(
        t1_us=t1_us, beta=beta, kind=kind, noise=noise, seed=seed
    )
    io.write_trace_csv(trace, out / "synth_trace.csv")
    io.write_json(
        {"seed": seed, "t1_us": t1_us, "beta": beta, "kind": kind, "noise": noise},
        out / "synth_trace.json",
    )
    _write_run_json(out, "synth trace", seeds={"synth": seed})
    click.echo(f"trace -> {out / 'synth_trace.csv'}")


if __name__ == "__main__":
    main()

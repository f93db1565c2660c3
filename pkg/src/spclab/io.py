"""File formats: spectrum/rate/trace/pattern CSV, mode-set JSON, result JSON.

CSV schemas (header required):
  spectrum:    energy_cm,intensity[,error]      (energy = bin centers)
  rates:       T_K,rate_per_us[,err][,orientation][,method]
  trace:       delay_us,signal
  diffraction: d_angstrom,intensity

Numeric JSON outputs carry units in their field names (_per_us, _cm, _K).
"""

import csv
import json
from pathlib import Path

import numpy as np

from .core import EnergyGrid, Spectrum
from .errors import DataFormatError
from .lattice import DiffractionPattern
from .modes import Atom, CoreSpec, Mode, ModeSet
from .relax import RatePoint, RecoveryTrace


def _read_rows(path, required):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataFormatError(f"{path}: empty file")
            fields = [f.strip() for f in reader.fieldnames]
            missing = [c for c in required if c not in fields]
            if missing:
                raise DataFormatError(
                    f"{path}: missing column(s) {missing}; found {fields}"
                )
            rows = [
                {k.strip(): (v.strip() if isinstance(v, str) else v) for k, v in row.items()}
                for row in reader
            ]
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return rows


def _parse_float(row, key, path):
    try:
        return float(row[key])
    except (KeyError, TypeError, ValueError):
        raise DataFormatError(f"{path}: bad numeric value for {key!r}: {row.get(key)!r}")


def edges_from_centers(centers):
    """Bin edges from contiguous-bin centers (midpoints, ends extended)."""
    centers = np.asarray(centers, dtype=float)
    if centers.size == 1:
        half = max(abs(centers[0]) * 0.5, 0.5)
        return np.array([centers[0] - half, centers[0] + half])
    mid = 0.5 * (centers[:-1] + centers[1:])
    first = centers[0] - (mid[0] - centers[0])
    last = centers[-1] + (centers[-1] - mid[-1])
    return np.concatenate([[max(first, 0.0)], mid, [last]])


def read_spectrum_csv(path, temperature_K, provenance="raw"):
    rows = _read_rows(path, ["energy_cm", "intensity"])
    energy = np.array([_parse_float(r, "energy_cm", path) for r in rows])
    intensity = np.array([_parse_float(r, "intensity", path) for r in rows])
    order = np.argsort(energy)
    grid = EnergyGrid(edges_from_centers(energy[order]))
    return Spectrum(
        grid=grid,
        intensity=intensity[order],
        temperature_K=temperature_K,
        provenance=provenance,
    )


def write_spectrum_csv(spec: Spectrum, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["energy_cm", "intensity"])
        for e, v in zip(spec.grid.centers, spec.intensity):
            writer.writerow([repr(float(e)), repr(float(v))])


def read_rate_csv(path, default_orientation="unspecified", default_method="inversion"):
    rows = _read_rows(path, ["T_K", "rate_per_us"])
    points = []
    for row in rows:
        err = float(row["err"]) if row.get("err") else 0.0
        points.append(
            RatePoint(
                temperature_K=_parse_float(row, "T_K", path),
                rate_per_us=_parse_float(row, "rate_per_us", path),
                rate_err_per_us=err,
                orientation=row.get("orientation") or default_orientation,
                method=row.get("method") or default_method,
            )
        )
    return points


def write_rate_csv(points, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["T_K", "rate_per_us", "err", "orientation", "method"])
        for p in points:
            writer.writerow(
                [
                    repr(float(p.temperature_K)),
                    repr(float(p.rate_per_us)),
                    repr(float(p.rate_err_per_us)),
                    p.orientation,
                    p.method,
                ]
            )


def read_trace_csv(path, kind="inversion"):
    rows = _read_rows(path, ["delay_us", "signal"])
    delays = np.array([_parse_float(r, "delay_us", path) for r in rows])
    signal = np.array([_parse_float(r, "signal", path) for r in rows])
    order = np.argsort(delays)
    return RecoveryTrace(delays_us=delays[order], signal=signal[order], kind=kind)


def write_trace_csv(trace: RecoveryTrace, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delay_us", "signal"])
        for d, s in zip(trace.delays_us, trace.signal):
            writer.writerow([repr(float(d)), repr(float(s))])


def read_pattern_csv(path, temperature_K):
    rows = _read_rows(path, ["d_angstrom", "intensity"])
    d = np.array([_parse_float(r, "d_angstrom", path) for r in rows])
    intensity = np.array([_parse_float(r, "intensity", path) for r in rows])
    return DiffractionPattern(d_angstrom=d, intensity=intensity, temperature_K=temperature_K)


def read_modeset_json(path):
    """Load a ModeSet (and the optional CoreSpec under the "core" key)."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        atoms = tuple(
            Atom(
                element=a["element"],
                mass_amu=a["mass_amu"],
                position_A=np.asarray(a["position_A"], dtype=float),
                sigma_inc_barn=a.get("sigma_inc_barn", 0.0),
            )
            for a in payload["atoms"]
        )
        modes = tuple(
            Mode(freq_cm=m["freq_cm"], eigvec=np.asarray(m["eigvec"], dtype=float))
            for m in payload["modes"]
        )
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed mode-set JSON ({exc})") from exc
    modeset = ModeSet(atoms=atoms, modes=modes)
    core = None
    if "core" in payload:
        c = payload["core"]
        try:
            core = CoreSpec(
                center_index=c["center_index"],
                ligand_indices=tuple(c["ligand_indices"]),
                plane_normal=np.asarray(c["plane_normal"], dtype=float),
            )
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: malformed core spec ({exc})") from exc
    return modeset, core


def write_modeset_json(modeset: ModeSet, path, core: CoreSpec = None):
    payload = {
        "atoms": [
            {
                "element": a.element,
                "mass_amu": a.mass_amu,
                "position_A": list(a.position_A),
                "sigma_inc_barn": a.sigma_inc_barn,
            }
            for a in modeset.atoms
        ],
        "modes": [
            {"freq_cm": m.freq_cm, "eigvec": list(m.eigvec.ravel())}
            for m in modeset.modes
        ],
    }
    if core is not None:
        payload["core"] = {
            "center_index": core.center_index,
            "ligand_indices": list(core.ligand_indices),
            "plane_normal": list(core.plane_normal),
        }
    write_json(payload, path)


def jsonable(value):
    """Recursively coerce numpy scalars/arrays for JSON serialization."""
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(payload, path):
    """Deterministic JSON: sorted keys, fixed layout, trailing newline."""
    text = json.dumps(jsonable(payload), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")

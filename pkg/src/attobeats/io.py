"""File formats: scan CSV, spectra, fit JSON, tables, checkpoints.

Every numeric field is written in fixed scientific notation with 12
significant digits ("%.11e"), which makes outputs byte-reproducible
across runs and worker counts.  The run manifest is the one exception
to byte identity: it records a wall-clock timestamp next to the
checksums of everything else.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fitting import BeatComponent, BeatFit, CorrelationReport
from .model import DelayScan, Resonance, ResonanceSet
from .tdse import Grid2e, Wavefunction2e
from .units import as_to_au, au_to_as

__all__ = [
    "format_number",
    "ScanWriter",
    "read_scan_csv",
    "completed_delays",
    "scan_to_delay_scan",
    "write_spectrum_csv",
    "read_spectrum_csv",
    "write_beat_fit",
    "read_beat_fit",
    "write_correlation",
    "read_correlation",
    "write_resonance_table",
    "read_resonance_table",
    "write_checkpoint",
    "read_checkpoint",
    "write_manifest",
    "file_sha256",
]

SCAN_COLUMNS = ("tau_as", "A_M", "P_beta", "P_bg", "yield_windowed")


def format_number(x: float) -> str:
    """Fixed scientific notation, 12 significant digits."""
    return f"{float(x):.11e}"


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ScanWriter:
    """Delay-scan CSV writer that flushes after every row.

    Rows arrive one delay at a time so an interrupted scan keeps every
    finished point; a failed point is recorded with nan columns.
    """

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        mode = "a" if append and self.path.exists() else "w"
        self._fh = open(self.path, mode)
        if mode == "w":
            self._fh.write(",".join(SCAN_COLUMNS) + "\n")
            self._fh.flush()

    def write_row(self, tau_au, a_mod, p_beta, p_background, yield_windowed):
        fields = [
            format_number(au_to_as(tau_au)),
            format_number(a_mod),
            format_number(p_beta),
            format_number(p_background),
            format_number(yield_windowed),
        ]
        self._fh.write(",".join(fields) + "\n")
        self._fh.flush()

    def write_failed(self, tau_au):
        fields = [format_number(au_to_as(tau_au))] + ["nan"] * 4
        self._fh.write(",".join(fields) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_scan_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Scan CSV -> column arrays keyed by header name (delays in as)."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != SCAN_COLUMNS:
            raise ValueError(
                f"{path}: expected columns {','.join(SCAN_COLUMNS)}, "
                f"got {','.join(header)}"
            )
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.empty((0, 5))
    if rows and data.shape[1] != 5:
        raise ValueError(f"{path}: malformed scan row")
    return {name: data[:, j] for j, name in enumerate(SCAN_COLUMNS)}


def completed_delays(path: str | Path) -> np.ndarray:
    """Delays (a.u.) already present with finite entries, for --resume."""
    path = Path(path)
    if not path.exists():
        return np.array([], dtype=float)
    cols = read_scan_csv(path)
    finite = np.isfinite(cols["yield_windowed"])
    return as_to_au(cols["tau_as"][finite])


def scan_to_delay_scan(cols: dict[str, np.ndarray]) -> DelayScan:
    """Column arrays -> DelayScan in a.u.; failed (nan) rows dropped."""
    finite = np.isfinite(cols["yield_windowed"])
    order = np.argsort(cols["tau_as"][finite])
    return DelayScan(
        taus=as_to_au(cols["tau_as"][finite][order]),
        a_mod=cols["A_M"][finite][order],
        p_beta=cols["P_beta"][finite][order],
        p_background=cols["P_bg"][finite][order],
        yield_windowed=cols["yield_windowed"][finite][order],
    )


def write_spectrum_csv(path: str | Path, eps: np.ndarray, density: np.ndarray):
    """Energy-binned joint spectrum as (eps1, eps2, P) triples.

    Rows run over the first energy index fastest varying last, i.e.
    bins1 x bins2 rows in row-major order.
    """
    eps = np.asarray(eps, dtype=float)
    density = np.asarray(density, dtype=float)
    if density.shape != (eps.size, eps.size):
        raise ValueError(
            f"density shape {density.shape} does not match {eps.size} bins"
        )
    with open(path, "w") as fh:
        fh.write("eps1_au,eps2_au,P\n")
        for i in range(eps.size):
            for j in range(eps.size):
                fh.write(
                    f"{format_number(eps[i])},{format_number(eps[j])},"
                    f"{format_number(density[i, j])}\n"
                )


def read_spectrum_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "eps1_au,eps2_au,P":
            raise ValueError(f"{path}: unexpected spectrum header {header!r}")
        rows = np.array(
            [line.strip().split(",") for line in fh if line.strip()], dtype=float
        )
    n = int(round(np.sqrt(rows.shape[0])))
    if n * n != rows.shape[0]:
        raise ValueError(f"{path}: {rows.shape[0]} rows is not a square grid")
    eps = rows[::n, 0]
    return eps, rows[:, 2].reshape(n, n)


def _write_json(path: str | Path, obj) -> None:
    def fmt(x, indent):
        pad = " " * indent
        if isinstance(x, dict):
            if not x:
                return "{}"
            inner = ",\n".join(
                f'{pad}  {json.dumps(k)}: {fmt(v, indent + 2)}'
                for k, v in x.items()
            )
            return "{\n" + inner + "\n" + pad + "}"
        if isinstance(x, (list, tuple)):
            if not x:
                return "[]"
            inner = ",\n".join(f"{pad}  {fmt(v, indent + 2)}" for v in x)
            return "[\n" + inner + "\n" + pad + "]"
        if isinstance(x, bool):
            return "true" if x else "false"
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        if isinstance(x, (float, np.floating)):
            return format_number(x)
        if isinstance(x, str):
            return json.dumps(x)
        if x is None:
            return "null"
        raise TypeError(f"cannot serialize {type(x)}")

    Path(path).write_text(fmt(obj, 0) + "\n")


def write_beat_fit(path: str | Path, fit: BeatFit) -> None:
    obj = {
        "components": [
            {
                "amp": c.amplitude,
                "freq_au": c.frequency,
                "gamma_au": c.decay,
                "phase": c.phase,
            }
            for c in fit.components
        ],
        "offset": fit.offset,
        "residual": fit.residual,
        "converged": fit.converged,
    }
    _write_json(path, obj)


def read_beat_fit(path: str | Path) -> BeatFit:
    obj = json.loads(Path(path).read_text())
    comps = tuple(
        BeatComponent(
            amplitude=c["amp"], frequency=c["freq_au"],
            decay=c["gamma_au"], phase=c["phase"],
        )
        for c in sorted(obj["components"], key=lambda c: c["freq_au"])
    )
    return BeatFit(
        components=comps, offset=obj["offset"], residual=obj["residual"],
        converged=obj.get("converged", True),
    )


def write_correlation(path: str | Path, rep: CorrelationReport) -> None:
    _write_json(
        path,
        {"pearson_r": rep.pearson_r, "lag": rep.lag, "nrmsd": rep.nrmsd},
    )


def read_correlation(path: str | Path) -> CorrelationReport:
    obj = json.loads(Path(path).read_text())
    return CorrelationReport(
        pearson_r=obj["pearson_r"], lag=obj["lag"], nrmsd=obj["nrmsd"]
    )


def write_resonance_table(
    path: str | Path,
    res: ResonanceSet,
    ion_energy: float | None = None,
    comment: str | None = None,
) -> None:
    """Whitespace table 'label re_E_au gamma_au' with # comments.

    The electronic reference energies ride along as special rows:
    'ground' (the two-electron ground state the transition energies are
    measured from) and optionally 'ion' (the single-ion threshold).
    """
    lines = ["# label re_E_au gamma_au"]
    if comment:
        for part in comment.splitlines():
            lines.append(f"# {part}")
    lines.append(
        f"ground {format_number(res.ground_energy)} {format_number(0.0)}"
    )
    if ion_energy is not None:
        lines.append(f"ion {format_number(ion_energy)} {format_number(0.0)}")
    for state in res.states:
        lines.append(
            f"{state.label} {format_number(state.energy.real)} "
            f"{format_number(-2.0 * state.energy.imag)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_resonance_table(
    path: str | Path,
) -> tuple[ResonanceSet, float | None]:
    """Parse a resonance table; returns (set, ion energy or None)."""
    ground = None
    ion = None
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise ValueError(
                f"{path}: line {lineno}: expected 'label re_E_au gamma_au'"
            )
        label = parts[0]
        try:
            re_e, gamma = float(parts[1]), float(parts[2])
        except ValueError:
            raise ValueError(
                f"{path}: line {lineno}: bad number in {stripped!r}"
            ) from None
        if gamma < 0.0:
            raise ValueError(f"{path}: line {lineno}: negative width")
        if label == "ground":
            ground = re_e
        elif label == "ion":
            ion = re_e
        else:
            entries.append(Resonance(label, complex(re_e, -0.5 * gamma)))
    if ground is None:
        raise ValueError(f"{path}: missing 'ground' row")
    return ResonanceSet(ground_energy=ground, states=tuple(entries)), ion


_CHECKPOINT_MAGIC = b"ATBWF001"


def write_checkpoint(
    path: str | Path, psi: Wavefunction2e, time: float
) -> None:
    """Binary state snapshot: header then the complex grid row-major.

    Header: magic, then little-endian float64 (points, extent, time,
    norm); payload: complex128 values, C order.
    """
    header = struct.pack(
        "<4d", float(psi.grid.points), psi.grid.extent, time, psi.norm()
    )
    values = np.ascontiguousarray(psi.values, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(header)
        fh.write(values.tobytes())


def read_checkpoint(path: str | Path) -> tuple[Wavefunction2e, float]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        n, extent, time, norm = struct.unpack("<4d", fh.read(32))
        n = int(n)
        payload = fh.read()
    values = np.frombuffer(payload, dtype=np.complex128)
    if values.size != n * n:
        raise ValueError(
            f"{path}: payload holds {values.size} values, expected {n * n}"
        )
    psi = Wavefunction2e(values.reshape(n, n).copy(), Grid2e(extent, n))
    got = psi.norm()
    if abs(got - norm) > 1e-8 * max(norm, 1.0):
        warnings.warn(
            f"{path}: stored norm {norm:.12e} differs from recomputed "
            f"{got:.12e}; file may be damaged"
        )
    return psi, time


def write_manifest(
    path: str | Path,
    config_sha256: str,
    outputs: dict[str, str | Path],
    seed: int,
    engine: str,
    parallel: int,
    failed_delays_as: list[float] | None = None,
) -> None:
    """Run manifest: config hash, checksums of outputs, provenance.

    The 'created_utc' field is the only non-reproducible entry; byte
    comparisons between runs should skip it (or this whole file).
    """
    checks = {
        name: file_sha256(p) for name, p in sorted(outputs.items())
    }
    obj = {
        "version": __version__,
        "engine": engine,
        "config_sha256": config_sha256,
        "seed": seed,
        "parallel": parallel,
        "outputs": checks,
        "failed_delays_as": [float(x) for x in (failed_delays_as or [])],
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(path, obj)

"""Engines behind the command line: scans, resonance tables, comparisons.

Each engine consumes a parsed Scenario and writes its products through
the io helpers, flushing scan rows as they are produced so interrupted
runs keep every finished point.  Scan points are farmed out to a
process pool and consumed in delay order, which makes the output files
byte-identical for any worker count: every point is computed by the
same single-delay code path regardless of how the work is split.
"""

from __future__ import annotations

import multiprocessing as mp
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, Scenario
from .ecs import (
    EcsGrid,
    ScalingContour,
    build_ecs_hamiltonian,
    classify_by_rotation,
    ecs_hamiltonian_1d,
    eigenpairs_near,
    resonance_set_from_states,
)
from .fitting import (
    BeatFit,
    CorrelationReport,
    CouplingFit,
    correlate,
    couplings_from_scan,
    fit_damped_cosines,
)
from .io import (
    ScanWriter,
    completed_delays,
    format_number,
    read_checkpoint,
    read_resonance_table,
    read_scan_csv,
    scan_to_delay_scan,
    write_beat_fit,
    write_checkpoint,
    write_correlation,
    write_manifest,
    write_resonance_table,
    write_spectrum_csv,
)
from .model import (
    CouplingSpec,
    default_window,
    delay_scan,
    synthesize_amplitudes,
)
from .tdse import (
    AbsorberSpec,
    DIRegionSpec,
    Grid2e,
    SoftCoreModel,
    Wavefunction2e,
    di_spectrum,
    ground_state,
    propagate,
    single_ion_threshold,
    spectrum_energy_bins,
    windowed_yield,
)
from .units import as_to_au, au_to_as

__all__ = [
    "EngineError",
    "ScanOutcome",
    "CompareOutcome",
    "run_model_scan",
    "run_tdse_scan",
    "run_find_resonances",
    "run_fit_beats",
    "run_compare",
]

SPECTRUM_BINS = 64

# Matching tolerance (a.u.) when checking a delay against rows already
# in a scan file; the CSV round trip keeps 12 significant digits, so
# anything coarser than ~1e-8 a.u. survives.
_RESUME_TOL = 1e-6


class EngineError(RuntimeError):
    """A computation stage failed in a way no retry will fix."""


@dataclass(frozen=True)
class ScanOutcome:
    """What a scan run produced and what it could not."""

    engine: str
    n_requested: int
    n_computed: int
    n_skipped: int
    failed_delays_as: tuple[float, ...]
    outputs: dict[str, Path]

    @property
    def ok(self) -> bool:
        return not self.failed_delays_as


@dataclass(frozen=True)
class CompareOutcome:
    report: CorrelationReport
    couplings: CouplingFit
    beats_data: BeatFit
    beats_model: BeatFit
    outputs: dict[str, Path]


def _resolve(scenario: Scenario, rel: str | Path) -> Path:
    """Paths inside a scenario are taken relative to the scenario file."""
    p = Path(rel)
    return p if p.is_absolute() else Path(scenario.path).parent / p


def _scan_seed(scenario: Scenario) -> int:
    return scenario.scan.seed if scenario.scan is not None else 0


# ---------------------------------------------------------------------------
# scan driver

# Per-process state for scan workers.  The pool initializer fills it;
# with the fork start method children inherit a copy, with spawn the
# initializer runs again in each child, so both work.
_STATE: dict = {}


def _model_setup(payload: dict) -> None:
    amps = synthesize_amplitudes(
        payload["res"],
        payload["pump"],
        payload["probe"],
        payload["couplings"],
        n_bins=payload["n_bins"],
        e_max=payload["e_max"],
    )
    _STATE.clear()
    _STATE.update(payload, amps=amps)


def _model_point(item: tuple[int, float]):
    i, tau = item
    try:
        one = delay_scan(_STATE["amps"], _STATE["res"], _STATE["window"], [tau])
        row = (
            float(one.a_mod[0]),
            float(one.p_beta[0]),
            float(one.p_background[0]),
            float(one.yield_windowed[0]),
        )
        return ("ok", i, tau, row, None)
    except Exception as exc:  # noqa: BLE001 - reported as a failed row
        return ("err", i, tau, f"{type(exc).__name__}: {exc}", None)


def _tdse_setup(payload: dict) -> None:
    _STATE.clear()
    _STATE.update(payload)


def _tdse_point(task: tuple[int, float, np.ndarray]):
    i, tau, values = task
    st = _STATE
    try:
        psi = Wavefunction2e(values, st["grid"])
        probe = replace(st["probe"], t_start=tau)
        t_end = tau + probe.duration + st["settle"]
        psi = propagate(
            psi,
            st["model"],
            fields=(probe,),
            t_span=(tau, t_end),
            dt=st["dt"],
            absorber=st["absorber"],
            gauge=st["gauge"],
        )
        spec = di_spectrum(psi, st["region"])
        y = windowed_yield(spec, st["window"])
        extras = None
        every = st["spectra_every"]
        if every and i % every == 0:
            extras = spectrum_energy_bins(
                spec, n_bins=SPECTRUM_BINS, e_max=st["spectra_emax"]
            )
        # modulation amplitude and delayed-path weight are envelope
        # quantities, not per-delay observables; the grid engine leaves
        # those columns at zero and reports the probe-only background
        return ("ok", i, tau, (0.0, 0.0, st["p_bg"], y), extras)
    except Exception as exc:  # noqa: BLE001 - reported as a failed row
        return ("err", i, tau, f"{type(exc).__name__}: {exc}", None)


def _run_points(setup, point, payload: dict, items, parallel: int):
    """Yield point results in submission order, serially or pooled."""
    if parallel <= 1 or len(items) <= 1:
        setup(payload)
        for item in items:
            yield point(item)
        return
    ctx = mp.get_context()
    with ctx.Pool(parallel, initializer=setup, initargs=(payload,)) as pool:
        yield from pool.imap(point, items, chunksize=1)


def _pending_delays(delays: np.ndarray, csv_path: Path, resume: bool) -> set[int]:
    """Indices of delays not yet present as finished rows."""
    done = completed_delays(csv_path) if resume else np.empty(0)
    return {
        i
        for i, tau in enumerate(delays)
        if not (done.size and np.min(np.abs(done - tau)) < _RESUME_TOL)
    }


class _ScanRecorder:
    """Writes point results in order: rows, spectra, failure list."""

    def __init__(self, out_dir: Path, writer: ScanWriter, outputs: dict):
        self.out_dir = out_dir
        self.writer = writer
        self.outputs = outputs
        self.failed: list[float] = []

    def record(self, result) -> None:
        status, i, tau, body, extras = result
        if status == "ok":
            self.writer.write_row(tau, *body)
            if extras is not None:
                spath = self.out_dir / f"spectrum_tau{i:04d}.csv"
                write_spectrum_csv(spath, *extras)
                self.outputs[spath.stem] = spath
        else:
            warnings.warn(f"delay {au_to_as(tau):.3f} as failed: {body}")
            self.writer.write_failed(tau)
            self.failed.append(au_to_as(tau))


def _finish_scan(
    engine: str,
    scenario: Scenario,
    out_dir: Path,
    outputs: dict[str, Path],
    failed: list[float],
    parallel: int,
    n_pending: int,
) -> ScanOutcome:
    write_manifest(
        out_dir / "manifest.json",
        scenario.sha256,
        outputs,
        seed=_scan_seed(scenario),
        engine=engine,
        parallel=parallel,
        failed_delays_as=failed,
    )
    outputs["manifest"] = out_dir / "manifest.json"
    n = int(scenario.scan.delays.size)
    return ScanOutcome(
        engine=engine,
        n_requested=n,
        n_computed=n_pending - len(failed),
        n_skipped=n - n_pending,
        failed_delays_as=tuple(failed),
        outputs=outputs,
    )


def _drive_scan(
    engine: str,
    scenario: Scenario,
    out_dir: Path,
    payload: dict,
    setup,
    point,
    parallel: int,
    resume: bool,
) -> ScanOutcome:
    delays = scenario.scan.delays
    csv_path = out_dir / "scan.csv"
    pending = _pending_delays(delays, csv_path, resume)
    items = [(i, float(tau)) for i, tau in enumerate(delays) if i in pending]
    if delays.size == 0:
        warnings.warn("empty delay list: writing a header-only scan", stacklevel=3)

    outputs: dict[str, Path] = {"scan": csv_path}
    with ScanWriter(csv_path, append=resume and csv_path.exists()) as writer:
        rec = _ScanRecorder(out_dir, writer, outputs)
        for result in _run_points(setup, point, payload, items, parallel):
            rec.record(result)
    return _finish_scan(
        engine, scenario, out_dir, outputs, rec.failed, parallel, len(items)
    )


# ---------------------------------------------------------------------------
# engines


def run_model_scan(
    scenario: Scenario,
    out_dir: str | Path,
    parallel: int = 1,
    resume: bool = False,
) -> ScanOutcome:
    """Delay scan of the essential-states interference model.

    Resonances come from a table produced by run_find_resonances (or
    written by hand); amplitudes are synthesized from the pulse pair and
    the coupling shapes in the scenario's model section.
    """
    scenario.require("pulses", "scan", "model")
    ms = scenario.model
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    res, _ion = read_resonance_table(_resolve(scenario, ms.resonances))
    window = scenario.scan.window
    if isinstance(window, str):
        window = default_window(scenario.pulses.probe.energy, ms.i1, ms.i2)
    couplings = CouplingSpec(
        threshold_i1=ms.i1,
        threshold_i2=ms.i2,
        gamma_strength=ms.gamma_strength,
        gamma_width=ms.gamma_width,
        total_width=ms.total_width,
        sharing_width=ms.sharing_width,
        excitation=ms.excitation,
    )
    payload = dict(
        res=res,
        pump=scenario.pulses.pump,
        probe=scenario.pulses.probe,
        couplings=couplings,
        n_bins=ms.n_bins,
        e_max=ms.e_max,
        window=window,
    )
    return _drive_scan(
        "model", scenario, out_dir, payload, _model_setup, _model_point,
        parallel, resume,
    )


def run_tdse_scan(
    scenario: Scenario,
    out_dir: str | Path,
    parallel: int = 1,
    resume: bool = False,
    spectra_every: int = 0,
) -> ScanOutcome:
    """Delay scan on the two-electron grid.

    Stage one (serial): relax to the ground state, run the pump once,
    and snapshot the wavefunction pump_clear after the pulse ends; also
    measure the probe-only background from the unpumped ground state.
    Stage two: a master walks the delay grid, advancing the pumped
    state field-free between consecutive delays, and hands each delay's
    snapshot to the pool for the probe-and-settle branch plus the
    windowed double-ionization yield.  Chaining keeps the total
    propagation linear in the scan span instead of quadratic, and every
    branch is computed identically whatever the worker count.  All
    requested delays must lie at or after the snapshot time.
    """
    scenario.require("pulses", "scan", "tdse")
    ts = scenario.tdse
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    grid = Grid2e(ts.extent, ts.points)
    model = SoftCoreModel()
    pump, probe = scenario.pulses.pump, scenario.pulses.probe
    absorber = AbsorberSpec(start=ts.absorber_start, strength=ts.absorber_strength)
    region = DIRegionSpec(radius=ts.di_radius, ramp=ts.di_ramp)
    t_chk = pump.t_start + pump.duration + ts.pump_clear

    delays = scenario.scan.delays
    if delays.size and float(delays.min()) < t_chk - 1e-9:
        raise ConfigError(
            f"{scenario.path}: smallest delay {au_to_as(float(delays.min())):.3f} as "
            f"precedes the pump snapshot at {au_to_as(t_chk):.3f} as; the grid "
            f"engine propagates the pump once, so delays must be >= pump "
            f"duration plus pump_clear"
        )

    try:
        e0, psi0 = ground_state(grid, model)
    except RuntimeError as exc:
        raise EngineError(f"ground state did not converge: {exc}") from exc

    window = scenario.scan.window
    if isinstance(window, str):
        i1, i2 = single_ion_threshold(grid, model, e0)
        window = default_window(probe.energy, i1, i2)

    # Probe-only background: the ground state is stationary, so one run
    # at zero delay gives the delay-independent direct term.
    bg_probe = replace(probe, t_start=0.0)
    bg_psi = propagate(
        psi0,
        model,
        fields=(bg_probe,),
        t_span=(0.0, bg_probe.duration + ts.settle),
        dt=ts.dt,
        absorber=absorber,
        gauge=ts.gauge,
    )
    p_bg = windowed_yield(di_spectrum(bg_psi, region), window)

    chk_path = out_dir / "pump.chk"
    if resume and chk_path.exists():
        pumped, t_saved = read_checkpoint(chk_path)
        if abs(t_saved - t_chk) > 1e-9 or pumped.grid != grid:
            raise ConfigError(
                f"{scenario.path}: checkpoint {chk_path} was written for a "
                f"different pump stage or grid; remove it or start a fresh "
                f"output directory"
            )
    else:
        pumped = propagate(
            psi0,
            model,
            fields=(pump,),
            t_span=(pump.t_start, t_chk),
            dt=ts.dt,
            absorber=absorber,
            gauge=ts.gauge,
        )
        write_checkpoint(chk_path, pumped, t_chk)

    payload = dict(
        grid=grid,
        model=model,
        probe=probe,
        settle=ts.settle,
        dt=ts.dt,
        absorber=absorber,
        region=region,
        window=window,
        gauge=ts.gauge,
        p_bg=p_bg,
        spectra_every=int(spectra_every),
        spectra_emax=2.0 * window.hi,
    )

    csv_path = out_dir / "scan.csv"
    pending = _pending_delays(delays, csv_path, resume)
    if delays.size == 0:
        warnings.warn("empty delay list: writing a header-only scan", stacklevel=2)

    outputs: dict[str, Path] = {"checkpoint": chk_path, "scan": csv_path}
    pool = None
    ctx = mp.get_context()
    if parallel > 1 and len(pending) > 1:
        pool = ctx.Pool(parallel, initializer=_tdse_setup, initargs=(payload,))
    else:
        _tdse_setup(payload)

    try:
        with ScanWriter(csv_path, append=resume and csv_path.exists()) as writer:
            rec = _ScanRecorder(out_dir, writer, outputs)
            state, t_now = pumped, t_chk
            batch: list[tuple[int, float, np.ndarray]] = []
            batch_cap = max(1, 2 * parallel) if pool is not None else 1
            for i, tau in enumerate(delays):
                tau = float(tau)
                if pending and tau > t_now + 1e-12:
                    state = propagate(
                        state, model, t_span=(t_now, tau), dt=ts.dt,
                        absorber=absorber, gauge=ts.gauge,
                    )
                    t_now = tau
                if i not in pending:
                    continue
                batch.append((i, tau, state.values))
                if len(batch) >= batch_cap:
                    _flush_batch(pool, batch, rec)
                    batch = []
            if batch:
                _flush_batch(pool, batch, rec)
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    return _finish_scan(
        "tdse", scenario, out_dir, outputs, rec.failed, parallel, len(pending)
    )


def _flush_batch(pool, batch, rec: "_ScanRecorder") -> None:
    results = pool.map(_tdse_point, batch) if pool is not None else [
        _tdse_point(task) for task in batch
    ]
    for result in results:
        rec.record(result)


def run_find_resonances(scenario: Scenario, out_dir: str | Path) -> dict[str, Path]:
    """Locate autoionizing states by complex scaling and export a table.

    Writes resonances.txt with the ground row taken from a bound-state
    solve on the same scaled grid (finite-difference errors then cancel
    in the transition energies) and an ion row from the matching 1D
    problem.
    """
    scenario.require("resonances")
    es = scenario.resonances
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = SoftCoreModel()

    states = classify_by_rotation(
        es.extent,
        es.points,
        es.radius,
        model,
        es.sigma,
        k=es.count,
        angle=es.angle,
        angle_step=es.angle_step,
        stability_tol=es.stability_tol,
    )

    grid = EcsGrid(es.extent, es.points, ScalingContour(es.radius, es.angle))
    ham = build_ecs_hamiltonian(grid, model)
    vals, _ = eigenpairs_near(
        ham, es.ground_sigma, k=4, volume=grid.spacing**2
    )
    bound = vals[np.abs(vals.imag) < 1e-6]
    if bound.size == 0:
        raise EngineError(
            f"no bound state near ground_sigma={es.ground_sigma}: "
            f"closest eigenvalues {vals[:4]}"
        )
    e0 = float(bound[np.argmin(np.abs(bound - es.ground_sigma))].real)

    res = resonance_set_from_states(states, e0, exchange=1, parity=-1)

    ham_ion = ecs_hamiltonian_1d(
        EcsGrid(es.extent, es.points, ScalingContour(es.radius, 0.0)),
        model.v_nuclear,
    )
    e_ion = float(np.linalg.eigvalsh(ham_ion.toarray().real)[0])

    table = out_dir / "resonances.txt"
    write_resonance_table(
        table,
        res,
        ion_energy=e_ion,
        comment=(
            f"complex-scaling solve: extent={es.extent} points={es.points} "
            f"radius={es.radius} angle={es.angle}"
        ),
    )
    outputs = {"resonances": table}
    write_manifest(
        out_dir / "manifest.json",
        scenario.sha256,
        outputs,
        seed=_scan_seed(scenario),
        engine="resonances",
        parallel=1,
    )
    outputs["manifest"] = out_dir / "manifest.json"
    return outputs


_FIT_COLUMNS = {"a_mod": "A_M", "p_beta": "P_beta", "yield_windowed": "yield_windowed"}


def run_fit_beats(scenario: Scenario, out_dir: str | Path) -> tuple[BeatFit, dict[str, Path]]:
    """Fit damped cosines to one column of an existing scan."""
    scenario.require("fit")
    fs = scenario.fit
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cols = read_scan_csv(_resolve(scenario, fs.input))
    taus = as_to_au(cols["tau_as"])
    values = cols[_FIT_COLUMNS[fs.column]]
    ok = np.isfinite(values)
    try:
        fit = fit_damped_cosines(
            taus[ok], values[ok], fs.components, seed=_scan_seed(scenario)
        )
    except ValueError as exc:
        raise EngineError(f"beat fit rejected the series: {exc}") from exc

    path = out_dir / "beatfit.json"
    write_beat_fit(path, fit)
    outputs = {"beatfit": path}
    write_manifest(
        out_dir / "manifest.json",
        scenario.sha256,
        outputs,
        seed=_scan_seed(scenario),
        engine="fit",
        parallel=1,
    )
    outputs["manifest"] = out_dir / "manifest.json"
    return fit, outputs


def _write_curve_csv(path: Path, taus_au: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("tau_as,yield_model\n")
        for t, v in zip(taus_au, values):
            fh.write(f"{format_number(au_to_as(t))},{format_number(v)}\n")


def run_compare(scenario: Scenario, out_dir: str | Path) -> CompareOutcome:
    """Confront a grid scan with the essential-states prediction.

    The resonance table fixes every transition energy; the coupling fit
    adjusts only the (linear) interference coefficients.  Outputs the
    fitted model curve, beat fits of both curves, and a correlation
    report.
    """
    scenario.require("compare")
    cs = scenario.compare
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    scan = scan_to_delay_scan(read_scan_csv(_resolve(scenario, cs.scan)))
    res, _ion = read_resonance_table(_resolve(scenario, cs.resonances))
    if scan.taus.size < 8:
        raise EngineError(
            f"scan has only {scan.taus.size} finite rows; need at least 8"
        )

    cfit = couplings_from_scan(res, scan.taus, scan.yield_windowed)
    curve = cfit.predict(scan.taus)
    report = correlate(scan.yield_windowed, curve)

    n = len(res.states)
    n_comp = min(6, n + n * (n - 1) // 2 + 1)
    seed = _scan_seed(scenario)
    beats_data = fit_damped_cosines(scan.taus, scan.yield_windowed, n_comp, seed=seed)
    beats_model = fit_damped_cosines(scan.taus, curve, n_comp, seed=seed)

    outputs = {
        "correlation": out_dir / "correlation.json",
        "model_curve": out_dir / "model_yield.csv",
        "beats_data": out_dir / "beats_data.json",
        "beats_model": out_dir / "beats_model.json",
    }
    write_correlation(outputs["correlation"], report)
    _write_curve_csv(outputs["model_curve"], scan.taus, curve)
    write_beat_fit(outputs["beats_data"], beats_data)
    write_beat_fit(outputs["beats_model"], beats_model)
    write_manifest(
        out_dir / "manifest.json",
        scenario.sha256,
        outputs,
        seed=seed,
        engine="compare",
        parallel=1,
    )
    outputs["manifest"] = out_dir / "manifest.json"
    return CompareOutcome(report, cfit, beats_data, beats_model, outputs)

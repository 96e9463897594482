"""
Scenario-driven command line front end.

Scenario files are UTF-8 JSON objects with exactly these keys::

    {
      "boundary": {"kind": "coherent", "pre": {"q": 1.0, "p": 0.0},
                                       "post": {"q": 0.0, "p": 1.0}},
      "hamiltonian": [[2, 0, 0.5, 0.0], [0, 2, 0.5, 0.0]],
      "hbar": 1.0, "t_start": 0.0, "t_end": 1.0
    }

``boundary.kind`` is ``"coherent"`` (labels ``{"q", "p"}``), ``"spin"``
(labels ``{"theta", "phi"}``, hamiltonian must be the string ``"zero"``) or
``"position"`` (labels are plain numbers). Each hamiltonian row
``[m, n, re, im]`` is the coefficient of q^m p^n; ``im`` must be 0. Unknown
keys are rejected.

Observables (``--observable``): ``q``, ``p``, ``1``, a JSON list of
``[m, n, re, im]`` rows, or a Pauli tag ``sx``, ``sy``, ``sz`` for spins.

Output records carry the columns in :data:`COLUMNS` (plus ``abs_diff`` for
``compare`` and ``sweep``). CSV floats use 17 significant digits. JSON output
is ``{"request": ..., "records": [...]}`` and is read back by
:func:`read_results`.

Exit codes: 0 success, 2 invalid input, 3 solver failure (partial results are
written, see the ``status`` column), 4 orthogonal postselection. Failures also
print one line ``ERROR <code> <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from importlib import resources

import numpy as np

from . import exact, pointer, semiclassical
from .core import (CoherentBoundary, PolynomialSymbol, Scenario, SpinBoundary, SpinLabel,
                   load_scenario, symbol_from_list)
from .errors import (NoConvergence, OrthogonalPostselection, ValidationError, WeaklineError,
                     ZeroNorm)
from .goldens import coherent_h0_scenario, spin_scenario

COMMANDS = ("exact", "semiclassical", "gf", "pointer", "compare", "sweep", "goldens")
SWEEP_PARAMS = ("hbar", "t_end", "alpha", "g")
COLUMNS = ("method", "t", "sweep_param", "sweep_value", "re_w", "im_w", "overlap_abs",
           "residual", "caustic_indicator", "multi_root_flag", "wallclock_ms", "status")
PAULI_TAGS = {"sx": "x", "sy": "y", "sz": "z"}
OVERLAP_WARN = 1e-8
POINTER_SIGMA = 10.0
GOLDEN_TOL = 1e-10
GOLDEN_FILES = {"h0_coherent": "golden_h0_coherent.csv", "spin": "golden_spin.csv"}

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_SOLVER, EXIT_ORTHOGONAL = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class RunRequest:
    command: str
    scenario_path: str = None
    observable: str = None
    times: tuple = ()
    sweep_param: str = None
    sweep_values: tuple = ()
    output_path: str = None
    format: str = "csv"
    seed: int = 0
    samples: int = 0
    multistart: str = "auto"
    timing: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise ValidationError(f"unknown format {self.format!r}")
        if self.command != "goldens" and not self.scenario_path:
            raise ValidationError("--scenario is required")
        if any(not math.isfinite(t) for t in self.times):
            raise ValidationError("times must be finite")
        if self.sweep_param is not None:
            if self.sweep_param not in SWEEP_PARAMS:
                raise ValidationError(f"sweep parameter must be one of {SWEEP_PARAMS}")
            if not self.sweep_values or any(not math.isfinite(v) for v in self.sweep_values):
                raise ValidationError("sweep values must be finite and nonempty")
        elif self.command == "sweep":
            raise ValidationError("the sweep command needs --sweep PARAM=v1,v2,...")
        if self.samples < 0:
            raise ValidationError("--samples must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["times"] = list(self.times)
        d["sweep_values"] = list(self.sweep_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRequest":
        d = dict(d)
        d["times"] = tuple(d.get("times", ()))
        d["sweep_values"] = tuple(d.get("sweep_values", ()))
        return cls(**d)


@dataclass
class Record:
    method: str
    t: float
    sweep_param: str = ""
    sweep_value: float = math.nan
    re_w: float = math.nan
    im_w: float = math.nan
    overlap_abs: float = math.nan
    residual: float = math.nan
    caustic_indicator: float = math.nan
    multi_root_flag: int = 0
    wallclock_ms: float = 0.0
    status: str = "ok"
    abs_diff: float = math.nan

    def row(self, columns) -> dict:
        return {c: getattr(self, c) for c in columns}


@dataclass(frozen=True)
class _Failure:
    """Per-point failure that still yields a record."""
    status: str
    code: int
    message: str

    def __str__(self):
        return self.message


# # Parsing

def _floats(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ValidationError(f"cannot parse numbers from {text!r}") from exc


def parse_sweep(text: str):
    if "=" not in text:
        raise ValidationError("--sweep expects PARAM=v1,v2,...")
    name, values = text.split("=", 1)
    return name.strip(), _floats(values)


def parse_observable(spec: str, scenario: Scenario):
    """PolynomialSymbol for oscillator scenarios, Pauli axis letter for spins."""
    is_spin = isinstance(scenario.boundary, SpinBoundary)
    if spec is None:
        spec = "sz" if is_spin else "q"
    s = spec.strip()
    if s.lower() in PAULI_TAGS:
        if not is_spin:
            raise ValidationError("Pauli observables need a spin scenario")
        return PAULI_TAGS[s.lower()]
    if is_spin:
        raise ValidationError("spin scenarios take the observables sx, sy, sz")
    if s == "q":
        return PolynomialSymbol.q()
    if s == "p":
        return PolynomialSymbol.p()
    if s in ("1", "I"):
        return PolynomialSymbol.constant(1.0)
    try:
        rows = json.loads(s)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse observable {spec!r}") from exc
    return symbol_from_list(rows)


def _matrix(obs, space: exact.HilbertSpec, hbar: float):
    if isinstance(obs, str):
        return exact.PAULI[obs]
    return exact.build_operator(obs, space, hbar)


# # Sweeps

def apply_sweep(scenario: Scenario, param, value):
    if param is None:
        return scenario
    if param == "hbar":
        return replace(scenario, hbar=value)
    if param == "t_end":
        return replace(scenario, t_end=value)
    if param == "alpha":
        b = scenario.boundary
        if not isinstance(b, SpinBoundary):
            raise ValidationError("alpha sweeps need a spin scenario")
        return replace(scenario, boundary=SpinBoundary(SpinLabel(2 * value, 0.0), b.post))
    return scenario   # g acts on the pointer only


def _times(req: RunRequest, scenario: Scenario):
    times = req.times or ((scenario.t_start + scenario.t_end) / 2,)
    for t in times:
        scenario.check_time(t)
    return times


# # Engines

def _from_result(method, t, res) -> Record:
    d = res.diagnostics
    return Record(method, t, re_w=res.value.real, im_w=res.value.imag,
                  overlap_abs=d["overlap_abs"], residual=d.get("residual", math.nan),
                  caustic_indicator=d.get("caustic_indicator", math.nan),
                  multi_root_flag=int(bool(d.get("multi_root_flag", 0))))


def _run_exact(scenario, obs, times):
    space = exact.hilbert_space(scenario)
    A = _matrix(obs, space, scenario.hbar)
    H = exact.hamiltonian_matrix(scenario, space)
    return [_from_result("exact", t, exact.weak_value_exact(scenario, A, t, space, H=H))
            for t in times]


def _run_gf(scenario, obs, times):
    space = exact.hilbert_space(scenario)
    A = _matrix(obs, space, scenario.hbar)
    H = exact.hamiltonian_matrix(scenario, space)
    return [_from_result("gf", t, exact.weak_value_via_gf(scenario, A, t, space, H=H))
            for t in times]


def _run_semiclassical(scenario, obs, times, multistart, traj=None):
    if isinstance(scenario.boundary, SpinBoundary):
        w = semiclassical.spin_weak_values_semiclassical(scenario.boundary.pre,
                                                         scenario.boundary.post)
        value = w["xyz".index(obs)]
        overlap = abs(np.vdot(exact.spin_state(scenario.boundary.post),
                              exact.spin_state(scenario.boundary.pre)))
        return [Record("semiclassical", t, re_w=value.real, im_w=value.imag,
                       overlap_abs=float(overlap), residual=0.0) for t in times]
    if traj is None:
        traj = semiclassical.solve_trajectory(scenario, multistart=multistart)
    return [_from_result("semiclassical", t, semiclassical.weak_value_semiclassical(traj, obs, t))
            for t in times]


def _run_pointer(scenario, obs, times, g, samples, seed):
    if not isinstance(scenario.boundary, SpinBoundary):
        raise ValidationError("the pointer command needs a finite-dimensional (spin) scenario")
    space = exact.hilbert_space(scenario)
    A = _matrix(obs, space, scenario.hbar)
    out = []
    for k, t in enumerate(times):
        ket, bra = exact.two_state_vectors(scenario, t, space)
        overlap = abs(np.vdot(bra, ket))
        if g is None:
            ladder = pointer.default_g_ladder(A, POINTER_SIGMA)
        else:
            ladder = [g]
        rx, rp = [], []
        kappa = pointer.momentum_response(POINTER_SIGMA, scenario.hbar)
        for j, gj in enumerate(ladder):
            ps = pointer.couple_and_postselect(
                ket, bra, A, pointer.PointerConfig(gj, POINTER_SIGMA, scenario.hbar))
            mx, mp, _ = pointer.pointer_moments(ps)
            if samples:
                mx = float(np.mean(pointer.sample_readouts(ps, samples, seed + 1000 * k + j)))
            rx.append(mx / gj)
            rp.append(mp / (gj * kappa))
        if len(ladder) == 1:
            re_w, im_w = rx[0], rp[0]
        else:
            g2 = [gj * gj for gj in ladder]
            re_w = pointer._extrapolate_to_zero(g2, rx).real
            im_w = pointer._extrapolate_to_zero(g2, rp).real
        out.append(Record("pointer", t, re_w=float(re_w), im_w=float(im_w),
                          overlap_abs=float(overlap)))
    return out


def _paired(rows_a, rows_b):
    for a, b in zip(rows_a, rows_b):
        d = abs(complex(a.re_w, a.im_w) - complex(b.re_w, b.im_w))
        a.abs_diff = b.abs_diff = d
    out = []
    for a, b in zip(rows_a, rows_b):
        out += [a, b]
    return out


def _evaluate(req: RunRequest, scenario: Scenario, obs, value, traj=None):
    """Records for one sweep value (or the single unswept run)."""
    param = req.sweep_param
    sc = apply_sweep(scenario, param, value)
    times = _times(req, sc)
    g = value if param == "g" else None
    cmd = req.command
    if cmd == "sweep":
        cmd = "pointer_compare" if param == "g" else "compare"
    if param == "g" and cmd not in ("pointer", "pointer_compare"):
        raise ValidationError("g sweeps apply to the pointer command")
    if cmd == "exact":
        return _run_exact(sc, obs, times)
    if cmd == "gf":
        return _run_gf(sc, obs, times)
    if cmd == "semiclassical":
        return _run_semiclassical(sc, obs, times, req.multistart, traj)
    if cmd == "pointer":
        return _run_pointer(sc, obs, times, g, req.samples, req.seed)
    if cmd == "pointer_compare":
        return _paired(_run_exact(sc, obs, times),
                       _run_pointer(sc, obs, times, g, req.samples, req.seed))
    return _paired(_run_exact(sc, obs, times),
                   _run_semiclassical(sc, obs, times, req.multistart, traj))


def _failure_of(exc):
    if isinstance(exc, OrthogonalPostselection):
        return _Failure("orthogonal", EXIT_ORTHOGONAL, str(exc))
    if isinstance(exc, ValidationError):
        return None
    if isinstance(exc, (NoConvergence, WeaklineError, ZeroNorm)):
        return _Failure(type(exc).__name__, EXIT_SOLVER, str(exc))
    return None


def _point(req, scenario, obs, value, traj=None):
    t0 = time.perf_counter()
    try:
        recs = _evaluate(req, scenario, obs, value, traj)
        failure = None
    except Exception as exc:   # noqa: BLE001 - classified below, anything else re-raised
        failure = _failure_of(exc)
        if failure is None:
            raise
        sc = apply_sweep(scenario, req.sweep_param, value)
        recs = [Record(req.command, t, status=failure.status)
                for t in (req.times or ((sc.t_start + sc.t_end) / 2,))]
    ms = (time.perf_counter() - t0) * 1e3 / max(len(recs), 1) if req.timing else 0.0
    for r in recs:
        r.wallclock_ms = ms
        if req.sweep_param is not None:
            r.sweep_param, r.sweep_value = req.sweep_param, value
    return recs, failure


def _workers():
    env = os.environ.get("WEAKLINE_THREADS")
    if env is None:
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        n = 0
    if n < 1:
        raise ValidationError("WEAKLINE_THREADS must be a positive integer")
    return n


def _continued_trajectories(req, scenario):
    """Semiclassical t_end sweeps follow one root across windows, so they run in order."""
    if not isinstance(scenario.boundary, CoherentBoundary):
        return None
    if req.command not in ("semiclassical", "compare", "sweep"):
        return None
    try:
        return semiclassical.continue_windows(scenario, req.sweep_values,
                                              multistart=req.multistart)
    except WeaklineError:
        return None   # fall back to independent solves, which report per-point status


def execute(req: RunRequest):
    """Run a request; returns (records, exit_code, first_failure_message)."""
    scenario = load_scenario(req.scenario_path)
    obs = parse_observable(req.observable, scenario)
    if req.sweep_param is None:
        recs, failure = _point(req, scenario, obs, None)
        failures = [failure]
    else:
        trajs = [None] * len(req.sweep_values)
        if req.sweep_param == "t_end":
            trajs = _continued_trajectories(req, scenario) or trajs
        workers = min(_workers(), len(req.sweep_values))
        jobs = list(zip(req.sweep_values, trajs))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda j: _point(req, scenario, obs, *j), jobs))
        else:
            results = [_point(req, scenario, obs, *j) for j in jobs]
        recs = [r for rs, _ in results for r in rs]
        failures = [f for _, f in results]
    first = next((f for f in failures if f is not None), None)
    return recs, (first.code if first else EXIT_OK), (str(first) if first else "")


# # Output

def _columns(command):
    return COLUMNS + (("abs_diff",) if command in ("compare", "sweep") else ())


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def format_csv(records, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([_fmt(r.row(columns)[c]) for c in columns])
    return buf.getvalue()


def _json_cell(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def format_json(req: RunRequest, records, columns) -> str:
    """NaN cells become null so the document stays standard JSON."""
    rows = [{k: _json_cell(v) for k, v in r.row(columns).items()} for r in records]
    doc = {"request": req.to_dict(), "records": rows}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_output(req: RunRequest, records, columns=None):
    columns = columns or _columns(req.command)
    text = format_json(req, records, columns) if req.format == "json" else format_csv(records, columns)
    if req.output_path:
        with open(req.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_cell(column, text):
    if column in ("method", "sweep_param", "status", "observable"):
        return text
    if column == "multi_root_flag":
        return int(text)
    return float(text)


def read_results(path):
    """
    Parse an output file. JSON gives ``(RunRequest, records)``; CSV gives
    ``(None, records)``. Records are dicts keyed by column name.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        records = [{k: (math.nan if v is None else v) for k, v in r.items()}
                   for r in doc["records"]]
        return RunRequest.from_dict(doc["request"]), records
    rows = list(csv.DictReader(io.StringIO(text)))
    return None, [{k: _parse_cell(k, v) for k, v in row.items()} for row in rows]


# # Goldens

GOLDEN_COLUMNS = ("case", "method", "observable", "t", "re_w", "im_w")


def golden_table(name: str):
    """Regenerate one reference table as rows of GOLDEN_COLUMNS."""
    rows = []
    if name == "h0_coherent":
        sc = coherent_h0_scenario()
        space = exact.HilbertSpec.fock(max(24, exact.hilbert_space(sc).dim))
        traj = semiclassical.shoot_coherent_bvp(sc)
        cf = semiclassical.closed_form_h0(sc.boundary.pre, sc.boundary.post)
        for tag, sym in (("q", PolynomialSymbol.q()), ("p", PolynomialSymbol.p())):
            A = exact.build_operator(sym, space, sc.hbar)
            for t in (0.1, 0.3, 0.5, 0.7, 0.9):
                for method, w in (
                        ("exact", exact.weak_value_exact(sc, A, t, space).value),
                        ("semiclassical",
                         semiclassical.weak_value_semiclassical(traj, sym, t).value),
                        ("closed_form", cf.q if tag == "q" else cf.p)):
                    rows.append((name, method, tag, t, w.real, w.imag))
    elif name == "spin":
        sc = spin_scenario()
        b = sc.boundary
        for method, ws in (("exact", exact.spin_weak_values_exact(b.pre, b.post)),
                           ("semiclassical",
                            semiclassical.spin_weak_values_semiclassical(b.pre, b.post))):
            for tag, w in zip(("sx", "sy", "sz"), ws):
                rows.append((name, method, tag, 0.5, w.real, w.imag))
    else:
        raise ValidationError(f"unknown golden table {name!r}")
    return rows


def golden_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GOLDEN_COLUMNS)
    for r in rows:
        w.writerow([_fmt(float(v)) if isinstance(v, (float, complex)) else v for v in r])
    return buf.getvalue()


def reference_golden(name: str) -> str:
    return resources.files("weakline").joinpath("data", GOLDEN_FILES[name]).read_text("utf-8")


def diff_golden(fresh: str, reference: str, tol: float = GOLDEN_TOL):
    """Mismatch messages between a regenerated table and its reference."""
    a = list(csv.DictReader(io.StringIO(fresh)))
    b = list(csv.DictReader(io.StringIO(reference)))
    if len(a) != len(b):
        return [f"row count {len(a)} != {len(b)}"]
    out = []
    for i, (ra, rb) in enumerate(zip(a, b)):
        for c in GOLDEN_COLUMNS:
            if c in ("case", "method", "observable"):
                if ra[c] != rb[c]:
                    out.append(f"row {i} {c}: {ra[c]} != {rb[c]}")
            elif abs(float(ra[c]) - float(rb[c])) > tol:
                out.append(f"row {i} {c}: {ra[c]} != {rb[c]}")
    return out


def run_goldens(req: RunRequest) -> int:
    text, problems = "", []
    for name in GOLDEN_FILES:
        fresh = golden_csv(golden_table(name))
        text += fresh if not text else fresh.split("\n", 1)[1]
        problems += [f"{name}: {m}" for m in diff_golden(fresh, reference_golden(name))]
    if req.output_path:
        with open(req.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if problems:
        print(f"ERROR {EXIT_FAIL} golden mismatch: {problems[0]} ({len(problems)} total)",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# # Entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weakline",
                                 description="Exact and semiclassical weak values from scenario files.")
    ap.add_argument("--scenario", help="scenario JSON file")
    ap.add_argument("--command", required=True, choices=COMMANDS)
    ap.add_argument("--observable", help="q, p, 1, JSON [[m,n,re,im],...] or sx/sy/sz")
    ap.add_argument("--times", help="comma-separated evaluation times (default: window midpoint)")
    ap.add_argument("--sweep", help="PARAM=v1,v2,... with PARAM in hbar, t_end, alpha, g")
    ap.add_argument("--out", help="output path (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--seed", type=int, default=0, help="seed for pointer readout sampling")
    ap.add_argument("--samples", type=int, default=0,
                    help="pointer readouts per coupling; 0 uses closed-form moments")
    ap.add_argument("--multistart", choices=("auto", "always", "never"), default="auto",
                    help="multi-start root search for coherent shooting")
    ap.add_argument("--timing", action="store_true",
                    help="fill wallclock_ms (output is then not byte-reproducible)")
    return ap


def request_from_args(ns) -> RunRequest:
    sweep_param, sweep_values = (None, ())
    if ns.sweep:
        sweep_param, sweep_values = parse_sweep(ns.sweep)
    return RunRequest(command=ns.command, scenario_path=ns.scenario, observable=ns.observable,
                      times=_floats(ns.times) if ns.times else (),
                      sweep_param=sweep_param, sweep_values=sweep_values,
                      output_path=ns.out, format=ns.format, seed=ns.seed, samples=ns.samples,
                      multistart=ns.multistart, timing=ns.timing)


def _error(code, message):
    print(f"ERROR {code} {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        req = request_from_args(ns)
        if req.command == "goldens":
            return run_goldens(req)
        recs, code, message = execute(req)
    except ValidationError as exc:
        return _error(EXIT_INVALID, exc)
    except OSError as exc:
        return _error(EXIT_INVALID, exc)
    except OrthogonalPostselection as exc:
        return _error(EXIT_ORTHOGONAL, exc)
    for r in recs:
        if r.status == "ok" and r.overlap_abs < OVERLAP_WARN:
            print(f"WARNING overlap_abs={r.overlap_abs:.3g} at t={r.t:.17g}", file=sys.stderr)
    write_output(req, recs)
    if code != EXIT_OK:
        return _error(code, message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Execute scenario documents and write their artifacts.

Artifacts for a scenario named ``s`` in the output directory:

* ``s.trace.csv``: ``n, alpha_n, step_residual, fix_residual, x_0 ... x_{d-1}``
  (``%.17g``; the last row has empty ``alpha_n``/``step_residual``; thinned rows have
  empty coordinates), or ``s.curve.csv`` for the implicit and resolvent-curve schemes;
* ``s.report.json``: snapshot, summary, certificates, VI residual, version, seed, wall time.
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .applications import (VipProblem, ZeroProblem, check_vi_residual, hybrid_drive,
                           resolvent_curve, viscosity_drive)
from .certificates import (RateCertificate, RateInputs, Verdict, derive_bounds, psi_decreasing,
                           psi_general, theta_harmonic, verify_certificate)
from .errors import RunError, Underdetermined, ValidationError, ViscoregError
from .geometry import as_point
from .moduli import BoundaryStepWarning, HarmonicSchedule
from .operators import Affine, Composition, Projection
from .scenario import (Built, Comparison, ExplicitScheme, HalpernScheme, HybridScheme,
                       ImplicitScheme, MannScheme, ResolventCurveScheme, Scenario, VipScheme,
                       build, build_g, build_operator, build_schedule, load_any, load_document,
                       snapshot)
from .schemes import (Trace, audit_explicit_trace, explicit_iterate, halpern_iterate,
                      hybrid_iterate, implicit_curve, mann_iterate)

DEFAULT_EPSILONS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)
MARGIN = 2  # certified runs go to min(MARGIN * largest certificate, budget)


# -- serialization ------------------------------------------------------------


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_trace_csv(trace: Trace, path: Path) -> None:
    d = trace.dim
    header = ["n", "alpha_n", "step_residual", "fix_residual"] + [f"x_{i}" for i in range(d)]
    N = trace.N
    idx = trace.point_indices
    coords: dict[int, np.ndarray] = {}
    if trace.stride != 1:
        coords = {int(n): trace.points[k] for k, n in enumerate(idx)}
    lines = [",".join(header)]
    al, st, fx = trace.alphas.tolist(), trace.step_residuals.tolist(), trace.fix_residuals.tolist()
    pts = trace.points.tolist()
    empty = "," * (d - 1)
    for n in range(N + 1):
        a = _fmt(al[n]) if n < N else ""
        s = _fmt(st[n]) if n < N else ""
        if trace.stride == 1:
            xs = ",".join(map(_fmt, pts[n]))
        else:
            p = coords.get(n)
            xs = ",".join(map(_fmt, p)) if p is not None else empty
        lines.append(f"{n},{a},{s},{_fmt(fx[n])},{xs}")
    path.write_text("\n".join(lines) + "\n")


def write_rows_csv(rows: list[dict], columns: list[str], path: Path) -> None:
    out = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c)
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(_fmt(v))
            else:
                cells.append(str(v))
        out.append(",".join(cells))
    path.write_text("\n".join(out) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dump_json(data: dict, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# -- execution ----------------------------------------------------------------


@dataclass
class Execution:
    kind: str
    trace: Trace | None = None
    rows: list[dict] = field(default_factory=list)
    columns: list[str] = field(default_factory=list)
    final: np.ndarray | None = None
    drive: Any = None
    summary: dict = field(default_factory=dict)


def _halpern_anchor(spec: HalpernScheme, built: Built) -> np.ndarray:
    if spec.u is not None:
        return as_point(spec.u, built.dim)
    if built.Phi is None:
        raise ValidationError("halpern needs u or a contraction to anchor at Phi(x0)", "scheme.u")
    return np.asarray(built.Phi(built.x0), dtype=float)


def execute(built: Built, spec, schedule, N: int | None, stride: int,
            rng: np.random.Generator) -> Execution:
    """Run one scheme on constructed objects."""
    T, Phi, x0 = built.T, built.Phi, built.x0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryStepWarning)
        if isinstance(spec, ExplicitScheme):
            tr = explicit_iterate(T, Phi, schedule, x0, N, stride)
            return Execution("explicit", tr, final=tr.final, drive=viscosity_drive(Phi))
        if isinstance(spec, HybridScheme):
            g = build_g(spec.g, built, spec.mu)
            tr = hybrid_iterate(T, g, spec.mu, schedule, x0, N, stride)
            return Execution("hybrid", tr, final=tr.final, drive=hybrid_drive(g))
        if isinstance(spec, MannScheme):
            t = spec.t if isinstance(spec.t, float) else build_schedule(spec.t)
            tr = mann_iterate(T, t, x0, N, stride)
            return Execution("mann", tr, final=tr.final)
        if isinstance(spec, HalpernScheme):
            u = _halpern_anchor(spec, built)
            tr = halpern_iterate(T, u, schedule, x0, N, stride)
            return Execution("halpern", tr, final=tr.final, drive=lambda q: u - q)
        if isinstance(spec, VipScheme):
            A = Affine(spec.A_matrix, spec.A_offset, 1.0, norm=built.norm)
            problem = VipProblem(A, spec.L, spec.eta, Phi, spec.gamma, spec.mu, T,
                                 seed=int(rng.integers(2 ** 32)))
            tr = hybrid_iterate(T, problem.drive, spec.mu, schedule, x0, N, stride)
            tr.metadata.update({"scheme": "vip", "gamma": spec.gamma, "R": problem.R,
                                "delta": problem.delta, "contraction_factor": problem.factor})
            return Execution("vip", tr, final=tr.final, drive=hybrid_drive(problem.drive),
                             summary={"R": problem.R, "delta": problem.delta,
                                      "contraction_factor": problem.factor})
        if isinstance(spec, ImplicitScheme):
            start = x0 if x0 is not None else np.zeros(built.dim)
            res = implicit_curve(T, Phi, spec.ts, spec.tolerance, start, spec.max_inner)
            cols = ["t", "iterations", "error_bound"] + [f"x_{i}" for i in range(built.dim)]
            rows = []
            for t, r in zip(spec.ts, res):
                row = {"t": float(t), "iterations": r.iterations, "error_bound": r.error_bound}
                row.update({f"x_{i}": float(v) for i, v in enumerate(r.point)})
                rows.append(row)
            smallest = res[int(np.argmin(spec.ts))].point
            return Execution("implicit", rows=rows, columns=cols, final=smallest,
                             drive=viscosity_drive(Phi),
                             summary={"points": [r.point for r in res],
                                      "error_bounds": [r.error_bound for r in res],
                                      "inner_iterations": [r.iterations for r in res]})
        if isinstance(spec, ResolventCurveScheme):
            op = build_operator(spec.operator, built.set)
            curve = resolvent_curve(ZeroProblem(op, spec.anchor), spec.lambdas)
            cols = ["lambda", "distance_to_limit"] + [f"x_{i}" for i in range(built.dim)]
            rows = []
            for k, (lam, p) in enumerate(zip(curve.lambdas, curve.points)):
                row = {"lambda": lam,
                       "distance_to_limit": None if curve.distances is None else curve.distances[k]}
                row.update({f"x_{i}": float(v) for i, v in enumerate(p)})
                rows.append(row)
            summary = {"points": curve.points, "limit": curve.limit,
                       "distances": curve.distances}
            return Execution("resolvent_curve", rows=rows, columns=cols,
                             final=curve.points[-1], summary=summary)
    raise ValidationError(f"unsupported scheme {type(spec).__name__}")


def _range_inside_set(built: Built) -> bool:
    """True when every value of T lies in the scenario's set C."""
    m = built.T
    while isinstance(m, Composition):
        m = m.maps[0]
    return isinstance(m, Projection) and built.set is not None and m.set is built.set


# -- certificates -------------------------------------------------------------


@dataclass
class PlannedCertificate:
    kind: str
    epsilon: float
    cert: RateCertificate | None = None
    verdict: Verdict | None = None
    bounds: dict | None = None

    def to_dict(self):
        out = {"kind": self.kind, "epsilon": self.epsilon, "bounds": self.bounds}
        if self.cert is not None:
            out.update(self.cert.to_dict())
        out["verdict"] = None if self.verdict is None else self.verdict.to_dict()
        return out


def plan_certificates(doc: Scenario, built: Built) -> list[PlannedCertificate]:
    """Compute every requested certificate; ``underdetermined`` ones carry that verdict."""
    spec = doc.certificates
    domain = built.set if _range_inside_set(built) else None
    try:
        bounds = derive_bounds(built.Phi, built.x0, domain=domain, fixed_point=built.fixed_point,
                               T=built.T)
    except Underdetermined as exc:
        bounds, reason = None, str(exc)
    bdict = None if bounds is None else {"M": bounds.M, "D": bounds.D, "route": bounds.route,
                                         "dC": bounds.dC}
    x0_in_C = domain is not None and bool(domain.contains(built.x0, 1e-12))
    out = []
    for kind in spec.kinds:
        for eps in spec.epsilons:
            p = PlannedCertificate(kind, eps, bounds=bdict)
            why = None
            if bounds is None:
                why = reason
            elif kind in ("psi_decreasing", "theta_harmonic") and not (x0_in_C and bounds.dC):
                why = f"{kind} needs a bounded C that contains x0 and the whole trajectory"
            if why is not None:
                p.verdict = Verdict("underdetermined", eps, detail=why)
            elif kind == "psi_general":
                inputs = RateInputs(rho=built.Phi.rho, M=bounds.M, D=bounds.D, epsilon=eps,
                                    schedule_id=built.schedule.schedule_id, dC=bounds.dC)
                p.cert = psi_general(inputs, built.schedule)
            elif kind == "psi_decreasing":
                p.cert = psi_decreasing(built.schedule, built.Phi.rho, bounds.dC, eps)
            else:
                if not isinstance(built.schedule, HarmonicSchedule):
                    raise ValidationError("theta_harmonic needs the harmonic schedule",
                                          "certificates.kinds")
                p.cert = theta_harmonic(built.Phi.rho, bounds.dC, eps)
            out.append(p)
    return out


def _run_length(doc: Scenario, plans: list[PlannedCertificate], budget: int) -> int:
    n = doc.iterations or 0
    needed = [min(MARGIN * p.cert.value, budget) if p.cert.value is not None else budget
              for p in plans if p.cert is not None]
    return max([n] + needed) or budget


# -- reports --------------------------------------------------------------------


@dataclass
class RunReport:
    data: dict
    paths: dict[str, Path] = field(default_factory=dict)
    execution: Execution | None = None

    @property
    def certificates(self) -> list[dict]:
        return self.data.get("certificates", [])

    @property
    def any_failed(self) -> bool:
        return any((c.get("verdict") or {}).get("status") == "fail" for c in self.certificates)

    @property
    def summary(self) -> dict:
        return self.data["summary"]


def _trace_summary(tr: Trace, epsilons) -> dict:
    return {
        "iterations": tr.N,
        "final_point": tr.final,
        "final_fix_residual": float(tr.fix_residuals[-1]),
        "final_step_residual": float(tr.step_residuals[-1]) if tr.N else None,
        "crossings": [{"epsilon": e, "first_crossing": tr.first_crossing(e),
                       "settled_index": tr.settled_index(e)} for e in epsilons],
        "invariant_violations": len(tr.check_invariants()),
    }


def _vi_residual(built: Built, ex: Execution, rng) -> float | None:
    if ex.drive is None or built.feasible is None or not built.norm.is_euclidean:
        return None
    return check_vi_residual(ex.final, ex.drive, built.feasible, rng=rng)


def _with_context(doc, fn):
    try:
        return fn()
    except (ValidationError, RunError):
        raise
    except ViscoregError as exc:
        raise RunError(f"{type(exc).__name__}: {exc}", doc.name) from exc
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        raise RunError(f"{type(exc).__name__}: {exc}", doc.name) from exc


def run_scenario(source, out_dir=None, budget: int | None = None, seed: int | None = None,
                 stride: int | None = None, verify: bool = True) -> RunReport:
    """Parse, build, execute and (when certificates are requested) certify a scenario.

    ``source`` is a path, a bundled scenario name, or a parsed :class:`Scenario`.
    Artifacts are written only when ``out_dir`` is given.
    """
    doc = source if isinstance(source, Scenario) else load_document(source, Scenario)
    started = time.perf_counter()
    seed = doc.seed if seed is None else int(seed)
    stride = doc.stride if stride is None else int(stride)
    rng = np.random.default_rng(seed)
    built = build(doc)

    def go():
        plans: list[PlannedCertificate] = []
        cert_budget = budget if budget is not None else (
            doc.certificates.budget if doc.certificates else None)
        if doc.certificates is not None:
            plans = plan_certificates(doc, built)
            N = _run_length(doc, plans, cert_budget)
        else:
            N = doc.iterations
            if N is not None and budget is not None:
                N = min(N, budget)
        if plans and stride != 1:
            raise ValidationError("certificate verification needs stride 1", "stride")
        ex = execute(built, doc.scheme, built.schedule, N, stride, rng)
        summary: dict = dict(ex.summary)
        if ex.trace is not None:
            eps_list = doc.certificates.epsilons if doc.certificates else DEFAULT_EPSILONS
            summary.update(_trace_summary(ex.trace, eps_list))
            summary["trace_metadata"] = ex.trace.metadata
            if ex.kind == "explicit" and stride == 1:
                audit = audit_explicit_trace(ex.trace, built.Phi.rho, built.Phi, built.fixed_point)
                summary["inequality_audit"] = {
                    "checked_steps": audit.checked_steps, "ok": audit.ok,
                    "phi_bound": len(audit.phi_bound_violations),
                    "fix_bound": len(audit.fix_bound_violations),
                    "step_recursion": len(audit.step_recursion_violations),
                    "boundedness": len(audit.boundedness_violations),
                    "boundedness_radius": audit.boundedness_radius}
        else:
            summary["final_point"] = ex.final
        if doc.target is not None and ex.final is not None:
            summary["distance_to_target"] = float(built.norm(ex.final - as_point(doc.target)))
        if plans and _range_inside_set(built):
            outside = ~np.asarray(built.set.contains(ex.trace.points[1:], 1e-9))
            if np.any(outside):
                raise RunError("trajectory left C although T maps into C", doc.name)
        if verify:
            for p in plans:
                if p.cert is not None:
                    p.verdict = verify_certificate(ex.trace, p.cert, cert_budget)
        return ex, summary, plans

    ex, summary, plans = _with_context(doc, go)
    data = {
        "scenario": snapshot(doc),
        "library_version": __version__,
        "seed": seed,
        "stride": stride,
        "scheme": ex.kind,
        "summary": summary,
        "certificates": [p.to_dict() for p in plans],
        "vi_residual": _with_context(doc, lambda: _vi_residual(built, ex, rng)),
        "wall_time_s": time.perf_counter() - started,
    }
    report = RunReport(data, execution=ex)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if ex.trace is not None:
            report.paths["trace"] = out / f"{doc.name}.trace.csv"
            write_trace_csv(ex.trace, report.paths["trace"])
        else:
            report.paths["curve"] = out / f"{doc.name}.curve.csv"
            write_rows_csv(ex.rows, ex.columns, report.paths["curve"])
        report.paths["report"] = out / f"{doc.name}.report.json"
        dump_json(data, report.paths["report"])
    return report


def certify(source, budget: int | None = None, out_dir=None, seed: int | None = None) -> RunReport:
    """Certificates for every requested epsilon with their verdicts."""
    doc = source if isinstance(source, Scenario) else load_document(source, Scenario)
    if doc.certificates is None:
        raise ValidationError("no certificates requested", "certificates")
    return run_scenario(doc, out_dir, budget=budget, seed=seed, stride=1)


# -- comparison -------------------------------------------------------------------


def compare_schemes(source, out_dir=None, budget: int | None = None,
                    seed: int | None = None) -> dict:
    """Fix residuals of several schemes at shared log-spaced checkpoints."""
    from .certificates import log_spaced_indices

    doc = source if isinstance(source, Comparison) else load_document(source, Comparison)
    started = time.perf_counter()
    seed = doc.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    built = build(doc)
    N = doc.iterations if budget is None else min(doc.iterations, budget)
    checkpoints = log_spaced_indices(0, N, doc.checkpoints).tolist()
    rows, crossings, finals = [], {}, {}

    def go():
        traces = {}
        for item in doc.schemes:
            schedule = build_schedule(item.schedule) if item.schedule is not None \
                else built.schedule
            traces[item.label] = execute(built, item.scheme, schedule, N, 1, rng).trace
        return traces

    traces = _with_context(doc, go)
    for n in checkpoints:
        for label, tr in traces.items():
            rows.append({"n": n, "scheme": label, "fix_residual": float(tr.fix_residuals[n]),
                         "step_residual": float(tr.step_residuals[n]) if n < tr.N else None})
    for label, tr in traces.items():
        crossings[label] = [{"epsilon": e, "first_crossing": tr.first_crossing(e),
                             "settled_index": tr.settled_index(e)} for e in doc.epsilons]
        finals[label] = tr.final
    data = {"scenario": snapshot(doc), "library_version": __version__, "seed": seed,
            "checkpoints": checkpoints, "rows": rows, "crossings": crossings,
            "final_points": finals, "wall_time_s": time.perf_counter() - started}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(rows, ["n", "scheme", "fix_residual", "step_residual"],
                       out / f"{doc.name}.compare.csv")
        dump_json(data, out / f"{doc.name}.compare.json")
    return data


def validate(source) -> Scenario | Comparison:
    """Parse and build a scenario or comparison document without running it."""
    doc = load_any(source)
    build(doc)
    return doc

"""Scenario documents: strict schema, parsing and construction of the objects.

Documents are YAML (JSON is accepted as a subset).  Unknown fields are errors.
The README lists the fields; the pydantic models below are authoritative.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field

from .errors import ParseError, ValidationError, ViscoregError
from .geometry import Affine as AffineSet
from .geometry import Ball, Box, ConvexSet, Halfspace, Intersection, NormSpec, as_point
from .moduli import StepSchedule, make_schedule
from .operators import (Affine, Constant, Contraction, ConvexCombination, Coordinatewise,
                        Composition, Identity, LinearPSD, Mapping, MatrixMap, MonotoneOp,
                        NormalCone, Projection, Resolvent, SubgradientSeparable)

Vec = list[float]
Mat = list[list[float]]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- sets ---------------------------------------------------------------------


class BoxSpec(Strict):
    kind: Literal["box"]
    lo: Vec
    hi: Vec


class BallSpec(Strict):
    kind: Literal["ball"]
    center: Vec
    radius: float


class HalfspaceSpec(Strict):
    kind: Literal["halfspace"]
    a: Vec
    b: float


class AffineSpec(Strict):
    kind: Literal["affine"]
    A: Mat
    b: Vec


class IntersectionSpec(Strict):
    kind: Literal["intersection"]
    sets: list["SetSpec"]


SetSpec = Annotated[Union[BoxSpec, BallSpec, HalfspaceSpec, AffineSpec, IntersectionSpec],
                    Field(discriminator="kind")]
IntersectionSpec.model_rebuild()


# -- operators and mappings -------------------------------------------------


class LinearPSDSpec(Strict):
    kind: Literal["linear_psd"]
    matrix: Mat


class SeparableSpec(Strict):
    kind: Literal["subgradient_separable"]
    pieces: list[str]
    weights: Optional[Vec] = None


class NormalConeSpec(Strict):
    kind: Literal["normal_cone"]
    set: Optional[SetSpec] = None


OperatorSpec = Annotated[Union[LinearPSDSpec, SeparableSpec, NormalConeSpec],
                         Field(discriminator="kind")]


class IdentityMap(Strict):
    kind: Literal["identity"]


class ProjectionMap(Strict):
    kind: Literal["projection"]
    set: Optional[SetSpec] = None  # defaults to the scenario's set


class MatrixSpecMap(Strict):
    kind: Literal["matrix"]
    matrix: Mat


class CoordinatewiseMap(Strict):
    kind: Literal["coordinatewise"]
    functions: list[str]


class ConstantMap(Strict):
    kind: Literal["constant"]
    point: Vec


class ResolventMap(Strict):
    kind: Literal["resolvent"]
    operator: OperatorSpec
    lam: float = 1.0


class CompositionMap(Strict):
    kind: Literal["composition"]
    maps: list["MappingSpec"]  # applied last-to-first: [f, g] means f(g(x))


class CombinationMap(Strict):
    kind: Literal["convex_combination"]
    weights: Vec
    maps: list["MappingSpec"]


MappingSpec = Annotated[Union[IdentityMap, ProjectionMap, MatrixSpecMap, CoordinatewiseMap,
                              ConstantMap, ResolventMap, CompositionMap, CombinationMap],
                        Field(discriminator="kind")]
CompositionMap.model_rebuild()
CombinationMap.model_rebuild()


class ContractionSpec(Strict):
    """``Phi(x) = scale * Q x + offset`` (affine) or ``scale * map(x) + offset`` (map)."""

    kind: Literal["affine", "map", "constant"] = "affine"
    rho: Optional[float] = None
    matrix: Optional[Mat] = None
    scale: float = 1.0
    offset: Optional[Vec] = None
    map: Optional[MappingSpec] = None
    point: Optional[Vec] = None


class ScheduleSpec(Strict):
    family: Literal["harmonic", "power", "table"]
    c: Optional[float] = None
    a: Optional[float] = None
    values: Optional[Vec] = None
    rate: Optional[list[tuple[float, int]]] = None
    cauchy: Optional[list[tuple[float, int]]] = None
    divergence: Optional[list[int]] = None


# -- schemes --------------------------------------------------------------------


class ExplicitScheme(Strict):
    kind: Literal["explicit"]


class ImplicitScheme(Strict):
    kind: Literal["implicit"]
    ts: Vec
    tolerance: float = 1e-10
    max_inner: int = 10_000_000


class GSpec(Strict):
    """``complement``: g = I - Phi; ``affine``: g(x) = Q x + offset with I - mu g a rho-contraction."""

    kind: Literal["complement", "affine"]
    matrix: Optional[Mat] = None
    offset: Optional[Vec] = None
    rho: Optional[float] = None


class HybridScheme(Strict):
    kind: Literal["hybrid"]
    g: GSpec
    mu: float


class MannScheme(Strict):
    kind: Literal["mann"]
    t: Union[float, ScheduleSpec]


class HalpernScheme(Strict):
    kind: Literal["halpern"]
    u: Optional[Vec] = None  # defaults to Phi(x0)


class VipScheme(Strict):
    kind: Literal["vip"]
    A_matrix: Mat
    A_offset: Optional[Vec] = None
    L: float
    eta: float
    gamma: float
    mu: float


class ResolventCurveScheme(Strict):
    kind: Literal["resolvent_curve"]
    operator: OperatorSpec
    lambdas: Vec
    anchor: Vec


SchemeSpec = Annotated[Union[ExplicitScheme, ImplicitScheme, HybridScheme, MannScheme,
                             HalpernScheme, VipScheme, ResolventCurveScheme],
                       Field(discriminator="kind")]


class SpaceSpec(Strict):
    dimension: int = Field(ge=1)
    norm: Union[float, Literal["inf", "infinity"]] = 2.0


class CertificateSpec(Strict):
    epsilons: Vec
    budget: int = 1_000_000
    kinds: list[Literal["psi_general", "psi_decreasing", "theta_harmonic"]] = ["psi_general"]


class ScenarioBase(Strict):
    name: str
    description: str = ""
    space: SpaceSpec
    set: Optional[SetSpec] = None
    mapping: MappingSpec
    contraction: Optional[ContractionSpec] = None
    schedule: Optional[ScheduleSpec] = None
    x0: Optional[Vec] = None
    iterations: Optional[int] = Field(default=None, ge=1)
    fixed_point: Optional[Vec] = None
    fixed_point_set: Optional[SetSpec] = None
    target: Optional[Vec] = None
    seed: int = 0
    stride: int = Field(default=1, ge=1)


class Scenario(ScenarioBase):
    scheme: SchemeSpec
    certificates: Optional[CertificateSpec] = None


class LabelledScheme(Strict):
    label: str
    scheme: SchemeSpec
    schedule: Optional[ScheduleSpec] = None


class Comparison(ScenarioBase):
    schemes: list[LabelledScheme]
    epsilons: Vec = []
    checkpoints: int = Field(default=25, ge=1)


# -- parsing ------------------------------------------------------------------


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc if not (isinstance(p, str) and p.endswith("Spec")
                                                 or p in ("function-after",)))


def _find_line(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith(f"{key}:"):
            return i
    return None


def parse_document(text: str, model=Scenario):
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(str(exc.problem or exc), line=mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ParseError("scenario document must be a mapping at top level", line=1)
    try:
        doc = model.model_validate(data)
    except pydantic.ValidationError as exc:
        err = exc.errors()[0]
        path = _field_path(err["loc"])
        last = next((str(p) for p in reversed(err["loc"]) if isinstance(p, str)), None)
        line = _find_line(text, last) if last else None
        msg = err["msg"] + (f" (line {line})" if line else "")
        raise ValidationError(msg, path) from exc
    _check_document(doc)
    return doc


def load_document(source: str | Path, model=Scenario):
    """Parse a file path or the name of a bundled scenario."""
    return parse_document(_resolve(source).read_text(), model)


def _resolve(source) -> Path:
    path = Path(source)
    if path.exists():
        return path
    bundled = find_bundled(str(source))
    if bundled is None:
        raise ParseError(f"no such file or bundled scenario: {source}")
    return bundled


def load_any(source: str | Path):
    """Parse a document as a comparison if it has a ``schemes`` list, else as a scenario."""
    text = _resolve(source).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError:
        data = None
    model = Comparison if isinstance(data, dict) and "schemes" in data else Scenario
    return parse_document(text, model)


def bundled_dir():
    return resources.files("viscoreg") / "scenarios"


def bundled_names() -> list[str]:
    root = Path(str(bundled_dir()))
    return sorted(str(p.relative_to(root).with_suffix("")) for p in root.rglob("*.yaml"))


def find_bundled(name: str) -> Path | None:
    root = Path(str(bundled_dir()))
    for cand in (root / f"{name}.yaml", root / name):
        if cand.is_file():
            return cand
    return None


def _check_document(doc) -> None:
    d = doc.space.dimension
    eps_lists = []
    if isinstance(doc, Scenario) and doc.certificates is not None:
        eps_lists.append(("certificates.epsilons", doc.certificates.epsilons))
    if isinstance(doc, Comparison):
        eps_lists.append(("epsilons", doc.epsilons))
    for where, eps in eps_lists:
        for e in eps:
            if not 0 < e < 2:
                raise ValidationError("epsilon must lie in (0,2)", where)
    if doc.contraction is not None and doc.contraction.rho is None:
        raise ValidationError("contraction constant required", "contraction.rho")
    for fieldname in ("x0", "fixed_point", "target"):
        v = getattr(doc, fieldname)
        if v is not None and len(v) != d:
            raise ValidationError(f"expected {d} coordinates, got {len(v)}", fieldname)
    schemes = [doc.scheme] if isinstance(doc, Scenario) else [s.scheme for s in doc.schemes]
    for s in schemes:
        for vec_name in ("u", "anchor", "A_offset"):
            v = getattr(s, vec_name, None)
            if v is not None and len(v) != d:
                raise ValidationError(f"expected {d} coordinates, got {len(v)}",
                                      f"scheme.{vec_name}")
        if isinstance(s, VipScheme) and np.shape(s.A_matrix) != (d, d):
            raise ValidationError(f"A_matrix must be {d}x{d}", "scheme.A_matrix")
        needs_phi = isinstance(s, (ExplicitScheme, ImplicitScheme, VipScheme)) or (
            isinstance(s, HybridScheme) and s.g.kind == "complement")
        if needs_phi and doc.contraction is None:
            raise ValidationError(f"scheme {s.kind!r} needs a contraction", "contraction")
        needs_iterations = not isinstance(s, (ImplicitScheme, ResolventCurveScheme))
        if needs_iterations and doc.x0 is None:
            raise ValidationError(f"scheme {s.kind!r} needs x0", "x0")
    if isinstance(doc, Scenario):
        s = doc.scheme
        if isinstance(s, (ExplicitScheme, HybridScheme, HalpernScheme, VipScheme)) and \
                doc.schedule is None:
            raise ValidationError(f"scheme {s.kind!r} needs a step-size schedule", "schedule")
        if doc.certificates is not None and not isinstance(s, ExplicitScheme):
            raise ValidationError("rate certificates apply to the explicit scheme only",
                                  "certificates")
        if doc.certificates is None and doc.iterations is None and needs_iterations:
            raise ValidationError("iterations required when no certificates are requested",
                                  "iterations")
    else:
        for s in doc.schemes:
            if isinstance(s.scheme, (ImplicitScheme, ResolventCurveScheme)):
                raise ValidationError(f"scheme {s.scheme.kind!r} has no trace to compare",
                                      "schemes")
            if isinstance(s.scheme, (ExplicitScheme, HybridScheme, HalpernScheme, VipScheme)) \
                    and s.schedule is None and doc.schedule is None:
                raise ValidationError(f"scheme {s.label!r} needs a step-size schedule",
                                      "schedule")
        if doc.iterations is None:
            raise ValidationError("iterations required", "iterations")


# -- construction ---------------------------------------------------------------


def build_set(spec) -> ConvexSet:
    if isinstance(spec, BoxSpec):
        return Box(spec.lo, spec.hi)
    if isinstance(spec, BallSpec):
        return Ball(spec.center, spec.radius)
    if isinstance(spec, HalfspaceSpec):
        return Halfspace(spec.a, spec.b)
    if isinstance(spec, AffineSpec):
        return AffineSet(spec.A, spec.b)
    if isinstance(spec, IntersectionSpec):
        return Intersection([build_set(s) for s in spec.sets])
    raise TypeError(spec)


def build_operator(spec, default_set: ConvexSet | None) -> MonotoneOp:
    if isinstance(spec, LinearPSDSpec):
        return LinearPSD(spec.matrix)
    if isinstance(spec, SeparableSpec):
        return SubgradientSeparable(spec.pieces, spec.weights)
    if isinstance(spec, NormalConeSpec):
        cset = build_set(spec.set) if spec.set is not None else default_set
        if cset is None:
            raise ValidationError("normal cone needs a set", "operator.set")
        return NormalCone(cset)
    raise TypeError(spec)


def build_mapping(spec, norm: NormSpec, dim: int, default_set: ConvexSet | None) -> Mapping:
    if isinstance(spec, IdentityMap):
        return Identity(dim, norm)
    if isinstance(spec, ProjectionMap):
        cset = build_set(spec.set) if spec.set is not None else default_set
        if cset is None:
            raise ValidationError("projection needs a set (scenario 'set' or mapping.set)",
                                  "mapping.set")
        return Projection(cset, norm)
    if isinstance(spec, MatrixSpecMap):
        return MatrixMap(spec.matrix, norm)
    if isinstance(spec, CoordinatewiseMap):
        return Coordinatewise(spec.functions, norm)
    if isinstance(spec, ConstantMap):
        return Constant(spec.point, norm)
    if isinstance(spec, ResolventMap):
        return Resolvent(build_operator(spec.operator, default_set), spec.lam, norm)
    if isinstance(spec, CompositionMap):
        return Composition([build_mapping(m, norm, dim, default_set) for m in spec.maps])
    if isinstance(spec, CombinationMap):
        return ConvexCombination(spec.weights,
                                 [build_mapping(m, norm, dim, default_set) for m in spec.maps])
    raise TypeError(spec)


class _ScaledMap(Mapping):
    kind = "scaled_map"

    def __init__(self, base: Mapping, scale: float, offset: np.ndarray):
        super().__init__(base.dim, base.norm)
        self.base, self.scale, self.offset = base, scale, offset
        self.lipschitz = abs(scale) * base.lipschitz

    def __call__(self, x):
        return self.scale * self.base(x) + self.offset

    def describe(self):
        return {"kind": self.kind, "scale": self.scale, "offset": self.offset.tolist(),
                "base": self.base.describe()}


def build_contraction(spec: ContractionSpec, norm: NormSpec, dim: int,
                      default_set: ConvexSet | None) -> Contraction:
    if spec.kind == "constant":
        if spec.point is None:
            raise ValidationError("constant contraction needs a point", "contraction.point")
        return Contraction(Constant(spec.point, norm), spec.rho)
    if spec.kind == "map":
        if spec.map is None:
            raise ValidationError("map contraction needs a map", "contraction.map")
        base = build_mapping(spec.map, norm, dim, default_set)
        offset = np.zeros(dim) if spec.offset is None else as_point(spec.offset, dim)
        scaled = _ScaledMap(base, spec.scale, offset)
        if scaled.lipschitz > spec.rho + 1e-12:
            raise ValidationError(f"scale * Lip(map) = {scaled.lipschitz} exceeds rho={spec.rho}",
                                  "contraction.rho")
        return Contraction(scaled, spec.rho)
    return Contraction.affine(spec.rho, spec.matrix, spec.offset, spec.scale, dim, norm)


@dataclass
class Built:
    """Constructed objects for a scenario or comparison document."""

    doc: Any
    norm: NormSpec
    dim: int
    set: ConvexSet | None
    T: Mapping
    Phi: Contraction | None
    schedule: StepSchedule | None
    x0: np.ndarray | None
    fixed_point: np.ndarray | None
    feasible: ConvexSet | None


def build_schedule(spec: ScheduleSpec | None) -> StepSchedule | None:
    if spec is None:
        return None
    params = {k: v for k, v in spec.model_dump(exclude={"family"}).items() if v is not None}
    return make_schedule(spec.family, **params)


def build(doc) -> Built:
    """Construct every object a document describes; construction gates raise ValidationError."""
    try:
        norm = NormSpec(doc.space.norm)
        dim = doc.space.dimension
        cset = build_set(doc.set) if doc.set is not None else None
        if cset is not None and cset.dim != dim:
            raise ValidationError(f"set has dimension {cset.dim}, space has {dim}", "set")
        T = build_mapping(doc.mapping, norm, dim, cset)
        if T.dim != dim:
            raise ValidationError(f"mapping has dimension {T.dim}, space has {dim}", "mapping")
        Phi = None
        if doc.contraction is not None:
            Phi = build_contraction(doc.contraction, norm, dim, cset)
        schedule = build_schedule(doc.schedule)
        x0 = as_point(doc.x0, dim) if doc.x0 is not None else None
        p = as_point(doc.fixed_point, dim) if doc.fixed_point is not None else None
        feasible = build_set(doc.fixed_point_set) if doc.fixed_point_set is not None else None
        if feasible is None and isinstance(doc.mapping, ProjectionMap):
            feasible = T.set
    except ValidationError:
        raise
    except ViscoregError as exc:
        raise ValidationError(f"{type(exc).__name__}: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc)) from exc
    return Built(doc, norm, dim, cset, T, Phi, schedule, x0, p, feasible)


def build_g(spec: GSpec, built: Built, mu: float) -> Mapping:
    """Evaluator ``g`` for the hybrid scheme, with ``I - mu g`` gated as a contraction."""
    dim, norm = built.dim, built.norm
    if spec.kind == "complement":
        Phi = built.Phi
        factor = abs(1 - mu) + mu * Phi.rho
        if factor >= 1:
            raise ValidationError(f"I - mu(I - Phi) has constant {factor} >= 1", "scheme.mu")
        return _Complement(Phi)
    if spec.matrix is None or spec.rho is None:
        raise ValidationError("affine g needs matrix and rho", "scheme.g")
    g = Affine(spec.matrix, spec.offset, 1.0, norm=norm)
    try:
        Contraction.affine(spec.rho, np.eye(dim) - mu * g.matrix, None, 1.0, dim, norm)
    except ViscoregError as exc:
        raise ValidationError(f"I - mu g is not a {spec.rho}-contraction: {exc}", "scheme.g.rho")
    return g


class _Complement(Mapping):
    """``g = I - Phi``."""

    kind = "complement"

    def __init__(self, Phi: Contraction):
        super().__init__(Phi.dim, Phi.norm)
        self.Phi = Phi
        self.lipschitz = 1.0 + Phi.rho

    def __call__(self, x):
        return np.asarray(x, dtype=float) - self.Phi(x)


def snapshot(doc) -> dict:
    return doc.model_dump(mode="json", exclude_none=True)


def norm_of(doc) -> NormSpec:
    return NormSpec(doc.space.norm)


__all__ = ["Scenario", "Comparison", "parse_document", "load_document", "build", "Built",
           "build_g", "build_operator", "load_any", "build_set", "bundled_names", "find_bundled", "snapshot"]

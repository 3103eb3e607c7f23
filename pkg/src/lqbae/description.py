"""SystemDescription files: YAML or JSON, complex entries as [re, im] pairs."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .core import DescriptionError, Location, ShapeError
from .feedback import BeamsplitterParams, OptomechParams, PartitionedPlant
from .kalman import KalmanPartition
from .model import QuadratureRealization, SystemParams, realization_from_matrices
from .simulate import GaussianPulse, SimConfig
from .types import QuadBlock

ComplexEntry = Annotated[List[float], Field(min_length=2, max_length=2)]
ComplexRows = List[List[ComplexEntry]]
RealRows = List[List[float]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PlantSection(_Section):
    m1: int = Field(..., ge=1)
    m2: int = Field(..., ge=1)
    S11: ComplexRows
    S12: ComplexRows
    S21: ComplexRows
    S22: ComplexRows
    k11: ComplexRows
    k12: ComplexRows
    k21: ComplexRows
    k22: ComplexRows


class BeamsplitterSection(_Section):
    S_b: ComplexRows


class OptomechSection(_Section):
    delta1: float
    delta2: float
    omega_m: float
    lambda1: float = Field(..., ge=0.0)
    lambda2: float = Field(..., ge=0.0)
    kappa: float = Field(..., gt=0.0)


class PulseSection(_Section):
    amplitude: float
    center: float
    width: float = Field(..., gt=0.0)
    block: Literal["q", "p"] = "p"
    channel: Optional[int] = Field(default=None, ge=0)


class SimSection(_Section):
    dt: Optional[float] = Field(default=None, gt=0.0)
    horizon: float = Field(default=10.0, gt=0.0)
    seed: int = 0
    ensemble: int = Field(default=100, ge=1)
    initial_mean: Optional[List[float]] = None
    measured: Literal["q", "p"] = "q"
    pulse: Optional[PulseSection] = None


class RealizationSection(_Section):
    A: RealRows
    B: RealRows
    C: RealRows
    D: RealRows
    state_labels: Optional[List[str]] = None


class PartitionSection(_Section):
    n_h: int = Field(..., ge=0)
    n_co: int = Field(..., ge=0)
    n_cc: int = Field(..., ge=0)


class SystemDescription(_Section):
    name: str = "system"
    n: Optional[int] = Field(default=None, ge=1)
    m: Optional[int] = Field(default=None, ge=1)
    S: Optional[ComplexRows] = None
    C_minus: Optional[ComplexRows] = None
    C_plus: Optional[ComplexRows] = None
    Omega_minus: Optional[ComplexRows] = None
    Omega_plus: Optional[ComplexRows] = None
    plant: Optional[PlantSection] = None
    beamsplitter: Optional[BeamsplitterSection] = None
    optomech: Optional[OptomechSection] = None
    sim: Optional[SimSection] = None
    realization: Optional[RealizationSection] = None
    partition: Optional[PartitionSection] = None


# -----------------------------
# Source positions
# -----------------------------
def _location(path: str, root: Optional[yaml.Node], loc: Sequence[Any]) -> Location:
    node = _node_at(root, loc)
    field_path = ".".join(str(p) for p in loc) or None
    if node is None:
        return Location(path, field=field_path)
    return Location(path, node.start_mark.line + 1, node.start_mark.column + 1, field_path)


def _node_at(root: Optional[yaml.Node], loc: Sequence[Any]) -> Optional[yaml.Node]:
    """Deepest YAML node reachable along a pydantic loc path."""
    node, found = root, root
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == str(part)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            nxt = node.value[part]
        else:
            nxt = None
        if nxt is None:
            break
        node = found = nxt
    return found


@dataclass(frozen=True)
class LoadedDescription:
    """A validated description plus what is needed to point back into its source."""
    model: SystemDescription
    path: str
    sha256: str
    root: Optional[yaml.Node] = None

    def locate(self, *loc: Any) -> Location:
        return _location(self.path, self.root, loc)

    def error(self, message: str, *loc: Any) -> DescriptionError:
        return DescriptionError(message, [self.locate(*loc)])

    def _section(self, name: str):
        sec = getattr(self.model, name)
        if sec is None:
            raise DescriptionError(f"missing '{name}' section", [Location(self.path, field=name)])
        return sec

    def _matrix(self, rows, loc: Tuple[Any, ...], shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
        if rows is None:
            raise self.error(f"missing matrix '{'.'.join(map(str, loc))}'", *loc)
        if any(len(r) != len(rows[0]) for r in rows):
            raise self.error("ragged matrix rows", *loc)
        arr = np.array([[complex(re, im) for re, im in r] for r in rows], dtype=np.complex128)
        if not rows:
            arr = arr.reshape(0, 0)
        if shape is not None and arr.shape != shape:
            raise self.error(f"shape {arr.shape} does not match declared {shape}", *loc)
        return arr

    def _dims(self) -> Tuple[int, int]:
        if self.model.n is None or self.model.m is None:
            raise DescriptionError("n and m must be declared", [Location(self.path, field="n")])
        return self.model.n, self.model.m

    def to_params(self) -> SystemParams:
        n, m = self._dims()
        d = self.model
        S = self._matrix(d.S, ("S",), (m, m)) if d.S is not None else np.eye(m)
        Cm = self._matrix(d.C_minus, ("C_minus",), (m, n))
        Cp = self._matrix(d.C_plus, ("C_plus",), (m, n)) if d.C_plus is not None else np.zeros((m, n))
        Om = self._matrix(d.Omega_minus, ("Omega_minus",), (n, n)) if d.Omega_minus is not None else np.zeros((n, n))
        Op = self._matrix(d.Omega_plus, ("Omega_plus",), (n, n)) if d.Omega_plus is not None else np.zeros((n, n))
        return SystemParams(S=S, C_minus=Cm, C_plus=Cp, Omega_minus=Om, Omega_plus=Op)

    def to_plant(self) -> PartitionedPlant:
        sec = self._section("plant")
        n, m = self._dims()
        if sec.m1 + sec.m2 != m:
            raise self.error(f"m1 + m2 = {sec.m1 + sec.m2} but m = {m}", "plant")
        m1, m2 = sec.m1, sec.m2
        shapes = {"S11": (m1, m1), "S12": (m1, m2), "S21": (m2, m1), "S22": (m2, m2),
                  "k11": (m1, n), "k12": (m1, n), "k21": (m2, n), "k22": (m2, n)}
        blocks = {k: self._matrix(getattr(sec, k), ("plant", k), shp) for k, shp in shapes.items()}
        d = self.model
        Om = self._matrix(d.Omega_minus, ("Omega_minus",), (n, n)) if d.Omega_minus is not None else np.zeros((n, n))
        Op = self._matrix(d.Omega_plus, ("Omega_plus",), (n, n)) if d.Omega_plus is not None else np.zeros((n, n))
        return PartitionedPlant(Omega_minus=Om, Omega_plus=Op, **blocks)

    def to_beamsplitter(self) -> BeamsplitterParams:
        sec = self._section("beamsplitter")
        S_b = self._matrix(sec.S_b, ("beamsplitter", "S_b"))
        try:
            return BeamsplitterParams(S_b=S_b)
        except ShapeError as e:
            raise self.error(str(e), "beamsplitter", "S_b") from None

    def to_optomech(self) -> OptomechParams:
        return OptomechParams(**self._section("optomech").model_dump())

    def to_sim_config(self, seed: Optional[int] = None) -> SimConfig:
        sec = self.model.sim or SimSection()
        pulse = None
        if sec.pulse is not None:
            p = sec.pulse
            pulse = GaussianPulse(p.amplitude, p.center, p.width, QuadBlock(p.block), p.channel)
        try:
            return SimConfig(
                horizon=sec.horizon,
                dt=sec.dt,
                seed=sec.seed if seed is None else seed,
                ensemble=sec.ensemble,
                pulse=pulse,
                initial_mean=tuple(sec.initial_mean) if sec.initial_mean is not None else None,
                measured=QuadBlock(sec.measured),
            )
        except ValueError as e:
            raise self.error(str(e), "sim") from None

    def to_realization(self) -> QuadratureRealization:
        sec = self._section("realization")
        try:
            return realization_from_matrices(sec.A, sec.B, sec.C, sec.D, sec.state_labels)
        except (ShapeError, ValueError) as e:
            raise self.error(str(e), "realization") from None

    def to_partition(self) -> KalmanPartition:
        real = self.to_realization()
        sec = self._section("partition")
        try:
            return KalmanPartition(A=real.A, B=real.B, C=real.C, n_h=sec.n_h, n_co=sec.n_co, n_cc=sec.n_cc)
        except (ShapeError, ValueError) as e:
            raise self.error(str(e), "partition") from None


def _parse_text(path: str, text: str) -> Any:
    if path.endswith(".json"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise DescriptionError(e.msg, [Location(path, e.lineno, e.colno)]) from None
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise DescriptionError(str(e.problem or e), [Location(path, line, col)]) from None


def load_description(path: str) -> LoadedDescription:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as e:
        raise DescriptionError(f"cannot read file: {e.strerror}", [Location(path)]) from None
    text = raw.decode("utf-8")
    data = _parse_text(path, text)
    if not isinstance(data, dict):
        raise DescriptionError("top level must be a mapping", [Location(path, 1, 1)])
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        root = None
    digest = hashlib.sha256(raw).hexdigest()
    try:
        model = SystemDescription.model_validate(data)
    except ValidationError as e:
        locs: List[Location] = []
        msgs: List[str] = []
        for err in e.errors():
            locs.append(_location(path, root, err["loc"]))
            msgs.append(f"{'.'.join(map(str, err['loc']))}: {err['msg']}")
        raise DescriptionError("; ".join(msgs), locs) from None
    return LoadedDescription(model=model, path=path, sha256=digest, root=root)


# -----------------------------
# Writing
# -----------------------------
def to_pairs(X: np.ndarray) -> List[List[List[float]]]:
    X = np.asarray(X, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in X]


def params_to_document(params: SystemParams, name: str = "system") -> Dict[str, Any]:
    return {
        "name": name,
        "n": params.n,
        "m": params.m,
        "S": to_pairs(params.S),
        "C_minus": to_pairs(params.C_minus),
        "C_plus": to_pairs(params.C_plus),
        "Omega_minus": to_pairs(params.Omega_minus),
        "Omega_plus": to_pairs(params.Omega_plus),
    }


def dump_description(params: SystemParams, path: str, name: str = "system",
                     extra: Optional[Dict[str, Any]] = None) -> None:
    """Write a description that parses back to the same matrices (floats written with repr precision)."""
    doc = params_to_document(params, name)
    doc.update(extra or {})
    if path.endswith(".json"):
        text = json.dumps(doc, indent=2) + "\n"
    else:
        text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
    Path(path).write_text(text, encoding="utf-8")

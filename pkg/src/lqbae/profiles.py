from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Dict, Any, Optional

import json

try:
    import yaml  # type: ignore
except Exception:  # pragma: no cover
    yaml = None

from . import types as T


@dataclass(frozen=True)
class ToleranceProfile:
    """A profile fixes every numerical threshold used to turn residuals into verdicts.

    - classify_tol: Real / PurelyImaginary classification, relative to 1 + max entry.
    - atol, rtol: absolute-plus-relative complex equality.
    - rank_tol: singular values below rank_tol * sigma_max count as zero.
    - certify_tol: zero-block certificates and algebraic QND tests.
    - validate_tol: unitarity / Hermitian / symmetric checks of system parameters.
    - pole_margin: transfer evaluation refuses s this close to an eigenvalue.
    - loop_sigma_min: well-posedness threshold of a feedback loop.
    - symmetrize_tol: Hermitian defect repaired by averaging in network reduction.
    - injection_tol: signal-injection deviation accepted as back-action evasion.
    - fail_on: lowest issue level that makes `validate` fail (WARN|ERROR).
    """
    name: str
    classify_tol: float = T.CLASSIFY_TOL
    atol: float = T.ATOL
    rtol: float = T.RTOL
    rank_tol: float = T.RANK_TOL
    certify_tol: float = T.CERTIFY_TOL
    validate_tol: float = T.VALIDATE_TOL
    pole_margin: float = T.POLE_MARGIN
    loop_sigma_min: float = T.LOOP_SIGMA_MIN
    symmetrize_tol: float = T.SYMMETRIZE_TOL
    injection_tol: float = T.INJECTION_TOL
    fail_on: str = "ERROR"

    def validate(self) -> None:
        if self.fail_on not in {"WARN", "ERROR"}:
            raise ValueError(f"fail_on must be WARN|ERROR, got {self.fail_on}")
        for f in fields(self):
            if f.name in ("name", "fail_on"):
                continue
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or value < 0:
                raise ValueError(f"profile {self.name}: {f.name} must be a non-negative number, got {value!r}")
        if self.certify_tol == 0:
            raise ValueError(f"profile {self.name}: certify_tol must be > 0")
        if self.rank_tol >= 1:
            raise ValueError(f"profile {self.name}: rank_tol must be < 1 (relative to sigma_max)")

    def with_tol(self, tol: Optional[float]) -> "ToleranceProfile":
        """Apply the CLI --tol override to the verdict tolerances."""
        if tol is None:
            return self
        p = replace(self, certify_tol=float(tol), classify_tol=float(tol))
        p.validate()
        return p


DEFAULT_PROFILES: Dict[str, ToleranceProfile] = {
    "default": ToleranceProfile(name="default"),
    "strict": ToleranceProfile(name="strict", classify_tol=1e-12, certify_tol=1e-10, validate_tol=1e-11, rank_tol=1e-10, fail_on="WARN"),
    "loose": ToleranceProfile(name="loose", classify_tol=1e-8, certify_tol=1e-6, validate_tol=1e-7, rank_tol=1e-7, symmetrize_tol=1e-6, injection_tol=1e-6),
}

_FIELD_NAMES = tuple(f.name for f in fields(ToleranceProfile) if f.name != "name")


def _load_yaml(path: str) -> Dict[str, Any]:
    if yaml is None:
        raise RuntimeError("PyYAML is required to load YAML profiles. `pip install pyyaml`")
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def _load_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_profiles(profile_file: Optional[str] = None) -> Dict[str, ToleranceProfile]:
    """Load built-in profiles + optional overrides from YAML/JSON.

    Expected file format:
      profiles:
        lab:
          certify_tol: 1.0e-9
          rank_tol: 1.0e-10
          fail_on: WARN

    Unnamed fields fall back to the built-in profile of the same name, or to
    the `default` profile for new names.
    """
    profs: Dict[str, ToleranceProfile] = dict(DEFAULT_PROFILES)

    if not profile_file:
        for p in profs.values():
            p.validate()
        return profs

    if profile_file.endswith((".yaml", ".yml")):
        data = _load_yaml(profile_file)
    elif profile_file.endswith(".json"):
        data = _load_json(profile_file)
    else:
        raise ValueError("profile_file must be .yaml/.yml or .json")

    raw = data.get("profiles", data)  # allow either top-level "profiles" or direct mapping
    if not isinstance(raw, dict):
        raise ValueError("Profile file must contain a mapping under key 'profiles'")

    for name, cfg in raw.items():
        if not isinstance(cfg, dict):
            raise ValueError(f"profile {name} must be a mapping of fields")
        unknown = sorted(set(cfg) - set(_FIELD_NAMES))
        if unknown:
            raise ValueError(f"profile {name}: unknown field(s) {unknown}")
        base = profs.get(name, DEFAULT_PROFILES["default"])
        merged = {k: cfg.get(k, getattr(base, k)) for k in _FIELD_NAMES}
        for k in _FIELD_NAMES:
            if k == "fail_on":
                merged[k] = str(merged[k]).upper()
                continue
            # PyYAML reads 1e-9 (no dot) as a string
            try:
                merged[k] = float(merged[k])
            except (TypeError, ValueError):
                raise ValueError(f"profile {name}: {k} must be a number, got {merged[k]!r}") from None
        p = ToleranceProfile(name=name, **merged)
        p.validate()
        profs[name] = p

    for p in profs.values():
        p.validate()

    return profs

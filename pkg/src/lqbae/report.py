"""AnalysisDocument assembly and rendering (structured key-value text or JSON)."""
from __future__ import annotations

import dataclasses
import json
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import bae, feedback, kalman, qnd, simulate
from .core import Issue
from .model import SystemParams
from .profiles import ToleranceProfile
from .transfer import BlockSelector, ZeroBlockCertificate

Document = Dict[str, Any]


def plain(obj: Any) -> Any:
    """Recursively turn dataclasses, arrays, enums and complex numbers into JSON-ready values."""
    if isinstance(obj, BlockSelector):
        return obj.label
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return [z.real, z.imag] if z.imag else z.real
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# -----------------------------
# Section builders
# -----------------------------
def header(name: str, sha256: str, profile: ToleranceProfile, seed: Optional[int] = None) -> Document:
    doc: Document = {"input": {"name": name, "sha256": sha256}, "profile": plain(profile)}
    if seed is not None:
        doc["input"]["seed"] = seed
    return doc


def params_section(params: SystemParams) -> Document:
    return {"n": params.n, "m": params.m}


def issues_section(issues: Sequence[Issue]) -> Document:
    return {"count": len(issues), "issues": [plain(i) for i in issues]}


def certificate_section(cert: ZeroBlockCertificate) -> Document:
    return {
        "selector": cert.selector.label,
        "verdict": cert.verdict,
        "max_residual": cert.max_residual,
        "feedthrough_residual": cert.feedthrough_residual,
        "horizon": cert.horizon,
        "tolerance": cert.tolerance,
        "cross_check_residual": cert.cross_check_residual,
    }


def bae_section(report: bae.BAEReport) -> Document:
    return {
        "profile": plain(report.profile),
        "predictions": [
            {"selector": p.selector.label, "rule": p.rule_id, "hypothesis": p.hypothesis}
            for p in report.predictions
        ],
        "certificates": [certificate_section(c) for c in report.verifications],
        "confirmed": report.confirmed,
        "qnd_flags": [plain(f) for f in report.qnd_flags],
    }


def variable_section(v: qnd.QNDVariableReport) -> Document:
    out = {
        "variable": v.variable,
        "is_qnd": v.is_qnd,
        "uncontrollable": v.uncontrollable,
        "observable": v.observable,
        "uncontrollable_residual": v.uncontrollable_residual,
        "observable_residual": v.observable_residual,
        "origin": v.origin,
        "coefficients": plain(v.coefficients),
    }
    if v.observable_pairs:
        out["observable_pairs"] = list(v.observable_pairs)
    if v.closed_form_residual is not None:
        out["closed_form_residual"] = v.closed_form_residual
    if v.notes:
        out["notes"] = list(v.notes)
    return out


def qnd_section(params: SystemParams, variables: Iterable[qnd.QNDVariableReport], tol: float) -> Document:
    r_pair, r_matrix = qnd.qnd_interaction_residuals(params)
    doc: Document = {
        "interaction": {
            "holds": qnd.is_qnd_interaction(params, tol),
            "pair_residual": r_pair,
            "matrix_residual": r_matrix,
        },
        "variables": [variable_section(v) for v in variables],
    }
    if doc["interaction"]["holds"]:
        cons = qnd.qnd_interaction_consequences(params, tol)
        doc["interaction"]["consequences"] = plain(cons)
    return doc


def dimensions_section(dims: kalman.SubsystemDimensions) -> Document:
    return {"n_co": dims.n1_co, "n_cbarobar": dims.n2_cbarobar, "n_h": dims.n3_h, "subspaces": dict(dims.dims)}


def kalman_form_section(form: kalman.KalmanFormReport, crit: Optional[kalman.KalmanBAECriteria]) -> Document:
    doc: Document = {"form": plain(form)}
    if crit is not None:
        doc["criteria"] = plain(crit)
    return doc


def feedback_section(rep: feedback.FeedbackReport) -> Document:
    return {
        "verdict": rep.verdict,
        "omega_re_residual": rep.omega_re_residual,
        "coupling_class": rep.coupling_class.value,
        "bae": bae_section(rep.bae),
        "qnd_variables": [variable_section(v) for v in rep.qnd_variables],
    }


def optomech_section(rep: feedback.OptomechQNDReport) -> Document:
    doc: Document = {
        "is_qnd": rep.is_qnd,
        "controllability_residual": rep.controllability_residual,
        "combination": variable_section(rep.combination),
    }
    if rep.conjugate_pair is not None:
        doc["conjugate_pair"] = variable_section(rep.conjugate_pair)
    if rep.individual:
        doc["individual"] = [variable_section(v) for v in rep.individual]
    return doc


def martingale_section(rep: simulate.MartingaleReport) -> Document:
    return {
        "passed": rep.passed,
        "ensemble": rep.ensemble,
        "horizon": rep.horizon,
        "channels": [
            {
                "channel": c.channel,
                "mean_start": plain(c.mean_start),
                "mean_end": plain(c.mean_end),
                "drift": c.drift,
                "stderr": c.stderr,
                "passed": c.passed,
            }
            for c in rep.channels
        ],
    }


# -----------------------------
# Rendering
# -----------------------------
def _scalar(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _flatten(prefix: str, v: Any, out: List[str]) -> None:
    if isinstance(v, dict):
        if not v:
            out.append(f"{prefix} = {{}}")
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), x, out)
    elif isinstance(v, list):
        if not v:
            out.append(f"{prefix} = []")
        elif all(not isinstance(x, (dict, list)) for x in v):
            out.append(f"{prefix} = [{', '.join(_scalar(x) for x in v)}]")
        else:
            for i, x in enumerate(v):
                _flatten(f"{prefix}.{i}", x, out)
    else:
        out.append(f"{prefix} = {_scalar(v)}")


def render_structured(doc: Document) -> str:
    """One `dotted.key = value` line per leaf, in insertion order; floats with 17 significant digits."""
    lines: List[str] = []
    _flatten("", plain(doc), lines)
    return "\n".join(lines) + "\n"


def render_json(doc: Document) -> str:
    return json.dumps(plain(doc), indent=2) + "\n"

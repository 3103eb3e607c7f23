from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import bae, feedback, kalman, qnd, report, simulate, transfer
from .core import DescriptionError, Issue, LqbaeError, NotPhysicallyRealizableError, should_fail
from .description import LoadedDescription, dump_description, load_description
from .model import quadrature_realization, validate
from .profiles import ToleranceProfile, load_profiles
from .types import QuadBlock

app = typer.Typer(add_completion=False, help="Back-action evasion and QND analysis of linear quantum systems.")
console = Console()
err_console = Console(stderr=True)


@dataclass
class _Options:
    profile: ToleranceProfile
    registry: Dict[str, ToleranceProfile]
    seed: Optional[int]
    format: str


def _guarded(fn):
    """Exit-code contract: 0 success, 1 domain failure, 2 parse/usage."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DescriptionError as e:
            err_console.print(f"[red]parse error:[/red] {e}")
            raise typer.Exit(code=2)
        except LqbaeError as e:
            err_console.print(f"[red]{type(e).__name__}:[/red] {e}")
            raise typer.Exit(code=1)
    return wrapper


@app.callback()
def main(
    ctx: typer.Context,
    tol: Optional[float] = typer.Option(None, "--tol", help="Override certify/classify tolerance of the profile."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the simulation seed."),
    format: str = typer.Option("text", "--format", help="text | structured"),
    profile: str = typer.Option("default", "--profile", help="Tolerance profile name (see list-profiles)."),
    profile_file: Optional[str] = typer.Option(None, "--profile-file", help="Load/override profiles from a JSON/YAML file."),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr."),
) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_time=False, show_path=False)],
        force=True,
    )
    if format not in ("text", "structured"):
        raise typer.BadParameter("--format must be text or structured")
    try:
        profs = load_profiles(profile_file)
    except (ValueError, OSError, RuntimeError) as e:
        raise typer.BadParameter(str(e))
    if profile not in profs:
        raise typer.BadParameter(f"Unknown profile: {profile}. Use `lqbae list-profiles`.")
    try:
        prof = profs[profile].with_tol(tol)
    except ValueError as e:
        raise typer.BadParameter(str(e))
    ctx.obj = _Options(profile=prof, registry=profs, seed=seed, format=format)


# -----------------------------
# Output helpers
# -----------------------------
def _emit(opts: _Options, doc: report.Document, title: str, out_json: Optional[str] = None) -> None:
    if out_json:
        Path(out_json).write_text(report.render_json(doc), encoding="utf-8")
    if opts.format == "structured":
        typer.echo(report.render_structured(doc), nl=False)
        return
    table = Table(title=title)
    table.add_column("key")
    table.add_column("value", overflow="fold")
    for line in report.render_structured(doc).splitlines():
        key, _, value = line.partition(" = ")
        if key.startswith("profile.") or key.startswith("input."):
            continue
        table.add_row(key, value)
    console.print(table)


def _print_issues(title: str, issues: List[Issue]) -> None:
    table = Table(title=title)
    table.add_column("level", style="bold")
    table.add_column("code")
    table.add_column("field")
    table.add_column("residual", justify="right")
    table.add_column("message")
    for it in issues:
        table.add_row(it.level, it.code, it.field, f"{it.residual:.3e}", it.message)
    console.print(table)
    console.print(f"[bold]Total issues:[/bold] {len(issues)}")


def _parse_pair(text: str) -> tuple:
    # "p:q" -> (in, out)
    parts = [x.strip() for x in text.split(":")]
    if len(parts) != 2:
        raise typer.BadParameter("expected IN:OUT, e.g. p:q")
    try:
        return QuadBlock.parse(parts[0]), QuadBlock.parse(parts[1])
    except ValueError as e:
        raise typer.BadParameter(str(e))


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise typer.BadParameter(f"not a complex number: {text!r}")


def _start(ctx: typer.Context, path: str) -> tuple:
    opts: _Options = ctx.obj
    desc = load_description(path)
    return opts, desc, report.header(desc.model.name, desc.sha256, opts.profile, opts.seed)


# -----------------------------
# Commands
# -----------------------------
@app.command("list-profiles")
def list_profiles(ctx: typer.Context) -> None:
    """List the merged tolerance profile registry."""
    opts: _Options = ctx.obj
    profs = opts.registry
    if opts.format == "structured":
        typer.echo(report.render_structured({"profiles": {k: profs[k] for k in sorted(profs)}}), nl=False)
        return
    table = Table(title="lqbae profiles")
    for col in ("name", "classify_tol", "certify_tol", "rank_tol", "validate_tol", "injection_tol", "fail_on"):
        table.add_column(col)
    for name in sorted(profs):
        p = profs[name]
        table.add_row(p.name, f"{p.classify_tol:g}", f"{p.certify_tol:g}", f"{p.rank_tol:g}",
                      f"{p.validate_tol:g}", f"{p.injection_tol:g}", p.fail_on)
    console.print(table)


@app.command("validate")
@_guarded
def cmd_validate(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="System description (YAML or JSON)."),
    out_report: Optional[str] = typer.Option(None, "--report", help="Write the document as JSON."),
) -> None:
    """Check unitarity, Hermiticity, symmetry and realizability."""
    opts, desc, doc = _start(ctx, path)
    params = desc.to_params()
    issues = validate(params, opts.profile.validate_tol)
    doc["system"] = report.params_section(params)
    doc["validation"] = report.issues_section(issues)
    if opts.format == "structured":
        _emit(opts, doc, "validate", out_report)
    else:
        if out_report:
            Path(out_report).write_text(report.render_json(doc), encoding="utf-8")
        _print_issues(f"lqbae validate: {path} (profile={opts.profile.name})", issues)
    if should_fail(issues, opts.profile.fail_on):
        raise typer.Exit(code=1)


def _analyze_optomech(desc: LoadedDescription, prof: ToleranceProfile, doc: report.Document,
                      do_bae: bool, do_qnd: bool, do_kalman: bool) -> None:
    # optomechanical files carry no (S, C, Omega); every section works on the quadrature realization
    try:
        om = desc.to_optomech()
        real = feedback.build_optomech(om)
        rep = feedback.optomech_qnd_report(om, prof) if do_qnd else None
    except ValueError as e:
        raise desc.error(str(e), "optomech") from None
    doc["system"] = {"kind": "optomech", "n": real.n, "m": real.m}
    if do_bae:
        certs = [transfer.certify_zero_block(real, sel, prof.certify_tol) for sel in transfer.ALL_SELECTORS]
        doc["bae"] = {"certificates": [report.certificate_section(c) for c in certs]}
    if rep is not None:
        doc["optomech"] = report.optomech_section(rep)
    if do_kalman:
        try:
            doc["kalman"] = report.dimensions_section(kalman.subsystem_dimensions(real, prof.rank_tol))
        except NotPhysicallyRealizableError as e:
            doc["kalman"] = {"error": str(e)}


@app.command("analyze")
@_guarded
def cmd_analyze(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="System description."),
    do_bae: bool = typer.Option(False, "--bae", help="Structural BAE predictions and certificates."),
    do_qnd: bool = typer.Option(False, "--qnd", help="QND interaction test and QND variables."),
    do_kalman: bool = typer.Option(False, "--kalman", help="Kalman subsystem dimensions."),
    out_report: Optional[str] = typer.Option(None, "--report", help="Write the document as JSON."),
) -> None:
    """Run the selected analyses (all when no section flag is given)."""
    opts, desc, doc = _start(ctx, path)
    prof = opts.profile
    if not (do_bae or do_qnd or do_kalman):
        do_bae = do_qnd = do_kalman = True
    if desc.model.optomech is not None and desc.model.C_minus is None:
        _analyze_optomech(desc, prof, doc, do_bae, do_qnd, do_kalman)
        _emit(opts, doc, f"lqbae analyze: {path}", out_report)
        return
    params = desc.to_params()
    real = quadrature_realization(params, tol=prof.validate_tol)
    doc["system"] = report.params_section(params)
    if do_bae:
        doc["bae"] = report.bae_section(bae.analyze(params, prof, real=real))
    if do_qnd:
        variables = qnd.qnd_characterize(params, prof.rank_tol, prof.certify_tol)
        doc["qnd"] = report.qnd_section(params, variables, prof.certify_tol)
    if do_kalman:
        try:
            doc["kalman"] = report.dimensions_section(kalman.subsystem_dimensions(real, prof.rank_tol))
        except NotPhysicallyRealizableError as e:
            doc["kalman"] = {"error": str(e)}
    _emit(opts, doc, f"lqbae analyze: {path}", out_report)


@app.command("transfer")
@_guarded
def cmd_transfer(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="System description."),
    s: str = typer.Option(..., "--s", help="Complex frequency, e.g. 0.5+2j."),
    markov_terms: int = typer.Option(0, "--markov", help="Also list this many Markov parameters."),
) -> None:
    """Evaluate G[s] in quadrature form."""
    opts, desc, doc = _start(ctx, path)
    params = desc.to_params()
    real = quadrature_realization(params, tol=opts.profile.validate_tol)
    sv = _parse_complex(s)
    G = transfer.evaluate(real, sv, opts.profile.pole_margin)
    doc["transfer"] = {"s": sv, "G": G}
    if params.m == 1:
        for which in (QuadBlock.QuadQ, QuadBlock.QuadP):
            try:
                rs = transfer.siso_closed_form(params, which, opts.profile.certify_tol)
            except LqbaeError:
                continue
            doc["transfer"][f"closed_form_{which.value}"] = str(rs)
    if markov_terms > 0:
        doc["transfer"]["markov"] = transfer.markov(real, markov_terms - 1)
    _emit(opts, doc, f"lqbae transfer: {path} at s={sv}")


@app.command("certify")
@_guarded
def cmd_certify(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="System description."),
    out_block: str = typer.Option(..., "--out", help="Output quadrature block (q|p)."),
    in_block: str = typer.Option(..., "--in", help="Input quadrature block (q|p)."),
) -> None:
    """Certify that one transfer block vanishes identically; exit 1 if it does not."""
    opts, desc, doc = _start(ctx, path)
    real = quadrature_realization(desc.to_params(), tol=opts.profile.validate_tol)
    try:
        sel = transfer.BlockSelector.parse(out_block, in_block)
    except ValueError as e:
        raise typer.BadParameter(str(e))
    cert = transfer.certify_zero_block(real, sel, opts.profile.certify_tol)
    doc["certificate"] = report.certificate_section(cert)
    _emit(opts, doc, f"lqbae certify: {path}")
    if not cert.verdict:
        raise typer.Exit(code=1)


@app.command("kalman")
@_guarded
def cmd_kalman(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="System description with `realization` + `partition`, or plain parameters."),
) -> None:
    """Kalman form check and BAE criteria, or subsystem dimensions."""
    opts, desc, doc = _start(ctx, path)
    prof = opts.profile
    if desc.model.partition is not None:
        part = desc.to_partition()
        form = kalman.verify_kalman_form(part)
        crit = kalman.kalman_bae_criteria(part.C_co, part.B_co, prof.certify_tol) if part.n_co else None
        doc["kalman"] = report.kalman_form_section(form, crit)
    else:
        real = desc.to_realization() if desc.model.realization is not None else \
            quadrature_realization(desc.to_params(), tol=prof.validate_tol)
        doc["kalman"] = report.dimensions_section(kalman.subsystem_dimensions(real, prof.rank_tol))
    _emit(opts, doc, f"lqbae kalman: {path}")


@app.command("compose")
@_guarded
def cmd_compose(
    ctx: typer.Context,
    plant_path: str = typer.Argument(..., help="Description with a `plant` section."),
    out: str = typer.Option(..., "--out", help="Where to write the reduced description."),
    bs_path: Optional[str] = typer.Option(None, "--bs", help="Beamsplitter description (defaults to the plant file)."),
) -> None:
    """Close the beamsplitter feedback loop and write the reduced system."""
    opts, desc, doc = _start(ctx, plant_path)
    plant = desc.to_plant()
    bs = (load_description(bs_path) if bs_path else desc).to_beamsplitter()
    rep = feedback.verify_feedback_bae(plant, bs, opts.profile)
    dump_description(rep.reduced, out, name=f"{desc.model.name}-reduced")
    doc["feedback"] = report.feedback_section(rep)
    doc["feedback"]["written"] = out
    _emit(opts, doc, f"lqbae compose: {plant_path}")


@app.command("optomech")
@_guarded
def cmd_optomech(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="Description with an `optomech` section."),
) -> None:
    """Is lambda1*q1 + lambda2*q2 a QND variable of the optomechanical system."""
    opts, desc, doc = _start(ctx, path)
    try:
        rep = feedback.optomech_qnd_report(desc.to_optomech(), opts.profile)
    except ValueError as e:
        raise desc.error(str(e), "optomech") from None
    doc["optomech"] = report.optomech_section(rep)
    _emit(opts, doc, f"lqbae optomech: {path}")


@app.command("simulate")
@_guarded
def cmd_simulate(
    ctx: typer.Context,
    path: str = typer.Argument(..., help="System description, optionally with a `sim` section."),
    martingale: bool = typer.Option(False, "--martingale", help="Filter ensemble martingale test of L."),
    inject: Optional[str] = typer.Option(None, "--inject", help="IN:OUT signal-injection BAE test, e.g. p:q."),
    trajectory: Optional[str] = typer.Option(None, "--trajectory", help="Write mean output records as columns."),
) -> None:
    """Time-domain checks on moments, trajectories and filters."""
    opts, desc, doc = _start(ctx, path)
    params = desc.to_params()
    real = quadrature_realization(params, tol=opts.profile.validate_tol)
    cfg = desc.to_sim_config(seed=opts.seed)
    sim: report.Document = {"seed": cfg.seed, "ensemble": cfg.ensemble, "horizon": cfg.horizon,
                            "dt": cfg.resolve_dt(real)}
    if inject:
        in_b, out_b = _parse_pair(inject)
        pulse = cfg.pulse or simulate.GaussianPulse(1.0, cfg.horizon / 5.0, cfg.horizon / 20.0)
        dev = simulate.injection_bae_test(real, in_b, out_b, pulse, cfg)
        sim["injection"] = {"in": in_b.value, "out": out_b.value, "deviation": dev,
                            "bae": dev <= opts.profile.injection_tol}
    if martingale:
        sim["martingale"] = report.martingale_section(simulate.martingale_check(params, cfg))
    flow = simulate.moment_flow(real, cfg)
    sim["final_mean"] = flow.means[-1]
    sim["final_cov_trace"] = float(np.trace(flow.covs[-1]))
    if trajectory:
        labels = [f"q_out{j + 1}" for j in range(real.m)] + [f"p_out{j + 1}" for j in range(real.m)]
        simulate.write_columns(trajectory, flow.times, flow.output_means, labels)
        sim["trajectory"] = trajectory
    doc["simulate"] = sim
    _emit(opts, doc, f"lqbae simulate: {path}")

"""Command-line interface and instance file format.

Instance files are JSON documents validated by :class:`InstanceFile`.
Matrices are nested lists of ``[re, im]`` pairs, qubit subsets are 1-based,
and numbers are written with 17 significant digits.  Any path argument may
also be ``fixture:NAME`` to load one of the bundled instances.

Exit codes: 0 YES, 1 NO, 2 UNDECIDED, 3 invalid input, 4 other error.
"""

from __future__ import annotations

import json
import math
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import click
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import QMarginalError
from .verdict import Verdict

EXIT_INPUT = 3
EXIT_ERROR = 4
HERMITIAN_TOL = 1e-10

Pair = tuple[float, float]


# ------------------------------------------------------------- file schema


class MatrixBlock(BaseModel):
    """A Hermitian matrix on a 1-based qubit subset."""

    model_config = ConfigDict(extra="forbid")

    subset: list[int]
    matrix: list[list[Pair]]

    @field_validator("subset")
    @classmethod
    def _subset(cls, v):
        if not v or any(q < 1 for q in v) or len(set(v)) != len(v):
            raise ValueError("subset must be distinct 1-based qubit indices")
        return v

    @model_validator(mode="after")
    def _shape(self):
        dim = 2 ** len(self.subset)
        if len(self.matrix) != dim or any(len(row) != dim for row in self.matrix):
            raise ValueError(f"matrix must be {dim}x{dim} for subset {self.subset}")
        a = decode_matrix(self.matrix)
        if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL:
            raise ValueError("matrix is not Hermitian within 1e-10")
        return self

    def array(self) -> np.ndarray:
        return decode_matrix(self.matrix)


class GibbsObservable(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pauli: Optional[str] = None
    matrix: Optional[list[list[Pair]]] = None

    @model_validator(mode="after")
    def _one(self):
        if (self.pauli is None) == (self.matrix is None):
            raise ValueError("give exactly one of 'pauli' or 'matrix'")
        if self.pauli is not None and set(self.pauli) - set("IXYZ"):
            raise ValueError("pauli word must use I, X, Y, Z")
        return self

    def array(self) -> np.ndarray:
        from .qstate import pauli_matrix

        return pauli_matrix(self.pauli) if self.pauli is not None else decode_matrix(self.matrix)


class InstanceFile(BaseModel):
    """Schema shared by every instance kind; unused fields stay ``None``."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["consistency", "localham", "nrep", "gibbs", "stoquastic"]
    n: Optional[int] = Field(default=None, ge=1, le=12)
    M: Optional[int] = Field(default=None, ge=2, le=8)
    N: Optional[int] = Field(default=None, ge=2)
    k: Optional[int] = Field(default=None, ge=1)
    marginals: Optional[list[MatrixBlock]] = None
    terms: Optional[list[MatrixBlock]] = None
    rho: Optional[list[list[Pair]]] = None
    observables: Optional[list[GibbsObservable]] = None
    targets: Optional[list[float]] = None
    witness: Optional[list[list[Pair]]] = None
    beta: Optional[float] = Field(default=None, gt=0)
    a: Optional[float] = None
    b: Optional[float] = None
    tol: Optional[float] = Field(default=None, gt=0)
    seed: Optional[int] = None
    description: Optional[str] = None

    @model_validator(mode="after")
    def _required(self):
        need = {
            "consistency": ("n", "marginals"),
            "stoquastic": ("n", "marginals"),
            "localham": ("n", "terms", "a", "b"),
            "nrep": ("M", "N", "rho"),
            "gibbs": ("observables", "targets"),
        }[self.kind]
        missing = [f for f in need if getattr(self, f) is None]
        if missing:
            raise ValueError(f"kind '{self.kind}' requires fields {missing}")
        for blk in (self.marginals or []) + (self.terms or []):
            if self.n is not None and max(blk.subset) > self.n:
                raise ValueError(f"subset {blk.subset} exceeds n={self.n}")
        if self.kind == "gibbs" and len(self.observables) != len(self.targets):
            raise ValueError("one target per observable")
        for name in ("rho", "witness"):
            mat = getattr(self, name)
            if mat is not None:
                arr = decode_matrix(mat)
                if arr.shape[0] != arr.shape[1] or np.max(np.abs(arr - arr.conj().T)) > HERMITIAN_TOL:
                    raise ValueError(f"'{name}' must be a square Hermitian matrix")
        return self


def decode_matrix(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("matrix entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def encode_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def dumps(obj, indent: int = 0, _level: int = 0) -> str:
    """JSON text with every float written as ``%.17g``."""
    pad = "  " * (_level + 1) if indent else ""
    end = "\n" + "  " * _level if indent else ""
    sep = ",\n" if indent else ", "
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = sep.join(f"{pad if indent else ''}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items())
        return "{" + ("\n" if indent else "") + body + end + "}"
    if isinstance(obj, (list, tuple)):
        # numeric leaves stay on one line
        if not indent or all(_is_scalar(x) or (isinstance(x, (list, tuple)) and all(map(_is_scalar, x))) for x in obj):
            return "[" + ", ".join(dumps(x) for x in obj) + "]"
        body = sep.join(pad + dumps(x, indent, _level + 1) for x in obj)
        return "[\n" + body + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if _is_number(obj):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return "%.17g" % x
    if isinstance(obj, Verdict):
        return json.dumps(obj.value)
    return json.dumps(str(obj))


def _is_scalar(x) -> bool:
    return x is None or isinstance(x, (int, float, bool, np.integer, np.floating))


def _is_number(x) -> bool:
    return isinstance(x, (float, np.floating))


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("qmarginal") / "fixtures" / f"{name}.json"))


def load_instance(path: str) -> InstanceFile:
    """Parse and validate an instance file, or ``fixture:NAME``."""
    p = fixture_path(path.split(":", 1)[1]) if path.startswith("fixture:") else Path(path)
    text = p.read_text()
    data = json.loads(text)
    return InstanceFile.model_validate(data)


def serialize_instance(inst: InstanceFile) -> str:
    return dumps(inst.model_dump(exclude_none=True), indent=1) + "\n"


# ------------------------------------------------------- domain builders


def to_consistency(f: InstanceFile, beta: float | None = None):
    from .consistency import ConsistencyInstance
    from .qstate import SubsetMarginal

    margs = tuple(SubsetMarginal(tuple(sorted(b.subset)), _sorted_block(b)) for b in f.marginals)
    k = f.k if f.k is not None else max(len(b.subset) for b in f.marginals)
    return ConsistencyInstance(f.n, margs, beta=beta if beta is not None else (f.beta or 0.1), k=k)


def _sorted_block(b: MatrixBlock) -> np.ndarray:
    a = b.array()
    if list(b.subset) == sorted(b.subset):
        return a
    order = np.argsort(b.subset)
    q = len(b.subset)
    t = a.reshape((2,) * (2 * q))
    t = np.transpose(t, list(order) + [q + i for i in order])
    return t.reshape(2**q, 2**q)


def to_localham(f: InstanceFile):
    from .localham import LocalHamInstance

    terms = tuple((tuple(sorted(b.subset)), _sorted_block(b)) for b in f.terms)
    k = f.k if f.k is not None else max(len(b.subset) for b in f.terms)
    return LocalHamInstance(f.n, terms, f.a, f.b, k=k)


def to_stoquastic(f: InstanceFile):
    from .localham import StoqConsistencyInstance
    from .qstate import SubsetMarginal

    margs = tuple(SubsetMarginal(tuple(sorted(b.subset)), np.real(_sorted_block(b))) for b in f.marginals)
    return StoqConsistencyInstance(f.n, margs, beta=f.beta or 0.1)


def to_nrep(f: InstanceFile):
    from .fermion import NRepInstance, TwoRDM

    return NRepInstance(f.M, f.N, TwoRDM(f.M, decode_matrix(f.rho)), beta=f.beta or 0.1)


def to_gibbs(f: InstanceFile):
    from .gibbs import ObservableSet

    mats = np.array([o.array() for o in f.observables])
    labels = tuple(o.pauli or f"T{i + 1}" for i, o in enumerate(f.observables))
    return ObservableSet(mats, np.array(f.targets), labels)


def consistency_file(inst, description: str | None = None) -> InstanceFile:
    return InstanceFile(
        kind="consistency",
        n=inst.n,
        marginals=[MatrixBlock(subset=list(mg.subset), matrix=encode_matrix(mg.rho)) for mg in inst.marginals],
        beta=inst.beta,
        description=description,
    )


def localham_file(inst, description: str | None = None) -> InstanceFile:
    return InstanceFile(
        kind="localham",
        n=inst.n,
        k=inst.k,
        terms=[MatrixBlock(subset=list(s), matrix=encode_matrix(h)) for s, h in inst.terms],
        a=inst.a,
        b=inst.b,
        description=description,
    )


# ----------------------------------------------------------------- reports


class RunReport:
    """Verdict plus residuals, query counts, precision parameters, wall time and seed."""

    def __init__(self, command: str, seed: int | None = None):
        self.command = command
        self.verdict: Verdict = Verdict.UNDECIDED
        self.residuals: dict = {}
        self.queries: dict = {}
        self.precision: dict = {}
        self.extra: dict = {}
        self.seed = seed
        self._t0 = time.perf_counter()
        self.wall_time = 0.0

    def finish(self, verdict: Verdict) -> "RunReport":
        self.verdict = verdict
        self.wall_time = time.perf_counter() - self._t0
        return self

    def absorb_log(self, log) -> None:
        self.queries.update(
            membership=log.membership_queries,
            separation=log.separation_queries,
            perceptron_updates=log.perceptron_updates,
            cone_iterations=int(sum(log.cone_iterations)),
        )
        for key, val in log.params.items():
            if isinstance(val, (int, float, np.floating, np.integer)):
                self.precision[key] = float(val)
            else:
                self.extra[key] = str(val)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "verdict": self.verdict.value,
            "residuals": self.residuals,
            "queries": self.queries,
            "precision": self.precision,
            "wall_time": self.wall_time,
            "seed": self.seed,
            **({"extra": self.extra} if self.extra else {}),
        }

    def render(self, as_json: bool) -> str:
        if as_json:
            return dumps(self.as_dict(), indent=1)
        lines = [f"verdict: {self.verdict.value}"]
        for section in ("residuals", "queries", "precision", "extra"):
            items = getattr(self, section)
            for key, val in items.items():
                lines.append(f"{section}.{key}: {_fmt(val)}")
        lines.append(f"wall_time: {self.wall_time:.3f}s")
        if self.seed is not None:
            lines.append(f"seed: {self.seed}")
        return "\n".join(lines)


def _fmt(val) -> str:
    if isinstance(val, (float, np.floating)):
        return "%.17g" % val
    if isinstance(val, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in val) + "]"
    return str(val)


# ---------------------------------------------------------------- commands


def _emit(report: RunReport, as_json: bool) -> int:
    click.echo(report.render(as_json))
    return report.verdict.exit_code


@click.group()
def cli():
    """Decide quantum marginal problems and run the oracle reductions between them."""


@cli.command("consistency")
@click.argument("file")
@click.option("--beta", type=float, default=None, help="Gap parameter; overrides the file.")
@click.option("--tol", type=float, default=None, help="Target residual for YES.")
@click.option("--max-iter", type=int, default=5000, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def cmd_consistency(file, beta, tol, max_iter, as_json):
    """Decide consistency of local density matrices."""
    from .consistency import solve_consistency_exact

    f = load_instance(file)
    _expect(f, "consistency")
    inst = to_consistency(f, beta)
    tol = tol if tol is not None else (f.tol or 1e-6)
    report = RunReport("consistency", f.seed)
    rep = solve_consistency_exact(inst, tol=tol, max_iter=max_iter)
    report.residuals.update(residual=rep.residual, certified_lower_bound=rep.lower_bound)
    report.queries["iterations"] = rep.iterations
    report.precision.update(beta=inst.beta, tol=tol)
    if rep.certificate:
        for key in ("objective_lower_bound", "l1_lower_bound", "threshold"):
            if key in rep.certificate:
                report.precision[key] = float(rep.certificate[key])
    return _emit(report.finish(rep.verdict), as_json)


@cli.command("localham")
@click.argument("file")
@click.option("--via", type=click.Choice(["exact", "consistency-oracle"]), default="exact", show_default=True)
@click.option("--seconds", type=float, default=None, help="Wall-time budget for the oracle pipeline.")
@click.option("--json", "as_json", is_flag=True)
def cmd_localham(file, via, seconds, as_json):
    """Decide a Local Hamiltonian instance."""
    from .localham import classify_exact, ground_energy_exact, solve_lh_via_consistency
    from .oracle_geometry import ReductionLog

    f = load_instance(file)
    _expect(f, "localham")
    inst = to_localham(f)
    report = RunReport(f"localham --via {via}", f.seed)
    report.precision.update(a=inst.a, b=inst.b)
    if via == "exact":
        report.residuals["ground_energy"] = ground_energy_exact(inst)
        return _emit(report.finish(classify_exact(inst)), as_json)
    log = ReductionLog(seconds=seconds)
    verdict = solve_lh_via_consistency(inst, log=log)
    report.absorb_log(log)
    return _emit(report.finish(verdict), as_json)


@cli.command("reduce")
@click.argument("file")
@click.option("--direction", type=click.Choice(["lh2c", "c2lh"]), required=True)
@click.option("--emit", "emit_path", type=click.Path(dir_okay=False), default=None, help="Write the produced instance here.")
@click.option("--method", type=click.Choice(["dense", "wopt"]), default="dense", show_default=True)
@click.option("--seconds", type=float, default=None)
@click.option("--json", "as_json", is_flag=True)
def cmd_reduce(file, direction, emit_path, method, seconds, as_json):
    """Run a reduction and emit the produced instance.

    lh2c maps a Local Hamiltonian to the consistency side: for stoquastic
    terms the dominated-marginal instance of its ground energy program,
    otherwise the marginals of a ground state.  c2lh emits the Hamiltonian
    -F(x)/(2d+1) at the dual program's optimum.
    """
    from .localham import (
        consistency_dual_program,
        consistency_to_lh,
        ground_energy_exact,
        ground_state_marginals,
        lh_to_wopt,
        stoq_consistency_to_stoq_lh,
        stoq_lh_to_stoq_consistency,
        stoquastic_dual_program,
        stoquastic_flags,
        classify_exact,
    )
    from .consistency import ConsistencyInstance
    from .errors import DegenerateInstanceError
    from .oracle_geometry import ReductionLog

    f = load_instance(file)
    report = RunReport(f"reduce --direction {direction}", f.seed)
    if direction == "lh2c":
        _expect(f, "localham")
        inst = to_localham(f)
        if all(stoquastic_flags(inst).terms):
            red = stoq_lh_to_stoq_consistency(inst)
            emitted = InstanceFile(
                kind="stoquastic",
                n=inst.n,
                marginals=[MatrixBlock(subset=list(mg.subset), matrix=encode_matrix(mg.rho)) for mg in red.instance.marginals],
                beta=red.instance.beta,
                description="dominated marginals at the optimum of the stoquastic ground energy program",
            )
            report.residuals.update(program_value=red.value, ground_energy=ground_energy_exact(inst))
            report.extra["emitted_oracle_verdict"] = red.oracle_report.verdict.value
            verdict = red.verdict
        else:
            try:
                wq = lh_to_wopt(inst)
                report.precision.update(eps=wq.eps, gamma=wq.query.gamma, nu=wq.nu, eta_norm=float(np.linalg.norm(wq.eta)))
            except DegenerateInstanceError as exc:
                report.extra["degenerate"] = str(exc)
            cinst = ConsistencyInstance(inst.n, tuple(ground_state_marginals(inst)), beta=f.beta or 0.1, k=inst.k)
            emitted = consistency_file(cinst, "marginals of a ground state")
            verdict = classify_exact(inst)
            report.residuals["ground_energy"] = ground_energy_exact(inst)
    else:
        if f.kind == "stoquastic":
            sinst = to_stoquastic(f)
            prog = stoquastic_dual_program(sinst)
            beta = sinst.beta
            run = stoq_consistency_to_stoq_lh
            target = sinst
        else:
            _expect(f, "consistency")
            cinst = to_consistency(f)
            prog = consistency_dual_program(cinst)
            beta = cinst.beta
            run = consistency_to_lh
            target = cinst
        p_star, x_star = prog.primal_dense()
        s = 1 - beta / 2
        scale = 2 * prog.d + 1
        ham = prog.hamiltonian(x_star, (-s - beta / 2) / scale, -s / scale)
        emitted = localham_file(ham, "-F(x*)/(2d+1) at the primal optimum")
        log = ReductionLog(seconds=seconds)
        verdict = run(target, method=method, log=log)
        report.absorb_log(log)
        report.residuals["p_star"] = p_star
        report.precision["dual_dimension"] = prog.d
    text = serialize_instance(emitted)
    if emit_path:
        Path(emit_path).write_text(text)
        report.extra["emitted"] = emit_path
    report = report.finish(verdict)
    click.echo(report.render(as_json))
    if not emit_path:
        click.echo(text, nl=False)
    return verdict.exit_code


@cli.command("nrep")
@click.argument("file")
@click.option("--tol", type=float, default=None)
@click.option("--json", "as_json", is_flag=True)
def cmd_nrep(file, tol, as_json):
    """Decide N-representability of a 2-particle density matrix."""
    from .fermion import nrep_oracle

    f = load_instance(file)
    _expect(f, "nrep")
    inst = to_nrep(f)
    report = RunReport("nrep", f.seed)
    rep = nrep_oracle(inst, tol=tol if tol is not None else f.tol)
    report.residuals.update(residual=rep.residual, objective_lower_bound=rep.lower_bound)
    report.queries["iterations"] = rep.iterations
    report.precision["beta"] = inst.beta
    return _emit(report.finish(rep.verdict), as_json)


@cli.command("gibbs")
@click.argument("file")
@click.option("--max-iter", type=int, default=200, show_default=True)
@click.option("--tol", type=float, default=None)
@click.option("--json", "as_json", is_flag=True)
def cmd_gibbs(file, max_iter, tol, as_json):
    """Fit a Gibbs state to target expectations (or to the marginals of a consistency file)."""
    from .gibbs import FitStatus, fit_gibbs, gibbs_consistent_state, von_neumann_entropy

    f = load_instance(file)
    tol = tol if tol is not None else (f.tol or 1e-10)
    report = RunReport("gibbs", f.seed)
    if f.kind == "consistency":
        res = gibbs_consistent_state(to_consistency(f), tol=tol, max_iter=max_iter)
        fit = res.fit
        report.residuals["marginal_trace_distance"] = res.marginal_residual
    else:
        _expect(f, "gibbs")
        fit = fit_gibbs(to_gibbs(f), tol=tol, max_iter=max_iter)
    report.residuals["residual"] = fit.residual
    report.residuals["entropy"] = von_neumann_entropy(fit.state)
    report.extra["theta"] = [float(t) for t in fit.theta]
    report.extra["status"] = fit.status.value
    report.queries["iterations"] = fit.iterations
    verdict = {FitStatus.CONVERGED: Verdict.YES, FitStatus.DIVERGING: Verdict.NO}.get(fit.status, Verdict.UNDECIDED)
    return _emit(report.finish(verdict), as_json)


@cli.command("verify")
@click.argument("file")
@click.option("--trials", type=int, default=100000, show_default=True)
@click.option("--seed", type=int, default=None, help="Overrides the file seed.")
@click.option("--registers", type=int, default=None, help="Witness registers; defaults to the full protocol count.")
@click.option("--json", "as_json", is_flag=True)
def cmd_verify(file, trials, seed, registers, as_json):
    """Simulate the sampling verifier with a product witness.

    The witness is the file's 'witness' matrix, else the solver's witness,
    else the maximally mixed state.  YES when the rejection frequency is
    below the midpoint of the two protocol bounds.
    """
    from .consistency import solve_consistency_exact
    from .verifier_sim import ProductWitness, VerifierParams, run_consistency_verifier

    f = load_instance(file)
    _expect(f, "consistency")
    inst = to_consistency(f)
    seed = seed if seed is not None else (f.seed if f.seed is not None else 0)
    params = VerifierParams.for_instance(inst)
    r = registers if registers is not None else params.r
    report = RunReport("verify", seed)
    if f.witness is not None:
        sigma = decode_matrix(f.witness)
    else:
        rep = solve_consistency_exact(inst, tol=1e-6, max_iter=2000)
        sigma = rep.witness if rep.witness is not None else np.eye(2**inst.n) / 2**inst.n
    run = run_consistency_verifier(inst, ProductWitness(sigma, r), trials, seed, params)
    report.residuals.update(rejection=run.rejection, wilson_halfwidth=run.wilson_halfwidth())
    report.precision.update(
        eps=params.eps,
        registers=r,
        protocol_registers=params.r,
        yes_rejection_bound=params.yes_rejection_bound,
        no_rejection_bound=params.no_rejection_bound,
    )
    report.queries["trials"] = trials
    threshold = 0.5 * (params.yes_rejection_bound + params.no_rejection_bound)
    return _emit(report.finish(Verdict.from_bool(run.rejection < threshold)), as_json)


def _expect(f: InstanceFile, kind: str):
    if f.kind != kind:
        raise click.UsageError(f"expected an instance of kind '{kind}', got '{f.kind}'")


def _validation_message(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"field {loc}: {e['msg']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    """Entry point; returns (and exits with) the verdict exit code."""
    try:
        code = cli.main(args=argv, standalone_mode=False)
    except ValidationError as err:
        click.echo(f"invalid instance file:\n{_validation_message(err)}", err=True)
        code = EXIT_INPUT
    except json.JSONDecodeError as err:
        click.echo(f"invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}", err=True)
        code = EXIT_INPUT
    except (click.UsageError, click.BadParameter, FileNotFoundError) as err:
        click.echo(f"error: {err}", err=True)
        code = EXIT_INPUT
    except click.exceptions.Abort:
        code = EXIT_ERROR
    except QMarginalError as err:
        click.echo(f"error: {type(err).__name__}: {err}", err=True)
        code = EXIT_ERROR
    if code is None:
        code = 0
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()

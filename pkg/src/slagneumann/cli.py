"""Command-line entry point.

Usage::

    slagneumann <command> --config run.yaml [--out DIR] [--seed N] [--threads K]

Commands: ``solve`` (robin problem by continuation), ``classical`` (unknown
boundary constant through the epsilon path), ``oracle`` (radial reference),
``verify`` (eigenvalue-structure suites), ``diagnose`` (estimates and
functionals on a saved field) and ``convergence`` (a solve repeated over a
list of grid sizes).

``summary.json`` is written to the output directory on every run, including
failed ones.  Exit status is 0 on success, 1 on a solver or diagnostic
error and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import ast
import csv
import json
import logging
import math
import operator
import platform
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .assembly import BoundaryCondition, DiscreteProblem
from .coefficients import parse_coefficient
from .errors import ConfigError, SlagError
from .geometry import make_domain
from .grid import build_grid
from .harness import (DiagnosticSpec, barrier_diag, estimate_report, gradient_aux_diag,
                      identity_residual, ltu_diag, run_lemma_suites)
from .oracle import RadialProblem, compare, from_spec, radial_solve
from .solver import (EpsilonPath, HomotopySchedule, NewtonConfig, ProblemSpec, classical_solve,
                     homotopy_solve)
from .specops import phase_classify

log = logging.getLogger(__name__)

SCHEMA = 1
COMMANDS = ("solve", "classical", "oracle", "verify", "diagnose", "convergence")

# --------------------------------------------------------------------------
# configuration


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi}


def parse_number(value, key=None, line=None) -> float:
    """A number, or an arithmetic expression in numbers and ``pi``."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", key, line)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}", key, line)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ValueError("unsupported expression")

    try:
        out = ev(ast.parse(value.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot evaluate {value!r} as a number", key, line) from exc
    if not math.isfinite(out):
        raise ConfigError(f"{value!r} is not finite", key, line)
    return out


def _line_map(node, prefix="", out=None):
    """Dotted key path -> 1-based line number, from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            _line_map(v, path, out)
    return out


class RunConfig:
    """Parsed and validated run configuration.

    Blocks: ``problem`` (theta, f, phi, bc, eps, robin_coef, lambda),
    ``domain`` (kind and parameters), ``grid`` (h, h_list), ``solver``
    (newton, homotopy, epsilon_path, perturb), ``oracle`` (steps),
    ``verify`` (count, cases), ``diagnose`` (field, constants) and
    ``output`` (field_csv, oracle_csv).
    """

    def __init__(self, raw: dict, lines: dict, base_dir: Path):
        self.raw = raw
        self.lines = lines
        self.base_dir = base_dir

    # lookup helpers ------------------------------------------------------
    def _block(self, name):
        blk = self.raw.get(name, {})
        if blk is None:
            return {}
        if not isinstance(blk, dict):
            raise ConfigError("expected a mapping", name, self.lines.get(name))
        return blk

    def get(self, path, default=None):
        node = self.raw
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return default if node is None else node

    def number(self, path, default=None):
        v = self.get(path)
        if v is None:
            if default is None:
                raise ConfigError("missing required value", path, self.lines.get(path))
            return float(default)
        return parse_number(v, path, self.lines.get(path))

    def error(self, message, path):
        return ConfigError(message, path, self.lines.get(path))

    # blocks ----------------------------------------------------------------
    def body(self):
        desc = dict(self._block("domain"))
        desc.setdefault("kind", "ball")
        try:
            return make_domain(desc)
        except (SlagError, ValueError, KeyError, TypeError) as exc:
            raise self.error(f"invalid domain: {exc}", "domain") from exc

    def theta(self, n):
        theta = self.number("problem.theta")
        if not phase_classify(theta, n).admissible:
            raise self.error(f"phase {theta:g} is not admissible for n = {n}", "problem.theta")
        return theta

    def coefficient(self, name, default):
        path = f"problem.{name}"
        try:
            return parse_coefficient(self.get(path, default), path, self.base_dir)
        except ConfigError as exc:
            raise self.error(str(exc).split(" (key")[0], path) from exc

    def bc(self, command):
        mode = str(self.get("problem.bc", "classical" if command == "classical" else "robin"))
        if command == "solve" and mode == "classical":
            raise self.error("solve runs the robin or epsilon problem", "problem.bc")
        if command == "classical" and mode != "classical":
            raise self.error("classical runs need bc: classical", "problem.bc")
        if mode == "robin":
            c = self.number("problem.robin_coef", 1.0)
            if not c > 0:
                raise self.error("robin coefficient must be positive", "problem.robin_coef")
            return BoundaryCondition.robin(c)
        if mode == "epsilon":
            eps = self.number("problem.eps")
            if not eps > 0:
                raise self.error("eps must be positive", "problem.eps")
            return BoundaryCondition.epsilon(eps)
        if mode == "classical":
            return BoundaryCondition.classical(self.number("problem.lambda", 0.0))
        raise self.error(f"unknown bc mode {mode!r}", "problem.bc")

    def problem(self, command, h=None):
        body = self.body()
        n = int(self.get("problem.n", body.dim))
        if n != body.dim:
            raise self.error(f"problem.n = {n} differs from the domain dimension {body.dim}",
                             "problem.n")
        h = self.number("grid.h") if h is None else h
        if not h > 0:
            raise self.error("grid spacing must be positive", "grid.h")
        return ProblemSpec(body, self.theta(n), self.coefficient("f", "const 1"),
                           self.coefficient("phi", "const 0"), self.bc(command), h)

    def h_list(self):
        vals = self.get("grid.h_list")
        if not isinstance(vals, list) or len(vals) < 2:
            raise self.error("h_list needs at least two grid sizes", "grid.h_list")
        return [parse_number(v, f"grid.h_list[{i}]", self.lines.get(f"grid.h_list[{i}]"))
                for i, v in enumerate(vals)]

    def _dataclass(self, cls, path, converters=None):
        blk = self.get(path, {})
        if not isinstance(blk, dict):
            raise self.error("expected a mapping", path)
        names = {f.name for f in fields(cls)}
        kw = {}
        for k, v in blk.items():
            if k not in names:
                raise self.error(f"unknown setting {k!r}", f"{path}.{k}")
            conv = (converters or {}).get(k)
            kw[k] = conv(v) if conv else parse_number(v, f"{path}.{k}",
                                                      self.lines.get(f"{path}.{k}"))
        try:
            return cls(**kw)
        except (ValueError, TypeError) as exc:
            raise self.error(str(exc), path) from exc

    def newton(self):
        return self._dataclass(NewtonConfig, "solver.newton", {"max_iter": int})

    def homotopy(self):
        return self._dataclass(HomotopySchedule, "solver.homotopy")

    def epsilon_path(self):
        vals = self.get("solver.epsilon_path")
        if vals is None:
            return EpsilonPath()
        if not isinstance(vals, list):
            raise self.error("epsilon_path must be a list", "solver.epsilon_path")
        eps = tuple(parse_number(v, f"solver.epsilon_path[{i}]",
                                 self.lines.get(f"solver.epsilon_path[{i}]"))
                    for i, v in enumerate(vals))
        try:
            return EpsilonPath(eps)
        except ValueError as exc:
            raise self.error(str(exc), "solver.epsilon_path") from exc

    def perturb(self, seed):
        amp = self.get("solver.perturb")
        if amp is None:
            return None
        amp = parse_number(amp, "solver.perturb", self.lines.get("solver.perturb"))
        return (amp, seed) if amp > 0 else None

    def diagnostic_spec(self):
        blk = self.get("diagnose", {})
        kw = {}
        for k in ("B0_values", "B_values"):
            if k in blk:
                kw[k] = tuple(parse_number(v, f"diagnose.{k}") for v in blk[k])
        for k in ("a0", "b", "mu", "M0"):
            if k in blk:
                kw[k] = parse_number(blk[k], f"diagnose.{k}", self.lines.get(f"diagnose.{k}"))
        if "directions" in blk:
            kw["n_directions"] = int(blk["directions"])
        return DiagnosticSpec(**kw)

    def output_flag(self, name, default=True):
        return bool(self.get(f"output.{name}", default))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", line=1)
    known = {"problem", "domain", "grid", "solver", "oracle", "verify", "diagnose", "output"}
    lines = _line_map(node) if node is not None else {}
    for k in raw:
        if k not in known:
            raise ConfigError("unknown block", str(k), lines.get(str(k)))
    return RunConfig(raw, lines, path.parent)


# --------------------------------------------------------------------------
# output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _fmt(v):
    return format(float(v), ".17g")


def write_field_csv(path, grid, u):
    names = ["x", "y", "z"][: grid.dim]
    tags = grid.tags()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(names + ["tag", "u"])
        for X, t, v in zip(grid.coords, tags, u):
            wr.writerow([_fmt(c) for c in X] + [t, _fmt(v)])


def read_field_csv(path, grid):
    """Values of a saved field on ``grid``; nodes are matched by lattice index."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read field: {exc}", "diagnose.field") from exc
    head = rows[0] if rows else []
    names = ["x", "y", "z"][: grid.dim]
    if head[: grid.dim] != names or "u" not in head:
        raise ConfigError("field CSV header does not match the grid dimension", "diagnose.field")
    iu = head.index("u")
    data = np.array([[float(r[i]) for i in range(grid.dim)] + [float(r[iu])] for r in rows[1:]])
    keys = np.rint(data[:, : grid.dim] / grid.h).astype(np.int64) + grid.K
    lookup = {tuple(k): v for k, v in zip(keys, data[:, -1])}
    try:
        return np.array([lookup[tuple(k)] for k in grid.nodes])
    except KeyError as exc:
        raise ConfigError("saved field does not cover the configured grid", "diagnose.field") from exc


def write_oracle_csv(path, rs):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["r", "psi", "u"])
        for r, p, u in zip(rs.r, rs.psi, rs.u):
            wr.writerow([_fmt(r), _fmt(p), _fmt(u)])


def _versions():
    return {"slagneumann": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# --------------------------------------------------------------------------
# commands


def _oracle_compare(spec, sol, lam=None):
    """Oracle comparison when the target is a ball with radial data."""
    try:
        rp = from_spec(spec)
    except SlagError:
        return None
    rs = radial_solve(rp)
    return compare(rs, sol.u, sol.grid, lam).as_dict() | {"lambda_oracle": rs.lam}


def cmd_solve(cfg: RunConfig, out: Path, seed: int):
    spec = cfg.problem("solve")
    sol, rep = homotopy_solve(spec, cfg.homotopy(), cfg.newton(), perturb=cfg.perturb(seed))
    res = {"n_unknowns": sol.grid.n_unknowns, "homotopy": rep.as_dict(),
           "estimates": estimate_report(sol.problem, sol.w, cfg.newton().tol_residual).as_dict()}
    cmp = _oracle_compare(spec, sol)
    if cmp is not None:
        res["oracle"] = cmp
    if cfg.output_flag("field_csv"):
        write_field_csv(out / "field.csv", sol.grid, sol.u)
    return res


def cmd_classical(cfg: RunConfig, out: Path, seed: int):
    spec = cfg.problem("classical")
    sol, lam, rep = classical_solve(spec, cfg.epsilon_path(), cfg.newton(), cfg.homotopy(),
                                    perturb=cfg.perturb(seed))
    res = {"lambda": lam, "n_unknowns": sol.grid.n_unknowns, "epsilon_path": rep.as_dict(),
           "estimates": estimate_report(sol.problem, sol.w, cfg.newton().tol_residual).as_dict()}
    cmp = _oracle_compare(spec, sol, lam)
    if cmp is not None:
        res["oracle"] = cmp
    if cfg.output_flag("field_csv"):
        write_field_csv(out / "field.csv", sol.grid, sol.u)
    return res


def cmd_oracle(cfg: RunConfig, out: Path, seed: int):
    body = cfg.body()
    if body.kind != "ball":
        raise cfg.error("the oracle needs a ball domain", "domain.kind")
    mode = str(cfg.get("problem.bc", "classical"))
    if mode not in ("classical", "robin"):
        raise cfg.error("the oracle supports classical or robin closures", "problem.bc")
    f = cfg.coefficient("f", "const 1")
    phi = cfg.coefficient("phi", "const 0")
    if not (f.radial and phi.radial):
        raise cfg.error("the oracle needs radial f and phi", "problem.f")
    if mode == "robin" and cfg.number("problem.robin_coef", 1.0) != 1.0:
        raise cfg.error("the oracle supports the unit robin coefficient", "problem.robin_coef")
    steps = int(cfg.get("oracle.steps", 10_000))
    rp = RadialProblem(body.dim, cfg.theta(body.dim), body.radius, f.profile, mode,
                       float(phi.profile(body.radius)), steps)
    rs = radial_solve(rp)
    if cfg.output_flag("oracle_csv"):
        write_oracle_csv(out / "oracle.csv", rs)
    return {"lambda": rs.lam, "u_centre": float(rs.u[0]), "u_boundary": float(rs.u[-1]),
            "psi_boundary": float(rs.psi[-1]), "ode_residual": rs.residual,
            "branch_ok": rs.branch_ok, "steps": steps}


def cmd_verify(cfg: RunConfig, out: Path, seed: int):
    count = int(cfg.get("verify.count", 100_000))
    if count < 0:
        raise cfg.error("count must be non-negative", "verify.count")
    cases = cfg.get("verify.cases")
    if cases is None:
        n = int(cfg.get("problem.n", cfg.get("domain.dim", 2)))
        cases = [{"n": n, "theta": cfg.get("problem.theta"), "f": cfg.get("verify.f", 1.0)}]
    reports = []
    ok = True
    for i, case in enumerate(cases):
        key = f"verify.cases[{i}]"
        n = int(case.get("n", 2))
        theta = parse_number(case.get("theta"), f"{key}.theta", cfg.lines.get(f"{key}.theta"))
        f = parse_number(case.get("f", 1.0), f"{key}.f", cfg.lines.get(f"{key}.f"))
        if not phase_classify(theta, n).admissible:
            raise cfg.error(f"phase {theta:g} is not admissible for n = {n}", f"{key}.theta")
        rep = run_lemma_suites(n, theta, f, count, seed)
        ok = ok and rep.asserted_pass
        reports.append(rep.as_dict())
    if not ok:
        return {"suites": reports, "all_pass": False}, 1
    return {"suites": reports, "all_pass": True}


def cmd_diagnose(cfg: RunConfig, out: Path, seed: int):
    spec = cfg.problem("diagnose")
    path = cfg.get("diagnose.field")
    if path is None:
        raise cfg.error("diagnose needs a saved field", "diagnose.field")
    path = Path(path)
    if not path.is_absolute():
        path = cfg.base_dir / path
    grid = build_grid(spec.body, spec.h)
    u = read_field_csv(path, grid)
    p = DiscreteProblem(grid, spec.f, spec.phase, spec.bc, spec.phi, 0.0)
    dspec = cfg.diagnostic_spec()
    res = {"estimates": estimate_report(p, u, cfg.newton().tol_residual, dspec.mu).as_dict(),
           "barrier": barrier_diag(p, u, dspec).as_dict(),
           "ltu": ltu_diag(p, u, dspec).as_dict(),
           "identity_residual": identity_residual(p, u)}
    if spec.bc.mode == "epsilon":
        res["gradient_P"] = gradient_aux_diag(p, u, dspec, "P").as_dict()
    else:
        res["gradient_G"] = gradient_aux_diag(p, u, dspec, "G").as_dict()
    return res


def _orders(hs, errs):
    out = []
    for k in range(len(hs) - 1):
        e0, e1 = errs[k], errs[k + 1]
        if e0 is None or e1 is None or e0 <= 0 or e1 <= 0:
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(hs[k] / hs[k + 1]))
    return out


def cmd_convergence(cfg: RunConfig, out: Path, seed: int):
    hs = cfg.h_list()
    mode = str(cfg.get("problem.bc", "robin"))
    command = "classical" if mode == "classical" else "solve"
    runs = []
    for h in hs:
        spec = cfg.problem(command, h)
        if command == "classical":
            sol, lam, _ = classical_solve(spec, cfg.epsilon_path(), cfg.newton(), cfg.homotopy(),
                                          perturb=cfg.perturb(seed))
        else:
            sol, _ = homotopy_solve(spec, cfg.homotopy(), cfg.newton(), perturb=cfg.perturb(seed))
            lam = None
        run = {"h": h, "lambda": lam, "n_unknowns": sol.grid.n_unknowns,
               "estimates": estimate_report(sol.problem, sol.w, cfg.newton().tol_residual).as_dict(),
               "identity_residual": identity_residual(sol.problem, sol.w)}
        cmp = _oracle_compare(spec, sol, lam)
        if cmp is not None:
            run["oracle"] = cmp
        runs.append(run)
    res = {"runs": runs,
           "order_identity_residual": _orders(hs, [r["identity_residual"] for r in runs])}
    if all("oracle" in r for r in runs):
        res["order_max_error"] = _orders(hs, [r["oracle"]["max_error"] for r in runs])
        if command == "classical":
            res["order_lambda"] = _orders(hs, [r["oracle"]["lambda_error"] for r in runs])
    elif len(hs) >= 3:
        # self-convergence from successive differences
        q = [r["lambda"] if command == "classical" else r["estimates"]["c0"] for r in runs]
        diffs = [abs(q[k] - q[k + 1]) for k in range(len(q) - 1)]
        res["order_self"] = _orders(hs[:-1], diffs)
    return res


HANDLERS = {"solve": cmd_solve, "classical": cmd_classical, "oracle": cmd_oracle,
            "verify": cmd_verify, "diagnose": cmd_diagnose, "convergence": cmd_convergence}


# --------------------------------------------------------------------------
# driver


def _set_threads(k):
    if k is None:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(k))


def run(command, config_path, out_dir=".", seed=0, threads=None) -> int:
    """Run one command; always writes ``summary.json``.  Returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"schema": SCHEMA, "command": command, "seed": seed, "versions": _versions()}
    code = 0
    try:
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        cfg = load_config(config_path)
        summary["config"] = cfg.raw
        limiter = _set_threads(threads)
        try:
            res = HANDLERS[command](cfg, out, seed)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
        if isinstance(res, tuple):
            res, code = res
        summary["status"] = "ok" if code == 0 else "failed"
        summary.update(res)
    except ConfigError as exc:
        code = 2
        summary["status"] = "config_error"
        summary["error"] = {"type": type(exc).__name__, "message": str(exc),
                            "key": exc.key, "line": exc.line}
    except (SlagError, ValueError, ArithmeticError) as exc:
        code = 1
        summary["status"] = "error"
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        report = getattr(exc, "report", None)
        if report is not None and hasattr(report, "as_dict"):
            summary["error"]["report"] = report.as_dict()
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True, allow_nan=False)
    (out / "summary.json").write_text(text + "\n", encoding="utf-8")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="slagneumann", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    ap.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    args = ap.parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        ap.error("--seed must be an unsigned 64-bit integer")
    if args.threads is not None and args.threads < 1:
        ap.error("--threads must be positive")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code = run(args.command, args.config, args.out, args.seed, args.threads)
    status = json.loads((Path(args.out) / "summary.json").read_text(encoding="utf-8"))
    if code != 0:
        err = status.get("error", {})
        print(f"{args.command}: {err.get('type', 'failed')}: {err.get('message', '')}",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

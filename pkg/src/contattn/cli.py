"""contattn command line: density grids, attention passes, ridge fits, checks, demo.

Exit codes: 0 ok, 1 check failure, 2 input error, 3 numerical verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attention as att
from . import densities as dens
from . import oracle
from .checks import run_checks
from .demo import DemoConfig, run_demo
from .errors import ToleranceNotReached
from .value_fn import ObservationMatrix, design_matrix, fit, grid_locations, sequence_locations

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_SEED = 42
GRID_1D = 1001
GRID_2D = 201
GRID_PAD = 0.2
GAUSS_GRID_STD = 4.0

# per-operation oracle tolerances used by `attend --check`
ATTEND_TOL = {
    (1, 1): (1e-10, 1e-6),
    (1, 2): (1e-8, 1e-6),
    (2, 1): (1e-10, 1e-6),
    (2, 2): (1e-6, 1e-4),
}


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    alpha: int = 1
    dimension: int = 1
    n_basis: int = 16
    rbf_sigma: float = 0.1
    basis_var: float = 1e-3
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.alpha not in (1, 2):
            raise InputError("--alpha must be 1 or 2")
        if self.dimension not in (1, 2):
            raise InputError("--dim must be 1 or 2")
        if self.n_basis < 1:
            raise InputError("--n-basis must be positive")

    def basis(self) -> att.RBFBasis:
        if self.dimension == 1:
            return att.RBFBasis.linear_1d(self.n_basis, self.rbf_sigma)
        return att.RBFBasis.grid_2d(self.n_basis, self.basis_var)


# --------------------------------------------------------------------------
# io helpers

def _floats(text, n=None, name="value"):
    try:
        vals = [float(x) for x in str(text).split(",")]
    except ValueError as exc:
        raise InputError(f"could not parse {name} {text!r}") from exc
    if n is not None and len(vals) != n:
        raise InputError(f"{name} needs {n} comma-separated numbers, got {len(vals)}")
    return vals


def matrix_to_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": M.tolist()}


def matrix_from_json(obj) -> np.ndarray:
    try:
        M = np.asarray(obj["data"], dtype=float)
        rows, cols = int(obj["rows"]), int(obj["cols"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("matrix JSON needs 'rows', 'cols' and 'data' fields") from exc
    if M.shape != (rows, cols):
        raise InputError(f"matrix data has shape {M.shape}, header says ({rows}, {cols})")
    if not np.all(np.isfinite(M)):
        raise InputError("matrix has non-finite entries")
    return M


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc})") from exc


def _write_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_csv(path, header, columns):
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get("CONTATTN_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError as exc:
        raise InputError(f"CONTATTN_SEED must be an integer, got {env!r}") from exc


# --------------------------------------------------------------------------
# density

def _build_density(args):
    fam = args.family
    if fam in ("truncated_paraboloid",) or (fam == "gaussian" and args.dim == 2):
        mu = np.array(_floats(args.mu, 2, "--mu"))
        cov = np.array(_floats(args.cov, 4, "--cov")).reshape(2, 2)
        if fam == "gaussian":
            return dens.make_gaussian_2d(mu, cov)
        return dens.make_truncated_paraboloid(mu, cov)
    mu = _floats(args.mu, 1, "--mu")[0]
    if fam == "gaussian":
        return dens.make_gaussian_1d(mu, args.sigma2)
    if fam == "truncated_parabola":
        return dens.make_truncated_parabola(mu, args.sigma2)
    if fam == "triangular":
        return dens.make_triangular(mu, args.b)
    if fam == "location_scale":
        if args.g not in dens.NAMED_GENERATORS:
            raise InputError(f"--g must be one of {sorted(dens.NAMED_GENERATORS)}")
        G = dens.LocationScaleG(*dens.NAMED_GENERATORS[args.g])
        return dens.make_location_scale(G, mu, args.sigma)
    raise InputError(f"unknown family {fam!r}")


def _grid_extent(p):
    if p.dim == 1:
        if p.support is not None:
            lo, hi = p.support
        else:
            s = np.sqrt(p.scale)
            lo, hi = p.location - GAUSS_GRID_STD * s, p.location + GAUSS_GRID_STD * s
        pad = GRID_PAD * (hi - lo)
        return lo - pad, hi + pad
    if p.support is not None:
        box = p.support.bounding_box()
    else:
        box = dens.Ellipse(np.asarray(p.location), GAUSS_GRID_STD**2 * np.asarray(p.scale)).bounding_box()
    out = []
    for lo, hi in box:
        pad = GRID_PAD * (hi - lo)
        out.append((lo - pad, hi + pad))
    return out


def cmd_density(args) -> int:
    p = _build_density(args)
    ext = _grid_extent(p)
    if p.dim == 1:
        t = np.linspace(ext[0], ext[1], GRID_1D)
        vals = np.asarray(p.pdf(t), dtype=float)
        _write_csv(args.out, ["t", "p"], [t, vals])
        mass = oracle.expectation_quadrature(p, lambda x: 1.0)
        support = None if p.support is None else list(p.support)
    else:
        (x0, x1), (y0, y1) = ext
        X, Y = np.meshgrid(np.linspace(x0, x1, GRID_2D), np.linspace(y0, y1, GRID_2D), indexing="ij")
        vals = np.asarray(p.pdf(np.stack([X, Y], axis=-1)), dtype=float)
        _write_csv(args.out, ["t0", "t1", "p"], [X.ravel(), Y.ravel(), vals.ravel()])
        mass = oracle.expectation_quadrature(p, lambda T: np.ones(np.shape(T)[:-1]))
        support = None if p.support is None else {
            "center": p.support.center.tolist(),
            "shape_matrix": matrix_to_json(p.support.shape_matrix),
        }
    sidecar = {
        "family": p.family.value,
        "lambda": p.lam,
        "support": support,
        "mass": mass,
        "grid_points": int(vals.size),
        "csv": str(args.out),
    }
    _write_json(sidecar, str(args.out) + ".json")
    if abs(mass - 1.0) > 1e-8:
        print(f"mass check failed: {mass!r}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------------
# attend

def _score_from_args(args, dim):
    if args.theta is not None:
        v = np.array(_floats(args.theta, 2 if dim == 1 else 6, "--theta"))
        cls = dens.CanonicalScore1D if dim == 1 else dens.CanonicalScore2D
        return cls.from_vector(v)
    if dim == 1:
        return att.theta_from_moments(_floats(args.mu, 1, "--mu")[0], args.sigma2)
    cov = np.array(_floats(args.cov, 4, "--cov")).reshape(2, 2)
    return att.theta_from_moments(np.array(_floats(args.mu, 2, "--mu")), cov)


def cmd_attend(args, cfg: RunConfig) -> int:
    score = _score_from_args(args, cfg.dimension)
    basis = cfg.basis()
    B = matrix_from_json(_read_json(args.B)) if args.B else None
    try:
        res = att.attend(score, basis, B, cfg.alpha, args.angular_nodes)
    except ToleranceNotReached as exc:
        print(f"angular refinement check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = {
        "alpha": cfg.alpha,
        "dimension": cfg.dimension,
        "theta": score.as_vector().tolist(),
        "r": res.r.tolist(),
        "jacobian": matrix_to_json(res.jacobian),
    }
    if res.context is not None:
        out["context"] = res.context.tolist()
    status = EXIT_OK
    if args.check:
        r_tol, j_tol = ATTEND_TOL[(cfg.alpha, cfg.dimension)]
        r_q = oracle.attention_forward_quadrature(score, basis, cfg.alpha)
        j_q = oracle.attention_jacobian_quadrature(score, basis, cfg.alpha)
        step = 1e-5 if (cfg.alpha, cfg.dimension) == (2, 2) else 1e-6
        j_fd = oracle.fd_attention_jacobian(
            lambda s: att.forward(s, basis, cfg.alpha, args.angular_nodes), score, step)
        deltas = {
            "forward_vs_quadrature": float(np.abs(res.r - r_q).max()),
            "jacobian_vs_quadrature": float(np.abs(res.jacobian - j_q).max()),
            "jacobian_vs_finite_diff": float(np.abs(res.jacobian - j_fd).max()),
        }
        passed = (deltas["forward_vs_quadrature"] <= r_tol
                  and max(deltas["jacobian_vs_quadrature"], deltas["jacobian_vs_finite_diff"]) <= j_tol)
        out["check"] = {"deltas": deltas, "forward_tol": r_tol, "jacobian_tol": j_tol, "passed": passed}
        if not passed:
            status = EXIT_NUMERIC
    _write_json(out, args.out)
    return status


# --------------------------------------------------------------------------
# fit

def cmd_fit(args, cfg: RunConfig) -> int:
    H = matrix_from_json(_read_json(args.H))
    L = H.shape[1]
    try:
        locs = sequence_locations(L) if cfg.dimension == 1 else grid_locations(L)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    basis = cfg.basis()
    value = fit(ObservationMatrix(H, locs), basis, args.ridge)
    F = design_matrix(basis, locs)
    residual = float(np.linalg.norm(value.B @ F - H))
    _write_json({"B": matrix_to_json(value.B), "residual": residual, "ridge": args.ridge,
                 "n_basis": len(basis), "dimension": cfg.dimension}, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    results = run_checks(args.filter)
    if not results:
        raise InputError(f"no check matches filter {args.filter!r}")
    if args.json:
        _write_json({"passed": all(r.passed for r in results),
                     "checks": [r.as_dict() for r in results]})
    else:
        for r in results:
            print(r.line())
        n_ok = sum(r.passed for r in results)
        print(f"{n_ok}/{len(results)} checks passed")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# --------------------------------------------------------------------------
# demo

def cmd_demo(args, cfg: RunConfig) -> int:
    rep = run_demo(DemoConfig(alpha=cfg.alpha, seed=cfg.seed, n_basis=cfg.n_basis,
                              rbf_sigma=cfg.rbf_sigma))
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(outdir / "attention_map.csv", ["t", "p_discrete", "density"],
               [rep.locations, rep.p_discrete, rep.density])
    report = {
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "mu": rep.mu,
        "sigma2": rep.sigma2,
        "p_discrete": rep.p_discrete.tolist(),
        "density": rep.density.tolist(),
        "c_discrete": rep.c_discrete.tolist(),
        "c_continuous": rep.c_continuous.tolist(),
        "context": rep.context.tolist(),
        "gradient": rep.grad_analytic.tolist(),
        "gradient_check": {"max_abs_delta": rep.grad_delta, "tolerance": rep.config.grad_tol,
                           "passed": rep.grad_ok},
        "extras": rep.extras,
    }
    _write_json(report, outdir / "demo_report.json")
    print(f"gradient check: max |analytic - fd| = {rep.grad_delta:.3e} "
          f"({'ok' if rep.grad_ok else 'FAILED'})")
    return EXIT_OK if rep.grad_ok else EXIT_NUMERIC


# --------------------------------------------------------------------------

def _add_common(p, basis=True):
    p.add_argument("--alpha", type=int, default=1, choices=(1, 2))
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    if basis:
        p.add_argument("--n-basis", type=int, default=None,
                       help="1D: number of centers in [0,1]; 2D: a perfect square (default 16)")
        p.add_argument("--rbf-sigma", type=float, default=0.1,
                       help="1D basis width, standard deviation (usual choices 0.1 or 0.5)")
        p.add_argument("--basis-var", type=float, default=1e-3, help="2D basis variance (times I)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contattn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="evaluate a density on a grid (CSV + JSON sidecar)")
    p.add_argument("--family", required=True,
                   choices=("gaussian", "truncated_parabola", "truncated_paraboloid",
                            "triangular", "location_scale"))
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--mu", default="0")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--cov", default="1,0,0,1", help="2x2 row-major")
    p.add_argument("--b", type=float, default=1.0, help="triangular scale")
    p.add_argument("--sigma", type=float, default=1.0, help="location-scale scale")
    p.add_argument("--g", default="quadratic", help="location-scale generator name")
    p.add_argument("--out", required=True)

    p = sub.add_parser("attend", help="continuous attention forward/backward")
    _add_common(p)
    p.add_argument("--theta", default=None, help="canonical parameters, comma separated")
    p.add_argument("--mu", default="0.5")
    p.add_argument("--sigma2", type=float, default=0.01)
    p.add_argument("--cov", default="0.01,0,0,0.01")
    p.add_argument("--B", default=None, help="JSON value matrix (D x N)")
    p.add_argument("--angular-nodes", type=int, default=att.DEFAULT_ANGULAR_NODES)
    p.add_argument("--check", action="store_true", help="compare against the quadrature oracles")
    p.add_argument("--out", default=None)

    p = sub.add_parser("fit", help="ridge-fit a value function to a JSON matrix H")
    _add_common(p)
    p.add_argument("--H", required=True)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--out", default=None)

    p = sub.add_parser("check", help="run the acceptance checks")
    p.add_argument("--filter", default=None, help="substring of a check name or tag")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("demo", help="synthetic combined-attention pipeline")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="demo_out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "density":
            return cmd_density(args)
        if args.command == "check":
            return cmd_check(args)
        n_basis = args.n_basis if args.n_basis is not None else 16
        cfg = RunConfig(args.command, args.alpha, args.dim, n_basis, args.rbf_sigma,
                        args.basis_var, _resolve_seed(getattr(args, "seed", None)))
        if cfg.command == "attend":
            return cmd_attend(args, cfg)
        if cfg.command == "fit":
            return cmd_fit(args, cfg)
        if cfg.command == "demo":
            if cfg.dimension != 1:
                raise InputError("the demo pipeline is one-dimensional")
            return cmd_demo(args, cfg)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

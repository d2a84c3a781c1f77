"""Command-line front end: ``torus solve|sweep|bifurcate|verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .canonical import ChartSingular, theta
from .cohomology import NoContraction, ZeroMeanViolation
from .hamiltonian import ConfigError, CutoffOverflow, HamiltonianSpec, load_spec, modify
from .residual import Params, flow_defects
from .solver import ModifiedSolution, NoConvergence, SolveOptions, TrustRegionExceeded, solve_modified
from .trigfield import DivisorUnderflow, Field, evaluate_at, gradient
from .variational import ActionSample, minimize_action, sample_action

log = logging.getLogger(__name__)

__all__ = ["VerifyReport", "IntegratorFailure", "verify", "run", "main", "CSV_COLUMNS", "EXIT_CODES"]

CSV_COLUMNS = ("alpha", "k", "psi", "m", "M", "L11", "L12", "L22")
EXIT_CODES = {"config": 2, "solver": 3, "numeric": 4, "integrator": 5}


class IntegratorFailure(RuntimeError):
    pass


# --- verification by direct integration ----------------------------------------


@dataclass
class VerifyReport:
    max_invariance_defect: float
    conjugacy_defect: float
    horizon: float
    samples: int
    seed: int
    energy_drift: float
    residual: float
    against_modified: bool
    flow_defects: dict

    def as_dict(self) -> dict:
        return asdict(self)


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2 * np.pi) - np.pi


class _TorusImage:
    """Point evaluation of xi -> (xi + u, v, w) and its Jacobian."""

    def __init__(self, u: Field, v: Field, w: Field):
        self.d = u.dim
        K = max(u.cutoff, v.cutoff, w.cutoff)
        self.emb = Field(np.concatenate([u.resize(K).coeffs, v.resize(K).coeffs, w.resize(K).coeffs], -1), u.dim)
        self.jac = gradient(self.emb)

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        out = evaluate_at(self.emb, xi)
        out[..., : self.d] += xi
        return out

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        J = evaluate_at(self.jac, xi)
        J[..., : self.d, :] += np.eye(self.d)
        return J

    def project(self, X: np.ndarray, xi0: np.ndarray, iters: int = 30) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Newton for the closest torus point; returns (xi, distance)."""
        d = self.d
        xi = xi0.copy()
        for _ in range(iters):
            r = self(xi) - X
            r[..., :d] = _wrap(r[..., :d])
            J = self.jacobian(xi)
            JT = np.swapaxes(J, -1, -2)
            dxi = np.linalg.solve(JT @ J, (JT @ r[..., None]))[..., 0]
            xi = xi - dxi
            if np.max(np.abs(dxi)) < 1e-15:
                break
        r = self(xi) - X
        r[..., :d] = _wrap(r[..., :d])
        return xi, np.linalg.norm(r, axis=-1)


def verify(
    sol: ModifiedSolution,
    H: HamiltonianSpec,
    horizon: float = 1e3,
    samples: int = 8,
    seed: int = 0,
    n_out: int = 200,
    threshold: float = 1e-8,
    rtol: float = 1e-12,
    atol: float = 1e-12,
) -> VerifyReport:
    """Integrate orbits starting on the computed torus and measure how far they leave it.

    Orbits of the unmodified H are used when |m| and |M| are below
    ``threshold``; otherwise the modified Hamiltonian (for which the torus is
    invariant) is integrated and the report says so.
    """
    if not horizon > 0 or samples < 1:
        raise ConfigError("horizon must be positive and samples at least 1")
    s, f = sol.state, sol.params
    d = H.dim
    modified = max(abs(s.m), abs(s.M)) > threshold
    Hint = modify(H, s.m, s.M) if modified else H
    t = theta(s.coord)
    img = _TorusImage(t.u, t.v, t.w)
    rng = np.random.default_rng(seed)
    xi0 = rng.uniform(0, 2 * np.pi, size=(samples, d))
    X0 = img(xi0)
    n = 2 * d + 2

    def rhs(_t, y):
        return Hint.vector_field(y.reshape(samples, n)).ravel()

    times = np.linspace(0.0, horizon, n_out + 1)
    res = solve_ivp(rhs, (0.0, horizon), X0.ravel(), method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not res.success:
        raise IntegratorFailure(res.message)
    traj = res.y.T.reshape(len(times), samples, n)
    E0 = Hint.value(X0[:, :d], X0[:, d : 2 * d], X0[:, 2 * d :])
    worst_dist = worst_conj = worst_energy = 0.0
    om = H.freq.omega
    for i, tt in enumerate(times):
        X = traj[i]
        pred = xi0 + om * tt
        xi, dist = img.project(X, pred)
        worst_dist = max(worst_dist, float(dist.max()))
        worst_conj = max(worst_conj, float(np.abs(_wrap(xi - pred)).max()))
        E = Hint.value(X[:, :d], X[:, d : 2 * d], X[:, 2 * d :])
        worst_energy = max(worst_energy, float(np.abs(E - E0).max()))
    fd = flow_defects(f, s, H)
    return VerifyReport(
        worst_dist, worst_conj, float(horizon), samples, seed, worst_energy, sol.residual, modified, fd
    )


# --- serialisation ---------------------------------------------------------------


def _field_json(f: Field) -> dict:
    return {"cutoff": f.cutoff, "shape": list(f.shape), "re": f.coeffs.real.tolist(), "im": f.coeffs.imag.tolist()}


def solution_json(sol: ModifiedSolution) -> dict:
    s = sol.state
    c = s.coord
    return {
        "alpha": sol.params.alpha,
        "k": sol.params.k,
        "e": s.e,
        "m": s.m,
        "M": s.M,
        "converged": sol.converged,
        "residual_history": list(sol.residual_history),
        "worst_divisor": sol.worst_divisor,
        "cutoff": s.cutoff,
        "coord": {
            "beta": c.beta.tolist(),
            "phi0": _field_json(c.phi0),
            "u": _field_json(c.u),
            "w": _field_json(c.w),
            "W11": _field_json(c.W11),
            "W12": _field_json(c.W12),
            "W21": _field_json(c.W21),
        },
    }


def _dump(path: Path, obj) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=default, allow_nan=True) + "\n")


def _write_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(float(getattr(r, c))) for c in CSV_COLUMNS])


# --- commands ------------------------------------------------------------------------


def _params(args, doc: dict) -> Params:
    tab = doc.get("solve", {}) if isinstance(doc.get("solve", {}), dict) else {}
    alpha = args.alpha if args.alpha is not None else float(tab.get("alpha", 0.0))
    k = args.k if args.k is not None else float(tab.get("k", 0.0))
    try:
        return Params(alpha, k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _opts(args) -> SolveOptions:
    try:
        return SolveOptions(cutoff=args.cutoff, tol_residual=args.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _grid(args):
    if args.alpha_grid < 1 or args.k_grid < 1:
        raise ConfigError("grids must have at least one point")
    alphas = 2 * np.pi * np.arange(args.alpha_grid) / args.alpha_grid
    ks = np.linspace(0.0, 1.0, args.k_grid) if args.k_grid > 1 else np.array([0.0])
    return alphas, ks


def _sample_grid(H, opts, alphas, ks) -> list:
    rows = []
    for a in alphas:
        for k in ks:
            try:
                rows.append(sample_action(Params(float(a), float(k)), H, opts))
            except (NoConvergence, NoContraction, ChartSingular, DivisorUnderflow) as exc:
                log.warning("cell alpha=%.4f k=%.4f failed: %s", a, k, exc)
                rows.append(ActionSample(float(a), float(k), math.nan, math.nan, math.nan))
    return rows


def cmd_solve(args, H, doc, out: Path) -> int:
    f = _params(args, doc)
    sol = solve_modified(f, H, _opts(args))
    _dump(out / "solution.json", solution_json(sol))
    return 0


def cmd_sweep(args, H, doc, out: Path) -> int:
    alphas, ks = _grid(args)
    rows = _sample_grid(H, _opts(args), alphas, ks)
    _write_csv(out / "psi_surface.csv", rows)
    return 0 if all(r.converged for r in rows) else EXIT_CODES["solver"]


def cmd_bifurcate(args, H, doc, out: Path) -> int:
    alphas, ks = _grid(args)
    opts = _opts(args)
    rows = _sample_grid(H, opts, alphas, ks)
    _write_csv(out / "psi_surface.csv", rows)
    rep = minimize_action(rows, H, opts)
    _dump(out / "bifurcation.json", rep.as_dict())
    return 0


def cmd_verify(args, H, doc, out: Path) -> int:
    opts = _opts(args)
    bif = out / "bifurcation.json"
    if args.alpha is None and args.k is None and bif.exists():
        rep = json.loads(bif.read_text())
        f = Params(float(rep["alpha0"]), float(rep["k0"]))
    else:
        f = _params(args, doc)
    sol = solve_modified(f, H, opts)
    vr = verify(sol, H, args.horizon, args.samples, args.seed)
    payload = vr.as_dict()
    payload.update({"alpha": f.alpha, "k": f.k, "m": sol.state.m, "M": sol.state.M})
    _dump(out / "verify.json", payload)
    return 0


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "bifurcate": cmd_bifurcate, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torus", description="Lower-dimensional invariant tori of nearly integrable Hamiltonians.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--input", required=True, help="Hamiltonian description (TOML)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cutoff", type=int, default=24)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--alpha-grid", type=int, default=64)
    p.add_argument("--k-grid", type=int, default=17)
    p.add_argument("--horizon", type=float, default=1e3)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None, help="parameter alpha for solve/verify")
    p.add_argument("--k", type=float, default=None, help="parameter k for solve/verify")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _category(exc: BaseException) -> str:
    if isinstance(exc, (ConfigError, CutoffOverflow, TrustRegionExceeded)):
        return "config"
    if isinstance(exc, (NoConvergence, NoContraction)):
        return "solver"
    if isinstance(exc, IntegratorFailure):
        return "integrator"
    return "numeric"


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)])
    out = Path(args.out)
    try:
        H, doc = load_spec(args.input)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, H, doc, out)
    except (
        ConfigError, CutoffOverflow, TrustRegionExceeded, NoConvergence, NoContraction,
        IntegratorFailure, ChartSingular, DivisorUnderflow, ZeroMeanViolation,
    ) as exc:
        cat = _category(exc)
        print(json.dumps({"error": cat, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES[cat]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

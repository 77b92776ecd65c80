"""Linear solvers and the outer time-marching driver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolverError",
    "SingularSystemError",
    "LinearSolveSpec",
    "TriDiagonalSystem",
    "solve_tridiagonal",
    "solve_sparse",
    "SolverState",
    "march_to_steady",
]


class SolverError(Exception):
    pass


class SingularSystemError(SolverError):
    pass


class DivergenceError(SolverError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class LinearSolveSpec:
    kind: str = "general-sparse"  # "tridiagonal-line" | "general-sparse"
    tolerance: float = 1e-12
    max_iterations: int = 2000
    method: str = "splu"

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")


@dataclass
class TriDiagonalSystem:
    """Banded line system A_i x_{i-1} + B_i x_i + C_i x_{i+1} = rhs_i."""

    lower: np.ndarray  # A_i, lower[0] unused
    diag: np.ndarray   # B_i
    upper: np.ndarray  # C_i, upper[-1] unused
    rhs: np.ndarray

    def residual_inf(self, x: np.ndarray) -> float:
        n = len(self.diag)
        r = self.diag * x - self.rhs
        r[1:] += self.lower[1:] * x[:-1]
        r[:-1] += self.upper[:-1] * x[1:]
        return float(np.max(np.abs(r))) if n else 0.0


def solve_tridiagonal(system: TriDiagonalSystem) -> np.ndarray:
    """Direct Thomas solve; raises SingularSystemError on a zero pivot."""
    a, b, c, d = system.lower, system.diag, system.upper, system.rhs
    n = len(b)
    if not (len(a) == len(c) == len(d) == n):
        raise SolverError("inconsistent tridiagonal band lengths")
    cp = np.empty(n)
    dp = np.empty(n)
    piv = b[0]
    if piv == 0.0:
        raise SingularSystemError("zero pivot at row 0")
    cp[0] = c[0] / piv
    dp[0] = d[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if piv == 0.0:
            raise SingularSystemError(f"zero pivot at row {i}")
        cp[i] = c[i] / piv
        dp[i] = (d[i] - a[i] * dp[i - 1]) / piv
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def solve_sparse(matrix: sp.spmatrix, rhs: np.ndarray,
                 spec: LinearSolveSpec | None = None) -> np.ndarray:
    """Sparse solve meeting the residual tolerance contract.

    The default method is a deterministic direct factorization; any method
    satisfying ||Ax-b||_inf <= tol * max(||b||_inf, 1) conforms.
    """
    spec = spec or LinearSolveSpec()
    A = matrix.tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as e:
        raise SingularSystemError(f"sparse factorization failed: {e}") from e
    x = lu.solve(rhs)
    res = np.max(np.abs(A @ x - rhs)) if len(rhs) else 0.0
    scale = max(float(np.max(np.abs(rhs))) if len(rhs) else 0.0, 1e-300)
    if not np.isfinite(res) or res > max(spec.tolerance * scale, spec.tolerance):
        raise SolverError(f"sparse solve residual {res:.3e} exceeds tolerance")
    return x


def stable_params(re: float, n: int, d: float = 1.0, u: float = 1.0) -> tuple[float, float]:
    """Empirically safe (dt, alpha_p) for the cavity marches.

    The pressure-coupling gain at the hairline corner cells grows with n, so
    the pressure relaxation shrinks ~1/n; dt follows the cell size.  The
    converged state is independent of both knobs.
    """
    uref = abs(u) if u != 0 else 1.0
    dt = (0.8 if re <= 500 else 0.4) * d / (uref * n)
    alpha = min(0.5, 10.0 / n)
    return dt, alpha


@dataclass
class SolverState:
    """Iteration bookkeeping for a marching run."""

    n_outer: int = 0
    n_steps: int = 0
    history: list[tuple] = field(default_factory=list)  # (iter, time, res_u, res_v, res_cont)
    wall_seconds: float = 0.0
    converged: bool = False

    def history_csv(self) -> str:
        lines = ["iter,time,res_u,res_v,res_cont"]
        for rec in self.history:
            lines.append(",".join(f"{v:.10e}" if isinstance(v, float) else str(v) for v in rec))
        return "\n".join(lines) + "\n"


def march_to_steady(config, mesh, log_path=None, callback=None):
    """March the coupled system to steady state; see assembly.CavitySolver.

    Returns (fields, solver_state).  Raises DivergenceError with the last
    good state attached when the iteration blows up.
    """
    from .assembly import CavitySolver  # deferred: solver <-> assembly layering

    t0 = time.perf_counter()
    sim = CavitySolver(config, mesh)
    state = SolverState()
    log = open(log_path, "w") if log_path else None
    if log:
        log.write("iter,time,res_u,res_v,res_cont\n")

    uref = abs(config.U) if config.U != 0.0 else 1.0
    steady_tol = config.steady_tol
    inner_tol = config.inner_tol_factor * (uref / config.D) * float(np.max(mesh.cell_vol))
    res0 = None
    try:
        for step in range(1, config.max_steps + 1):
            du, dv = 0.0, 0.0
            for inner in range(config.max_inner):
                res_cont = sim.iterate()
                state.n_outer += 1
                if res_cont < inner_tol:
                    break
            du, dv = sim.advance_time()
            state.n_steps = step
            rec = (state.n_outer, step * config.dt, du / uref, dv / uref,
                   res_cont * config.D / uref)
            state.history.append(rec)
            if log:
                log.write(",".join(f"{v:.10e}" if isinstance(v, float) else str(v) for v in rec) + "\n")
            if callback:
                callback(state, sim)
            if not np.isfinite(du + dv + res_cont):
                raise DivergenceError(f"non-finite residual at step {step}", state=sim.fields())
            if res0 is None and res_cont > 0:
                res0 = res_cont
            if res0 and res_cont > 1e6 * res0 and step > 10:
                raise DivergenceError(f"continuity residual grew 1e6x at step {step}",
                                      state=sim.fields())
            if max(du, dv) / uref < steady_tol and res_cont < inner_tol:
                state.converged = True
                break
    finally:
        state.wall_seconds = time.perf_counter() - t0
        if log:
            log.close()
    return sim.fields(), state

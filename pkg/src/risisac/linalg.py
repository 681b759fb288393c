"""Dense Hermitian linear algebra and a small SDP front end.

Complex Hermitian SDPs are lifted to real symmetric SDPs of twice the
dimension through the embedding ``X -> [[Re X, -Im X], [Im X, Re X]]`` and
handed to cvxopt's primal-dual interior-point cone solver (Nesterov-Todd
scaling).  The matrix variables of an :class:`SdpProblem` become the dual
cone variables of the cvxopt problem, so every constraint is an equality
row there; inequalities get a nonnegative slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers

HERMITIAN_RTOL = 1e-10


def _check_hermitian(A: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.linalg.norm(A)
    asym = np.linalg.norm(A - A.conj().T)
    if asym > rtol * max(scale, np.finfo(float).tiny):
        raise ValueError(
            f"matrix is not Hermitian: ||A - A^H|| / ||A|| = {asym / scale:.3e} > {rtol:.0e}"
        )
    return A


def hermitian_eig(A):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Parameters
    ----------
    A : (n, n) array_like
        Hermitian matrix (relative asymmetry at most 1e-10).

    Returns
    -------
    w : (n,) ndarray
        Real eigenvalues sorted in descending order.
    V : (n, n) ndarray
        Unitary matrix whose columns are the matching eigenvectors, so that
        ``A = V @ diag(w) @ V^H``.
    """
    A = _check_hermitian(A)
    # symmetrize so eigh sees an exactly Hermitian matrix
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    return w[::-1].copy(), V[:, ::-1].copy()


def numerical_rank(A, tol: float = 1e-6) -> int:
    """Number of eigenvalues of a PSD matrix above ``tol * lambda_max``."""
    w, _ = hermitian_eig(A)
    if w[0] <= 0:
        return 0
    return int(np.count_nonzero(w > tol * w[0]))


def rank_one_recovery(Q, reference_index: int | None = 0) -> np.ndarray:
    """Best rank-one factor ``q`` of a PSD matrix (``q q^H`` closest to ``Q``).

    ``q = sqrt(lambda_max) * v_max``.  If ``reference_index`` is given, the
    global phase is fixed so that ``q[reference_index]`` is real and
    nonnegative.
    """
    w, V = hermitian_eig(Q)
    if w[0] <= 0 or not np.isfinite(w[0]):
        raise ValueError("rank-one recovery needs a PSD matrix with a positive eigenvalue")
    q = np.sqrt(w[0]) * V[:, 0]
    if reference_index is not None:
        ref = q[reference_index]
        if abs(ref) > 0:
            q = q * np.exp(-1j * np.angle(ref))
    return q


def reduce_rank(mats, functionals, tol: float = 1e-9, max_steps: int = 200):
    """Purify a block PSD solution towards low rank without moving constraints.

    Given PSD blocks ``X_j`` and linear functionals
    ``L_i(X) = sum_j tr(A_ij X_j)``, repeatedly finds Hermitian directions
    ``Delta_j`` with ``L_i(V_j Delta_j V_j^H) = 0`` for all ``i`` and steps
    until an eigenvalue hits zero.  Every functional value is preserved, so a
    feasible (and optimal, when the objective is listed among the
    functionals) point stays feasible and optimal.

    Parameters
    ----------
    mats : list of (n_j, n_j) ndarray
    functionals : list of list of (n_j, n_j) ndarray
        ``functionals[i][j]`` is ``A_ij`` (Hermitian).

    Returns
    -------
    list of ndarray
        The purified blocks.
    """
    mats = [0.5 * (X + X.conj().T) for X in mats]
    for _ in range(max_steps):
        factors = []
        for X in mats:
            w, V = hermitian_eig(X)
            top = max(w[0], 0.0)
            keep = w > tol * top if top > 0 else np.zeros_like(w, dtype=bool)
            factors.append(V[:, keep] * np.sqrt(w[keep]))
        ranks = [F.shape[1] for F in factors]
        if sum(r * r for r in ranks) <= len(functionals) or all(r <= 1 for r in ranks):
            break
        # real parametrization of each r x r Hermitian Delta_j: r^2 numbers
        rows = []
        for A_row in functionals:
            row = []
            for F, A in zip(factors, A_row):
                r = F.shape[1]
                if r == 0:
                    continue
                B = F.conj().T @ A @ F  # tr(B Delta) for Hermitian Delta
                iu = np.triu_indices(r, 1)
                row.append(np.real(np.diag(B)))
                row.append(2 * np.real(B[iu]))
                row.append(2 * np.imag(B[iu]))
            rows.append(np.concatenate(row))
        L = np.array(rows)
        _, s, Vh = np.linalg.svd(L)
        nullity = L.shape[1] - int(np.count_nonzero(s > 1e-12 * max(s[0], 1e-300)))
        if nullity <= 0:
            break
        d = Vh[-1]
        deltas, pos = [], 0
        for F in factors:
            r = F.shape[1]
            if r == 0:
                deltas.append(np.zeros((0, 0), complex))
                continue
            D = np.zeros((r, r), complex)
            D[np.diag_indices(r)] = d[pos:pos + r]
            pos += r
            iu = np.triu_indices(r, 1)
            k = len(iu[0])
            D[iu] = d[pos:pos + k] + 1j * d[pos + k:pos + 2 * k]
            pos += 2 * k
            D = D + np.triu(D, 1).conj().T
            deltas.append(D)
        lam = max(np.linalg.eigvalsh(D).max() if D.size else -np.inf for D in deltas)
        if lam <= 0:
            deltas = [-D for D in deltas]
            lam = max(np.linalg.eigvalsh(D).max() if D.size else -np.inf for D in deltas)
        alpha = 1.0 / lam
        new = []
        for F, D in zip(factors, deltas):
            r = F.shape[1]
            if r == 0:
                new.append(np.zeros((F.shape[0], F.shape[0]), complex))
                continue
            M = np.eye(r) - alpha * D
            Y = F @ M @ F.conj().T
            new.append(0.5 * (Y + Y.conj().T))
        mats = new
    return mats


# --------------------------------------------------------------------------
# SDP problem description
# --------------------------------------------------------------------------

@dataclass
class LinearConstraint:
    """``sum_j tr(coeffs[j] X_j) + sum_s coeffs[s] * s  (sense)  rhs``."""

    coeffs: dict
    sense: str
    rhs: float
    name: str = ""


@dataclass
class SdpProblem:
    """Trace-linear program over Hermitian PSD matrices and nonneg scalars.

    ``matrix_vars`` maps a name to the matrix dimension, ``scalar_vars``
    lists names of nonnegative scalar variables.  ``objective`` and every
    constraint's ``coeffs`` map variable names to a Hermitian coefficient
    matrix (matrix variables) or a real weight (scalar variables).
    """

    matrix_vars: dict
    scalar_vars: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    sense: str = "maximize"

    def add_constraint(self, coeffs, sense, rhs, name=""):
        self.constraints.append(LinearConstraint(dict(coeffs), sense, float(rhs), name))

    def validate(self):
        if self.sense not in ("maximize", "minimize"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if not self.constraints:
            raise ValueError("SDP needs at least one constraint")
        blocks = [("objective", self.objective)] + [
            (c.name or f"constraint[{k}]", c.coeffs) for k, c in enumerate(self.constraints)
        ]
        for label, coeffs in blocks:
            for var, C in coeffs.items():
                if var in self.matrix_vars:
                    C = np.asarray(C)
                    n = self.matrix_vars[var]
                    if C.shape != (n, n):
                        raise ValueError(f"{label}: coefficient of {var} has shape {C.shape}, expected {(n, n)}")
                    _check_hermitian(C, 1e-8)
                    if not np.all(np.isfinite(C)):
                        raise ValueError(f"{label}: non-finite coefficient for {var}")
                elif var in self.scalar_vars:
                    if not np.isfinite(C):
                        raise ValueError(f"{label}: non-finite weight for {var}")
                else:
                    raise ValueError(f"{label}: unknown variable {var!r}")
        for k, c in enumerate(self.constraints):
            if c.sense not in ("==", "<=", ">="):
                raise ValueError(f"constraint[{k}]: unknown sense {c.sense!r}")
            if not np.isfinite(c.rhs):
                raise ValueError(f"constraint[{k}]: right-hand side must be finite")


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible | unbounded | max-iterations
    values: dict
    objective_value: float
    duality_gap: float
    iterations: int = 0

    def __getitem__(self, name):
        return self.values[name]


def _lift(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=complex)
    return np.block([[C.real, -C.imag], [C.imag, C.real]])


def _unlift(Y: np.ndarray) -> np.ndarray:
    n = Y.shape[0] // 2
    X = 0.5 * (Y[:n, :n] + Y[n:, n:]) + 0.5j * (Y[n:, :n] - Y[:n, n:])
    return 0.5 * (X + X.conj().T)


def _term(coeff, value):
    if np.ndim(coeff) == 0:
        return float(coeff) * float(value)
    return float(np.real(np.vdot(np.asarray(coeff).conj().T, value)))  # tr(C X)


def _term_scale(coeff, value):
    if np.ndim(coeff) == 0:
        return abs(float(coeff) * float(value))
    return float(np.linalg.norm(coeff) * np.linalg.norm(value))


def evaluate_constraints(problem: SdpProblem, values: dict):
    """Return ``(lhs, relative_violation)`` arrays for every constraint.

    The relative violation is measured against
    ``max(|rhs|, sum_j ||A_j|| ||X_j||)`` (zero when satisfied).
    """
    lhs = np.empty(len(problem.constraints))
    viol = np.empty(len(problem.constraints))
    for k, c in enumerate(problem.constraints):
        val = sum(_term(C, values[v]) for v, C in c.coeffs.items())
        scale = max(abs(c.rhs), sum(_term_scale(C, values[v]) for v, C in c.coeffs.items()), 1e-300)
        if c.sense == "==":
            v = abs(val - c.rhs)
        elif c.sense == "<=":
            v = max(val - c.rhs, 0.0)
        else:
            v = max(c.rhs - val, 0.0)
        lhs[k] = val
        viol[k] = v / scale
    return lhs, viol


def solve_sdp(problem: SdpProblem, gap_tol: float = 1e-8, feas_tol: float = 1e-8,
              max_iters: int = 100) -> SdpSolution:
    """Solve an :class:`SdpProblem` with a primal-dual interior-point method.

    Each constraint row (and the objective) is normalized to unit scale
    before solving; the caller is responsible for giving matrix variables a
    sensible magnitude (traces of order one work best).

    Returns an :class:`SdpSolution` whose status is ``"optimal"``,
    ``"infeasible"`` (certificate of primal infeasibility found),
    ``"unbounded"`` or ``"max-iterations"`` (best iterate attached).
    """
    problem.validate()
    mnames = list(problem.matrix_vars)
    snames = list(problem.scalar_vars)
    ineq = [k for k, c in enumerate(problem.constraints) if c.sense != "=="]
    nl = len(snames) + len(ineq)
    m = len(problem.constraints)
    sign = 1.0 if problem.sense == "maximize" else -1.0

    row_scale = np.empty(m)
    for k, c in enumerate(problem.constraints):
        mags = [np.abs(np.asarray(C)).max() if np.ndim(C) else abs(C) for C in c.coeffs.values()]
        row_scale[k] = 1.0 / max(max(mags, default=0.0), abs(c.rhs), 1e-300)
    obj_mags = [np.abs(np.asarray(C)).max() if np.ndim(C) else abs(C) for C in problem.objective.values()]
    obj_scale = 1.0 / max(max(obj_mags, default=0.0), 1e-300)
    if not problem.objective:
        obj_scale = 1.0

    # cvxopt dual: G' z + c = 0 encodes our constraints row by row
    Gs, hs = [], []
    for name in mnames:
        n2 = 2 * problem.matrix_vars[name]
        cols = np.zeros((n2 * n2, m))
        for k, c in enumerate(problem.constraints):
            if name in c.coeffs:
                cols[:, k] = (0.5 * row_scale[k] * _lift(c.coeffs[name])).ravel(order="F")
        Gs.append(cvx_matrix(cols))
        Cobj = problem.objective.get(name)
        H = np.zeros((n2, n2)) if Cobj is None else -sign * obj_scale * 0.5 * _lift(Cobj)
        hs.append(cvx_matrix(H))
    Gl = np.zeros((nl, m))
    hl = np.zeros(nl)
    for i, name in enumerate(snames):
        for k, c in enumerate(problem.constraints):
            if name in c.coeffs:
                Gl[i, k] = row_scale[k] * float(c.coeffs[name])
        hl[i] = -sign * obj_scale * float(problem.objective.get(name, 0.0))
    for i, k in enumerate(ineq):
        # slack: a.x + s = b for <=, a.x - s = b for >=
        Gl[len(snames) + i, k] = 1.0 if problem.constraints[k].sense == "<=" else -1.0
    cvec = np.array([-row_scale[k] * c.rhs for k, c in enumerate(problem.constraints)])

    kwargs = dict(Gs=Gs, hs=hs)
    if nl:
        kwargs.update(Gl=cvx_matrix(Gl), hl=cvx_matrix(hl))
    # cvxopt stops on an absolute OR relative gap; one looser retry when it stalls
    for loosen in (1.0, 10.0):
        options = {"show_progress": False, "abstol": gap_tol * loosen, "reltol": gap_tol * loosen,
                   "feastol": feas_tol * loosen, "maxiters": max_iters, "refinement": 2}
        try:
            sol = solvers.sdp(cvx_matrix(cvec), options=options, **kwargs)
        except (ArithmeticError, ValueError):
            # breakdown of the scaling update on degenerate instances
            sol = None
            continue
        if sol["status"] != "unknown":
            break
    if sol is None:
        return SdpSolution("max-iterations", {}, np.nan, np.nan, max_iters)
    status = sol["status"]
    iters = int(sol.get("iterations", 0) or 0)

    if status == "dual infeasible":
        return SdpSolution("infeasible", {}, np.nan, np.nan, iters)
    if status == "primal infeasible":
        return SdpSolution("unbounded", {}, sign * np.inf, np.nan, iters)
    if sol["zs"] is None and sol["zl"] is None:
        return SdpSolution("max-iterations", {}, np.nan, np.nan, iters)

    values = {}
    for name, Z in zip(mnames, sol["zs"]):
        values[name] = _unlift(np.array(Z))
    zl = np.array(sol["zl"]).ravel() if nl else np.zeros(0)
    for i, name in enumerate(snames):
        values[name] = max(float(zl[i]), 0.0)
    obj = sum(_term(C, values[v]) for v, C in problem.objective.items()) if problem.objective else 0.0
    gap = abs(float(sol["gap"])) if sol["gap"] is not None else np.nan
    out_status = "optimal"
    if status != "optimal":
        # cvxopt stalls short of its tolerances near degenerate optima; accept
        # the iterate only if it meets the documented contract
        _, viol = evaluate_constraints(problem, values)
        rel = sol.get("relative gap")
        small_gap = np.isfinite(gap) and (gap <= 10 * gap_tol or (rel is not None and abs(rel) <= 10 * gap_tol))
        ok = small_gap and viol.max(initial=0.0) <= 1e-7
        out_status = "optimal" if ok else "max-iterations"
    return SdpSolution(out_status, values, float(obj), gap, iters)

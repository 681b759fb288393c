"""Joint design of transmit beamformers, receive combiner and RIS phases.

The problem maximizes the UE SNR subject to a transmit power budget,
unit-modulus RIS coefficients, a unit-norm combiner and a minimum detection
probability (equivalently, a minimum normalized echo integral ``G``).  It is
solved block-wise:

* beamformers: bisection on the SNR level, each level an SDR feasibility
  problem solved as echo maximization;
* combiner: principal eigenvector of the combiner-side echo matrix;
* RIS phases: Charnes-Cooper linearization of the SNR ratio plus successive
  linear minorization of the echo constraint.

Every block step only accepts changes that keep the detection constraint
satisfied and do not lower the SNR, so the outer SNR trace is monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .channel import ChannelSet
from .linalg import SdpProblem, hermitian_eig, rank_one_recovery, reduce_rank, solve_sdp
from .operators import build_comm_quadratics, build_sensing_operators, lift, quartic_value, upsilon
from .sensing import (DetectionSpec, EchoGrid, QuadratureRule, SensingRegion,
                      detection_probability, echo_threshold, effective_channel,
                      sensing_threshold_G, snr_ue)

# relative safety margin on the echo threshold used inside the solvers so
# that extracted solutions meet the exact threshold despite solver rounding
G_MARGIN = 1e-7
ALG2_MAX_ITER = 50
ALG3_MAX_ITER = 30


class InfeasibleError(RuntimeError):
    """The detection requirement cannot be met from the given starting point."""


@dataclass
class IsacProblem:
    """Everything that defines one joint design instance."""

    channels: ChannelSet
    region: SensingRegion = field(default_factory=SensingRegion)
    spec: DetectionSpec = field(default_factory=DetectionSpec)
    rule: QuadratureRule = field(default_factory=lambda: QuadratureRule(40))
    p_tx: float = 1000.0
    sigma_comm_sq: float = 1e-8
    sigma_sense_sq: float = 1e-9
    eps1: float = 2e-4
    eps2: float = 2e-3
    eps3: float = 2e-3
    alg2_max_iter: int = ALG2_MAX_ITER
    alg3_max_iter: int = ALG3_MAX_ITER
    randomizations: int = 20
    sense_enabled: bool = True

    @cached_property
    def grid(self) -> EchoGrid:
        return EchoGrid(self.channels, self.region, self.rule)

    @property
    def prefactor(self) -> float:
        return self.grid.prefactor(self.spec)

    @property
    def G(self) -> float:
        """Required normalized echo integral (0 when sensing is disabled)."""
        if not self.sense_enabled:
            return 0.0
        return sensing_threshold_G(self.region, self.spec, self.sigma_sense_sq,
                                   self.channels.arrays.wavelength)

    @property
    def echo_threshold(self) -> float:
        return echo_threshold(self.spec, self.sigma_sense_sq)

    def with_(self, **kw) -> "IsacProblem":
        return replace(self, **kw)

    # metrics -----------------------------------------------------------
    def snr(self, w_c, w_s, omega) -> float:
        return snr_ue(w_c, w_s, omega, self.channels, self.sigma_comm_sq)

    def normalized_echo(self, omega, w_c, w_s, w_rx) -> float:
        return self.grid.normalized_echo(omega, w_c, w_s, w_rx)

    def echo_power(self, omega, w_c, w_s, w_rx) -> float:
        return self.prefactor * self.normalized_echo(omega, w_c, w_s, w_rx)

    def detection(self, p_rx) -> float:
        return float(detection_probability(p_rx, self.spec, self.sigma_sense_sq))


@dataclass
class BeamformingSolution:
    w_c: np.ndarray
    w_s: np.ndarray
    w_rx: np.ndarray
    omega: np.ndarray
    snr: float = np.nan
    echo_power: float = np.nan
    detection_probability: float = np.nan
    trace: list = field(default_factory=list)
    inner_traces: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def snr_db(self) -> float:
        return 10 * np.log10(self.snr)

    @property
    def echo_power_dbm(self) -> float:
        return 10 * np.log10(self.echo_power) if self.echo_power > 0 else -np.inf


def evaluate(problem: IsacProblem, w_c, w_s, w_rx, omega, **extra) -> BeamformingSolution:
    p = problem.echo_power(omega, w_c, w_s, w_rx)
    return BeamformingSolution(w_c, w_s, w_rx, omega, problem.snr(w_c, w_s, omega), p,
                               problem.detection(p), **extra)


# --------------------------------------------------------------------------
# Beamformers (bisection + SDR)
# --------------------------------------------------------------------------

@dataclass
class BisectionState:
    t_min: float
    t_max: float
    epsilon1: float
    best: tuple | None = None
    history: list = field(default_factory=list)


def solve_p5_feasibility(t, quadratics, M_r, p_tx, G, sigma_comm_sq):
    """Check whether SNR level ``t`` is reachable with echo integral ``>= G``.

    Solves ``max tr(M_r (W_c + W_s))`` over the SNR and power constraints
    with ``W_c, W_s`` PSD.  Returns ``(feasible, (w_c, w_s), slack)`` where
    ``slack`` is the optimal echo integral relative to ``G`` minus one.
    Rank-one beamformers are extracted by purification (the relaxation is
    tight) with an eigenvector fallback that is re-verified.
    """
    M = M_r.shape[0]
    Xi_hat = p_tx * quadratics.Xi / sigma_comm_sq
    scale_obj = G if G > 0 else max(np.real(np.trace(M_r)) * p_tx, 1e-300)
    M_hat = p_tx * M_r / scale_obj
    prob = SdpProblem({"Wc": M, "Ws": M}, sense="maximize")
    prob.objective = {"Wc": M_hat, "Ws": M_hat}
    prob.add_constraint({"Wc": Xi_hat, "Ws": -t * Xi_hat}, ">=", t, "snr")
    prob.add_constraint({"Wc": np.eye(M), "Ws": np.eye(M)}, "<=", 1.0, "power")
    sol = solve_sdp(prob)
    if sol.status == "infeasible":
        return False, None, -np.inf
    if sol.status != "optimal":
        # an uncertified level is reported as infeasible; the bisection stays conservative
        return False, None, np.nan
    value = sol.objective_value
    feasible = G <= 0 or value >= 1.0 - 1e-9
    if not feasible:
        return False, None, value - 1.0
    Wc, Ws = reduce_rank([sol["Wc"], sol["Ws"]], [
        [Xi_hat, -t * Xi_hat], [np.eye(M), np.eye(M)], [M_hat, M_hat]])
    # leading eigenvectors; exact when purification reached rank one, and the
    # caller re-verifies the constraints otherwise
    w = tuple(np.zeros(M, complex) if np.real(np.trace(W)) <= 1e-12
              else np.sqrt(p_tx) * rank_one_recovery(W, None) for W in (Wc, Ws))
    return True, w, value - 1.0


def _mrt(g, p_tx):
    return np.sqrt(p_tx) * g / np.linalg.norm(g)


def optimize_beamformers(problem: IsacProblem, omega, w_rx, init=None, t_start=None,
                         eps1=None, G=None):
    """Bisection over the SNR level for the best feasible beamformer pair.

    ``init`` is a feasible pair used when no level above ``t_start`` can be
    certified; the returned pair never has lower SNR than ``init``.
    Returns ``(w_c, w_s, BisectionState)``.
    """
    eps1 = problem.eps1 if eps1 is None else eps1
    G = problem.G if G is None else G
    ch = problem.channels
    q = build_comm_quadratics(np.zeros(ch.M), np.zeros(ch.M), omega, ch)
    g = effective_channel(omega, ch)
    t_max = problem.p_tx * np.real(np.vdot(g, g)) / problem.sigma_comm_sq
    if G <= 0:
        w_c, w_s = _mrt(g, problem.p_tx), np.zeros(ch.M, complex)
        return w_c, w_s, BisectionState(t_max, t_max, eps1, (w_c, w_s))
    M_r = problem.grid.matrix_Mr(omega, w_rx)
    G_eff = G * (1 + G_MARGIN)
    if init is not None:
        t_lo = problem.snr(init[0], init[1], omega) if t_start is None else t_start
    else:
        t_lo = 0.0 if t_start is None else t_start
    state = BisectionState(t_lo, t_max, eps1, tuple(init) if init is not None else None)

    def accept(t, w):
        # keep only pairs that truly satisfy the constraints after extraction
        w_c, w_s = w
        if np.vdot(w_c, w_c).real + np.vdot(w_s, w_s).real > problem.p_tx * (1 + 1e-9):
            s = np.sqrt(problem.p_tx / (np.vdot(w_c, w_c).real + np.vdot(w_s, w_s).real))
            w_c, w_s = w_c * s, w_s * s
        echo = np.real(np.vdot(w_c, M_r @ w_c) + np.vdot(w_s, M_r @ w_s))
        if echo < G * (1 - 1e-12) or problem.snr(w_c, w_s, omega) < t * (1 - 1e-6):
            return None
        return w_c, w_s

    if init is None:
        ok, w, _ = solve_p5_feasibility(t_lo, q, M_r, problem.p_tx, G_eff, problem.sigma_comm_sq)
        w = accept(t_lo, w) if ok else None
        if w is None:
            raise InfeasibleError("detection constraint cannot be met with these phases and "
                                  "combiner; run the feasibility check and start from its solution")
        state.best = w
    while state.t_max - state.t_min > eps1:
        t = 0.5 * (state.t_min + state.t_max)
        ok, w, slack = solve_p5_feasibility(t, q, M_r, problem.p_tx, G_eff, problem.sigma_comm_sq)
        w = accept(t, w) if ok else None
        state.history.append((t, w is not None, slack))
        if w is not None:
            state.t_min, state.best = t, w
        else:
            state.t_max = t
    w_c, w_s = state.best
    if init is not None and problem.snr(w_c, w_s, omega) < problem.snr(init[0], init[1], omega):
        w_c, w_s = init
    return w_c, w_s, state


def optimize_receive_combiner(M_cs) -> np.ndarray:
    lam, V = hermitian_eig(M_cs)
    if lam[0] <= 0:
        raise ValueError("combiner-side echo matrix is zero; there is no echo to combine")
    w = V[:, 0]
    k = np.argmax(np.abs(w))
    return w * np.exp(-1j * np.angle(w[k]))


# --------------------------------------------------------------------------
# RIS phases (Charnes-Cooper + SCA)
# --------------------------------------------------------------------------

@dataclass
class CharnesCooperState:
    """One SCA iterate in noise-scaled variables (``X = sigma^2 mu Q``)."""

    X: np.ndarray
    mu: float
    k: int
    objective: float


def _p12_problem(quadratics, upsilon_k, G, sigma_comm_sq, n):
    # scaled variables: X = sigma^2 * (mu Q), mu = sigma^2 * mu
    prob = SdpProblem({"X": n}, ["mu"], sense="maximize")
    prob.objective = {"X": quadratics.Z_c / sigma_comm_sq}
    for l in range(n):
        E = np.zeros((n, n))
        E[l, l] = 1.0
        prob.add_constraint({"X": E, "mu": -1.0}, "==", 0.0, f"diag{l}")
    prob.add_constraint({"X": quadratics.Z_s / sigma_comm_sq, "mu": 1.0}, "==", 1.0, "denominator")
    if upsilon_k is not None and G > 0:
        prob.add_constraint({"X": upsilon_k, "mu": -np.sqrt(G)}, ">=", 0.0, "echo")
    return prob


def solve_p12(quadratics, ops, upsilon_k, G, sigma_comm_sq):
    """One Charnes-Cooper SDR step.  Returns ``(X, mu, objective)`` or ``None``.

    ``X`` and ``mu`` are the noise-scaled variables; ``objective`` equals the
    relaxed SNR.  ``None`` signals an infeasible or failed solve.
    """
    n = quadratics.Z_c.shape[0]
    prob = _p12_problem(quadratics, upsilon_k, G, sigma_comm_sq, n)
    sol = solve_sdp(prob)
    if sol.status != "optimal":
        return None
    return sol["X"], sol["mu"], sol.objective_value


def _project_phases(X) -> np.ndarray:
    n = X.shape[0]
    q = rank_one_recovery(X, n - 1)
    r = q[:-1] / q[-1] if abs(q[-1]) > 1e-300 else q[:-1]
    return np.exp(1j * np.angle(r))


def _phase_repair(ops, omega_from, omega_to, G, iters=30):
    """Walk the phases from a feasible point towards a better one.

    Returns the furthest point along the phase path that satisfies the echo
    constraint (``omega_from`` itself when nothing else does).
    """
    d = np.angle(omega_to / omega_from)
    lo, hi = 0.0, 1.0
    if quartic_value(ops, lift(omega_from * np.exp(1j * d))) >= G:
        return omega_to
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if quartic_value(ops, lift(omega_from * np.exp(1j * mid * d))) >= G:
            lo = mid
        else:
            hi = mid
    return omega_from * np.exp(1j * lo * d)


def optimize_phases_sca(problem: IsacProblem, omega_init, w_c, w_s, w_rx, eps2=None,
                        max_iter=None, G=None, ops=None, seed=0):
    """Successive convex approximation over the RIS phases.

    Returns ``(omega, trace)`` where ``trace`` is the sequence of relaxed SNR
    objectives (non-decreasing).  The returned phases satisfy the echo
    constraint and have SNR at least that of ``omega_init``.
    """
    eps2 = problem.eps2 if eps2 is None else eps2
    max_iter = problem.alg2_max_iter if max_iter is None else max_iter
    G = problem.G if G is None else G
    G_eff = G * (1 + G_MARGIN)
    ch, sig = problem.channels, problem.sigma_comm_sq
    quad = build_comm_quadratics(w_c, w_s, omega_init, ch)
    if G > 0 and ops is None:
        ops = build_sensing_operators(w_c, w_s, w_rx, problem.grid)
    n = ch.N + 1

    q0 = lift(omega_init)
    mu0 = sig / (np.real(q0.conj() @ quad.Z_s @ q0) + sig)
    X = mu0 * np.outer(q0, q0.conj())
    if G > 0 and quartic_value(ops, q0) < G * (1 - 1e-9):
        raise InfeasibleError("initial RIS phases violate the detection constraint")
    state = CharnesCooperState(X, mu0, 0, float(np.real(np.trace(quad.Z_c @ X))) / sig)
    iterates = [state]
    for k in range(1, max_iter + 1):
        U = upsilon(ops, state.X) if G > 0 else None
        res = solve_p12(quad, ops, U, G_eff, sig)
        if res is None:
            break
        X_new, mu_new, obj_new = res
        if obj_new <= state.objective:
            break  # no ascent; keep the current iterate
        gap = obj_new - state.objective
        state = CharnesCooperState(X_new, mu_new, k, obj_new)
        iterates.append(state)
        if gap <= eps2:
            break
    trace = [it.objective for it in iterates]
    X = state.X

    # candidate phases: projections of every iterate, randomizations of the last
    cands = [_project_phases(it.X) for it in iterates[1:]]
    rng = np.random.default_rng(seed)
    if problem.randomizations and len(iterates) > 1:
        lam, V = hermitian_eig(X)
        L = V * np.sqrt(np.clip(lam, 0, None))
        for _ in range(problem.randomizations):
            xi = L @ ((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2))
            cands.append(np.exp(1j * np.angle(xi[:-1] / xi[-1])))
    best = omega_init
    best_snr = problem.snr(w_c, w_s, omega_init)
    for om in cands:
        s = problem.snr(w_c, w_s, om)
        if s <= best_snr:
            continue
        if G > 0 and quartic_value(ops, lift(om)) < G_eff:
            om = _phase_repair(ops, best, om, G_eff)
            s = problem.snr(w_c, w_s, om)
            if s <= best_snr:
                continue
        best, best_snr = om, s
    return best, trace


# --------------------------------------------------------------------------
# Outer alternation
# --------------------------------------------------------------------------

def alternating_optimization(problem: IsacProblem, init: BeamformingSolution,
                             polish: bool = True) -> BeamformingSolution:
    """Alternate beamformers, combiner and phases until the SNR settles.

    ``init`` must satisfy the detection requirement (for instance the
    solution of the maximum-detection problem).  The returned solution
    carries the outer SNR trace in ``trace`` and the inner relaxed-objective
    traces of each phase update in ``inner_traces``.
    """
    G = problem.G
    w_c, w_s, w_rx, omega = init.w_c, init.w_s, init.w_rx, init.omega
    w_rx = w_rx / np.linalg.norm(w_rx)
    if G > 0 and problem.normalized_echo(omega, w_c, w_s, w_rx) < G * (1 - 1e-9):
        raise InfeasibleError("initial point violates the detection requirement; "
                              "check feasibility first and start from its solution")
    snr = problem.snr(w_c, w_s, omega)
    trace, inner = [snr], []
    for it in range(problem.alg3_max_iter):
        w_c, w_s, _ = optimize_beamformers(problem, omega, w_rx, init=(w_c, w_s))
        if G > 0:
            M_cs = problem.grid.matrix_Mcs_normalized(omega, w_c, w_s)
            w_new = optimize_receive_combiner(M_cs)
            if np.real(np.vdot(w_new, M_cs @ w_new)) >= np.real(np.vdot(w_rx, M_cs @ w_rx)):
                w_rx = w_new
            omega, tr = optimize_phases_sca(problem, omega, w_c, w_s, w_rx)
            inner.append(tr)
        else:
            omega, tr = _no_sensing_phases(problem, omega, w_c, w_s)
            inner.append(tr)
        new = problem.snr(w_c, w_s, omega)
        trace.append(new)
        if new - snr <= problem.eps3:
            snr = new
            break
        snr = new
    if polish and G > 0:
        # final beamformer pass with a tight bracket leaves the echo constraint active
        w_c, w_s, _ = optimize_beamformers(problem, omega, w_rx, init=(w_c, w_s),
                                           eps1=min(problem.eps1, 1e-7 * max(snr, 1.0)))
        new = problem.snr(w_c, w_s, omega)
        if new > trace[-1]:
            trace.append(new)
    return evaluate(problem, w_c, w_s, w_rx, omega, trace=trace, inner_traces=inner,
                    info={"outer_iterations": len(trace) - 1})


def _no_sensing_phases(problem, omega, w_c, w_s):
    # with the echo constraint removed the SCA reduces to one Charnes-Cooper SDR
    return optimize_phases_sca(problem, omega, w_c, w_s, None, G=0.0)

"""Maximum detection probability, feasibility gate, power and resolution limits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformingSolution, IsacProblem, evaluate, optimize_receive_combiner
from .linalg import SdpProblem, hermitian_eig, solve_sdp
from .operators import build_sensing_operators, lift, quartic_value, upsilon
from .sensing import QuadratureRule, SensingRegion, inv_q_function, surface_integral

P13_MAX_ITER = 30


@dataclass
class FeasibilityReport:
    U: float
    solution: BeamformingSolution
    feasible: bool
    max_echo_power: float
    trace: list = field(default_factory=list)


def _echo_beamformer(M_r, p_tx):
    # max tr(M_r (W_c + W_s)) under the power budget: all power on the top eigenvector
    lam, V = hermitian_eig(M_r)
    return np.sqrt(p_tx) * V[:, 0], np.zeros(M_r.shape[0], complex)


def _ascent_phases(ops, omega, sweeps=50, rtol=1e-10):
    """Monotone fixed-point ascent of the echo quartic on the unit circle.

    Each sweep maximizes the linear minorizer ``q^H Upsilon q`` (shifted to be
    PSD) by a phase-alignment step, which cannot decrease the quartic.
    """
    f = quartic_value(ops, lift(omega))
    for _ in range(sweeps):
        q = lift(omega)
        U = upsilon(ops, np.outer(q, q.conj()))
        shift = max(0.0, -np.linalg.eigvalsh(U)[0])
        y = (U + shift * np.eye(U.shape[0])) @ q
        cand = np.exp(1j * np.angle(y[:-1]))
        f_new = quartic_value(ops, lift(cand))
        if f_new <= f * (1 + rtol):
            break
        omega, f = cand, f_new
    return omega, f


def _p16_step(ops, omega, randomizations=20, seed=0):
    """One SDR step of ``max tr(Upsilon_k Q)`` s.t. ``diag(Q) = 1``, then projection."""
    n = ops.n
    q = lift(omega)
    U = upsilon(ops, np.outer(q, q.conj()))
    prob = SdpProblem({"Q": n}, sense="maximize")
    prob.objective = {"Q": U / max(np.abs(U).max(), 1e-300)}
    for l in range(n):
        E = np.zeros((n, n))
        E[l, l] = 1.0
        prob.add_constraint({"Q": E}, "==", 1.0, f"diag{l}")
    sol = solve_sdp(prob)
    if sol.status != "optimal":
        return omega
    Q = sol["Q"]
    lam, V = hermitian_eig(Q)
    cands = [np.exp(1j * np.angle(V[:-1, 0] / V[-1, 0])) if abs(V[-1, 0]) > 1e-12
             else np.exp(1j * np.angle(V[:-1, 0]))]
    rng = np.random.default_rng(seed)
    L = V * np.sqrt(np.clip(lam, 0, None))
    for _ in range(randomizations):
        xi = L @ ((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2))
        cands.append(np.exp(1j * np.angle(xi[:-1] / xi[-1])))
    vals = [quartic_value(ops, lift(c)) for c in cands]
    return cands[int(np.argmax(vals))]


def _initial_phases(problem: IsacProblem):
    """Phases that steer the BS->RIS LoS wave towards the sensing direction."""
    ch, reg = problem.channels, problem.region
    a_S = ch.steering_ris(reg.theta_S, reg.phi_S)
    a_R = ch.steering_ris(*ch.psi_R)
    return np.exp(1j * np.angle(a_S * a_R.conj()))


def max_detection_probability(problem: IsacProblem, omega_init=None, eps=None,
                              max_iter: int = P13_MAX_ITER, use_sdr: bool = True) -> FeasibilityReport:
    """Alternating maximization of the echo power over all design variables.

    Blocks: transmit beamformer (closed form, full power on the principal
    eigenvector of the beamformer-side echo matrix), combiner (principal
    eigenvector) and RIS phases (SDR of the linear minorizer followed by a
    monotone phase-alignment ascent).  Each block is accepted only if it does
    not reduce the echo, so the echo trace is non-decreasing.
    """
    eps = problem.eps3 if eps is None else eps
    ch, grid = problem.channels, problem.grid
    omega = _initial_phases(problem) if omega_init is None else np.asarray(omega_init, complex)
    M = ch.M
    w_rx = np.ones(M, complex) / np.sqrt(M)
    # start the combiner from the echo-maximizing beam for the initial phases
    w_c, w_s = _echo_beamformer(grid.matrix_Mr(omega, w_rx), problem.p_tx)
    w_rx = optimize_receive_combiner(grid.matrix_Mcs_normalized(omega, w_c, w_s))
    f = problem.normalized_echo(omega, w_c, w_s, w_rx)
    trace = [f]
    for it in range(max_iter):
        f_old = f
        # beamformers
        wc_new, ws_new = _echo_beamformer(grid.matrix_Mr(omega, w_rx), problem.p_tx)
        f_new = problem.normalized_echo(omega, wc_new, ws_new, w_rx)
        if f_new >= f:
            w_c, w_s, f = wc_new, ws_new, f_new
        # combiner
        wrx_new = optimize_receive_combiner(grid.matrix_Mcs_normalized(omega, w_c, w_s))
        f_new = problem.normalized_echo(omega, w_c, w_s, wrx_new)
        if f_new >= f:
            w_rx, f = wrx_new, f_new
        # phases
        ops = build_sensing_operators(w_c, w_s, w_rx, grid)
        cand = _p16_step(ops, omega, problem.randomizations) if use_sdr else omega
        if quartic_value(ops, lift(cand)) < f:
            cand = omega
        cand, f_new = _ascent_phases(ops, cand)
        if f_new >= f:
            omega, f = cand, f_new
        trace.append(f)
        if f - f_old <= eps * max(f_old, 1e-300):
            break
    sol = evaluate(problem, w_c, w_s, w_rx, omega)
    U = sol.detection_probability
    feasible = U >= problem.spec.gamma - 1e-9
    return FeasibilityReport(U, sol, feasible, sol.echo_power, [problem.prefactor * x for x in trace])


def check_feasibility(problem: IsacProblem, **kw) -> bool:
    return max_detection_probability(problem, **kw).feasible


def minimum_transmit_power(problem: IsacProblem, gamma=None, bracket=(1e-3, 1e9),
                           tol_db: float = 0.05, report: FeasibilityReport | None = None):
    """Smallest transmit power (mW) whose maximum detection probability reaches ``gamma``.

    The echo-maximizing design has all power on one beam, so for fixed
    phases and combiner the maximum echo scales linearly with the power.
    The design at the top of the bracket is therefore reused and the
    bisection runs over the scalar map ``P -> Pd(P * echo_per_mW)``.
    """
    gamma = problem.spec.gamma if gamma is None else gamma
    lo, hi = bracket
    if report is None:
        report = max_detection_probability(problem.with_(p_tx=hi))
    per_mw = report.max_echo_power / problem.with_(p_tx=hi).p_tx
    U_hi = problem.detection(per_mw * hi)
    if U_hi < gamma:
        raise ValueError(f"top of the power bracket ({10*np.log10(hi):.1f} dBm) is infeasible: U={U_hi:.4g}")
    if problem.detection(per_mw * lo) >= gamma:
        return lo
    while 10 * np.log10(hi / lo) > tol_db:
        mid = np.sqrt(lo * hi)
        if problem.detection(per_mw * mid) >= gamma:
            hi = mid
        else:
            lo = mid
    return hi


def scattering_area(region: SensingRegion) -> float:
    return (2 * region.r_max ** 2 * region.delta_phi * np.sin(region.theta_S)
            * np.sin(region.delta_theta / 2))


def scattering_area_quadrature(region: SensingRegion, rule=QuadratureRule()) -> float:
    return float(region.r_max ** 2 * surface_integral(lambda t, p: np.sin(t), region, rule))


@dataclass
class UdrResult:
    delta_star: float
    area_m2: float
    gamma: float
    U_at_delta: float
    t0_required: float | None = None
    history: list = field(default_factory=list)


def _U_at(problem: IsacProblem, delta: float) -> float:
    return max_detection_probability(problem.with_(region=problem.region.with_spread(delta))).U


def udr_search(problem: IsacProblem, gamma=None, tol: float = 1e-3,
               delta_max: float | None = None, delta_min: float = 1e-3, max_iter: int = 60) -> UdrResult:
    """Smallest tied spread ``delta`` whose maximum detection probability is ``gamma``.

    Bisection over ``delta -> U(delta)``; a three-point probe checks the
    monotone premise first.
    """
    gamma = problem.spec.gamma if gamma is None else gamma
    hi = problem.region.delta_theta if delta_max is None else delta_max
    lo = delta_min
    U_hi = _U_at(problem, hi)
    if U_hi < gamma:
        raise ValueError(f"target undetectable at any admissible size (U={U_hi:.4g} at delta={hi:.4g})")
    U_lo, U_mid = _U_at(problem, lo), _U_at(problem, 0.5 * (lo + hi))
    if not (U_lo <= U_mid + 1e-9 and U_mid <= U_hi + 1e-9):
        raise RuntimeError(f"detection probability not monotone in delta: {U_lo:.4g}, {U_mid:.4g}, {U_hi:.4g}")
    if U_lo >= gamma:
        return UdrResult(lo, scattering_area(problem.region.with_spread(lo)), gamma, U_lo)
    history = [(lo, U_lo), (hi, U_hi)]
    U = U_hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        U = _U_at(problem, mid)
        history.append((mid, U))
        if abs(U - gamma) <= tol:
            hi = mid
            break
        if U >= gamma:
            hi = mid
        else:
            lo = mid
    else:
        U = _U_at(problem, hi)
    return UdrResult(hi, scattering_area(problem.region.with_spread(hi)), gamma, U, history=history)


def required_T0(problem: IsacProblem, gamma=None, report: FeasibilityReport | None = None) -> float:
    """Sensing time needed to reach ``gamma`` at the maximum echo power.

    The false-alarm quantile is held at its configured value.
    """
    gamma = problem.spec.gamma if gamma is None else gamma
    if report is None:
        report = max_detection_probability(problem)
    p = report.max_echo_power
    if not p > 0:
        raise ValueError("maximum echo power is zero; no sensing time suffices")
    qf = problem.spec.pf_quantile(problem.sigma_sense_sq)
    qg = float(inv_q_function(gamma))
    return problem.sigma_sense_sq / (problem.spec.fs * p) * max(qf - qg, 0.0) ** 2

"""Communication SNR, reflected radiation, echo power and detection metrics.

All powers are in mW.  The echo model integrates the RIS-reflected
radiation over a finite target patch of angular extent ``delta_theta`` by
``delta_phi`` at range ``r_max`` using a 2-D trapezoid rule; every matrix
derived from that integral uses the same nodes, so the trace identities
between them hold to rounding error rather than quadrature error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr, ndtri

from .channel import ChannelSet, cell_gain


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)``."""
    return ndtr(-np.asarray(x, float))[()]


def inv_q_function(p):
    p = np.asarray(p, float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("inverse Q-function needs probabilities strictly inside (0, 1)")
    return (-ndtri(p))[()]


@dataclass(frozen=True)
class SensingRegion:
    """Target patch centred on ``(theta_S, phi_S)`` as seen from the RIS."""

    theta_S: float = 0.38 * np.pi
    phi_S: float = 0.44 * np.pi
    r_max: float = 8.0
    delta_theta: float = np.pi / 16
    delta_phi: float = np.pi / 16
    theta_bounds: tuple | None = None
    phi_bounds: tuple | None = None

    def __post_init__(self):
        if not (self.delta_theta > 0 and self.delta_phi > 0):
            raise ValueError("angular spreads must be positive")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        lo, hi = self.theta_range
        if not (0 < lo and hi < np.pi):
            raise ValueError("theta_S +- delta_theta/2 must stay inside (0, pi)")
        if self.theta_bounds is not None and not (
                self.theta_bounds[0] <= self.theta_S <= self.theta_bounds[1]):
            raise ValueError("theta_S outside the admissible scan region")
        if self.phi_bounds is not None and not (
                self.phi_bounds[0] <= self.phi_S <= self.phi_bounds[1]):
            raise ValueError("phi_S outside the admissible scan region")

    @property
    def theta_range(self):
        return self.theta_S - self.delta_theta / 2, self.theta_S + self.delta_theta / 2

    @property
    def phi_range(self):
        return self.phi_S - self.delta_phi / 2, self.phi_S + self.delta_phi / 2

    def with_spread(self, delta: float) -> "SensingRegion":
        return _replace(self, delta_theta=delta, delta_phi=delta)

    def with_range(self, r_max: float) -> "SensingRegion":
        return _replace(self, r_max=r_max)


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


@dataclass(frozen=True)
class DetectionSpec:
    """Neyman-Pearson detector settings.

    ``eta`` is an amplitude threshold in sqrt(mW).  The false-alarm rate is
    derived from it unless ``pf_override`` is given.
    """

    T0: float = 0.1
    fs: float = 1e3
    eta: float = 10 ** -4.5
    gamma: float = 0.9
    mean_scatter_loss: float = 0.1
    pf_override: float | None = None

    def __post_init__(self):
        if not (self.T0 > 0 and self.fs > 0):
            raise ValueError("T0 and fs must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if not self.mean_scatter_loss > 0:
            raise ValueError("mean scatter loss must be positive")
        if self.pf_override is not None and not 0 < self.pf_override < 1:
            raise ValueError("false-alarm override must lie in (0, 1)")

    def pf_quantile(self, sigma_sense_sq: float) -> float:
        """``Q^{-1}(P_f)``, computed without a round trip through ``P_f``."""
        if self.pf_override is not None:
            return float(inv_q_function(self.pf_override))
        return self.eta * np.sqrt(self.T0 * self.fs / sigma_sense_sq)

    def false_alarm(self, sigma_sense_sq: float) -> float:
        return float(q_function(self.pf_quantile(sigma_sense_sq)))

    def with_gamma(self, gamma: float) -> "DetectionSpec":
        return _replace(self, gamma=gamma)


@dataclass(frozen=True)
class QuadratureRule:
    divisions: int = 100

    def __post_init__(self):
        if self.divisions < 2:
            raise ValueError("quadrature needs at least 2 divisions per axis")

    def nodes(self, lo: float, hi: float):
        x = np.linspace(lo, hi, self.divisions + 1)
        w = np.full(x.size, (hi - lo) / self.divisions)
        w[[0, -1]] *= 0.5
        return x, w


def quadrature_nodes(region: SensingRegion, rule: QuadratureRule):
    """Flattened tensor-product trapezoid nodes ``(theta, phi, weight)``."""
    th, wt = rule.nodes(*region.theta_range)
    ph, wp = rule.nodes(*region.phi_range)
    T, P = np.meshgrid(th, ph, indexing="ij")
    W = np.outer(wt, wp)
    return T.ravel(), P.ravel(), W.ravel()


def surface_integral(integrand, region: SensingRegion, rule: QuadratureRule = QuadratureRule()):
    """Trapezoid approximation of ``int int integrand(theta, phi) dtheta dphi``.

    ``integrand`` is called once with 1-D arrays of node coordinates and must
    return an array whose leading axis runs over the nodes (scalar, vector
    or matrix values per node are all fine).
    """
    T, P, W = quadrature_nodes(region, rule)
    vals = np.asarray(integrand(T, P))
    if vals.ndim == 0:
        vals = np.full(T.shape, vals)
    return np.tensordot(W, vals, axes=(0, 0))


# --------------------------------------------------------------------------
# communication side
# --------------------------------------------------------------------------

def effective_channel(omega, channels: ChannelSet) -> np.ndarray:
    """``g`` such that the UE receives ``g^H w``."""
    gh = channels.comm_cell_gain * (channels.h_RU.conj() * omega) @ channels.H_BR + channels.h_BU.conj()
    return gh.conj()


def snr_ue(w_c, w_s, omega, channels: ChannelSet, sigma_comm_sq: float) -> float:
    g = effective_channel(omega, channels)
    return float(abs(np.vdot(g, w_c)) ** 2 / (abs(np.vdot(g, w_s)) ** 2 + sigma_comm_sq))


def radiation_pattern(omega, w_c, w_s, direction, channels: ChannelSet) -> float:
    """Power reflected by the RIS towards ``direction`` (normalized units)."""
    theta, phi = direction
    a = channels.steering_ris(theta, phi)
    cg = float(cell_gain(channels.psi_R, (theta, phi), channels.unit_cell_model))
    x = a.conj() * omega
    p = sum(abs(x @ (channels.H_BR @ w)) ** 2 for w in (w_c, w_s))
    return float(cg ** 2 * p)


# --------------------------------------------------------------------------
# echo side
# --------------------------------------------------------------------------

class EchoGrid:
    """Quadrature nodes over a target patch with per-node constants cached.

    ``weights`` folds trapezoid weights, ``sin(theta)`` and the two-way
    unit-cell factor ``|g_uc|^4``, so that the integral of any
    ``fwd * bwd`` product is ``weights @ (fwd * bwd)``.
    """

    def __init__(self, channels: ChannelSet, region: SensingRegion,
                 rule: QuadratureRule = QuadratureRule()):
        self.channels, self.region, self.rule = channels, region, rule
        T, P, W = quadrature_nodes(region, rule)
        lam = channels.arrays.wavelength
        cg = cell_gain(channels.psi_R, (T, P), channels.unit_cell_model)
        self.theta, self.phi = T, P
        self.weights = W * np.sin(T) * cg ** 4 * (lam ** 2 / (4 * np.pi)) ** 2
        self.steering = channels.steering_ris(T, P)  # (nodes, N)

    @classmethod
    def point(cls, channels: ChannelSet, region: SensingRegion) -> "EchoGrid":
        """Single node at the patch centre: the integrand without the integral."""
        g = cls.__new__(cls)
        g.channels, g.region, g.rule = channels, region, None
        T, P = np.array([region.theta_S]), np.array([region.phi_S])
        lam = channels.arrays.wavelength
        cg = cell_gain(channels.psi_R, (T, P), channels.unit_cell_model)
        g.theta, g.phi = T, P
        g.weights = np.sin(T) * cg ** 4 * (lam ** 2 / (4 * np.pi)) ** 2
        g.steering = channels.steering_ris(T, P)
        return g

    @cached_property
    def conj_steering(self):
        return self.steering.conj()

    def prefactor(self, spec: DetectionSpec) -> float:
        lam = self.channels.arrays.wavelength
        return spec.mean_scatter_loss / (4 * np.pi * self.region.r_max ** 2 * lam ** 2)

    def forward_fields(self, omega, w) -> np.ndarray:
        """``a^H diag(omega) H w`` at every node."""
        return self.conj_steering @ (omega * (self.channels.H_BR @ w))

    def backward_fields(self, omega, w_rx) -> np.ndarray:
        """``a^H diag(omega^*) H w_rx`` at every node."""
        return self.conj_steering @ (omega.conj() * (self.channels.H_BR @ w_rx))

    def forward_power(self, omega, w_c, w_s):
        return abs(self.forward_fields(omega, w_c)) ** 2 + abs(self.forward_fields(omega, w_s)) ** 2

    def backward_power(self, omega, w_rx):
        return abs(self.backward_fields(omega, w_rx)) ** 2

    def normalized_echo(self, omega, w_c, w_s, w_rx) -> float:
        """Echo power divided by the scalar prefactor."""
        return float(self.weights @ (self.forward_power(omega, w_c, w_s) * self.backward_power(omega, w_rx)))

    def echo_power(self, omega, w_c, w_s, w_rx, spec: DetectionSpec) -> float:
        return self.prefactor(spec) * self.normalized_echo(omega, w_c, w_s, w_rx)

    def matrix_Mr(self, omega, w_rx) -> np.ndarray:
        # u = H^H diag(omega^*) a at every node, stacked as rows of U
        U = (self.steering * omega.conj()) @ self.channels.H_BR.conj()
        c = self.weights * self.backward_power(omega, w_rx)
        M = (U.T * c) @ U.conj()
        return 0.5 * (M + M.conj().T)

    def matrix_Mcs_normalized(self, omega, w_c, w_s) -> np.ndarray:
        # p = H^H diag(omega) a at every node
        Pm = (self.steering * omega) @ self.channels.H_BR.conj()
        c = self.weights * self.forward_power(omega, w_c, w_s)
        M = (Pm.T * c) @ Pm.conj()
        return 0.5 * (M + M.conj().T)

    def matrix_Mcs(self, omega, w_c, w_s, spec: DetectionSpec) -> np.ndarray:
        return self.prefactor(spec) * self.matrix_Mcs_normalized(omega, w_c, w_s)


def echo_power(omega, w_c, w_s, w_rx, region, spec, channels, rule=QuadratureRule()) -> float:
    return EchoGrid(channels, region, rule).echo_power(omega, w_c, w_s, w_rx, spec)


def matrix_Mr(omega, w_rx, region, channels, rule=QuadratureRule()) -> np.ndarray:
    """Beamformer-side echo matrix: ``prefactor * tr(M_r (W_c + W_s))`` is the echo power."""
    return EchoGrid(channels, region, rule).matrix_Mr(omega, w_rx)


def matrix_Mcs(omega, w_c, w_s, region, spec, channels, rule=QuadratureRule()) -> np.ndarray:
    """Combiner-side echo matrix: ``w_rx^H M_cs w_rx`` is the echo power."""
    return EchoGrid(channels, region, rule).matrix_Mcs(omega, w_c, w_s, spec)


# --------------------------------------------------------------------------
# detection
# --------------------------------------------------------------------------

def detection_probability(p_rx, spec: DetectionSpec, sigma_sense_sq: float):
    p_rx = np.asarray(p_rx, float)
    if np.any(p_rx < 0):
        raise ValueError("received power must be nonnegative")
    enr = np.sqrt(spec.T0 * spec.fs * p_rx / sigma_sense_sq)
    return q_function(spec.pf_quantile(sigma_sense_sq) - enr)


def echo_threshold(spec: DetectionSpec, sigma_sense_sq: float, gamma: float | None = None) -> float:
    """Smallest echo power (mW) whose detection probability reaches ``gamma``."""
    gamma = spec.gamma if gamma is None else gamma
    qf = spec.pf_quantile(sigma_sense_sq)
    qg = float(inv_q_function(gamma))
    if qg > qf:
        raise ValueError("gamma must not fall below the false-alarm probability")
    return sigma_sense_sq / (spec.T0 * spec.fs) * (qf - qg) ** 2


def sensing_threshold_G(region: SensingRegion, spec: DetectionSpec, sigma_sense_sq: float,
                        wavelength: float, gamma: float | None = None) -> float:
    """Threshold on the normalized echo integral (echo power / prefactor)."""
    pref = spec.mean_scatter_loss / (4 * np.pi * region.r_max ** 2 * wavelength ** 2)
    return echo_threshold(spec, sigma_sense_sq, gamma) / pref

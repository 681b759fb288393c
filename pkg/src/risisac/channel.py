"""Geometry, array steering vectors, path loss and Rician channel draws.

Angles follow one global frame: the elevation ``theta`` is measured from the
+z axis and the azimuth ``phi`` lives in the x-y plane, measured from +x.
The BS carries a uniform linear array (phase progression along ``sin(theta)
sin(phi)``) and the RIS a uniform planar array whose broadside is +z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
UNIT_CELL_MODELS = ("constant", "cosine")


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_mw(dbm):
    return db_to_linear(dbm)


def mw_to_dbm(mw):
    return linear_to_db(mw)


@dataclass(frozen=True)
class ArrayConfig:
    """BS antenna count ``M`` and RIS grid ``N_x`` by ``N_y``.

    ``spacing`` defaults to half a wavelength.
    """

    M: int = 8
    N_x: int = 4
    N_y: int = 4
    wavelength: float = SPEED_OF_LIGHT / 2.5e9
    spacing: float | None = None

    def __post_init__(self):
        if self.M < 1 or self.N_x < 1 or self.N_y < 1:
            raise ValueError("array sizes must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if not self.spacing > 0:
            raise ValueError("element spacing must be positive")

    @property
    def N(self) -> int:
        return self.N_x * self.N_y


def direction(src, dst):
    """Elevation/azimuth ``(theta, phi)`` of the ray from ``src`` to ``dst``."""
    v = np.asarray(dst, float) - np.asarray(src, float)
    r = np.linalg.norm(v)
    if r == 0:
        raise ValueError("coincident positions have no direction")
    theta = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
    phi = float(np.mod(np.arctan2(v[1], v[0]), 2 * np.pi))
    return theta, phi


@dataclass(frozen=True)
class Geometry:
    """Node positions in meters and every angle/distance derived from them."""

    bs: tuple = (0.0, 0.0, 18.0)
    ris: tuple = (2.0, 10.0, 12.0)
    ue: tuple = (-30.0, 80.0, 25.0)

    def __post_init__(self):
        for name in ("bs", "ris", "ue"):
            p = tuple(float(x) for x in getattr(self, name))
            if len(p) != 3 or not all(np.isfinite(p)):
                raise ValueError(f"{name} position must be a finite 3-vector")
            object.__setattr__(self, name, p)
        if min(self.d_BR, self.d_RU, self.d_BU) <= 0:
            raise ValueError("BS, RIS and UE positions must be distinct")

    @property
    def d_BR(self) -> float:
        return float(np.linalg.norm(np.subtract(self.ris, self.bs)))

    @property
    def d_RU(self) -> float:
        return float(np.linalg.norm(np.subtract(self.ue, self.ris)))

    @property
    def d_BU(self) -> float:
        return float(np.linalg.norm(np.subtract(self.ue, self.bs)))

    @property
    def bs_to_ris(self):
        """Departure direction at the BS towards the RIS."""
        return direction(self.bs, self.ris)

    @property
    def bs_to_ue(self):
        return direction(self.bs, self.ue)

    @property
    def ris_to_bs(self):
        """Arrival direction of the BS signal at the RIS."""
        return direction(self.ris, self.bs)

    @property
    def ris_to_ue(self):
        return direction(self.ris, self.ue)


@dataclass(frozen=True)
class ChannelParams:
    """Fading and noise parameters; noise powers are in mW."""

    kappa: float = 10.0
    zeta0: float = 1e-3
    alpha_BR: float = 2.2
    alpha_RU: float = 2.2
    alpha_BU: float = 3.5
    sigma_comm_sq: float = 1e-8
    sigma_sense_sq: float = 1e-9
    pure_los: bool = False

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if not self.zeta0 > 0:
            raise ValueError("zeta0 must be positive")
        if not (self.sigma_comm_sq > 0 and self.sigma_sense_sq > 0):
            raise ValueError("noise powers must be positive")


def ula_steering(M: int, d: float, wavelength: float, theta: float, phi: float) -> np.ndarray:
    m = np.arange(M)
    return np.exp(1j * 2 * np.pi * d / wavelength * m * np.sin(theta) * np.sin(phi))


def upa_steering(N_x: int, N_y: int, d: float, wavelength: float, theta: float, phi: float) -> np.ndarray:
    """Planar-array response, x-axis index major (``kron(a_x, a_y)``)."""
    k = 2 * np.pi * d / wavelength
    ax = np.exp(1j * k * np.arange(N_x) * np.sin(theta) * np.cos(phi))
    ay = np.exp(1j * k * np.arange(N_y) * np.sin(theta) * np.sin(phi))
    return np.kron(ax, ay)


def upa_steering_grid(N_x, N_y, d, wavelength, theta, phi) -> np.ndarray:
    """Vectorized :func:`upa_steering`; returns shape ``theta.shape + (N,)``."""
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    k = 2 * np.pi * d / wavelength
    ux = (np.sin(theta) * np.cos(phi))[..., None]
    uy = (np.sin(theta) * np.sin(phi))[..., None]
    ax = np.exp(1j * k * np.arange(N_x) * ux)
    ay = np.exp(1j * k * np.arange(N_y) * uy)
    return (ax[..., :, None] * ay[..., None, :]).reshape(theta.shape + (N_x * N_y,))


def path_loss(zeta0: float, dist: float, alpha: float) -> float:
    if dist <= 0:
        raise ValueError("distance must be positive")
    return zeta0 * dist ** (-alpha)


def unit_cell_response(psi_in, psi_out, model: str = "constant", wavelength: float = 1.0):
    """Unit-cell factor ``g_uc`` for an incidence/reflection direction pair.

    ``"constant"`` is an ideal lossless cell, ``lambda / sqrt(4 pi)``.
    ``"cosine"`` scales that by ``sqrt(cos(theta_in) cos(theta_out))`` with
    both elevations measured from the RIS broadside and clipped at zero.
    Directions may be arrays (broadcast over ``theta``).
    """
    base = wavelength / np.sqrt(4 * np.pi)
    if model == "constant":
        return base * np.ones(np.broadcast(np.asarray(psi_in[0]), np.asarray(psi_out[0])).shape)[()]
    if model == "cosine":
        c = np.clip(np.cos(psi_in[0]), 0, None) * np.clip(np.cos(psi_out[0]), 0, None)
        return base * np.sqrt(c)
    raise ValueError(f"unknown unit-cell model {model!r}; expected one of {UNIT_CELL_MODELS}")


def cell_gain(psi_in, psi_out, model: str = "constant"):
    """``sqrt(4 pi) / lambda * g_uc``: 1 for an ideal cell, in [0, 1] otherwise."""
    return unit_cell_response(psi_in, psi_out, model, wavelength=np.sqrt(4 * np.pi))


@dataclass(frozen=True)
class RisState:
    omega: np.ndarray
    unit_cell_model: str = "constant"

    def __post_init__(self):
        w = np.asarray(self.omega, complex)
        if w.ndim != 1:
            raise ValueError("omega must be a vector")
        if np.max(np.abs(np.abs(w) - 1), initial=0.0) > 1e-9:
            raise ValueError("RIS phase coefficients must have unit modulus")
        if self.unit_cell_model not in UNIT_CELL_MODELS:
            raise ValueError(f"unknown unit-cell model {self.unit_cell_model!r}")
        object.__setattr__(self, "omega", w)


def ris_response(ris: RisState, psi_in, psi_out, wavelength: float = 1.0) -> np.ndarray:
    """Diagonal RIS reflection matrix ``sqrt(4 pi)/lambda * g_uc * diag(omega)``."""
    g = unit_cell_response(psi_in, psi_out, ris.unit_cell_model, wavelength)
    return np.sqrt(4 * np.pi) / wavelength * float(g) * np.diag(ris.omega)


@dataclass
class ChannelSet:
    """One channel realization plus the context needed to evaluate it.

    Besides the matrices this records the array layout, the directions at
    the RIS and the unit-cell model, so that sensing metrics can be computed
    from a ``ChannelSet`` alone.
    """

    H_BR: np.ndarray
    h_RU: np.ndarray
    h_BU: np.ndarray
    los_H_BR: np.ndarray
    los_h_RU: np.ndarray
    los_h_BU: np.ndarray
    rho_BR: float
    rho_RU: float
    rho_BU: float
    arrays: ArrayConfig
    psi_R: tuple
    psi_U: tuple
    unit_cell_model: str = "constant"
    extras: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.arrays.M

    @property
    def N(self) -> int:
        return self.arrays.N

    @cached_property
    def comm_cell_gain(self) -> float:
        """Normalized cell gain on the BS -> RIS -> UE reflection."""
        return float(cell_gain(self.psi_R, self.psi_U, self.unit_cell_model))

    def steering_ris(self, theta, phi) -> np.ndarray:
        a = self.arrays
        return upa_steering_grid(a.N_x, a.N_y, a.spacing, a.wavelength, theta, phi)

    def without_direct_link(self) -> "ChannelSet":
        out = ChannelSet(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.h_BU = np.zeros_like(self.h_BU)
        return out


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_channels(geometry: Geometry, arrays: ArrayConfig, params: ChannelParams,
                    rng_seed=None, unit_cell_model: str = "constant") -> ChannelSet:
    """Draw one Rician realization of the BS-RIS, RIS-UE and BS-UE links.

    Each link is ``sqrt(rho k/(1+k)) LoS + sqrt(rho/(1+k)) NLoS`` with
    standard complex Gaussian NLoS entries.  With ``params.pure_los`` the
    scaled LoS parts are returned and no random numbers are drawn.
    """
    M, N, d, lam = arrays.M, arrays.N, arrays.spacing, arrays.wavelength
    rho_BR = path_loss(params.zeta0, geometry.d_BR, params.alpha_BR)
    rho_RU = path_loss(params.zeta0, geometry.d_RU, params.alpha_RU)
    rho_BU = path_loss(params.zeta0, geometry.d_BU, params.alpha_BU)

    a_B_R = ula_steering(M, d, lam, *geometry.bs_to_ris)
    a_B_U = ula_steering(M, d, lam, *geometry.bs_to_ue)
    a_R = upa_steering(arrays.N_x, arrays.N_y, d, lam, *geometry.ris_to_bs)
    a_U = upa_steering(arrays.N_x, arrays.N_y, d, lam, *geometry.ris_to_ue)
    los_H = np.outer(a_R, a_B_R.conj())
    los_ru, los_bu = a_U, a_B_U

    if params.pure_los:
        H = np.sqrt(rho_BR) * los_H
        h_ru = np.sqrt(rho_RU) * los_ru
        h_bu = np.sqrt(rho_BU) * los_bu
    else:
        rng = np.random.default_rng(rng_seed)
        k = params.kappa
        w_los, w_nlos = np.sqrt(k / (1 + k)), np.sqrt(1 / (1 + k))
        H = np.sqrt(rho_BR) * (w_los * los_H + w_nlos * _cn(rng, (N, M)))
        h_ru = np.sqrt(rho_RU) * (w_los * los_ru + w_nlos * _cn(rng, N))
        h_bu = np.sqrt(rho_BU) * (w_los * los_bu + w_nlos * _cn(rng, M))

    return ChannelSet(H, h_ru, h_bu, los_H, los_ru, los_bu, rho_BR, rho_RU, rho_BU,
                      arrays, geometry.ris_to_bs, geometry.ris_to_ue, unit_cell_model)

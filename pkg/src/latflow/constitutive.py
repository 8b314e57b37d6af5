"""Constitutive laws for the transport lattice.

Permeability models with the multiplicative split lambda(p) = lambda0 *
kr(p), capacity and source terms, per-element lognormal randomization, and
the coupled hygro-thermo-chemical (HTC) material for cement curing: two
primary fields (relative humidity H, absolute temperature T) and two
internal variables (cement hydration degree alpha_c, silica fume reaction
degree alpha_s).

All evaluations are pure functions of explicit state and vectorize over
numpy arrays.  Analytic first derivatives (and the second derivatives of the
sorption isotherm needed for an exact Newton tangent) are returned alongside
the values; the test suite validates every derivative against central finite
differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .numerics import RandomStream, lognormal

logger = logging.getLogger(__name__)

_warned_negative_pressure = False


def _clamp_pressure(p):
    """Capillary pressures are non-negative by convention; clamp and warn."""
    global _warned_negative_pressure
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0):
        if not _warned_negative_pressure:
            logger.warning("negative capillary pressure clamped to zero")
            _warned_negative_pressure = True
        p = np.maximum(p, 0.0)
    return p


# ---------------------------------------------------------------------------
# van Genuchten retention / relative permeability
# ---------------------------------------------------------------------------

def saturation(p, m, alpha):
    """Saturation z(p) = (1 + (p/alpha)^(1/(1-m)))^(-m) for p >= 0."""
    p = _clamp_pressure(p)
    y = (p / alpha) ** (1.0 / (1.0 - m))
    return (1.0 + y) ** (-m)


def kappa_r(z, m):
    """Relative permeability kr(z) = sqrt(z) [1 - (1 - z^(1/m))^2]^2."""
    z = np.asarray(z, dtype=float)
    w = z ** (1.0 / m)
    return np.sqrt(z) * (1.0 - (1.0 - w) ** 2) ** 2


def relative_permeability(p, m, alpha):
    """kr as a function of pressure, kr(z(p)), together with d(kr)/dp."""
    p = _clamp_pressure(p)
    expo = 1.0 / (1.0 - m)
    y = (p / alpha) ** expo
    z = (1.0 + y) ** (-m)
    dz_dp = -m * (1.0 + y) ** (-m - 1.0) * expo / alpha * (p / alpha) ** (expo - 1.0)
    w = z ** (1.0 / m)
    t = 1.0 - (1.0 - w) ** 2
    sz = np.sqrt(z)
    kr = sz * t * t
    dt_dz = 2.0 * (1.0 - w) * (1.0 / m) * z ** (1.0 / m - 1.0)
    dkr_dz = t * t / (2.0 * sz) + 2.0 * sz * t * dt_dz
    return kr, dkr_dz * dz_dp


@dataclass(frozen=True)
class LinearPermeability:
    """Pressure-independent permeability coefficient."""

    lambda0: float

    def __post_init__(self):
        if self.lambda0 <= 0.0:
            raise ValueError("lambda0 must be positive")

    def kr(self, p):
        p = np.asarray(p, dtype=float)
        return np.ones_like(p), np.zeros_like(p)


@dataclass(frozen=True)
class VanGenuchtenPermeability:
    """lambda(p) = (rho_w kappa0 / mu) * kr(z(p)) with van Genuchten retention.

    Parameters: m (-), alpha (Pa) retention shape, mu (Pa s) liquid
    viscosity, kappa0 (m^2) intrinsic permeability, rho_w (kg/m^3) liquid
    density.
    """

    m: float = 0.5
    alpha: float = 1.0e6
    mu: float = 8.9e-4
    kappa0: float = 5.0e-18
    rho_w: float = 1.0e3

    def __post_init__(self):
        if not 0.0 < self.m < 1.0:
            raise ValueError("m must lie in (0, 1)")
        if min(self.alpha, self.mu, self.kappa0, self.rho_w) <= 0.0:
            raise ValueError("alpha, mu, kappa0 and rho_w must be positive")

    @property
    def lambda0(self):
        return self.rho_w * self.kappa0 / self.mu     # [s]

    def kr(self, p):
        return relative_permeability(p, self.m, self.alpha)


@dataclass(frozen=True)
class CapacitySource:
    """Capacity c(p) and source density q(p) of the single-field balance.

    Floats mean constant coefficients; callables must return the value and
    its pressure derivative.
    """

    c: object = 0.0
    q: object = 0.0

    def capacity(self, p):
        p = np.asarray(p, dtype=float)
        if callable(self.c):
            return self.c(p)
        if self.c < 0.0:
            raise ValueError("capacity must be non-negative")
        return np.full_like(p, float(self.c)), np.zeros_like(p)

    def source(self, p):
        p = np.asarray(p, dtype=float)
        if callable(self.q):
            return self.q(p)
        return np.full_like(p, float(self.q)), np.zeros_like(p)


def randomize_lambda0(network, mean, cov, seed):
    """Independent lognormal lambda0 per conduit element, deterministic per seed."""
    stream = RandomStream(seed)
    draws = lognormal(stream, mean, cov, size=network.n_elements)
    return network.with_lambda0(np.broadcast_to(draws, (network.n_elements,)).copy())


# ---------------------------------------------------------------------------
# HTC material
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HtcParams:
    """Material constants of the hygro-thermo-chemical model (dam concrete)."""

    rho: float = 2400.0          # kg/m^3
    ct: float = 1100.0           # J/(kg K)
    heat_conductivity: float = 2.5   # W/(m K)
    cement: float = 260.0        # kg/m^3
    silica: float = 0.0          # kg/m^3
    Qc_inf: float = 5.2e5        # J/kg, latent heat of hydration
    Qs_inf: float = 7.8e5        # J/kg, latent heat of the pozzolanic reaction
    Eac_R: float = 5490.0        # K
    Eas_R: float = 9620.0        # K
    Ead_R: float = 2700.0        # K
    Ac1: float = 5.56e4          # 1/s
    Ac2: float = 1.0e-6
    As1: float = 1.39e10         # 1/s
    As2: float = 1.0e-6
    alpha_c_inf: float = 0.695
    alpha_s_inf: float = 0.0
    eta_c: float = 6.5
    eta_s: float = 9.5
    a: float = 5.5
    b: float = 4.0
    kvg_c: float = 0.2
    kvg_s: float = 0.36
    w0: float = 104.0            # kg/m^3
    g1: float = 1.5
    kappa_c: float = 0.253
    D0: float = 6.0e-10          # kg/(m s)
    D1: float = 7.0e-8           # kg/(m s)
    n: float = 3.0
    T0: float = 293.15           # K

    def __post_init__(self):
        if min(self.rho, self.ct, self.heat_conductivity, self.cement,
               self.Ac1, self.alpha_c_inf, self.w0, self.D0, self.D1,
               self.T0) <= 0.0:
            raise ValueError("HTC parameters must be positive where required")
        if self.alpha_s_inf < 0.0 or self.silica < 0.0:
            raise ValueError("silica parameters must be non-negative")


@dataclass
class HtcState:
    """Reaction degrees per evaluation point, non-decreasing in time."""

    alpha_c: np.ndarray
    alpha_s: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    def copy(self):
        return HtcState(self.alpha_c.copy(), self.alpha_s.copy())


def htc_rates(H, T, state, prm):
    """Reaction rates (alpha_c_dot, alpha_s_dot) in 1/s.

    The silica branch short-circuits to zero when alpha_s_inf = 0, which
    avoids the 0/0 in As2 / alpha_s_inf.
    """
    rc, rs, *_ = htc_rate_partials(H, T, state, prm)
    return rc, rs


def htc_rate_partials(H, T, state, prm):
    """Rates and their derivatives with respect to the primary fields.

    Returns (rc, rs, drc_dH, drc_dT, drs_dT); the silica rate does not
    depend on humidity.
    """
    H = np.asarray(H, dtype=float)
    T = np.asarray(T, dtype=float)
    ac = np.minimum(state.alpha_c, prm.alpha_c_inf)
    x = np.maximum(prm.a - prm.a * H, 0.0)          # a (1 - H) >= 0 on H <= 1
    xb = x ** prm.b
    beta = 1.0 / (1.0 + xb)
    with np.errstate(divide="ignore"):
        dbeta = np.where(x > 0.0,
                         prm.a * prm.b * xb / np.maximum(x, 1e-300) * beta * beta,
                         0.0)
    Ac = (prm.Ac1 * (prm.Ac2 / prm.alpha_c_inf + ac) * (prm.alpha_c_inf - ac)
          * np.exp(-prm.eta_c * ac / prm.alpha_c_inf))
    arr = np.exp(-prm.Eac_R / T)
    rc = Ac * beta * arr
    drc_dH = Ac * dbeta * arr
    drc_dT = rc * prm.Eac_R / (T * T)

    if prm.alpha_s_inf == 0.0:
        zero = np.zeros(np.broadcast(H, T).shape)
        return rc, zero, drc_dH, drc_dT, zero.copy()
    asv = np.minimum(state.alpha_s, prm.alpha_s_inf)
    As = (prm.As1 * (prm.As2 / prm.alpha_s_inf + asv) * (prm.alpha_s_inf - asv)
          * np.exp(-prm.eta_s * asv / prm.alpha_s_inf))
    rs = As * np.exp(-prm.Eas_R / T) * np.ones_like(H)
    drs_dT = rs * prm.Eas_R / (T * T)
    return rc, rs, drc_dH, drc_dT, drs_dT


def htc_sorption_we(H, state, prm):
    """Evaporable water content w_e(H, alpha_c, alpha_s) and its partials.

    Returns (w_e, dw_e/dH, dw_e/dalpha_c, dw_e/dalpha_s).
    """
    pr = sorption_partials(H, state.alpha_c, state.alpha_s, prm)
    return pr["we"], pr["we_H"], pr["we_ac"], pr["we_as"]


def sorption_partials(H, ac, as_, prm):
    """All sorption isotherm partials needed by the exact Newton tangent.

    The isotherm is w_e = G1 (1 - e^{-vH}) + K1 (e^{vH} - 1) with
    v = 10 (g1 alpha_c_inf - alpha_c), G1 linear in the reaction degrees and
    K1 fixed by the closure w_e(H=1) = w0 - 0.188 alpha_c c + 0.22 alpha_s s.
    Second derivatives are carried for H and alpha_c; the silica degree is
    inert for the bundled parameter set (alpha_s_inf = 0), so its
    second-order cross terms are not tracked.
    """
    H = np.asarray(H, dtype=float)
    ac = np.asarray(ac, dtype=float)
    as_ = np.asarray(as_, dtype=float)
    c, s = prm.cement, prm.silica

    v = 10.0 * (prm.g1 * prm.alpha_c_inf - ac)
    epos = np.exp(v * H)
    eneg = np.exp(-v * H)
    ev = np.exp(v)
    enegv = np.exp(-v)

    g1v = prm.kvg_c * ac * c + prm.kvg_s * as_ * s
    g1a = prm.kvg_c * c
    num = prm.w0 - 0.188 * ac * c + 0.22 * as_ * s - g1v * (1.0 - enegv)
    den = ev - 1.0
    k1 = num / den

    num_a = -0.188 * c - g1a * (1.0 - enegv) + 10.0 * g1v * enegv
    den_a = -10.0 * ev
    k1_a = (num_a * den - num * den_a) / den ** 2
    num_aa = 10.0 * enegv * (2.0 * g1a + 10.0 * g1v)
    den_aa = 100.0 * ev
    k1_aa = (num_aa / den - (2.0 * num_a * den_a + num * den_aa) / den ** 2
             + 2.0 * num * den_a ** 2 / den ** 3)

    we = g1v * (1.0 - eneg) + k1 * (epos - 1.0)
    we_H = v * (g1v * eneg + k1 * epos)
    we_HH = v * v * (k1 * epos - g1v * eneg)
    we_ac = (g1a * (1.0 - eneg) - 10.0 * H * g1v * eneg
             + k1_a * (epos - 1.0) - 10.0 * H * k1 * epos)
    we_as = (prm.kvg_s * s * (1.0 - eneg)
             + (0.22 * s - prm.kvg_s * s * (1.0 - enegv)) / den * (epos - 1.0))
    we_Hac = ((g1a * v - 10.0 * g1v + 10.0 * H * v * g1v) * eneg
              + (k1_a * v - 10.0 * k1 - 10.0 * H * v * k1) * epos)
    we_acac = (-10.0 * H * g1a * eneg
               - 10.0 * H * eneg * (g1a + 10.0 * H * g1v)
               + k1_aa * (epos - 1.0) - 10.0 * H * k1_a * epos
               - 10.0 * H * epos * (k1_a - 10.0 * H * k1))
    return {"we": we, "we_H": we_H, "we_ac": we_ac, "we_as": we_as,
            "we_HH": we_HH, "we_Hac": we_Hac, "we_acac": we_acac}


def htc_moisture_permeability(H, T, prm):
    """Moisture permeability D_H(H, T) in kg/(m s) and its partials.

    D_H = psi(T) D1 [1 + (D1/D0 - 1)(1 - H)^n]^(-1) with the Arrhenius
    factor psi(T) = exp(Ead/R T0 - Ead/R T).  Returns (D_H, dD_H/dH,
    dD_H/dT).  Integer exponents n extend smoothly past H = 1, which keeps
    Newton iterates well-defined; non-integer n clamps at H = 1.
    """
    H = np.asarray(H, dtype=float)
    T = np.asarray(T, dtype=float)
    xi = 1.0 - H
    if float(prm.n).is_integer():
        n = int(prm.n)
        xin = xi ** n
        dxin = n * xi ** (n - 1)
    else:
        xi = np.maximum(xi, 0.0)
        xin = xi ** prm.n
        dxin = prm.n * np.where(xi > 0.0, xi ** (prm.n - 1.0), 0.0)
    r = prm.D1 / prm.D0 - 1.0
    bottom = 1.0 + r * xin
    psi = np.exp(prm.Ead_R / prm.T0 - prm.Ead_R / T)
    dh = psi * prm.D1 / bottom
    ddh_dH = psi * prm.D1 * r * dxin / bottom ** 2
    ddh_dT = dh * prm.Ead_R / (T * T)
    return dh, ddh_dH, ddh_dT


def htc_sources(H, T, state, rates, prm):
    """Moisture sink q_H [kg/(m^3 s)] and heat source q_T [W/m^3].

    q_H = (dw_e/dalpha_c + kappa_c c) alpha_c_dot + dw_e/dalpha_s alpha_s_dot
    (the non-evaporable water w_n = kappa_c alpha_c c contributes its exact
    derivative kappa_c c) and q_T = alpha_c_dot c Qc + alpha_s_dot s Qs.

    q_H is a sink: the balance consumes it with a negative sign so hydration
    dries the material.
    """
    rc, rs = rates
    pr = sorption_partials(H, state.alpha_c, state.alpha_s, prm)
    q_h = (pr["we_ac"] + prm.kappa_c * prm.cement) * rc + pr["we_as"] * rs
    q_t = rc * prm.cement * prm.Qc_inf + rs * prm.silica * prm.Qs_inf
    return q_h, q_t


@dataclass
class HtcPointValues:
    """Coefficients of one Newton iterate at a set of evaluation points.

    The reaction degrees are advanced explicitly within the iterate,
    ``alpha_new = clip(alpha_prev + dt * rate(H, T, alpha_prev))``, with the
    rate's alpha argument lagged at the converged previous step; every
    coefficient below and its field derivatives account for that chain.
    """

    alpha_c_new: np.ndarray
    alpha_s_new: np.ndarray
    cap_H: np.ndarray            # dw_e/dH, moisture capacity
    dcapH_dH: np.ndarray
    dcapH_dT: np.ndarray
    DH: np.ndarray               # moisture permeability
    dDH_dH: np.ndarray
    dDH_dT: np.ndarray
    q_H: np.ndarray              # moisture sink (enters the balance negated)
    dqH_dH: np.ndarray
    dqH_dT: np.ndarray
    q_T: np.ndarray              # heat source
    dqT_dH: np.ndarray
    dqT_dT: np.ndarray


def htc_point_response(H, T, state_prev, dt, prm):
    """Evaluate all HTC coefficients and tangents at the current iterate."""
    H = np.asarray(H, dtype=float)
    T = np.asarray(T, dtype=float)
    rc, rs, drc_dH, drc_dT, drs_dT = htc_rate_partials(H, T, state_prev, prm)
    dt = 0.0 if dt is None else dt

    ac_new = state_prev.alpha_c + dt * rc
    clamped_c = ac_new > prm.alpha_c_inf
    ac_new = np.minimum(ac_new, prm.alpha_c_inf)
    dac_dH = np.where(clamped_c, 0.0, dt * drc_dH)
    dac_dT = np.where(clamped_c, 0.0, dt * drc_dT)
    as_new = np.minimum(state_prev.alpha_s + dt * rs, prm.alpha_s_inf)

    pr = sorption_partials(H, ac_new, as_new, prm)
    cap = pr["we_H"]
    dcap_dH = pr["we_HH"] + pr["we_Hac"] * dac_dH
    dcap_dT = pr["we_Hac"] * dac_dT

    dh, ddh_dH, ddh_dT = htc_moisture_permeability(H, T, prm)

    wn_a = prm.kappa_c * prm.cement        # dw_n/dalpha_c [kg/m^3]
    q_h = (pr["we_ac"] + wn_a) * rc + pr["we_as"] * rs
    dqH_dH = ((pr["we_Hac"] + pr["we_acac"] * dac_dH) * rc
              + (pr["we_ac"] + wn_a) * drc_dH)
    dqH_dT = (pr["we_acac"] * dac_dT) * rc + (pr["we_ac"] + wn_a) * drc_dT \
        + pr["we_as"] * drs_dT

    q_t = rc * prm.cement * prm.Qc_inf + rs * prm.silica * prm.Qs_inf
    dqT_dH = drc_dH * prm.cement * prm.Qc_inf
    dqT_dT = drc_dT * prm.cement * prm.Qc_inf + drs_dT * prm.silica * prm.Qs_inf

    return HtcPointValues(
        alpha_c_new=ac_new, alpha_s_new=as_new,
        cap_H=cap, dcapH_dH=dcap_dH, dcapH_dT=dcap_dT,
        DH=dh, dDH_dH=ddh_dH, dDH_dT=ddh_dT,
        q_H=q_h, dqH_dH=dqH_dH, dqH_dT=dqH_dT,
        q_T=q_t, dqT_dH=dqT_dH, dqT_dT=dqT_dT)

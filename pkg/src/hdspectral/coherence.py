"""Coherence, plug-in partial coherence and the de-biased partial coherence.

Index conventions: components are 0-based. ``coef[v, u]`` is the coefficient
multiplying Z_u in the frequency-domain regression of Z_v on all other DFT
components; for the population, ``coef[v, u] = -theta_vu / theta_vv`` with
theta the inverse spectral density, and
``rho[u, v] = coef[u, v] sqrt(theta_uu/theta_vv)
            = conj(coef[v, u]) sqrt(theta_vv/theta_uu)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateInverse, DegenerateSpectrum, InvalidInput
from .inverse import InverseEstimate
from .prewhiten import VarModel, apply_filter, recolor_spectrum
from .spectral import (KernelSpec, SpectralField, _values, fourier_dft, get_kernel,
                       weighted_periodogram_sum)

DENOM_REL_TOL = 1e-12


@dataclass(frozen=True)
class CoherencePair:
    u: int
    v: int
    omega: float
    s_hat: complex

    @property
    def magnitude(self) -> float:
        return abs(self.s_hat)


@dataclass(frozen=True)
class DebiasedEstimate:
    u: int
    v: int
    omega: float
    rho_de: complex
    rho_plugin: complex
    beta_de_uv: complex
    beta_de_vu: complex
    denominators: tuple
    unstable: bool = False


def _matrix(obj) -> np.ndarray:
    if isinstance(obj, InverseEstimate):
        return obj.matrix
    return np.asarray(obj, dtype=complex)


def _check_pair(u, v, p):
    if not (0 <= u < p and 0 <= v < p):
        raise InvalidInput(f"indices ({u}, {v}) out of range for p={p}")


def coherence_hat(f_hat, u: int, v: int, omega: Optional[float] = None) -> CoherencePair:
    """s_uv = f_uv / sqrt(f_uu f_vv) from a density matrix or a SpectralField."""
    if isinstance(f_hat, SpectralField):
        if omega is None:
            raise InvalidInput("omega required when passing a SpectralField")
        hit = np.flatnonzero(np.isclose(f_hat.frequencies, omega, rtol=0, atol=1e-12))
        if hit.size == 0:
            raise InvalidInput(f"frequency {omega} not in the field")
        f = f_hat.matrices[hit[0]]
    else:
        f = np.asarray(f_hat, dtype=complex)
    _check_pair(u, v, f.shape[0])
    fuu, fvv = f[u, u].real, f[v, v].real
    if fuu <= 0 or fvv <= 0:
        raise DegenerateSpectrum("non-positive diagonal in spectral estimate")
    return CoherencePair(u, v, float(omega) if omega is not None else float("nan"),
                         complex(f[u, v] / np.sqrt(fuu * fvv)))


def coherence_matrix(f) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    d = np.diagonal(f, axis1=-2, axis2=-1).real
    if np.any(d <= 0):
        raise DegenerateSpectrum("non-positive diagonal in spectral estimate")
    s = 1.0 / np.sqrt(d)
    return f * s[..., :, None] * s[..., None, :]


def rho_plugin(f_inv, u: int, v: int) -> complex:
    """rho_uv = -theta_uv / sqrt(theta_uu theta_vv)."""
    th = _matrix(f_inv)
    _check_pair(u, v, th.shape[0])
    tuu, tvv = th[u, u].real, th[v, v].real
    if tuu <= 0 or tvv <= 0:
        raise DegenerateInverse("non-positive diagonal in inverse estimate")
    return complex(-th[u, v] / np.sqrt(tuu * tvv))


def partial_coherence_matrix(theta) -> np.ndarray:
    """Matrix of plug-in partial coherences (diagonal set to 1)."""
    th = np.asarray(theta, dtype=complex)
    d = np.diagonal(th).real
    if np.any(d <= 0):
        raise DegenerateInverse("non-positive diagonal in inverse estimate")
    s = 1.0 / np.sqrt(d)
    rho = -th * s[:, None] * s[None, :]
    np.fill_diagonal(rho, 1.0)
    return rho


def beta_gamma_hat(f_inv, u: int, v: int):
    """Regression coefficients of v on the rest and the rotation direction for u.

    Both vectors are indexed over the components other than v in increasing
    order. ``beta_v = -theta_{-v,v} / theta_vv`` and ``gamma`` is the conjugate
    of ``theta_vv theta_{u,-v} - theta_uv theta_{v,-v}``.
    """
    th = _matrix(f_inv)
    p = th.shape[0]
    _check_pair(u, v, p)
    if u == v:
        raise InvalidInput("u and v must differ")
    tvv = th[v, v]
    if tvv == 0:
        raise DegenerateInverse("zero diagonal entry in inverse estimate")
    rest = np.array([j for j in range(p) if j != v])
    beta = -th[rest, v] / tvv
    gamma_h = tvv * th[u, rest] - th[u, v] * th[v, rest]
    return beta, np.conj(gamma_h)


def debias_accumulator(series, kernel: KernelSpec | str, M: int, omega: float,
                       prewhiten: Optional[VarModel] = None, z: Optional[np.ndarray] = None
                       ) -> np.ndarray:
    """sum_k kappa_M(w - w_k) Z(w_k) Z(w_k)^H, recoloured when a VAR filter is given.

    With ``prewhiten`` the sum runs over the DFT of the filtered series and is
    then mapped back through the filter's transfer function. ``z`` may carry a
    precomputed DFT (of the filtered series when prewhitening).
    """
    kernel = get_kernel(kernel)
    if z is None:
        x = _values(series)
        if prewhiten is not None and prewhiten.order > 0:
            x = apply_filter(x, prewhiten).values
        z = fourier_dft(x)
    n = z.shape[0]
    if not (1 <= M and 2 * M < n):
        from .errors import InvalidBandwidth
        raise InvalidBandwidth(f"need 1 <= M < n/2, got M={M}, n={n}")
    s = weighted_periodogram_sum(z, kernel, M, omega)
    if prewhiten is not None and prewhiten.order > 0:
        s = recolor_spectrum(prewhiten, s, omega)
    return s


def _debias_parts(S, th, u, v):
    p = th.shape[0]
    tvv = th[v, v]
    a = th[:, v] / tvv                           # e_v - I_{p,-v} beta_v
    r = tvv * th[u, :] - th[u, v] * th[v, :]     # gamma^H placed on the full index set
    r[v] = 0.0
    g = np.conj(r)
    Sg = S @ g
    num = np.vdot(a, Sg)
    den = Sg[u]
    scale = np.abs(S).max() * np.abs(g).sum()
    return num, den, scale


def beta_debiased_from_sum(S, f_inv, u: int, v: int):
    """De-biased coefficient of Z_u in the regression of Z_v, from a weighted DFT sum.

    The plug-in starting value is ``-theta_vu / theta_vv`` (the conjugate of
    the u-entry of ``beta_v`` from :func:`beta_gamma_hat`); the correction is the
    ratio of the residual and rotated-regressor cross sums.

    Returns ``(value, numerator, denominator, unstable)``. When the
    denominator is numerically zero the plug-in coefficient is returned and
    ``unstable`` is set.
    """
    th = _matrix(f_inv)
    S = np.asarray(S, dtype=complex)
    p = th.shape[0]
    _check_pair(u, v, p)
    if u == v:
        raise InvalidInput("u and v must differ")
    if th[v, v].real <= 0:
        raise DegenerateInverse("non-positive diagonal in inverse estimate")
    coef = -th[v, u] / th[v, v]
    num, den, scale = _debias_parts(S, th, u, v)
    if not np.abs(den) > DENOM_REL_TOL * scale:
        return complex(coef), complex(num), complex(den), True
    return complex(coef + num / den), complex(num), complex(den), False


def beta_debiased(series, f_inv, kernel, M: int, u: int, v: int, omega: float,
                  prewhiten: Optional[VarModel] = None) -> complex:
    S = debias_accumulator(series, kernel, M, omega, prewhiten)
    return beta_debiased_from_sum(S, f_inv, u, v)[0]


def rho_debiased(beta_de_uv: complex, beta_de_vu: complex, f_inv, u: int, v: int,
                 omega: float = float("nan"), denominators=(np.nan, np.nan),
                 unstable: bool = False) -> DebiasedEstimate:
    """Combine the two de-biased regression coefficients into rho_uv.

    ``beta_de_uv`` is the coefficient of Z_v when regressing Z_u on the rest,
    ``beta_de_vu`` the coefficient of Z_u when regressing Z_v on the rest.
    """
    th = _matrix(f_inv)
    tuu, tvv = th[u, u].real, th[v, v].real
    if tuu <= 0 or tvv <= 0:
        raise DegenerateInverse("non-positive diagonal in inverse estimate")
    rho = 0.5 * (beta_de_uv * np.sqrt(tuu / tvv) + np.conj(beta_de_vu) * np.sqrt(tvv / tuu))
    return DebiasedEstimate(u, v, omega, complex(rho), rho_plugin(th, u, v),
                            complex(beta_de_uv), complex(beta_de_vu), tuple(denominators),
                            unstable)


def debiased_matrix(S, f_inv):
    """All-pairs de-biased partial coherences at one frequency.

    Returns ``(rho_de, rho_plugin, unstable)`` as p x p arrays; ``rho_de`` is
    exactly conjugate-symmetric and has unit diagonal.
    """
    th = _matrix(f_inv)
    S = np.asarray(S, dtype=complex)
    p = th.shape[0]
    d = np.diagonal(th).real
    if np.any(d <= 0):
        raise DegenerateInverse("non-positive diagonal in inverse estimate")
    coef = np.zeros((p, p), dtype=complex)      # coef[v, u]
    unstable = np.zeros((p, p), dtype=bool)
    s_max = np.abs(S).max()
    for v in range(p):
        tvv = th[v, v]
        a = th[:, v] / tvv
        R = tvv * th - np.outer(th[:, v], th[v, :])
        R[:, v] = 0.0
        SG = S @ R.conj().T                      # column u is S g_u
        num = a.conj() @ SG
        den = np.diagonal(SG)
        scale = s_max * np.abs(R).sum(axis=1)
        ok = np.abs(den) > DENOM_REL_TOL * scale
        plug = -th[v, :] / tvv
        corr = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
        coef[v] = plug + corr
        unstable[v] = ~ok
    sq = np.sqrt(d)
    ratio = sq[None, :] / sq[:, None]            # ratio[u, v] = sqrt(t_vv / t_uu)
    rho = 0.5 * (coef * ratio.T + np.conj(coef.T) * ratio)
    np.fill_diagonal(rho, 1.0)
    unstable = unstable | unstable.T
    np.fill_diagonal(unstable, False)
    return rho, partial_coherence_matrix(th), unstable

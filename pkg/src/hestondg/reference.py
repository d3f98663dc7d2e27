"""Independent pricing oracles: Heston characteristic-function formulas and Monte Carlo."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .dg_space import gauss_segment
from .model import Butterfly, DigitalCall, EuropeanCall, EuropeanPut, HestonParams, normal_cdf


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CharFnParts:
    b: np.ndarray
    d: np.ndarray
    h: np.ndarray
    C: np.ndarray
    D: np.ndarray
    f: np.ndarray


def _clog1p(z):
    # numpy's complex log1p loses the real part for tiny arguments
    z = np.asarray(z, dtype=complex)
    re, im = z.real, z.imag
    return 0.5 * np.log1p(2.0 * re + re * re + im * im) + 1j * np.arctan2(im, 1.0 + re)


def _b(k: int, p: HestonParams) -> float:
    return (k - 2) * p.rho * p.sigma + p.kappa


def char_fn_parts(k: int, omega, p: HestonParams, tau: float, S: float, v: float, formulation: str = "heston") -> CharFnParts:
    """C_k, D_k and f_k on an ascending frequency grid.

    ``formulation="heston"`` uses (1 - h e^{d tau}) / (1 - h) with the phase of
    the logarithm unwrapped along the grid, so ``omega`` must be sorted and
    dense enough that the phase moves by less than pi between nodes.
    ``"rotation_free"`` is the same function rewritten with g = 1/h and
    e^{-d tau}; it needs no branch tracking and stays accurate as sigma -> 0.
    """
    w = np.asarray(omega, dtype=complex)
    s2 = p.sigma**2
    b = _b(k, p)
    beta = b - p.rho * p.sigma * 1j * w
    sign = (-1) ** k
    d = np.sqrt(beta**2 + s2 * (w**2 + sign * 1j * w))
    beta_plus = beta + d
    # beta - d without cancellation: (beta^2 - d^2) / (beta + d)
    beta_minus = -s2 * (w**2 + sign * 1j * w) / beta_plus
    with np.errstate(divide="ignore", invalid="ignore"):  # h is infinite at omega = 0 when k = 2
        h = beta_plus / beta_minus
    kt = p.kappa * p.theta
    if formulation == "heston":
        e = np.exp(d * tau)
        G = (1.0 - h * e) / (1.0 - h)
        logG = np.log(np.abs(G)) + 1j * np.unwrap(np.angle(G))
        C = (p.r_d - p.r_f) * 1j * w * tau + kt / s2 * (beta_plus * tau - 2.0 * logG)
        D = beta_plus / s2 * (1.0 - e) / (1.0 - h * e)
    elif formulation == "rotation_free":
        g = beta_minus / beta_plus
        em = np.exp(-d * tau)
        ratio = g * (1.0 - em) / (1.0 - g)
        C = (p.r_d - p.r_f) * 1j * w * tau + kt * (
            (-(w**2 + sign * 1j * w) / beta_plus) * tau - 2.0 * _clog1p(ratio) / s2
        )
        D = -(w**2 + sign * 1j * w) / beta_plus * (1.0 - em) / (1.0 - g * em)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    f = np.exp(C + D * v + 1j * w * math.log(S))
    return CharFnParts(np.full(w.shape, b), d, h, C, D, f)


SMALL_SIGMA = 1e-3


def resolve_formulation(formulation: str, p: HestonParams) -> str:
    """``"auto"`` picks the heston form unless sigma is so small that its
    (beta + d) tau - 2 log G difference cancels to round-off."""
    if formulation == "auto":
        return "heston" if p.sigma >= SMALL_SIGMA else "rotation_free"
    if formulation not in ("heston", "rotation_free"):
        raise ValueError(f"unknown formulation {formulation!r}")
    return formulation


def _integrand(k, omega, p, tau, S, v, K, formulation):
    parts = char_fn_parts(k, omega, p, tau, S, v, formulation)
    return np.real(np.exp(-1j * omega * math.log(K)) * parts.f / (1j * omega)), parts.f


def _omega_max(p, tau, S, v, K, formulation, tail=1e-12) -> float:
    wmax = 8.0
    while wmax < 1e5:
        probe = wmax * np.array([1.0, 1.25, 1.5, 2.0])
        ok = True
        for k in (1, 2):
            f = char_fn_parts(k, probe, p, tau, S, v, "rotation_free").f
            if not np.all(np.abs(f) / probe < tail):
                ok = False
        if ok:
            return wmax
        wmax *= 2.0
    raise QuadratureError("characteristic function tail does not decay below tolerance")


def probabilities(
    p: HestonParams,
    tau: float,
    S: float,
    v: float,
    K: float,
    formulation: str = "auto",
    rtol: float = 1e-10,
    max_panels: int = 1 << 14,
) -> Tuple[float, float]:
    """Q_1 and Q_2 by panel-doubling Gauss-Legendre on [0, omega_max]."""
    if not tau > 0:
        raise ValueError("time to maturity must be positive")
    formulation = resolve_formulation(formulation, p)
    wmax = _omega_max(p, tau, S, v, K, formulation)
    x, wt = gauss_segment(16)
    panels = 16
    prev = None
    while panels <= max_panels:
        edges = np.linspace(0.0, wmax, panels + 1)
        width = edges[1] - edges[0]
        nodes = (edges[:-1, None] + width * x[None, :]).ravel()
        weights = np.tile(width * wt, panels)
        vals = []
        for k in (1, 2):
            integrand, f = _integrand(k, nodes, p, tau, S, v, K, formulation)
            if not np.all(np.isfinite(integrand)):
                raise QuadratureError("non-finite characteristic function values")
            vals.append(0.5 + np.dot(weights, integrand) / math.pi)
        cur = np.array(vals)
        if prev is not None and np.max(np.abs(cur - prev)) < rtol:
            return float(cur[0]), float(cur[1])
        prev = cur
        panels *= 2
    raise QuadratureError("Fourier integral did not converge")


def heston_price(kind, p: HestonParams, t: float = 0.0, formulation: str = "auto") -> float:
    """Semi-analytic price at (t, v0, S0) for calls, puts, digitals and butterflies."""
    p.validate()
    tau = p.T - t
    if not tau > 0:
        raise ValueError("need t < T")
    if not p.v0 > 0:
        raise ValueError("semi-analytic formulas need v0 > 0")
    S, v = p.S0, p.v0
    if isinstance(kind, Butterfly):
        c = [heston_price(EuropeanCall(), p.with_(K=k), t, formulation) for k in (kind.K1, kind.K2, kind.K3)]
        return c[0] - 2.0 * c[1] + c[2]
    Q1, Q2 = probabilities(p, tau, S, v, p.K, formulation)
    df_d = math.exp(-p.r_d * tau)
    df_f = math.exp(-p.r_f * tau)
    if isinstance(kind, EuropeanCall):
        return S * df_f * Q1 - p.K * df_d * Q2
    if isinstance(kind, EuropeanPut):
        return S * df_f * (Q1 - 1.0) + p.K * df_d * (1.0 - Q2)
    if isinstance(kind, DigitalCall):
        return df_d * Q2
    raise TypeError(f"unsupported option kind {kind!r}")


def black_scholes(kind, S, K, tau, var, r_d, r_f) -> float:
    """Garman-Kohlhagen price with total variance ``var * tau``."""
    sd = math.sqrt(var * tau)
    d1 = (math.log(S / K) + (r_d - r_f + 0.5 * var) * tau) / sd
    d2 = d1 - sd
    if isinstance(kind, EuropeanCall):
        return S * math.exp(-r_f * tau) * normal_cdf(d1) - K * math.exp(-r_d * tau) * normal_cdf(d2)
    if isinstance(kind, EuropeanPut):
        return K * math.exp(-r_d * tau) * normal_cdf(-d2) - S * math.exp(-r_f * tau) * normal_cdf(-d1)
    if isinstance(kind, DigitalCall):
        return math.exp(-r_d * tau) * normal_cdf(d2)
    raise TypeError(f"unsupported option kind {kind!r}")


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MCConfig:
    paths: int = 1_000_000
    steps: Optional[int] = None  # default: 250 per year
    seed: int = 12345
    antithetic: bool = False
    scheme: str = "full_truncation_euler"
    block: int = 1 << 15

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError("need at least two paths")
        if self.steps is not None and self.steps < 1:
            raise ValueError("need at least one time step")
        if self.scheme != "full_truncation_euler":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.antithetic and self.paths % 2:
            raise ValueError("antithetic sampling needs an even path count")

    def n_steps(self, T: float) -> int:
        return self.steps if self.steps is not None else max(1, int(round(250 * T)))


def _payoffs(kind, S_T, strikes):
    out = np.empty((len(strikes), len(S_T)))
    for i, K in enumerate(strikes):
        if isinstance(kind, EuropeanCall):
            out[i] = np.maximum(S_T - K, 0.0)
        elif isinstance(kind, EuropeanPut):
            out[i] = np.maximum(K - S_T, 0.0)
        elif isinstance(kind, DigitalCall):
            out[i] = (S_T > K).astype(float)
        elif isinstance(kind, Butterfly):
            out[i] = np.maximum(S_T - kind.K1, 0.0) - 2 * np.maximum(S_T - kind.K2, 0.0) + np.maximum(S_T - kind.K3, 0.0)
        else:
            raise TypeError(f"unsupported option kind {kind!r}")
    return out


def simulate_terminal(p: HestonParams, cfg: MCConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Terminal spot for ``n`` paths: full-truncation Euler in v, log-Euler in S."""
    steps = cfg.n_steps(p.T)
    dt = p.T / steps
    sq = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - p.rho**2)
    half = n // 2 if cfg.antithetic else n
    lnS = np.full(n, math.log(p.S0))
    v = np.full(n, float(p.v0))
    for _ in range(steps):
        z = rng.standard_normal((2, half))
        if cfg.antithetic:
            z = np.concatenate([z, -z], axis=1)
        vp = np.maximum(v, 0.0)
        sv = np.sqrt(vp) * sq
        lnS += (p.r_d - p.r_f - 0.5 * vp) * dt + sv * z[0]
        v += p.kappa * (p.theta - vp) * dt + p.sigma * sv * (p.rho * z[0] + rho_c * z[1])
    return np.exp(lnS)


def mc_prices(kind, p: HestonParams, cfg: MCConfig, strikes: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Estimates and standard errors for several strikes from the same paths.

    Paths are generated in fixed-size blocks, each with its own child seed,
    so results depend only on ``cfg`` and not on how the work is scheduled.
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    disc = math.exp(-p.r_d * p.T)
    n_blocks = -(-cfg.paths // cfg.block)
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    shift = None
    total = np.zeros(len(strikes))
    total_sq = np.zeros(len(strikes))
    count = 0
    for b, ss in enumerate(seeds):
        n = min(cfg.block, cfg.paths - b * cfg.block)
        rng = np.random.default_rng(ss)
        S_T = simulate_terminal(p, cfg, rng, n)
        pay = disc * _payoffs(kind, S_T, strikes)
        if cfg.antithetic:
            h = n // 2
            pay = 0.5 * (pay[:, :h] + pay[:, h:])
        if shift is None:
            shift = pay[:, 0].copy()
        dev = pay - shift[:, None]
        total += dev.sum(axis=1)
        total_sq += (dev**2).sum(axis=1)
        count += pay.shape[1]
    mean_dev = total / count
    mean = shift + mean_dev
    var = np.maximum(total_sq - count * mean_dev**2, 0.0) / (count - 1)
    return mean, np.sqrt(var / count)


def mc_price(kind, p: HestonParams, cfg: MCConfig) -> Tuple[float, float]:
    """Discounted mean payoff at strike ``p.K`` and its standard error."""
    if isinstance(kind, Butterfly):
        est, se = mc_prices(kind, p, cfg, [kind.K2])
    else:
        est, se = mc_prices(kind, p, cfg, [p.K])
    return float(est[0]), float(se[0])

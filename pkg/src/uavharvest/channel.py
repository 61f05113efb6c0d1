"""Air-to-ground propagation model and rate math.

The LoS probability follows a generalized logistic curve in the UAV-to-sensor
elevation angle, fitted to ray-traced city statistics. Conditioned on the
LoS/NLoS state the channel obeys two distinct power laws, and all rate
functions (realized, expected, the achievable LoS-only lower bound, and the
mean-gain approximation kept for baseline comparison) live here, together
with the convexity kernel and the first-order minorant coefficients used by
the trajectory optimizer.

Angles are carried in degrees end to end; the logistic slope is per degree.
log2 is used for rates, with explicit log2(e) factors where a natural log
sneaks in through the minorant coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .city import LosSampleTable

LOG2E = math.log2(math.e)
DEG_PER_RAD = 180.0 / math.pi


class ChannelError(ValueError):
    """Raised for invalid propagation parameters or inputs."""


class FitError(RuntimeError):
    """Raised when the logistic regression fails to converge."""


class DegenerateFitError(FitError):
    """Raised when the sample table cannot identify the logistic slope."""


@dataclass(frozen=True)
class ChannelParams:
    """All propagation constants, linear units throughout.

    ``logis_*`` are the generalized-logistic LoS-probability parameters
    (offset + scale / (1 + exp(-(bias + slope * theta_deg)))), constrained to
    offset + scale = 1. ``ref_gain`` is the LoS power gain at 1 m,
    ``nlos_atten`` the extra NLoS attenuation, ``pathloss_los/nlos`` the two
    path-loss exponents, ``snr_gap`` the modulation SNR gap, ``noise_power``
    the receiver noise in watts and ``tx_power`` the per-sensor transmit
    powers in watts.
    """

    logis_bias: float
    logis_slope: float
    logis_offset: float
    logis_scale: float
    ref_gain: float
    nlos_atten: float
    pathloss_los: float
    pathloss_nlos: float
    snr_gap: float
    noise_power: float
    tx_power: tuple[float, ...]

    def __post_init__(self):
        if abs(self.logis_offset + self.logis_scale - 1.0) > 1e-9:
            raise ChannelError("logistic offset + scale must equal 1")
        if self.logis_scale < 0:
            raise ChannelError("logistic scale must be nonnegative")
        if self.logis_slope <= 0:
            raise ChannelError("logistic slope must be positive")
        if not 0.0 < self.nlos_atten < 1.0:
            raise ChannelError("nlos_atten must lie in (0, 1)")
        if not 2.0 <= self.pathloss_los < self.pathloss_nlos <= 6.0:
            raise ChannelError("need 2 <= pathloss_los < pathloss_nlos <= 6")
        if self.ref_gain <= 0 or self.snr_gap <= 0 or self.noise_power <= 0:
            raise ChannelError("ref_gain, snr_gap and noise_power must be positive")
        if not self.tx_power or any(p <= 0 for p in self.tx_power):
            raise ChannelError("tx_power must be a non-empty tuple of positive watts")

    @property
    def link_snr(self) -> tuple[float, ...]:
        """Per-sensor reference SNR ref_gain * P_k / (noise_power * snr_gap)."""
        scale = self.ref_gain / (self.noise_power * self.snr_gap)
        return tuple(scale * p for p in self.tx_power)

    def with_certain_los(self) -> "ChannelParams":
        """Degenerate copy with LoS probability pinned to 1 at every angle."""
        return replace(self, logis_offset=1.0, logis_scale=0.0)

    def with_tx_count(self, k: int) -> "ChannelParams":
        """Copy with the first transmit power replicated for k sensors."""
        return replace(self, tx_power=(self.tx_power[0],) * k)

    def to_json(self) -> str:
        doc = {f: getattr(self, f) for f in (
            "logis_bias", "logis_slope", "logis_offset", "logis_scale",
            "ref_gain", "nlos_atten", "pathloss_los", "pathloss_nlos",
            "snr_gap", "noise_power")}
        doc["tx_power"] = list(self.tx_power)
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "ChannelParams":
        doc = json.loads(text)
        doc["tx_power"] = tuple(doc["tx_power"])
        return ChannelParams(**doc)


def elevation_angle(q, z, w):
    """Elevation angle in degrees between UAV (q, z) and ground point w.

    Vertical looks are 90 degrees. Broadcasts over leading dimensions of
    ``q``/``w`` (trailing axis of length 2) and ``z``.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ChannelError("UAV altitude must be positive")
    dist = np.linalg.norm(q - w, axis=-1)
    out = DEG_PER_RAD * np.arctan2(z, dist)
    return float(out) if out.ndim == 0 else out


def los_probability(theta_deg, p: ChannelParams, clamp: bool = False):
    """Generalized-logistic LoS probability at elevation ``theta_deg``.

    ``clamp`` snaps the value into [0, 1] for reporting; optimization code
    always uses the raw curve.
    """
    theta_deg = np.asarray(theta_deg, dtype=float)
    val = p.logis_offset + p.logis_scale / (1.0 + np.exp(-(p.logis_bias + p.logis_slope * theta_deg)))
    if clamp:
        val = np.clip(val, 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


def channel_gain(d, los: bool, p: ChannelParams):
    """Large-scale power gain at distance ``d`` for the given channel state."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ChannelError("distance must be positive")
    if los:
        out = p.ref_gain * d ** (-p.pathloss_los)
    else:
        out = p.nlos_atten * p.ref_gain * d ** (-p.pathloss_nlos)
    return float(out) if out.ndim == 0 else out


def rate_conditional(d, los: bool, gamma, p: ChannelParams):
    """Spectral efficiency at distance ``d`` conditioned on the channel state."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ChannelError("distance must be positive")
    if los:
        out = np.log2(1.0 + gamma * d ** (-p.pathloss_los))
    else:
        out = np.log2(1.0 + p.nlos_atten * gamma * d ** (-p.pathloss_nlos))
    return float(out) if out.ndim == 0 else out


def _geometry(q, z, w):
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    horiz = np.linalg.norm(q - w, axis=-1)
    dist = np.sqrt(horiz ** 2 + z ** 2)
    theta = DEG_PER_RAD * np.arctan2(z, horiz)
    return horiz, dist, theta


def expected_rate(q, z, w, gamma, p: ChannelParams):
    """State-averaged rate: P_los * r_los + (1 - P_los) * r_nlos."""
    _, dist, theta = _geometry(q, z, w)
    pl = los_probability(theta, p)
    out = pl * np.log2(1.0 + gamma * dist ** (-p.pathloss_los)) \
        + (1.0 - pl) * np.log2(1.0 + p.nlos_atten * gamma * dist ** (-p.pathloss_nlos))
    return float(out) if np.ndim(out) == 0 else out


def expected_rate_lb(q, z, w, gamma, p: ChannelParams):
    """Achievable lower bound keeping only the LoS-state contribution."""
    _, dist, theta = _geometry(q, z, w)
    pl = los_probability(theta, p)
    out = pl * np.log2(1.0 + gamma * dist ** (-p.pathloss_los))
    return float(out) if np.ndim(out) == 0 else out


def expected_rate_jensen(q, z, w, gamma, p: ChannelParams):
    """Mean-gain rate log2(1 + E[h] P / (sigma^2 Gamma)); overestimates.

    Kept only for baseline comparison against the achievable bound.
    """
    _, dist, theta = _geometry(q, z, w)
    pl = los_probability(theta, p)
    mean_snr = gamma * (pl * dist ** (-p.pathloss_los)
                        + (1.0 - pl) * p.nlos_atten * dist ** (-p.pathloss_nlos))
    out = np.log2(1.0 + mean_snr)
    return float(out) if np.ndim(out) == 0 else out


def psi(x, y, gamma, alpha, offset, scale):
    """Convexity kernel (offset + scale/x) * log2(1 + gamma / y^(alpha/2)).

    Jointly convex for x, y > 0 wherever offset + scale/x >= 0; the
    expected-rate lower bound is this kernel evaluated at
    x = 1 + exp(-logit(theta)) and y = squared 3D distance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = (offset + scale / x) * np.log2(1.0 + gamma * y ** (-alpha / 2.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SurrogateCoeffs:
    """First-order minorant of the LoS-only expected rate at one expansion point.

    The bound is affine in the two deviation coordinates,

        rate_ref - exp_coeff * d_exp - sqdist_coeff * d_sq,

    where d_exp is the deviation of exp(-logit) and d_sq the deviation of the
    squared horizontal distance from their expansion values. ``angle_ref_rad``
    and ``angle_slope`` linearize arctan(z / horizontal distance) so the
    elevation logit itself can be bounded affinely in the horizontal distance.
    """

    rate_ref: float
    exp_coeff: float
    sqdist_coeff: float
    angle_ref_rad: float
    angle_slope: float
    logit_ref: float
    horiz_ref: float
    exp_ref: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "exp_ref", math.exp(-self.logit_ref))
        if self.exp_coeff < 0 or self.sqdist_coeff < 0:
            raise ChannelError("minorant coefficients must be nonnegative")
        if self.angle_slope < 0:
            raise ChannelError("angle slope must be nonnegative")

    def plane(self, exp_dev, sqdist_dev):
        """Evaluate the affine bound at the given deviations."""
        return self.rate_ref - self.exp_coeff * exp_dev - self.sqdist_coeff * sqdist_dev

    def angle_bound_rad(self, horiz):
        """Affine lower bound on arctan(z / horiz) from the expansion point."""
        return self.angle_ref_rad - self.angle_slope * (np.asarray(horiz, dtype=float) - self.horiz_ref)

    def evaluate(self, q, w, p: ChannelParams):
        """Composite minorant of the LoS-only rate at horizontal position q."""
        q = np.asarray(q, dtype=float)
        w = np.asarray(w, dtype=float)
        horiz = np.linalg.norm(q - w, axis=-1)
        theta_lb = DEG_PER_RAD * self.angle_bound_rad(horiz)
        logit = p.logis_bias + p.logis_slope * theta_lb
        exp_dev = np.exp(-logit) - self.exp_ref
        sqdist_dev = horiz ** 2 - self.horiz_ref ** 2
        out = self.plane(exp_dev, sqdist_dev)
        return float(out) if np.ndim(out) == 0 else out


def _minorant_parts(horiz_ref, z, gamma, p: ChannelParams):
    """Shared coefficient math for horizontal and vertical expansions."""
    theta_ref = DEG_PER_RAD * np.arctan2(z, horiz_ref)
    logit_ref = p.logis_bias + p.logis_slope * theta_ref
    x_ref = 1.0 + np.exp(-logit_ref)
    y_ref = horiz_ref ** 2 + z ** 2
    a = p.pathloss_los
    snr_term = gamma * y_ref ** (-a / 2.0)
    rate_ref = (p.logis_offset + p.logis_scale / x_ref) * np.log2(1.0 + snr_term)
    exp_coeff = p.logis_scale * LOG2E / x_ref ** 2 * np.log(1.0 + snr_term)
    sqdist_coeff = (p.logis_offset + p.logis_scale / x_ref) * gamma * (a / 2.0) * LOG2E \
        / (y_ref * (y_ref ** (a / 2.0) + gamma))
    return theta_ref, logit_ref, rate_ref, exp_coeff, sqdist_coeff


def horizontal_surrogate(q_hat, z: float, w, gamma: float, p: ChannelParams) -> SurrogateCoeffs:
    """Minorant coefficients for the horizontal block at expansion point q_hat.

    Degenerate expansions directly above the sensor floor the horizontal
    distance at 1 mm so the arctan linearization stays finite.
    """
    if z <= 0:
        raise ChannelError("altitude must be positive")
    q_hat = np.asarray(q_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    horiz_ref = max(float(np.linalg.norm(q_hat - w)), 1e-3)
    _, logit_ref, rate_ref, exp_coeff, sqdist_coeff = _minorant_parts(horiz_ref, z, gamma, p)
    return SurrogateCoeffs(
        rate_ref=float(rate_ref),
        exp_coeff=float(exp_coeff),
        sqdist_coeff=float(sqdist_coeff),
        angle_ref_rad=math.atan2(z, horiz_ref),
        angle_slope=z / (horiz_ref ** 2 + z ** 2),
        logit_ref=float(logit_ref),
        horiz_ref=horiz_ref,
    )


@dataclass(frozen=True)
class VerticalSurrogate:
    """Minorant of the LoS-only rate in altitude at a fixed horizontal position.

    The squared-distance deviation is z^2 - z_ref^2 while the elevation angle
    is kept exact: exp(-logit(z)) is convex in z (arctan being concave), so
    the whole expression is concave in z and globally below the true rate.
    """

    rate_ref: float
    exp_coeff: float
    sqdist_coeff: float
    logit_ref: float
    z_ref: float
    horiz_ref: float

    def evaluate(self, z, p: ChannelParams):
        z = np.asarray(z, dtype=float)
        angle = np.arctan2(z, self.horiz_ref)
        logit = p.logis_bias + p.logis_slope * DEG_PER_RAD * angle
        exp_dev = np.exp(-logit) - math.exp(-self.logit_ref)
        sqdist_dev = z ** 2 - self.z_ref ** 2
        out = self.rate_ref - self.exp_coeff * exp_dev - self.sqdist_coeff * sqdist_dev
        return float(out) if np.ndim(out) == 0 else out


def vertical_surrogate(q, z_hat: float, w, gamma: float, p: ChannelParams) -> VerticalSurrogate:
    """Minorant coefficients for the vertical block at expansion altitude z_hat."""
    if z_hat <= 0:
        raise ChannelError("altitude must be positive")
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    horiz = float(np.linalg.norm(q - w))
    _, logit_ref, rate_ref, exp_coeff, sqdist_coeff = _minorant_parts(horiz, z_hat, gamma, p)
    return VerticalSurrogate(
        rate_ref=float(rate_ref),
        exp_coeff=float(exp_coeff),
        sqdist_coeff=float(sqdist_coeff),
        logit_ref=float(logit_ref),
        z_ref=z_hat,
        horiz_ref=horiz,
    )


@dataclass(frozen=True)
class LogisticFit:
    """Outcome of the LoS-probability regression."""

    logis_bias: float
    logis_slope: float
    logis_offset: float
    logis_scale: float
    r_squared: float
    residuals: tuple[float, ...]
    iterations: int

    def to_json(self) -> str:
        return json.dumps({
            "logis_bias": self.logis_bias,
            "logis_slope": self.logis_slope,
            "logis_offset": self.logis_offset,
            "logis_scale": self.logis_scale,
            "r_squared": self.r_squared,
            "residuals": list(self.residuals),
            "iterations": self.iterations,
        }, indent=2)


def _logistic_model(theta, bias, slope, offset):
    sig = 1.0 / (1.0 + np.exp(-(bias + slope * theta)))
    return offset + (1.0 - offset) * sig, sig


def fit_logistic(table: LosSampleTable, grad_tol: float = 1e-8,
                 max_iter: int = 200) -> LogisticFit:
    """Least-squares fit of the generalized logistic to an LoS sample table.

    Damped (Levenberg-style) Gauss-Newton on (bias, slope, offset) with the
    scale eliminated through scale = 1 - offset. Fails if the damped iteration
    cannot push the SSR gradient norm below ``grad_tol``.
    """
    theta = np.asarray(table.elevation_deg, dtype=float)
    p_emp = np.asarray(table.p_los, dtype=float)
    if np.unique(theta).size < 4:
        raise FitError("need at least 4 distinct elevation bins")
    if float(np.std(p_emp)) < 1e-12:
        raise DegenerateFitError("constant probability table: slope is unidentifiable")

    b = np.array([-0.5, 0.05, -0.5])        # bias, slope, offset
    damping = 1e-3

    def residual_jac(vec):
        bias, slope, offset = vec
        model, sig = _logistic_model(theta, bias, slope, offset)
        r = model - p_emp
        dsig = sig * (1.0 - sig)
        jac = np.stack([
            (1.0 - offset) * dsig,
            (1.0 - offset) * dsig * theta,
            1.0 - sig,
        ], axis=1)
        return r, jac

    r, jac = residual_jac(b)
    sse = float(r @ r)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = jac.T @ r
        if float(np.linalg.norm(grad)) <= grad_tol:
            break
        jtj = jac.T @ jac
        step = np.linalg.solve(jtj + damping * np.diag(np.diag(jtj) + 1e-12), -grad)
        cand = b + step
        r_new, jac_new = residual_jac(cand)
        sse_new = float(r_new @ r_new)
        if sse_new < sse:
            b, r, jac, sse = cand, r_new, jac_new, sse_new
            damping = max(damping / 3.0, 1e-12)
        else:
            damping *= 5.0
            if damping > 1e12:
                raise FitError("damped least squares stalled before reaching grad_tol")
    else:
        raise FitError(f"no convergence within {max_iter} iterations")

    bias, slope, offset = (float(v) for v in b)
    scale = 1.0 - offset
    if slope <= 0 or scale <= 0:
        raise FitError("fit violated slope > 0 / scale > 0 constraints")
    sst = float(np.sum((p_emp - p_emp.mean()) ** 2))
    r2 = 1.0 - sse / sst
    return LogisticFit(bias, slope, offset, scale, r2,
                       tuple(float(v) for v in r), iterations)


def params_from_fit(fit: LogisticFit, base: ChannelParams) -> ChannelParams:
    """Channel parameters with the logistic part replaced by a fit result."""
    return replace(base, logis_bias=fit.logis_bias, logis_slope=fit.logis_slope,
                   logis_offset=fit.logis_offset, logis_scale=fit.logis_scale)

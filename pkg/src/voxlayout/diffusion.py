"""Variance schedules, forward corruption, velocity targets, and samplers.

All math runs in float64. Steps are 1-based: t ranges over 1..T and the
cumulative retention is defined with alpha_bar(0) = 1, which makes the
final deterministic step return the clean estimate exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class Schedule:
    betas: np.ndarray  # (T,) float64 in (0, 1)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        if len(b) < 1:
            raise InvalidArgument("schedule needs at least one step")
        if (b <= 0).any() or (b >= 1).any():
            raise InvalidArgument("all betas must lie in (0, 1)")
        object.__setattr__(self, "betas", b)
        bars = np.cumprod(1.0 - b)
        if (np.diff(bars) >= 0).any():
            raise InvalidArgument("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "_alpha_bars", bars)

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self._alpha_bars[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.num_steps:
            raise InvalidArgument(f"step {t} outside 1..{self.num_steps}")


def make_schedule(
    num_steps: int = 1000,
    kind: str = "linear",
    beta_min: float = 1e-4,
    beta_max: float = 0.02,
) -> Schedule:
    if num_steps < 1:
        raise InvalidArgument(f"num_steps must be >= 1, got {num_steps}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise InvalidArgument(
            f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )
    if kind != "linear":
        raise InvalidArgument(f"unknown schedule kind {kind!r}")
    return Schedule(np.linspace(beta_min, beta_max, num_steps))


def forward_sample(z0: np.ndarray, t: int, eps: np.ndarray, sched: Schedule) -> np.ndarray:
    """z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps."""
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * np.asarray(z0, np.float64) + np.sqrt(1.0 - ab) * np.asarray(eps, np.float64)


def velocity_target(z0: np.ndarray, eps: np.ndarray, t: int, sched: Schedule) -> np.ndarray:
    """u_t = sqrt(abar_t) eps - sqrt(1 - abar_t) z_0."""
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * np.asarray(eps, np.float64) - np.sqrt(1.0 - ab) * np.asarray(z0, np.float64)


def recover_z0(z_t: np.ndarray, u: np.ndarray, t: int, sched: Schedule) -> np.ndarray:
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * np.asarray(z_t, np.float64) - np.sqrt(1.0 - ab) * np.asarray(u, np.float64)


def recover_eps(z_t: np.ndarray, u: np.ndarray, t: int, sched: Schedule) -> np.ndarray:
    ab = sched.alpha_bar(t)
    return np.sqrt(1.0 - ab) * np.asarray(z_t, np.float64) + np.sqrt(ab) * np.asarray(u, np.float64)


class OracleDenoiser:
    """Returns the exact velocity for a known clean latent; testing aid."""

    def __init__(self, z0: np.ndarray, sched: Schedule):
        self.z0 = np.asarray(z0, dtype=np.float64)
        self.sched = sched

    def __call__(self, z_t: np.ndarray, t: int, conditions=None) -> np.ndarray:
        ab = self.sched.alpha_bar(t)
        return (np.sqrt(ab) * np.asarray(z_t, np.float64) - self.z0) / np.sqrt(1.0 - ab)


class ConstantDenoiser:
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def __call__(self, z_t: np.ndarray, t: int, conditions=None) -> np.ndarray:
        return np.full_like(np.asarray(z_t, dtype=np.float64), self.value)


def reverse_step(
    z_t: np.ndarray,
    t: int,
    denoiser,
    conditions,
    sched: Schedule,
    mode: str = "deterministic",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One reverse update from t to t - 1.

    Deterministic mode re-samples the forward marginal at t - 1 from the
    recovered (z0, eps) pair; ancestral mode adds posterior noise with
    variance beta_tilde_t, so a zero noise draw reproduces the
    deterministic update.
    """
    if t < 1:
        raise InvalidArgument(f"reverse step needs t >= 1, got {t}")
    u = denoiser(z_t, t, conditions)
    z0_hat = recover_z0(z_t, u, t, sched)
    eps_hat = recover_eps(z_t, u, t, sched)
    ab_prev = sched.alpha_bar(t - 1)
    z_prev = np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    if mode == "deterministic":
        return z_prev
    if mode == "ancestral":
        if rng is None:
            raise InvalidArgument("ancestral sampling requires an rng")
        ab = sched.alpha_bar(t)
        beta_tilde = (1.0 - ab_prev) / (1.0 - ab) * sched.beta(t)
        return z_prev + np.sqrt(beta_tilde) * rng.standard_normal(np.shape(z_t))
    raise InvalidArgument(f"unknown sampler mode {mode!r}")


def sample(
    z_T: np.ndarray,
    denoiser,
    conditions,
    sched: Schedule,
    mode: str = "deterministic",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Run the full reverse chain from t = T down to the clean estimate."""
    z = np.asarray(z_T, dtype=np.float64)
    for t in range(sched.num_steps, 0, -1):
        z = reverse_step(z, t, denoiser, conditions, sched, mode, rng)
    return z


def ldm_loss(pred_u: np.ndarray, target_u: np.ndarray) -> float:
    pred_u = np.asarray(pred_u, dtype=np.float64)
    target_u = np.asarray(target_u, dtype=np.float64)
    if pred_u.shape != target_u.shape:
        raise InvalidArgument("velocity grids must share one shape")
    return float(np.mean((pred_u - target_u) ** 2))


def dump_schedule(sched: Schedule, path: str) -> None:
    """Text table (t, beta, alpha_bar) for golden-file comparison."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t\tbeta\talpha_bar\n")
        for t in range(1, sched.num_steps + 1):
            fh.write(f"{t}\t{sched.beta(t):.17g}\t{sched.alpha_bar(t):.17g}\n")

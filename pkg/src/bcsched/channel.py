"""Block-fading multipath OFDM channel generation.

Each block draws L complex Gaussian taps per user with a unit-energy power
delay profile and maps them onto the subcarriers with a K-point DFT, so
per-subcarrier gains have unit mean and the frequency correlation follows
the profile.  Noise variance is fixed to 1 and the transmit SNR is absorbed
into the power budget: p_total = K * 10^(snr_db/10).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .capacity import ChannelState, ErgodicBank


def derive_seed(master_seed, label):
    """Stable 64-bit sub-seed from a master seed and a purpose label."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed, label):
    return np.random.default_rng(derive_seed(master_seed, label))


@dataclass
class ChannelConfig:
    num_users: int = 2
    num_subcarriers: int = 250
    bandwidth_hz: float = 2.5e6
    block_duration_s: float = 1e-4
    num_taps: int = 8
    power_delay_profile: tuple = None  # uniform when omitted
    snr_db: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1 or self.num_taps < 1:
            raise ValueError("need at least one user and one tap")
        if self.num_subcarriers < self.num_taps:
            raise ValueError("need num_subcarriers >= num_taps")
        if self.power_delay_profile is None:
            pdp = np.full(self.num_taps, 1.0 / self.num_taps)
        else:
            pdp = np.asarray(self.power_delay_profile, dtype=float)
            if pdp.shape != (self.num_taps,):
                raise ValueError("power delay profile length must equal num_taps")
            if np.any(pdp < 0) or abs(pdp.sum() - 1.0) > 1e-12:
                raise ValueError("power delay profile must be nonnegative, sum 1")
        self.power_delay_profile = tuple(pdp.tolist())

    @property
    def pdp_array(self) -> np.ndarray:
        return np.asarray(self.power_delay_profile)

    def power_budget(self) -> float:
        """Sum transmit power giving the configured per-subcarrier SNR at
        unit noise."""
        return self.num_subcarriers * 10.0 ** (self.snr_db / 10.0)


@dataclass
class SlotConfig:
    """Slot timing: how many OFDM symbols one scheduling slot carries."""

    slot_duration_s: float
    bandwidth_hz: float
    num_subcarriers: int

    def __post_init__(self):
        if not self.slot_duration_s > 0:
            raise ValueError("slot duration must be positive")

    @property
    def symbols_per_slot(self) -> float:
        # subcarrier spacing B/K -> symbol duration K/B
        return self.slot_duration_s * self.bandwidth_hz / self.num_subcarriers

    @property
    def bits_per_nat_symbol(self) -> float:
        """Converts nats per channel use into bits per slot."""
        return self.symbols_per_slot / np.log(2.0)


def draw_block(config: ChannelConfig, rng: np.random.Generator) -> ChannelState:
    """One i.i.d. fading block: DFT of per-user Gaussian taps, unit noise."""
    scale = np.sqrt(config.pdp_array / 2.0)
    shape = (config.num_users, config.num_taps)
    taps = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    # h[m, k] = sum_l taps[m, l] * exp(-2j pi k l / K)
    coeffs = np.fft.fft(taps, n=config.num_subcarriers, axis=1)
    return ChannelState(coefficients=coeffs, noise_variance=1.0)


def build_bank(config: ChannelConfig, size: int) -> ErgodicBank:
    """Seeded sample bank standing in for the ergodic region."""
    if size < 1:
        raise ValueError("bank size must be >= 1")
    rng = derive_rng(config.seed, "bank")
    samples = [draw_block(config, rng) for _ in range(size)]
    return ErgodicBank(samples=tuple(samples), seed=config.seed)

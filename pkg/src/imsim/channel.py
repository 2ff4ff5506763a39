"""Rayleigh fading, frame-equivalent channel matrix, AWGN and CSI errors.

A frame is ``T`` data slots preceded by an ``L - 1`` slot cyclic prefix. After
the prefix is stripped the frame sees a block-circulant matrix whose block
``(r, c)`` is tap ``(r - c) mod T`` of slot ``r``'s channel when that tap
exists, zero otherwise.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from imsim.config import ChannelTimeModel, Normalization, ValidatedConfig, _require

__all__ = [
    "NoiseSpec",
    "CsiErrorSpec",
    "ChannelRealization",
    "complex_gaussian",
    "draw_channel",
    "draw_slot_taps",
    "equivalent_matrix",
    "block_support",
    "apply_channel",
    "corrupt_csi",
    "snr_to_n0",
]


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex normal samples with total variance ``variance``."""
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    draws = rng.standard_normal((*shape, 2))
    return np.sqrt(variance / 2.0) * (draws[..., 0] + 1j * draws[..., 1])


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """``n0`` is the complex variance per receive dimension (``n0/2`` per real part)."""

    n0: float

    def __post_init__(self):
        if not self.n0 >= 0:
            raise ValueError(f"n0 must be >= 0, got {self.n0}")


@dataclasses.dataclass(frozen=True)
class CsiErrorSpec:
    """Complex variance of each channel-estimation-error entry."""

    sigma_e2: float

    def __post_init__(self):
        if not self.sigma_e2 >= 0:
            raise ValueError(f"sigma_e2 must be >= 0, got {self.sigma_e2}")

    @classmethod
    def matched(cls, noise: NoiseSpec) -> "CsiErrorSpec":
        """Estimation error as strong as the receiver noise."""
        return cls(noise.n0)


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelRealization:
    """``slot_taps[t, l]`` is the ``N_r x N_t`` matrix of tap ``l`` during slot ``t``."""

    slot_taps: np.ndarray

    @property
    def equivalent(self) -> np.ndarray:
        return _assemble(self.slot_taps)


def draw_slot_taps(config: ValidatedConfig, rng: np.random.Generator, frames: int | None = None) -> np.ndarray:
    """Raw fading draws, shape ``([frames,] T, L, N_r, N_t)``.

    Every entry has complex variance ``1/L`` so the taps jointly carry unit
    energy. Under the quasi-static model one draw is repeated over all slots.
    """
    config = _require(config)
    lead = () if frames is None else (frames,)
    distinct = config.frame_slots if config.channel_time_model is ChannelTimeModel.PER_SLOT_IID else 1
    taps = complex_gaussian(rng, (*lead, distinct, config.taps, config.n_rx, config.n_tx), 1.0 / config.taps)
    if distinct != config.frame_slots:
        reps = [1] * taps.ndim
        reps[len(lead)] = config.frame_slots
        taps = np.tile(taps, reps)
    return taps


def draw_channel(config: ValidatedConfig, rng: np.random.Generator) -> ChannelRealization:
    return ChannelRealization(draw_slot_taps(config, rng))


def block_support(frame_slots: int, taps: int) -> np.ndarray:
    """``(T, T)`` boolean: which blocks of the equivalent matrix can be nonzero."""
    lag = (np.arange(frame_slots)[:, None] - np.arange(frame_slots)[None, :]) % frame_slots
    return lag < taps


def _assemble(slot_taps: np.ndarray) -> np.ndarray:
    *lead, n_slots, n_taps, n_rx, n_tx = slot_taps.shape
    out = np.zeros((*lead, n_slots, n_rx, n_slots, n_tx), dtype=slot_taps.dtype)
    for r in range(n_slots):
        for tap in range(min(n_taps, n_slots)):
            c = (r - tap) % n_slots
            out[..., r, :, c, :] += slot_taps[..., r, tap, :, :]
    return out.reshape(*lead, n_slots * n_rx, n_slots * n_tx)


def equivalent_matrix(realization: ChannelRealization | np.ndarray, config: ValidatedConfig) -> np.ndarray:
    """Post-prefix-removal frame matrix, shape ``(T*N_r, T*N_t)``.

    Accepts a realization or a raw ``([F,] T, L, N_r, N_t)`` array.
    """
    config = _require(config)
    taps = realization.slot_taps if isinstance(realization, ChannelRealization) else np.asarray(realization)
    if taps.shape[-4:] != (config.frame_slots, config.taps, config.n_rx, config.n_tx):
        raise ValueError(f"channel shape {taps.shape} does not match the configuration")
    if config.taps > config.frame_slots:
        raise ValueError("more taps than data slots cannot be written as one circulant frame")
    return _assemble(taps)


def apply_channel(equivalent: np.ndarray, signal: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """``y = H s + n`` for one frame (or a leading batch axis on both inputs)."""
    equivalent = np.asarray(equivalent)
    signal = np.asarray(signal)
    if equivalent.shape[-1] != signal.shape[-1]:
        raise ValueError(f"matrix has {equivalent.shape[-1]} columns but signal has {signal.shape[-1]} entries")
    clean = np.einsum("...ij,...j->...i", equivalent, signal)
    if noise.n0 == 0:
        return clean
    return clean + complex_gaussian(rng, clean.shape, noise.n0)


def corrupt_csi(
    equivalent: np.ndarray,
    csi: CsiErrorSpec,
    rng: np.random.Generator,
    config: ValidatedConfig | None = None,
    full: bool = False,
) -> np.ndarray:
    """Receiver's channel estimate ``H - E``.

    With a ``config`` and ``full=False`` only structurally nonzero blocks are
    perturbed (the receiver estimates channels that exist); otherwise every
    entry is.
    """
    equivalent = np.asarray(equivalent)
    if csi.sigma_e2 == 0:
        return equivalent.copy()
    error = complex_gaussian(rng, equivalent.shape, csi.sigma_e2)
    if config is not None and not full:
        config = _require(config)
        mask = np.kron(block_support(config.frame_slots, config.taps), np.ones((config.n_rx, config.n_tx), dtype=bool))
        error = np.where(mask, error, 0)
    return equivalent - error


def snr_to_n0(snr_db: float, config: ValidatedConfig, per_bit: bool = False) -> NoiseSpec:
    """Noise level for an SNR in dB.

    The reference energy is that of one active slot: 1 under per-slot
    normalization, and the unit per-antenna symbol energy under per-antenna
    normalization (the ``G``-fold radiated power then shows up as array gain).
    With ``per_bit`` the frame energy is spread over its information bits.
    """
    config = _require(config)
    slot_energy = 1.0
    linear = 10.0 ** (snr_db / 10.0)
    if per_bit:
        radiated = slot_energy if config.normalization is Normalization.PER_SLOT_UNIT else float(config.groups)
        return NoiseSpec(radiated * config.active_slots / config.bits_per_frame / linear)
    return NoiseSpec(slot_energy / linear)

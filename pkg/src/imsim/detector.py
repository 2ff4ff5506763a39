"""Maximum-likelihood frame detection.

Several routes to the same answer:

* brute force scans the whole codebook against the full frame matrix and
  works for any tap count;
* the decomposed search exploits the block-diagonal frame matrix of a flat
  channel (``L = 1``). The frame metric then splits into per-slot terms, each
  slot is either empty (``|y_t|^2``) or carries its best hypothesis, and the
  best hypothesis does not depend on which other slots are active. Only
  ``T * N_tg**G * M`` slot metrics plus ``2**p`` pattern sums are needed.

A third, joint search handles estimates that are not block diagonal (a
fully perturbed estimate, or ``L > 1``) without building the codebook: the
metric is expanded into per-slot terms plus pairwise cross terms between
active slots, all precomputed from ``T * N_tg**G`` superposed columns.

All routes break ties towards the smallest frame bit string.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from imsim import kernels
from imsim.config import ValidatedConfig, _require
from imsim.constellation import Constellation, build_constellation
from imsim.mapper import (
    DEFAULT_ENUMERATION_CAP,
    Codeword,
    codebook_fields,
    decode_frame,
    signal_positions,
    tap_masks,
    tap_table,
)

__all__ = [
    "DetectionResult",
    "BruteForceDetector",
    "detect_slots",
    "slot_blocks",
    "ml_detect_bruteforce",
    "ml_detect_decomposed",
    "detect_joint",
    "ml_detect_joint",
    "detect_and_demap",
]


@dataclasses.dataclass(frozen=True)
class DetectionResult:
    codeword: Codeword
    metric: float


def _constellation(config, constellation):
    if constellation is None:
        return build_constellation(config.mod_order, config.constellation_family)
    return constellation


def _codeword(rank, antennas, symbols) -> Codeword:
    return Codeword(
        tap_rank=int(rank),
        antenna_indices=tuple(map(tuple, np.asarray(antennas).tolist())),
        symbol_indices=tuple(np.asarray(symbols).tolist()),
    )


def detect_slots(y, h, config: ValidatedConfig, constellation: Constellation | None = None):
    """Decomposed ML detection of a batch of flat-channel frames.

    Parameters
    ----------
    y : ndarray, shape (F, T, N_r)
        Received samples per slot.
    h : ndarray, shape (F, T, N_r, N_t)
        Receiver's channel estimate per slot.

    Returns
    -------
    tap_rank, antennas (F, T_a, G), symbols (F, T_a), metric (F,)
    """
    config = _require(config)
    constellation = _constellation(config, constellation)
    y = np.ascontiguousarray(y, dtype=np.complex128)
    h = np.ascontiguousarray(h, dtype=np.complex128)
    n, n_slots = y.shape[0], config.frame_slots
    if y.shape != (n, n_slots, config.n_rx) or h.shape != (n, n_slots, config.n_rx, config.n_tx):
        raise ValueError(f"shape mismatch: y {y.shape}, h {h.shape}")
    ant = np.empty((n, n_slots, config.groups), dtype=np.int64)
    sym = np.empty((n, n_slots), dtype=np.int64)
    on = np.empty((n, n_slots))
    off = np.empty((n, n_slots))
    kernels.slot_search(y, h, constellation.symbols, config.groups, config.group_size, config.amplitude, ant, sym, on, off)

    masks = tap_masks(config)
    totals = np.where(masks[None], on[:, None, :], off[:, None, :]).sum(axis=-1)
    rank = np.argmin(totals, axis=1)
    slots = tap_table(config)[rank]
    antennas = np.take_along_axis(ant, slots[..., None], axis=1)
    symbols = np.take_along_axis(sym, slots, axis=1)
    return rank, antennas, symbols, totals[np.arange(n), rank]


class BruteForceDetector:
    """Exhaustive ML search over a precomputed sparse codebook.

    Building the codebook costs ``O(codebook_size)`` memory once; calls then
    take batches of frames.
    """

    def __init__(self, config: ValidatedConfig, constellation: Constellation | None = None, cap: int = DEFAULT_ENUMERATION_CAP):
        self.config = config = _require(config)
        constellation = _constellation(config, constellation)
        self.tap_rank, self.antennas, self.symbols = codebook_fields(config, cap)
        size = self.tap_rank.shape[0]
        positions = signal_positions(self.tap_rank, self.antennas, config)
        values = config.amplitude * constellation.symbols[self.symbols]
        self.positions = np.ascontiguousarray(positions.reshape(size, -1))
        self.values = np.ascontiguousarray(np.broadcast_to(values[..., None], positions.shape).reshape(size, -1))

    def __len__(self):
        return self.tap_rank.shape[0]

    def __call__(self, y, h):
        """Detect frames ``y`` (F, T*N_r) seen through frame matrices ``h`` (F, T*N_r, T*N_t).

        Returns the codebook index (F,) and the minimum metric (F,).
        """
        cfg = self.config
        y = np.ascontiguousarray(y, dtype=np.complex128)
        h = np.ascontiguousarray(h, dtype=np.complex128)
        rows, cols = cfg.frame_slots * cfg.n_rx, cfg.frame_slots * cfg.n_tx
        if y.ndim != 2 or y.shape[1] != rows or h.shape != (y.shape[0], rows, cols):
            raise ValueError(f"shape mismatch: y {y.shape}, h {h.shape}")
        best = np.empty(y.shape[0], dtype=np.int64)
        metric = np.empty(y.shape[0])
        kernels.brute_force(y, h, self.positions, self.values, best, metric)
        return best, metric

    def fields(self, index):
        return self.tap_rank[index], self.antennas[index], self.symbols[index]


def detect_joint(y, h, config: ValidatedConfig, constellation: Constellation | None = None):
    """Exact ML for frames ``y`` (F, T*N_r) under arbitrary estimates ``h`` (F, T*N_r, T*N_t).

    Returns tap_rank, antennas (F, T_a, G), symbols (F, T_a), metric (F,).
    """
    config = _require(config)
    constellation = _constellation(config, constellation)
    y = np.ascontiguousarray(y, dtype=np.complex128)
    h = np.ascontiguousarray(h, dtype=np.complex128)
    n = y.shape[0]
    rows, cols = config.frame_slots * config.n_rx, config.frame_slots * config.n_tx
    if y.shape != (n, rows) or h.shape != (n, rows, cols):
        raise ValueError(f"shape mismatch: y {y.shape}, h {h.shape}")
    rank = np.empty(n, dtype=np.int64)
    ant = np.empty((n, config.active_slots, config.groups), dtype=np.int64)
    sym = np.empty((n, config.active_slots), dtype=np.int64)
    metric = np.empty(n)
    kernels.joint_search(
        y, h, constellation.symbols, config.groups, config.group_size, config.amplitude,
        config.frame_slots, config.n_tx, np.ascontiguousarray(tap_table(config)), rank, ant, sym, metric,
    )
    return rank, ant, sym, metric


def slot_blocks(equivalent, config: ValidatedConfig) -> np.ndarray:
    """Diagonal ``N_r x N_t`` blocks of a flat-channel frame matrix, shape (..., T, N_r, N_t)."""
    config = _require(config)
    if config.taps != 1:
        raise ValueError("slot decomposition needs a single-tap channel")
    equivalent = np.asarray(equivalent)
    *lead, _, _ = equivalent.shape
    split = equivalent.reshape(*lead, config.frame_slots, config.n_rx, config.frame_slots, config.n_tx)
    idx = np.arange(config.frame_slots)
    return np.moveaxis(split[..., idx, :, idx, :], 0, -3)


def ml_detect_bruteforce(y, h_est, config: ValidatedConfig, constellation: Constellation | None = None, cap: int = DEFAULT_ENUMERATION_CAP) -> DetectionResult:
    """Single-frame exhaustive ML over the full ``T*N_r x T*N_t`` estimate."""
    detector = BruteForceDetector(config, constellation, cap)
    best, metric = detector(np.asarray(y)[None], np.asarray(h_est)[None])
    rank, ant, sym = detector.fields(best[0])
    return DetectionResult(_codeword(rank, ant, sym), float(metric[0]))


def ml_detect_decomposed(y, h_blocks, config: ValidatedConfig, constellation: Constellation | None = None) -> DetectionResult:
    """Single-frame decomposed ML.

    ``h_blocks`` is the per-slot estimate (T, N_r, N_t), or the full frame
    matrix from which the diagonal blocks are taken. ``y`` may be flat
    (``T*N_r``) or per slot.
    """
    config = _require(config)
    if config.taps != 1:
        raise ValueError("decomposed detection requires a single-tap channel (L = 1)")
    h_blocks = np.asarray(h_blocks)
    if h_blocks.ndim == 2:
        h_blocks = slot_blocks(h_blocks, config)
    y = np.asarray(y).reshape(1, config.frame_slots, config.n_rx)
    rank, ant, sym, metric = detect_slots(y, h_blocks[None], config, constellation)
    return DetectionResult(_codeword(rank[0], ant[0], sym[0]), float(metric[0]))


def ml_detect_joint(y, h_est, config: ValidatedConfig, constellation: Constellation | None = None) -> DetectionResult:
    """Single-frame exact ML over a full ``T*N_r x T*N_t`` estimate."""
    rank, ant, sym, metric = detect_joint(np.asarray(y).reshape(1, -1), np.asarray(h_est)[None], config, constellation)
    return DetectionResult(_codeword(rank[0], ant[0], sym[0]), float(metric[0]))


def detect_and_demap(y, h_est, config: ValidatedConfig, constellation: Constellation | None = None, method: str = "auto") -> np.ndarray:
    """Detected frame bits.

    ``method`` is ``"decomposed"``, ``"joint"``, ``"bruteforce"`` or ``"auto"``
    (decomposed whenever the channel is flat, joint otherwise).
    """
    config = _require(config)
    if method == "auto":
        method = "decomposed" if config.taps == 1 else "joint"
    if method == "decomposed":
        result = ml_detect_decomposed(y, h_est, config, constellation)
    elif method == "joint":
        result = ml_detect_joint(y, h_est, config, constellation)
    elif method == "bruteforce":
        result = ml_detect_bruteforce(np.asarray(y).ravel(), h_est, config, constellation)
    else:
        raise ValueError(f"unknown detection method {method!r}")
    return decode_frame(result.codeword, config)

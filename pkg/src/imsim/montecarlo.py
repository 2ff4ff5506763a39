"""Monte Carlo BER estimation, SNR sweeps and SNR-gap measurement.

Frames are simulated in fixed-size blocks. Block ``k`` of the point at SNR
``s`` draws from its own stream keyed by ``(master_seed, s, k)``, and blocks
are aggregated in index order, so a point's result depends only on its
inputs and never on how many worker threads ran the blocks. Within a block
the draw order is bits, channel, noise, estimation error: a perfect-CSI and
a CEE run with the same seed see identical frames.

Channel estimation error perturbs, by default, every entry of the frame
matrix estimate (``CeeScope.FULL``); ``CeeScope.BLOCKS`` restricts it to the
blocks that carry a physical channel.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from imsim.channel import CsiErrorSpec, complex_gaussian, corrupt_csi, draw_slot_taps, equivalent_matrix, snr_to_n0
from imsim.config import ValidatedConfig, _require
from imsim.constellation import Constellation, build_constellation
from imsim.detector import BruteForceDetector, detect_joint, detect_slots
from imsim.mapper import bit_categories, decode_fields, encode_bits, signal_positions, tap_table

__all__ = [
    "BLOCK_FRAMES",
    "CsiMode",
    "CeeScope",
    "StoppingRule",
    "BerRecord",
    "GapError",
    "block_rng",
    "run_point",
    "run_sweep",
    "snr_at_ber",
    "gap_at_ber",
    "is_monotone",
]

log = logging.getLogger(__name__)

BLOCK_FRAMES = 4096


class _CaseInsensitive(str, enum.Enum):
    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            return cls.__members__.get(value.strip().upper())
        return None


class CsiMode(_CaseInsensitive):
    PERFECT = "PERFECT"
    CEE = "CEE"


class CeeScope(_CaseInsensitive):
    FULL = "FULL"
    BLOCKS = "BLOCKS"


class GapError(ValueError):
    """A curve does not cross the requested BER."""


@dataclasses.dataclass(frozen=True)
class StoppingRule:
    min_bit_errors: int = 200
    max_frames: int = 20_000_000
    min_frames: int = 10_000

    def __post_init__(self):
        if self.min_bit_errors < 1:
            raise ValueError("min_bit_errors must be >= 1")
        if self.min_frames < 1 or self.min_frames > self.max_frames:
            raise ValueError("need 1 <= min_frames <= max_frames")


@dataclasses.dataclass(frozen=True)
class BerRecord:
    label: str
    snr_db: float
    frames_run: int
    bits_per_frame: int
    bit_errors_time_index: int
    bit_errors_antenna_index: int
    bit_errors_symbol: int
    stop_reason: str

    @property
    def bit_errors_total(self) -> int:
        return self.bit_errors_time_index + self.bit_errors_antenna_index + self.bit_errors_symbol

    @property
    def bits_run(self) -> int:
        return self.frames_run * self.bits_per_frame

    @property
    def ber(self) -> float:
        return self.bit_errors_total / self.bits_run

    @property
    def ci95_halfwidth(self) -> float:
        """Normal-approximation 95% half width."""
        p = self.ber
        return 1.96 * math.sqrt(p * (1.0 - p) / self.bits_run)


def _snr_key(snr_db: float) -> int:
    return int(np.float64(snr_db + 0.0).view(np.uint64))


def block_rng(master_seed: int, snr_db: float, block: int) -> np.random.Generator:
    """Independent stream of one frame block."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(_snr_key(snr_db), block))
    return np.random.Generator(np.random.PCG64(seq))


class _BlockSimulator:
    def __init__(self, config, constellation, n0, sigma_e2, scope: CeeScope, detector: str):
        self.config = config
        self.constellation = constellation
        self.n0 = n0
        self.sigma_e2 = sigma_e2
        self.categories = bit_categories(config)
        # a single-slot frame matrix is its own diagonal block
        self.full_error = sigma_e2 is not None and scope is CeeScope.FULL and config.frame_slots > 1
        block_diagonal = config.taps == 1 and not self.full_error
        if detector == "auto":
            detector = "decomposed" if block_diagonal else "joint"
        if detector not in ("decomposed", "joint", "bruteforce"):
            raise ValueError(f"unknown detector {detector!r}")
        if detector == "decomposed" and not block_diagonal:
            raise ValueError("decomposed detection needs a block-diagonal channel estimate")
        self.detector = detector
        self.brute = BruteForceDetector(config, constellation) if detector == "bruteforce" else None

    def _detect_full(self, y, h_est):
        if self.brute is not None:
            best, _ = self.brute(y, h_est)
            return self.brute.fields(best)
        return detect_joint(y, h_est, self.config, self.constellation)[:3]

    def __call__(self, rng: np.random.Generator, frames: int) -> np.ndarray:
        cfg = self.config
        bits = rng.integers(0, 2, (frames, cfg.bits_per_frame), dtype=np.uint8)
        rank, ant, sym = encode_bits(bits, cfg)
        taps = draw_slot_taps(cfg, rng, frames)
        values = cfg.amplitude * self.constellation.symbols[sym]  # (F, T_a)

        if cfg.taps == 1:
            h = taps[:, :, 0]
            slots = tap_table(cfg)[rank]
            h_active = np.take_along_axis(h, slots[:, :, None, None], axis=1)
            columns = ant + np.arange(cfg.groups) * cfg.group_size
            v = np.take_along_axis(h_active, columns[:, :, None, :], axis=3).sum(axis=-1)
            y = np.zeros((frames, cfg.frame_slots, cfg.n_rx), dtype=np.complex128)
            np.put_along_axis(y, slots[:, :, None], values[:, :, None] * v, axis=1)
            y += complex_gaussian(rng, y.shape, self.n0)
            if self.full_error:
                h_est = equivalent_matrix(h[:, :, None], cfg)
                h_est = h_est - complex_gaussian(rng, h_est.shape, self.sigma_e2)
            else:
                h_est = h if self.sigma_e2 is None else h - complex_gaussian(rng, h.shape, self.sigma_e2)
                if self.detector == "decomposed":
                    d_rank, d_ant, d_sym, _ = detect_slots(y, h_est, cfg, self.constellation)
                else:
                    h_est = equivalent_matrix(h_est[:, :, None], cfg)
            if self.detector != "decomposed":
                d_rank, d_ant, d_sym = self._detect_full(y.reshape(frames, -1), h_est)
        else:
            h_eq = equivalent_matrix(taps, cfg)
            signal = np.zeros((frames, cfg.frame_slots * cfg.n_tx), dtype=np.complex128)
            pos = signal_positions(rank, ant, cfg).reshape(frames, -1)
            np.put_along_axis(signal, pos, np.repeat(values, cfg.groups, axis=1), axis=1)
            y = np.einsum("fij,fj->fi", h_eq, signal)
            y += complex_gaussian(rng, y.shape, self.n0)
            if self.sigma_e2 is None:
                h_est = h_eq
            else:
                h_est = corrupt_csi(h_eq, CsiErrorSpec(self.sigma_e2), rng, cfg, full=self.full_error)
            d_rank, d_ant, d_sym = self._detect_full(y, h_est)

        detected = decode_fields(d_rank, d_ant, d_sym, cfg)
        wrong = (detected != bits).sum(axis=0)
        return np.bincount(self.categories, weights=wrong, minlength=3).astype(np.int64)


def run_point(
    config: ValidatedConfig,
    snr_db: float,
    csi_mode: CsiMode | str = CsiMode.PERFECT,
    stopping: StoppingRule = StoppingRule(),
    master_seed: int = 0,
    *,
    label: str | None = None,
    threads: int = 1,
    detector: str = "auto",
    n0: float | None = None,
    sigma_e2: float | None = None,
    cee_scope: CeeScope | str = CeeScope.FULL,
    per_bit_snr: bool = False,
    block_frames: int = BLOCK_FRAMES,
    constellation: Constellation | None = None,
) -> BerRecord:
    """Estimate the BER of one configuration at one SNR.

    Parameters
    ----------
    csi_mode
        ``CEE`` detects with ``H - E`` where ``E`` has variance ``sigma_e2``
        (default: equal to the noise variance).
    cee_scope
        ``FULL`` perturbs the whole frame-matrix estimate, ``BLOCKS`` only the
        blocks holding a physical channel.
    n0
        Override the noise level implied by ``snr_db`` (the record still
        carries ``snr_db`` as given).
    threads
        Worker threads. Affects wall time only.
    detector
        ``"auto"``, ``"decomposed"``, ``"joint"`` or ``"bruteforce"``. Every
        choice is exact ML; ``auto`` picks the cheapest applicable one.
    """
    config = _require(config)
    csi_mode = CsiMode(csi_mode)
    if constellation is None:
        constellation = build_constellation(config.mod_order, config.constellation_family)
    if n0 is None:
        n0 = snr_to_n0(snr_db, config, per_bit=per_bit_snr).n0
    if csi_mode is CsiMode.CEE:
        sigma_e2 = n0 if sigma_e2 is None else sigma_e2
    else:
        sigma_e2 = None
    simulate = _BlockSimulator(config, constellation, n0, sigma_e2, CeeScope(cee_scope), detector)

    n_blocks = -(-stopping.max_frames // block_frames)

    def run(block: int) -> tuple[int, np.ndarray]:
        frames = min(block_frames, stopping.max_frames - block * block_frames)
        return frames, simulate(block_rng(master_seed, snr_db, block), frames)

    frames_run = 0
    errors = np.zeros(3, dtype=np.int64)
    stop_reason = "max_frames"
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        block = 0
        while block < n_blocks:
            wave = range(block, min(block + max(threads, 1), n_blocks))
            results = pool.map(run, wave) if pool else map(run, wave)
            for frames, counts in results:
                block += 1
                frames_run += frames
                errors += counts
                if errors.sum() >= stopping.min_bit_errors and frames_run >= stopping.min_frames:
                    stop_reason = "min_bit_errors"
                    break
            else:
                continue
            break
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)

    record = BerRecord(
        label=label or config.label,
        snr_db=float(snr_db),
        frames_run=frames_run,
        bits_per_frame=config.bits_per_frame,
        bit_errors_time_index=int(errors[0]),
        bit_errors_antenna_index=int(errors[1]),
        bit_errors_symbol=int(errors[2]),
        stop_reason=stop_reason,
    )
    log.info("%s @ %.2f dB: ber=%.3e (%d frames, %s)", record.label, snr_db, record.ber, frames_run, stop_reason)
    return record


def run_sweep(
    config: ValidatedConfig,
    snr_list: Iterable[float],
    csi_mode: CsiMode | str = CsiMode.PERFECT,
    stopping: StoppingRule = StoppingRule(),
    master_seed: int = 0,
    *,
    ber_floor: float | None = None,
    **kwargs,
) -> list[BerRecord]:
    """:func:`run_point` at every SNR, in ascending SNR order.

    With ``ber_floor`` the sweep ends after the first point whose BER falls
    below it; later (higher-SNR) points are skipped.
    """
    records = []
    for snr in sorted(snr_list):
        record = run_point(config, snr, csi_mode, stopping, master_seed, **kwargs)
        records.append(record)
        if ber_floor is not None and record.ber < ber_floor:
            break
    return records


def _points(curve) -> list[tuple[float, float]]:
    points = []
    for item in curve:
        if isinstance(item, BerRecord):
            points.append((item.snr_db, item.ber))
        else:
            snr, ber = item
            points.append((float(snr), float(ber)))
    return sorted(points)


def snr_at_ber(curve: Sequence, target_ber: float) -> tuple[float, tuple[tuple[float, float], tuple[float, float]]]:
    """SNR where ``curve`` first falls through ``target_ber``.

    SNR is interpolated linearly against ``log10(BER)`` between the last point
    above the target and the next point at or below it. Zero-BER points are
    ignored (their logarithm is undefined).

    Returns the SNR and the two bracketing ``(snr, ber)`` points.
    """
    if not target_ber > 0:
        raise ValueError("target BER must be positive")
    points = [p for p in _points(curve) if p[1] > 0]
    target = math.log10(target_ber)
    for (s0, b0), (s1, b1) in zip(points, points[1:]):
        if b0 > target_ber >= b1:
            l0, l1 = math.log10(b0), math.log10(b1)
            return s0 + (target - l0) * (s1 - s0) / (l1 - l0), ((s0, b0), (s1, b1))
    raise GapError(f"curve does not cross BER {target_ber:g}")


def gap_at_ber(curve_a: Sequence, curve_b: Sequence, target_ber: float) -> float:
    """How many dB more SNR ``curve_b`` needs than ``curve_a`` to reach ``target_ber``."""
    snr_a, _ = snr_at_ber(curve_a, target_ber)
    snr_b, _ = snr_at_ber(curve_b, target_ber)
    return snr_b - snr_a


def is_monotone(records: Sequence[BerRecord], allowed_inversions: int = 1) -> bool:
    """BER non-increasing in SNR, tolerating up to ``allowed_inversions`` rises
    that stay inside the two points' combined 95% intervals."""
    ordered = sorted(records, key=lambda r: r.snr_db)
    inversions = 0
    for lo, hi in zip(ordered, ordered[1:]):
        if hi.ber > lo.ber:
            if hi.ber - lo.ber > hi.ci95_halfwidth + lo.ci95_halfwidth:
                return False
            inversions += 1
    return inversions <= allowed_inversions

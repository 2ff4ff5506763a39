"""Gray-labelled unit-energy PSK and square QAM alphabets."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from imsim.config import ConfigError, Family, is_power_of_two

__all__ = ["Constellation", "build_constellation", "gray_encode", "gray_decode"]


def gray_encode(n):
    return n ^ (n >> 1)


def gray_decode(g):
    """Inverse of :func:`gray_encode`; works elementwise on integer arrays."""
    n = g
    shift = g >> 1
    while np.any(shift):
        n = n ^ shift
        shift = shift >> 1
    return n


@dataclasses.dataclass(frozen=True, eq=False)
class Constellation:
    """Symbol ``m`` carries the big-endian bit label of the integer ``m``.

    Attributes
    ----------
    symbols : ndarray of complex128, shape (M,)
        ``symbols[m]`` is the point whose label is ``m``.
    family : Family
    """

    symbols: np.ndarray
    family: Family

    @property
    def order(self) -> int:
        return self.symbols.shape[0]

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    @property
    def bit_labels(self) -> list[str]:
        k = self.bits_per_symbol
        return [format(m, f"0{k}b") if k else "" for m in range(self.order)]

    @property
    def mean_energy(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))


def build_constellation(order: int, family: Family | str = Family.PSK) -> Constellation:
    """Unit average energy, Gray-labelled alphabet of ``order`` points.

    PSK: label ``m`` sits at angle ``2*pi*gray_decode(m)/M`` so that ring
    neighbours differ in one bit. QAM: each axis is an independent Gray-coded
    PAM of ``sqrt(M)`` levels; ``M = 2`` degenerates to BPSK.
    """
    family = Family(family)
    if not is_power_of_two(order) or order < 2:
        raise ConfigError("mod_order", "power_of_two", f"unsupported order {order}")
    labels = np.arange(order)
    if family is Family.PSK or order == 2:
        position = gray_decode(labels)
        symbols = np.exp(2j * np.pi * position / order)
        # exact values on the axes (BPSK is {+1, -1}, QPSK has no 1e-17 residue)
        symbols = np.where(position * 4 % order == 0, np.round(symbols.real) + 1j * np.round(symbols.imag), symbols)
        return Constellation(symbols.astype(np.complex128), family)

    side = math.isqrt(order)
    if side * side != order:
        raise ConfigError("mod_order", "square_qam", f"QAM needs a square order, got {order}")
    half = side.bit_length() - 1
    i_label = labels >> half
    q_label = labels & (side - 1)
    levels = 2 * np.arange(side) - (side - 1)
    scale = math.sqrt(2.0 * (order - 1) / 3.0)
    symbols = (levels[gray_decode(i_label)] + 1j * levels[gray_decode(q_label)]) / scale
    return Constellation(symbols.astype(np.complex128), family)

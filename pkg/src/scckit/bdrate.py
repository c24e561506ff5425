"""Bjontegaard delta rate between two four-point rate/PSNR curves.

Each curve is fitted with a cubic polynomial of log10(rate) as a function of
PSNR; the fits are integrated over the PSNR range both curves cover and the
mean log-rate gap is turned into a percentage (negative: test needs fewer
bits for the same quality).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

CURVE_POINTS = 4


class BdRateError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class RdPoint:
    quality: float  # PSNR in dB
    bitrate: float  # bits (any consistent unit)

    def __post_init__(self) -> None:
        if not self.bitrate > 0:
            raise BdRateError(f"bitrate must be positive, got {self.bitrate}")
        if not np.isfinite(self.quality):
            raise BdRateError("PSNR must be finite (lossless points carry no rate-distortion slope)")


def _curve(points: Sequence[RdPoint]) -> tuple[np.ndarray, np.ndarray]:
    if len(points) != CURVE_POINTS:
        raise BdRateError(f"a curve needs exactly {CURVE_POINTS} points, got {len(points)}")
    pts = sorted(points)
    q = np.array([p.quality for p in pts], dtype=np.float64)
    r = np.log10(np.array([p.bitrate for p in pts], dtype=np.float64))
    if np.any(np.diff(q) == 0):
        raise BdRateError("duplicate PSNR values in a curve")
    return q, r


def overlap(anchor: Sequence[RdPoint], test: Sequence[RdPoint]) -> tuple[float, float]:
    qa, _ = _curve(anchor)
    qt, _ = _curve(test)
    lo, hi = max(qa[0], qt[0]), min(qa[-1], qt[-1])
    if not hi > lo:
        raise BdRateError(f"PSNR ranges do not overlap ([{qa[0]:.3f}, {qa[-1]:.3f}] vs "
                          f"[{qt[0]:.3f}, {qt[-1]:.3f}])")
    return float(lo), float(hi)


def mean_log_rate_gap(anchor: Sequence[RdPoint], test: Sequence[RdPoint]) -> float:
    """Average of log10(rate_test) - log10(rate_anchor) over the common PSNR range."""
    lo, hi = overlap(anchor, test)
    qa, ra = _curve(anchor)
    qt, rt = _curve(test)
    ia = np.polyint(np.polyfit(qa, ra, 3))
    it = np.polyint(np.polyfit(qt, rt, 3))
    area = (np.polyval(it, hi) - np.polyval(it, lo)) - (np.polyval(ia, hi) - np.polyval(ia, lo))
    return float(area / (hi - lo))


def bd_rate(anchor: Sequence[RdPoint], test: Sequence[RdPoint]) -> float:
    """Percent rate change of ``test`` against ``anchor`` at equal PSNR."""
    return (10.0 ** mean_log_rate_gap(anchor, test) - 1.0) * 100.0


def points(rates: Sequence[float], psnrs: Sequence[float]) -> list[RdPoint]:
    if len(rates) != len(psnrs):
        raise BdRateError("rate and PSNR lists differ in length")
    return [RdPoint(float(q), float(r)) for r, q in zip(rates, psnrs)]

"""Gibbs weighting of near-optimal cuts.

A cut with coherence c has energy E = -c, so the most coherent cuts have
the lowest energies and receive the largest weights under exp(-beta * E).
The inverse temperature is calibrated so that the K lowest-energy cuts carry
a share 1 - K/N of the total weight over the N cuts in the spectrum:

    Z(beta; K) = (1 - K/N) * Z(beta; N),

where Z(beta; K) sums the K largest terms exp(-beta * E_i).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoGapError, SpectrumError

KDE_GRID_POINTS = 512
BETA_RTOL = 1e-10
BRACKET_DOUBLINGS = 200


@dataclass(frozen=True)
class EnergySpectrum:
    energies: tuple

    def __post_init__(self):
        e = tuple(float(x) for x in self.energies)
        if len(e) < 2:
            raise SpectrumError("a spectrum needs at least two energies")
        if any(b < a for a, b in zip(e, e[1:])):
            raise SpectrumError("energies must be sorted ascending")
        if not all(math.isfinite(x) for x in e):
            raise SpectrumError("energies must be finite")
        object.__setattr__(self, "energies", e)

    @property
    def N(self) -> int:
        return len(self.energies)

    @classmethod
    def from_values(cls, energies: Sequence[float]) -> "EnergySpectrum":
        return cls(tuple(sorted(float(x) for x in energies)))


def spectrum_from_cuts(ranked, m: int | None = None) -> EnergySpectrum:
    """Energies of the ``m`` best cuts (all of them by default), ascending."""
    cuts = list(ranked)
    if m is None:
        m = len(cuts)
    if m > len(cuts):
        raise SpectrumError(f"asked for {m} cuts but only {len(cuts)} are available")
    return EnergySpectrum.from_values([-c.coherence + 0.0 for c in cuts[:m]])


# -- K selection -------------------------------------------------------------


def silverman_bandwidth(x: Sequence[float]) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd when the IQR is 0."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return float(0.9 * spread * len(x) ** -0.2)


def kde_curve(energies: Sequence[float], bandwidth: float | None = None, points: int = KDE_GRID_POINTS):
    """Gaussian KDE on a regular grid over [min - 3h, max + 3h]."""
    x = np.asarray(energies, dtype=float)
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise NoGapError("flat spectrum: kernel bandwidth is zero, supply K explicitly")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, points)
    z = (grid[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (len(x) * h * math.sqrt(2 * math.pi))
    return grid, density, h


@dataclass(frozen=True)
class KSuggestion:
    K: int
    threshold: float
    bandwidth: float


def kde_threshold(spectrum: EnergySpectrum, bandwidth: float | None = None) -> KSuggestion:
    """First density minimum after the lowest-energy mode, and the K below it."""
    e = spectrum.energies
    if spectrum.N < 4:
        raise SpectrumError("K suggestion needs at least four energies")
    grid, d, h = kde_curve(e, bandwidth)
    i = 1
    while i < len(d) - 1 and not (d[i] >= d[i - 1] and d[i] > d[i + 1]):
        i += 1
    j = i + 1
    while j < len(d) - 1 and not (d[j] < d[j - 1] and d[j] <= d[j + 1]):
        j += 1
    if j >= len(d) - 1:
        raise NoGapError("density has no minimum above its lowest mode; supply K explicitly")
    threshold = float(grid[j])
    K = sum(1 for x in e if x < threshold)
    while 0 < K < spectrum.N and e[K] == e[K - 1]:
        K += 1
    if K == 0 or K == spectrum.N:
        raise NoGapError("threshold does not separate the spectrum; supply K explicitly")
    return KSuggestion(K, threshold, h)


def suggest_k(spectrum: EnergySpectrum, bandwidth: float | None = None) -> int:
    return kde_threshold(spectrum, bandwidth).K


# -- beta --------------------------------------------------------------------


def _check_k(spectrum: EnergySpectrum, K: int) -> None:
    N = spectrum.N
    if not 1 <= K:
        raise SpectrumError("K must be at least 1")
    if 2 * K >= N:
        raise SpectrumError(f"K = {K} must be below N/2 = {N / 2} for a root at beta >= 0")
    if not spectrum.energies[K] > spectrum.energies[K - 1]:
        raise SpectrumError(f"no strict energy gap between cut {K} and cut {K + 1}")


def calibration_residual(spectrum: EnergySpectrum, K: int, beta: float) -> float:
    """Z(beta; K) - (1 - K/N) Z(beta; N), divided by Z(beta; N)."""
    e0 = spectrum.energies[0]
    terms = [math.exp(-beta * (x - e0)) for x in spectrum.energies]
    zn = math.fsum(terms)
    return (math.fsum(terms[:K]) - (1 - K / spectrum.N) * zn) / zn


def solve_beta(spectrum: EnergySpectrum, K: int, rtol: float = BETA_RTOL) -> float:
    """Inverse temperature at which the K lowest energies hold a 1 - K/N share.

    The residual starts at (2K - N)/N < 0 for beta = 0 and tends to K/N > 0,
    and it increases monotonically, so a bracket found by doubling from
    [0, 1] is refined by bisection.
    """
    _check_k(spectrum, K)

    def f(beta):
        return calibration_residual(spectrum, K, beta)

    lo, hi = 0.0, 1.0
    for _ in range(BRACKET_DOUBLINGS):
        if f(hi) > 0:
            break
        lo, hi = hi, hi * 2
    else:
        raise SpectrumError("could not bracket beta")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gibbs_weights(spectrum: EnergySpectrum | Sequence[float], beta: float) -> list[float]:
    energies = spectrum.energies if isinstance(spectrum, EnergySpectrum) else tuple(spectrum)
    if not math.isfinite(beta):
        raise SpectrumError("beta must be finite")
    logits = [-beta * x for x in energies]
    top = max(logits)
    terms = [math.exp(l - top) for l in logits]
    z = math.fsum(terms)
    return [t / z for t in terms]


@dataclass(frozen=True)
class GibbsResult:
    beta: float
    K: int | None
    weights: tuple
    energies: tuple
    threshold: float | None = None
    bandwidth: float | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "energy", "weight"])
        for i, (e, p) in enumerate(zip(self.energies, self.weights), 1):
            w.writerow([i, repr(e), repr(p)])
        return buf.getvalue()


def analyze_spectrum(
    spectrum: EnergySpectrum,
    K: int | None = None,
    *,
    beta: float | None = None,
    bandwidth: float | None = None,
) -> GibbsResult:
    """Spectrum -> K (suggested unless given) -> beta (solved unless given) -> weights.

    With ``beta`` forced, K is only recorded if supplied.
    """
    threshold = h = None
    if beta is None:
        if K is None:
            s = kde_threshold(spectrum, bandwidth)
            K, threshold, h = s.K, s.threshold, s.bandwidth
        beta = solve_beta(spectrum, K)
    elif not (math.isfinite(beta) and beta >= 0):
        raise SpectrumError("beta must be finite and non-negative")
    return GibbsResult(beta, K, tuple(gibbs_weights(spectrum, beta)), spectrum.energies, threshold, h)


def kde_csv(spectrum: EnergySpectrum, bandwidth: float | None = None) -> str:
    grid, density, _ = kde_curve(spectrum.energies, bandwidth)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["energy", "density"])
    for x, y in zip(grid, density):
        w.writerow([repr(float(x)), repr(float(y))])
    return buf.getvalue()

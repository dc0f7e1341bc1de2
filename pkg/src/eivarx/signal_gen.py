"""Excitation design, noise-free simulation and EIV-ARX measurement corruption."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from .noise_model import ar_roots, check_stable

# Feedback taps (exponents of the primitive polynomial besides 0) for a
# Fibonacci LFSR, one primitive polynomial per register length.
PRIMITIVE_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
    25: (25, 22),
    26: (26, 6, 2, 1),
    27: (27, 5, 2, 1),
    28: (28, 25),
    29: (29, 27),
    30: (30, 6, 4, 1),
    31: (31, 28),
}


@dataclass(frozen=True)
class DifferenceEquation:
    """``y[k] + sum_i a_i y[k-i] = sum_{j=D}^{n_u} b_j u[k-j]``.

    ``a`` holds ``a_1..a_{n_y}`` (the leading 1 is implicit) and ``b`` holds
    ``b_D..b_{n_u}``.
    """

    a: np.ndarray
    b: np.ndarray
    delay: int = 0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).ravel()
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        if b.size == 0:
            raise ValueError("b needs at least one coefficient")
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "delay", int(self.delay))

    @property
    def n_y(self) -> int:
        return self.a.size

    @property
    def n_u(self) -> int:
        return self.delay + self.b.size - 1

    @property
    def eta(self) -> int:
        return max(self.n_y, self.n_u)

    def padded(self, eta: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Coefficients on a common order: ``a_1..a_eta`` and ``b_0..b_eta``."""
        eta = self.eta if eta is None else eta
        if eta < self.eta:
            raise ValueError(f"cannot pad order {self.eta} model down to {eta}")
        a = np.zeros(eta)
        a[: self.n_y] = self.a
        b = np.zeros(eta + 1)
        b[self.delay : self.n_u + 1] = self.b
        return a, b

    def theta(self, eta: Optional[int] = None) -> np.ndarray:
        """Constraint vector for the stacked ``[y[k..k-eta], u[k..k-eta]]``."""
        a, b = self.padded(eta)
        return np.concatenate(([1.0], a, -b))

    @classmethod
    def from_theta(cls, theta, delay: int = 0, n_y: Optional[int] = None,
                   n_u: Optional[int] = None) -> "DifferenceEquation":
        """Inverse of :meth:`theta`; normalizes so the leading entry is 1."""
        theta = np.asarray(theta, dtype=float)
        if theta.size % 2 or theta.size < 2:
            raise ValueError("theta must have even length 2(eta+1)")
        if theta[0] == 0:
            raise ValueError("theta[0] is zero; cannot normalize")
        theta = theta / theta[0]
        eta = theta.size // 2 - 1
        n_y = eta if n_y is None else n_y
        n_u = eta if n_u is None else n_u
        a = theta[1 : n_y + 1]
        b = -theta[eta + 1 + delay : eta + 2 + n_u]
        return cls(a, b, delay)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(ar_roots(self.a)) < 1.0))


@dataclass(frozen=True)
class NoiseSpec:
    sigma2_ey: float
    sigma2_eu: float

    def __post_init__(self):
        if self.sigma2_ey < 0 or self.sigma2_eu < 0:
            raise ValueError("noise variances must be non-negative")


@dataclass
class TimeSeriesPair:
    u: np.ndarray
    y: np.ndarray
    u_star: Optional[np.ndarray] = None
    y_star: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        lengths = {self.u.size, self.y.size}
        for name in ("u_star", "y_star"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=float)
                setattr(self, name, value)
                lengths.add(value.size)
        if len(lengths) != 1:
            raise ValueError(f"series lengths differ: {sorted(lengths)}")

    def __len__(self) -> int:
        return self.u.size

    def subset(self, start: int, stop: Optional[int] = None) -> "TimeSeriesPair":
        sl = slice(start, stop)
        return TimeSeriesPair(
            self.u[sl], self.y[sl],
            None if self.u_star is None else self.u_star[sl],
            None if self.y_star is None else self.y_star[sl],
            self.seed,
        )


def generate_prbs(register_length: int, total_length: int, seed: int = 1,
                  levels: Tuple[float, float] = (-1.0, 1.0)) -> np.ndarray:
    """Maximal-length LFSR sequence mapped onto two levels.

    The seed picks the initial register state (never all zeros), which
    amounts to a cyclic shift of the same m-sequence. Requests longer than
    one period wrap around.
    """
    if register_length not in PRIMITIVE_TAPS:
        raise ValueError(f"register_length must be in [2, 31], got {register_length}")
    if total_length < 0:
        raise ValueError("total_length must be non-negative")
    m = register_length
    period = (1 << m) - 1
    state = int(seed) % period + 1
    # bit i of the register holds s[n+i]; s[n+m] = xor of s[n+m-t] over the taps
    positions = [m - t for t in PRIMITIVE_TAPS[m]]

    n_unique = min(total_length, period)
    bits = np.empty(n_unique, dtype=np.int8)
    for i in range(n_unique):
        bits[i] = state & 1
        feedback = 0
        for pos in positions:
            feedback ^= (state >> pos) & 1
        state = (state >> 1) | (feedback << (m - 1))
    if total_length > period:
        bits = np.resize(bits, total_length)

    low, high = levels
    return np.where(bits == 1, high, low).astype(float)


def simulate_system(model: DifferenceEquation, u_star) -> np.ndarray:
    """Noise-free response with zero initial conditions."""
    check_stable(model.a)
    u_star = np.asarray(u_star, dtype=float)
    if u_star.size < model.eta + 1:
        raise ValueError(f"need at least {model.eta + 1} input samples")
    num = np.concatenate((np.zeros(model.delay), model.b))
    den = np.concatenate(([1.0], model.a))
    return lfilter(num, den, u_star)


def burn_in_length(a) -> int:
    """Samples discarded before the coloured output noise is used."""
    eta = np.asarray(a).size
    n = max(100, 50 * eta)
    roots = ar_roots(a)
    if roots.size:
        radius = float(np.max(np.abs(roots)))
        if radius > 0:
            n = max(n, math.ceil(10.0 / -math.log(radius)))
    return n


def noise_streams(seed: int, n: int, burn: int) -> Tuple[np.ndarray, np.ndarray]:
    """Independent standard normal streams for ``e_y`` (with burn-in) and ``e_u``."""
    ss_y, ss_u = np.random.SeedSequence(seed).spawn(2)
    e_y = np.random.Generator(np.random.PCG64(ss_y)).standard_normal(n + burn)
    e_u = np.random.Generator(np.random.PCG64(ss_u)).standard_normal(n)
    return e_y, e_u


def coloured_noise(a, sigma2_ey: float, n: int, seed: int) -> np.ndarray:
    """Stationary AR noise ``A(q^-1) v = e`` of length ``n``."""
    check_stable(a)
    burn = burn_in_length(a)
    e_y, _ = noise_streams(seed, n, burn)
    v = lfilter([1.0], np.concatenate(([1.0], np.asarray(a, dtype=float))),
                math.sqrt(sigma2_ey) * e_y)
    return v[burn:]


def corrupt_measurements(y_star, u_star, model: DifferenceEquation, noise: NoiseSpec,
                         seed: int) -> TimeSeriesPair:
    """Add ARX-coloured output noise and white input noise."""
    check_stable(model.a)
    y_star = np.asarray(y_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    n = y_star.size
    burn = burn_in_length(model.a)
    e_y, e_u = noise_streams(seed, n, burn)
    den = np.concatenate(([1.0], model.a))
    v_y = lfilter([1.0], den, math.sqrt(noise.sigma2_ey) * e_y)[burn:]
    u = u_star + math.sqrt(noise.sigma2_eu) * e_u
    return TimeSeriesPair(u=u, y=y_star + v_y, u_star=u_star, y_star=y_star, seed=seed)


def snr(signal, noise) -> float:
    """Ratio of sample variances ``var(signal) / var(noise)``."""
    signal = np.asarray(signal, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if signal.shape != noise.shape:
        raise ValueError("signal and noise must have equal length")
    noise_var = np.var(noise)
    if noise_var == 0:
        raise ZeroDivisionError("noise has zero variance")
    return float(np.var(signal) / noise_var)


def register_for_length(n: int) -> int:
    """Smallest register whose full period covers ``n`` samples."""
    m = max(2, math.ceil(math.log2(n + 1)))
    if m > 31:
        raise ValueError(f"no PRBS register long enough for {n} samples")
    return m


def simulate_dataset(model: DifferenceEquation, noise: NoiseSpec, n: int, seed: int,
                     prbs_bits: Optional[int] = None,
                     levels: Tuple[float, float] = (-1.0, 1.0)) -> TimeSeriesPair:
    """PRBS excitation, noise-free response and corruption from a single seed."""
    bits = register_for_length(n) if prbs_bits is None else prbs_bits
    ss_prbs, ss_noise = np.random.SeedSequence(seed).spawn(2)
    prbs_state = int(ss_prbs.generate_state(1)[0])
    noise_seed = int(ss_noise.generate_state(1)[0])
    u_star = generate_prbs(bits, n, prbs_state, levels)
    y_star = simulate_system(model, u_star)
    series = corrupt_measurements(y_star, u_star, model, noise, noise_seed)
    series.seed = seed
    return series


def write_csv(series: TimeSeriesPair, path, include_noise_free: bool = True) -> None:
    """``k,u,y[,u_star,y_star]`` with 12 significant digits and LF endings."""
    noise_free = include_noise_free and series.u_star is not None and series.y_star is not None
    header = ["k", "u", "y"] + (["u_star", "y_star"] if noise_free else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(len(series)):
            row = [series.u[k], series.y[k]]
            if noise_free:
                row += [series.u_star[k], series.y_star[k]]
            writer.writerow([k] + [f"{v:.12g}" for v in row])


def read_csv(path) -> TimeSeriesPair:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = {"u", "y"} - set(fields)
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        rows = list(reader)
    cols = {name: np.array([float(r[name]) for r in rows]) for name in fields}
    return TimeSeriesPair(
        u=cols["u"], y=cols["y"],
        u_star=cols.get("u_star"), y_star=cols.get("y_star"),
    )

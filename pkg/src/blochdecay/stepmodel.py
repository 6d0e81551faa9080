"""Non-unitary two-level step map for interband decay per Bloch cycle.

One Bloch cycle of the tilted lattice is condensed into a single 2x2 map
U acting on the (band-1, band-2) amplitudes at fixed quasimomentum:

  - at the zone edge the avoided crossing mixes the bands through an
    orthogonal rotation with survival amplitude s12 and transition
    amplitude p12 = sqrt(1 - s12^2);
  - between crossings band 2 loses a fraction 1 - s23^2 of its
    population to the (effectively free) higher bands and acquires the
    relative phase phi with respect to band 1,

so U = R(s12) . diag(1, s23 e^{i phi}).  U is contractive with singular
values {1, s23}; iterating it yields the stepped survival probability
P_n, the asymptotic decay rate gamma = -ln |e1|^2, and the intercept Z
of the back-extrapolated exponential envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bands import LatticeParams, bloch_phase, mean_band_gap

MODULUS_TIE_TOL = 1e-12


class DegenerateSpectrumError(ValueError):
    """Step-operator eigenvalues have equal moduli; asymptotics undefined."""


def lz_probability(alpha: float, delta: float) -> float:
    """Two-level sweep transition probability exp(-pi delta^2 / alpha), hbar = 1."""
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"sweep rate must be > 0, got alpha={alpha}")
    if not (math.isfinite(delta) and delta >= 0):
        raise ValueError(f"coupling must be >= 0, got delta={delta}")
    return math.exp(-math.pi * delta ** 2 / alpha)


def lz_transition_time(alpha: float, delta: float) -> float:
    """Effective crossing duration, from sin^2(alpha T / (2 delta)) = P_jump.

    Diagnostic only: the step map assumes this is negligible against the
    Bloch period and never consumes it.
    """
    p = lz_probability(alpha, delta)
    if delta == 0.0:
        return 0.0
    return 2.0 * delta / alpha * math.asin(math.sqrt(p))


def p_lz_12(params: LatticeParams) -> float:
    """Zener jump probability out of band 1 at the zone-edge crossing.

    exp(-pi^2 v0^2 / (32 f0)): the sweep rate is set by the force, the
    half-gap by v0/4.  Goes to 1 at zero depth (free particle never
    Bragg-reflects) and to 0 in the adiabatic limit f0 -> 0.
    """
    return math.exp(-math.pi ** 2 * params.v0 ** 2 / (32.0 * params.f0))


def p_lz_23(params: LatticeParams) -> float:
    """Zener jump probability from band 2 to band 3 at the zone-center crossing.

    exp(-pi^2 v0^4 / (2^14 f0)); the band-2/3 half-gap is v0^2/64 (second
    order in the lattice coupling).  The band-2 survival amplitude per
    cycle is s23 = sqrt(1 - p_lz_23).
    """
    return math.exp(-math.pi ** 2 * params.v0 ** 4 / (16384.0 * params.f0))


@dataclass(frozen=True)
class StepIngredients:
    """Amplitudes and phase entering the per-cycle step operator.

    s12 is the amplitude to remain in band 1 across the edge crossing
    (the adiabatic branch), s23 the amplitude for band 2 to survive
    against loss to band 3, phi the interband phase per cycle.
    """

    s12: float
    s23: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.s12) and 0.0 <= self.s12 <= 1.0):
            raise ValueError(f"need 0 <= s12 <= 1, got {self.s12}")
        if not (math.isfinite(self.s23) and 0.0 <= self.s23 <= 1.0):
            raise ValueError(f"need 0 <= s23 <= 1, got {self.s23}")
        if not math.isfinite(self.phi):
            raise ValueError(f"phase must be finite, got {self.phi}")

    @property
    def p12(self) -> float:
        """Interband transition amplitude, sqrt(1 - s12^2) by construction."""
        return math.sqrt(max(0.0, 1.0 - self.s12 ** 2))

    @classmethod
    def from_lattice(cls, params: LatticeParams, mean_gap: float | None = None,
                     grid_size: int | None = None,
                     cutoff: int | None = None) -> "StepIngredients":
        """Derive the step amplitudes from the lattice parameters.

        Surviving band 1 means following the adiabatic branch through the
        edge crossing, so s12^2 = 1 - p_lz_12; likewise s23^2 = 1 - p_lz_23.
        mean_gap is computed from the band structure when not supplied.
        """
        if mean_gap is None:
            kwargs = {}
            if grid_size is not None:
                kwargs["grid_size"] = grid_size
            if cutoff is not None:
                kwargs["cutoff"] = cutoff
            mean_gap = mean_band_gap(params, **kwargs)
        return cls(
            s12=math.sqrt(max(0.0, 1.0 - p_lz_12(params))),
            s23=math.sqrt(max(0.0, 1.0 - p_lz_23(params))),
            phi=bloch_phase(params, mean_gap),
        )


@dataclass(frozen=True, eq=False)
class StepOperator:
    """One-cycle non-unitary map on the (band-1, band-2) amplitudes."""

    matrix: np.ndarray
    ingredients: StepIngredients


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigensystem of the step operator, |e1| >= |e2|, eigenvectors normalized.

    The eigenvectors are in general non-orthogonal; c1, c2 expand the
    initial band-1 state as (1, 0) = c1 psi1 + c2 psi2.
    """

    e1: complex
    e2: complex
    psi1: np.ndarray
    psi2: np.ndarray
    c1: complex
    c2: complex


@dataclass(frozen=True, eq=False)
class SurvivalSeries:
    """Band-1 survival P_n after each transition, P_0 = 1.

    step_times[n] = t_bloch * (n + 1/2): the n-th plateau extends to the
    (n+1)-th crossing; its center sits at n * t_bloch.
    """

    probabilities: np.ndarray
    step_times: np.ndarray

    def __len__(self) -> int:
        return len(self.probabilities)

    @property
    def t_bloch(self) -> float:
        return 2.0 * float(self.step_times[0])

    def to_json_dict(self) -> dict:
        return {"probabilities": self.probabilities.tolist(),
                "step_times": self.step_times.tolist()}

    def csv_rows(self):
        """Rows (n, t, P) for serialization."""
        for n, (t, p) in enumerate(zip(self.step_times, self.probabilities)):
            yield n, t, p


@dataclass(frozen=True, eq=False)
class RenormFit:
    """Asymptotic per-cycle rate and renormalization with their running estimates."""

    gamma: float
    z: float
    gamma_seq: np.ndarray
    z_seq: np.ndarray
    converged: bool
    tol_achieved: float

    def to_json_dict(self) -> dict:
        return {"gamma": self.gamma, "z": self.z,
                "gamma_seq": self.gamma_seq.tolist(),
                "z_seq": self.z_seq.tolist(),
                "converged": self.converged,
                "tol_achieved": self.tol_achieved}

    def csv_rows(self):
        """Rows (n, gamma_n, Z_n); Z_0 is not defined and reported as nan."""
        for n in range(len(self.gamma_seq)):
            zn = self.z_seq[n - 1] if n >= 1 and n - 1 < len(self.z_seq) else math.nan
            yield n, self.gamma_seq[n], zn


def step_operator(ing: StepIngredients) -> StepOperator:
    """Assemble U = R(s12) diag(1, s23 e^{i phi}).

    The order of the two factors is immaterial for the iteration started
    in band 1, since the diagonal factor acts trivially on (1, 0).
    """
    w = complex(math.cos(ing.phi), math.sin(ing.phi))
    m = np.array([[ing.s12, -ing.p12 * ing.s23 * w],
                  [ing.p12, ing.s12 * ing.s23 * w]], dtype=complex)
    return StepOperator(matrix=m, ingredients=ing)


def evolve_steps(u: StepOperator, n_steps: int, t_bloch: float = 1.0) -> SurvivalSeries:
    """Iterate the step map from band 1 and record P_n = |<1|U^n|1>|^2.

    Direct matrix-vector iteration, kept independent of the spectral
    formulas so each can check the other.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps >= 1 required, got {n_steps}")
    if not (math.isfinite(t_bloch) and t_bloch > 0):
        raise ValueError(f"t_bloch must be > 0, got {t_bloch}")
    v = np.array([1.0 + 0.0j, 0.0 + 0.0j])
    probs = np.empty(n_steps + 1)
    probs[0] = 1.0
    for n in range(1, n_steps + 1):
        v = u.matrix @ v
        probs[n] = abs(v[0]) ** 2
    times = t_bloch * (np.arange(n_steps + 1) + 0.5)
    return SurvivalSeries(probabilities=probs, step_times=times)


def spectral_decompose(u: StepOperator) -> SpectralData:
    """Eigenvalues ordered by modulus and the expansion of the initial state.

    Raises DegenerateSpectrumError when |e1| and |e2| coincide within
    1e-12: the asymptotic rate and Z are undefined there.
    """
    lam, vec = np.linalg.eig(u.matrix)
    order = np.argsort(-np.abs(lam))
    lam = lam[order]
    vec = vec[:, order]
    if abs(abs(lam[0]) - abs(lam[1])) < MODULUS_TIE_TOL:
        raise DegenerateSpectrumError(
            f"eigenvalue moduli coincide: |e1|={abs(lam[0])!r}, |e2|={abs(lam[1])!r}")
    vec = vec / np.linalg.norm(vec, axis=0)
    c = np.linalg.solve(vec, np.array([1.0, 0.0], dtype=complex))
    return SpectralData(e1=complex(lam[0]), e2=complex(lam[1]),
                        psi1=vec[:, 0], psi2=vec[:, 1],
                        c1=complex(c[0]), c2=complex(c[1]))


def gamma_asymptotic(sd: SpectralData) -> float:
    """Asymptotic decay rate per Bloch cycle, -ln |e1|^2."""
    return -2.0 * math.log(abs(sd.e1))


def gamma_sequence(series: SurvivalSeries) -> tuple[np.ndarray, bool]:
    """Per-step rates gamma_n = -ln(P_{n+1}/P_n).

    Returns (rates, truncated); truncated is True when a vanishing P_n
    cut the sequence short.
    """
    p = series.probabilities
    n_zero = np.nonzero(p == 0.0)[0]
    truncated = bool(len(n_zero))
    stop = int(n_zero[0]) if truncated else len(p)
    rates = -np.log(p[1:stop] / p[:stop - 1]) if stop >= 2 else np.empty(0)
    return rates, truncated


def z_exact(sd: SpectralData) -> float:
    """Renormalization parameter Z = |c1|^2 |<1|psi1>|^2.

    The squared overlap between the initial state and the dominant-mode
    back-extrapolation c1 psi1; may fall on either side of 1.
    """
    return abs(sd.c1) ** 2 * abs(sd.psi1[0]) ** 2


def z_first_order(ing: StepIngredients) -> float:
    """First-order estimate Z_1 = 1 + 2 s23 (p12/s12)^2 cos(phi).

    Accurate to O(s23^2) relative to z_exact; the leading correction to
    pure cascade decay, already visible in the second step.
    """
    if ing.s12 <= 0:
        raise ValueError("s12 > 0 required for the first-order estimate")
    return 1.0 + 2.0 * ing.s23 * (ing.p12 / ing.s12) ** 2 * math.cos(ing.phi)


def z_running_estimate(series: SurvivalSeries, n: int) -> float:
    """Running estimate Z_N = exp(N gamma_N - sum_{m<N} gamma_m).

    Converges to z_exact geometrically with ratio |e2/e1|.
    """
    if n < 1:
        raise ValueError(f"N >= 1 required, got {n}")
    if n + 1 >= len(series):
        raise ValueError(
            f"series too short: need at least N + 2 = {n + 2} entries, have {len(series)}")
    rates, truncated = gamma_sequence(series)
    if truncated and len(rates) <= n:
        raise ValueError("survival vanished before step N; Z_N undefined")
    return float(np.exp(n * rates[n] - np.sum(rates[:n])))


def ret_resonances(params: LatticeParams, mean_gap: float, j_max: int) -> np.ndarray:
    """Forces f0 = <dE>/j, j = 1..j_max, where the per-cycle phase winds by -2 pi j.

    At these forces the interference between successive crossings is
    constructive and the decay rate is resonantly enhanced.
    """
    if not (math.isfinite(mean_gap) and mean_gap > 0):
        raise ValueError(f"mean_gap must be > 0, got {mean_gap}")
    if j_max < 1:
        raise ValueError(f"j_max >= 1 required, got {j_max}")
    return mean_gap / np.arange(1, j_max + 1, dtype=float)


def renorm_fit(u: StepOperator, n_steps: int = 20, t_bloch: float = 1.0,
               z_tol: float = 1e-8) -> RenormFit:
    """Assemble the spectral (gamma, Z) with their running sequences.

    converged reflects |Z_N - Z_{N-1}| < z_tol at the last step; the
    geometric convergence of Z_N makes the absolute-difference test safe.
    """
    series = evolve_steps(u, n_steps, t_bloch)
    sd = spectral_decompose(u)
    rates, _ = gamma_sequence(series)
    n_z = len(rates) - 1
    z_seq = np.array([z_running_estimate(series, n) for n in range(1, n_z + 1)])
    if len(z_seq) >= 2:
        tol_achieved = float(abs(z_seq[-1] - z_seq[-2]))
    else:
        tol_achieved = math.inf
    return RenormFit(gamma=gamma_asymptotic(sd), z=z_exact(sd),
                     gamma_seq=rates, z_seq=z_seq,
                     converged=tol_achieved < z_tol, tol_achieved=tol_achieved)

"""Multi-agent Markov reward environments with an enforced mixing rate.

Each individual carries a finite-state chain.  One step of the chain at
round t uses a row-stochastic kernel chosen from (i, t, own arm, treated
fraction of the round-t neighborhood).  Every kernel produced here has the
form

    P = (1 - lam) * (rank-one replay of an anchor distribution) + lam * Q

with lam = exp(-1 / t_mix), so the total-variation contraction
TV(fP, f'P) <= lam * TV(f, f') holds by construction for every reachable
kernel.  Outcomes are bounded in [0, 1] plus mean-zero Gaussian noise.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np

from .graphs import GraphSequence

KernelFamily = Callable[[int, int, int, float], np.ndarray]
OutcomeFamily = Callable[[int, int, int, int, float], float]


def _check_dist(vec: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{what} must be a vector, got shape {v.shape}")
    if v.min() < 0 or abs(v.sum() - 1.0) > 1e-12:
        raise ValueError(f"{what} is not a probability vector: {v}")
    return v


def _check_stochastic(mat: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(mat, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {m.shape}")
    if m.min() < 0:
        raise ValueError(f"{what} has a negative entry")
    rowsums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(rowsums - 1.0) > 1e-12)
    if bad.size:
        raise ValueError(f"{what} row {bad[0]} sums to {rowsums[bad[0]]}, not 1")
    return m


def _as_w_array(w, n: int, horizon: int) -> np.ndarray:
    arr = getattr(w, "w", w)
    arr = np.asarray(arr)
    if arr.shape != (n, horizon):
        raise ValueError(f"assignment shape {arr.shape} does not match (n={n}, T={horizon})")
    return arr.astype(np.int8, copy=False)


@dataclass(frozen=True)
class Environment:
    """Finite-state environment; immutable after construction.

    kernel_family returns the *effective* (mixture) kernel for
    (i, t, own_arm, treated_fraction); outcome_family returns the noiseless
    outcome for (i, t, state, own_arm, treated_fraction).  States are
    0-based internally.
    """

    n_states: int
    t_mix: float
    sigma: float
    kernel_family: KernelFamily
    outcome_family: OutcomeFamily
    initial_dist: np.ndarray

    def __post_init__(self) -> None:
        if self.n_states < 1:
            raise ValueError(f"need n_states >= 1, got {self.n_states}")
        if self.t_mix <= 0:
            raise ValueError(f"need t_mix > 0, got {self.t_mix}")
        if self.sigma < 0:
            raise ValueError(f"need sigma >= 0, got {self.sigma}")
        f = _check_dist(self.initial_dist, "initial_dist")
        if f.size != self.n_states:
            raise ValueError("initial_dist length does not match n_states")
        f.flags.writeable = False
        object.__setattr__(self, "initial_dist", f)

    @property
    def lam(self) -> float:
        """One-step TV contraction factor exp(-1/t_mix)."""
        return math.exp(-1.0 / self.t_mix)

    def kernel(self, i: int, t: int, own_arm: int, treated_frac: float) -> np.ndarray:
        return self.kernel_family(i, t, own_arm, treated_frac)

    def outcome_vector(self, i: int, t: int, own_arm: int, treated_frac: float) -> np.ndarray:
        """Noiseless outcome per state, as a length-n_states vector."""
        return np.array(
            [self.outcome_family(i, t, s, own_arm, treated_frac) for s in range(self.n_states)],
            dtype=np.float64,
        )

    def with_initial(self, initial_dist: np.ndarray) -> "Environment":
        return dataclasses.replace(self, initial_dist=np.asarray(initial_dist, dtype=np.float64))


def treated_fraction(w_local: Iterable[int]) -> float:
    """Fraction treated among a neighborhood's assignments (self included)."""
    arr = np.asarray(list(w_local) if not isinstance(w_local, np.ndarray) else w_local)
    if arr.size == 0:
        raise ValueError("treated_fraction needs a nonempty local assignment")
    return float(arr.mean())


@dataclass(frozen=True)
class PeriodicModulation:
    """Time-periodic shift of the kernel interpolation weight."""

    amplitude: float
    period: float

    def apply(self, t: int, u: float) -> float:
        shifted = u + self.amplitude * math.sin(2.0 * math.pi * t / self.period)
        return min(1.0, max(0.0, shifted))


def _two_point(value, what: str, check) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(value, Mapping):
        lo = check(value[0], f"{what}[0]")
        hi = check(value[1], f"{what}[1]")
    else:
        lo = check(value, what)
        hi = lo
    return lo, hi


def build_env(
    n_states: int,
    t_mix: float,
    sigma: float,
    base_kernels,
    anchor_dists,
    outcome_family: OutcomeFamily,
    initial_dist,
    modulation: PeriodicModulation | None = None,
) -> Environment:
    """Assemble an environment whose kernels contract at rate exp(-1/t_mix).

    base_kernels and anchor_dists are either a single matrix/vector or a
    {0: ..., 1: ...} mapping for the two extreme arm summaries; intermediate
    treated fractions interpolate linearly between the extremes.  The
    effective kernel mixes the anchor replay with the base kernel at weight
    lam = exp(-1/t_mix), which forces the contraction regardless of the base.
    """
    q0, q1 = _two_point(base_kernels, "base kernel", _check_stochastic)
    a0, a1 = _two_point(anchor_dists, "anchor", _check_dist)
    for mat, vec in ((q0, a0), (q1, a1)):
        if mat.shape[0] != n_states or vec.size != n_states:
            raise ValueError("kernel/anchor size does not match n_states")
    lam = math.exp(-1.0 / t_mix)
    ones = np.ones((n_states, 1))

    def kernel(i: int, t: int, own_arm: int, rho: float) -> np.ndarray:
        u = rho if modulation is None else modulation.apply(t, rho)
        base = (1.0 - u) * q0 + u * q1
        anchor = (1.0 - u) * a0 + u * a1
        return (1.0 - lam) * (ones * anchor) + lam * base

    return Environment(
        n_states=n_states,
        t_mix=t_mix,
        sigma=sigma,
        kernel_family=kernel,
        outcome_family=outcome_family,
        initial_dist=initial_dist,
    )


@dataclass(frozen=True)
class OutcomePanel:
    """Realized outcomes (and optionally states) for one simulated run."""

    values: np.ndarray
    states: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be (n, horizon), got shape {v.shape}")
        object.__setattr__(self, "values", v)
        if self.states is not None:
            s = np.asarray(self.states)
            if s.shape != v.shape:
                raise ValueError(f"states shape {s.shape} != values shape {v.shape}")
            object.__setattr__(self, "states", s)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write("i,t,y,state\n")
        for i in range(self.n):
            for t in range(self.horizon):
                state = "" if self.states is None else str(int(self.states[i, t]))
                out.write(f"{i + 1},{t + 1},{self.values[i, t]!r},{state}\n")
        return out.getvalue()


class PropagationResult(NamedTuple):
    """Exact per-(i, t) state laws and conditional mean outcomes for fixed w."""

    dists: np.ndarray  # (n, horizon, n_states)
    means: np.ndarray  # (n, horizon)


def _local_arm_stats(g: GraphSequence, w: np.ndarray, i0: int, t: int) -> tuple[int, float]:
    """Own arm and treated fraction over N_t(i) for 0-based individual i0."""
    nbr = g.neighbors_index(i0 + 1, t)
    local = w[nbr, t - 1]
    return int(w[i0, t - 1]), float(local.mean())


def simulate(env: Environment, g: GraphSequence, w, seed: int) -> OutcomePanel:
    """Draw one panel of states and outcomes under assignment w.

    States start from initial_dist independently per individual; each round
    applies the kernel selected by (own arm, treated fraction); outcomes add
    independent N(0, sigma^2) noise per cell.
    """
    n, horizon = g.n, g.horizon
    warr = _as_w_array(w, n, horizon)
    rng = np.random.default_rng(seed)
    states = np.empty((n, horizon), dtype=np.int64)
    values = np.empty((n, horizon), dtype=np.float64)
    cum_init = np.cumsum(env.initial_dist)
    states[:, 0] = np.searchsorted(cum_init, rng.random(n), side="right")
    kernel_cache: dict[tuple, np.ndarray] = {}
    outcome_cache: dict[tuple, np.ndarray] = {}
    for t in range(1, horizon + 1):
        for i0 in range(n):
            arm, rho = _local_arm_stats(g, warr, i0, t)
            okey = (i0, t, arm, rho)
            gvec = outcome_cache.get(okey)
            if gvec is None:
                gvec = env.outcome_vector(i0 + 1, t, arm, rho)
                outcome_cache[okey] = gvec
            values[i0, t - 1] = gvec[states[i0, t - 1]]
            if t < horizon:
                kkey = (i0, t, arm, rho)
                cum = kernel_cache.get(kkey)
                if cum is None:
                    cum = np.cumsum(env.kernel(i0 + 1, t, arm, rho), axis=1)
                    kernel_cache[kkey] = cum
                u = rng.random()
                states[i0, t] = int(np.searchsorted(cum[states[i0, t - 1]], u, side="right"))
    if env.sigma > 0:
        values = values + env.sigma * rng.standard_normal((n, horizon))
    return OutcomePanel(values=values, states=states)


def propagate_exact(env: Environment, g: GraphSequence, w) -> PropagationResult:
    """Forward state-law propagation and exact conditional outcome means.

    Valid because, for fixed w, the individuals' chains are mutually
    independent: each transition reads only the own state and w.
    """
    n, horizon = g.n, g.horizon
    warr = _as_w_array(w, n, horizon)
    dists = np.empty((n, horizon, env.n_states), dtype=np.float64)
    means = np.empty((n, horizon), dtype=np.float64)
    for i0 in range(n):
        f = env.initial_dist.copy()
        for t in range(1, horizon + 1):
            arm, rho = _local_arm_stats(g, warr, i0, t)
            dists[i0, t - 1] = f
            means[i0, t - 1] = float(f @ env.outcome_vector(i0 + 1, t, arm, rho))
            if t < horizon:
                f = f @ env.kernel(i0 + 1, t, arm, rho)
    return PropagationResult(dists=dists, means=means)


def true_ate(env: Environment, g: GraphSequence) -> float:
    """Exact all-treatment minus all-control average of expected outcomes."""
    ones = np.ones((g.n, g.horizon), dtype=np.int8)
    m1 = propagate_exact(env, g, ones).means
    m0 = propagate_exact(env, g, np.zeros_like(ones)).means
    return float(np.mean(m1 - m0))


class InitialSensitivity(NamedTuple):
    measured: float
    bound: float


def initial_sensitivity(env: Environment, g: GraphSequence, f, f_alt) -> InitialSensitivity:
    """|ATE(f) - ATE(f')| next to its horizon-averaged decay bound.

    Both numbers are reported; the measured value is exact via two
    propagation passes.
    """
    ate_f = true_ate(env.with_initial(f), g)
    ate_g = true_ate(env.with_initial(f_alt), g)
    ts = np.arange(1, g.horizon + 1, dtype=np.float64)
    bound = float(np.exp(-ts / env.t_mix).sum() / (g.n * g.horizon))
    return InitialSensitivity(measured=abs(ate_f - ate_g), bound=bound)


# ---------------------------------------------------------------------------
# Named families and config loading


def outcome_constant(value: float) -> OutcomeFamily:
    def fam(i, t, s, arm, rho):
        return value

    return fam


def outcome_own_arm() -> OutcomeFamily:
    def fam(i, t, s, arm, rho):
        return float(arm)

    return fam


def outcome_state(n_states: int) -> OutcomeFamily:
    """Normalized state readout s / (S - 1); constant 0.5 for one state."""

    def fam(i, t, s, arm, rho):
        return 0.5 if n_states == 1 else s / (n_states - 1)

    return fam


def outcome_treated_frac() -> OutcomeFamily:
    def fam(i, t, s, arm, rho):
        return float(rho)

    return fam


def outcome_state_arm_product(n_states: int) -> OutcomeFamily:
    """State readout gated by the own arm (state-by-arm interaction)."""

    def fam(i, t, s, arm, rho):
        base = 0.5 if n_states == 1 else s / (n_states - 1)
        return base * arm

    return fam


def outcome_mix(
    n_states: int,
    bias: float = 0.2,
    w_state: float = 0.4,
    w_arm: float = 0.2,
    w_frac: float = 0.2,
    amplitude: float = 0.0,
    period: float = 8.0,
) -> OutcomeFamily:
    """Clipped affine blend of state, arm, treated fraction, and a seasonal term."""

    def fam(i, t, s, arm, rho):
        shat = 0.5 if n_states == 1 else s / (n_states - 1)
        v = bias + w_state * shat + w_arm * arm + w_frac * rho
        if amplitude:
            v += amplitude * math.sin(2.0 * math.pi * t / period)
        return min(1.0, max(0.0, v))

    return fam


_BASE_KERNEL_NAMES = ("identity", "uniform", "cycle")


def _named_base_kernel(name: str, n_states: int) -> np.ndarray:
    if name == "identity":
        return np.eye(n_states)
    if name == "uniform":
        return np.full((n_states, n_states), 1.0 / n_states)
    if name == "cycle":
        return np.roll(np.eye(n_states), 1, axis=1)
    raise ValueError(f"unknown base kernel {name!r}, expected one of {_BASE_KERNEL_NAMES}")


def _gap_anchors(n_states: int, gap: float) -> tuple[np.ndarray, np.ndarray]:
    """Anchor pair separated by pushing mass to the lowest/highest state."""
    if not 0.0 <= gap <= 1.0:
        raise ValueError(f"anchor gap {gap} not in [0, 1]")
    uniform = np.full(n_states, 1.0 / n_states)
    lo = (1.0 - gap) * uniform
    lo[0] += gap
    hi = (1.0 - gap) * uniform
    hi[-1] += gap
    return lo, hi


def _parse_initial(text: str, n_states: int) -> np.ndarray:
    text = text.strip()
    if text == "uniform":
        return np.full(n_states, 1.0 / n_states)
    if text.startswith("point:"):
        s = int(text.split(":", 1)[1])
        vec = np.zeros(n_states)
        vec[s] = 1.0
        return vec
    vals = np.array([float(x) for x in text.split(",")], dtype=np.float64)
    return vals


def env_from_spec(spec: Mapping[str, str]) -> Environment:
    """Build an environment from a flat key/value spec (named built-ins).

    Required keys: n_states, t_mix, sigma.  Optional: kernel_base,
    kernel_anchor_gap, kernel_mod_amplitude, kernel_mod_period, outcome,
    outcome_* parameters, initial.
    """
    n_states = int(spec["n_states"])
    t_mix = float(spec["t_mix"])
    sigma = float(spec["sigma"])
    base = _named_base_kernel(spec.get("kernel_base", "identity"), n_states)
    gap = float(spec.get("kernel_anchor_gap", "0.8"))
    a0, a1 = _gap_anchors(n_states, gap)
    modulation = None
    if "kernel_mod_amplitude" in spec:
        modulation = PeriodicModulation(
            amplitude=float(spec["kernel_mod_amplitude"]),
            period=float(spec.get("kernel_mod_period", "8")),
        )
    outcome_name = spec.get("outcome", "state")
    if outcome_name == "constant":
        outcome = outcome_constant(float(spec.get("outcome_value", "0.5")))
    elif outcome_name == "own_arm":
        outcome = outcome_own_arm()
    elif outcome_name == "state":
        outcome = outcome_state(n_states)
    elif outcome_name == "treated_frac":
        outcome = outcome_treated_frac()
    elif outcome_name == "state_arm_product":
        outcome = outcome_state_arm_product(n_states)
    elif outcome_name == "mix":
        outcome = outcome_mix(
            n_states,
            bias=float(spec.get("outcome_bias", "0.2")),
            w_state=float(spec.get("outcome_w_state", "0.4")),
            w_arm=float(spec.get("outcome_w_arm", "0.2")),
            w_frac=float(spec.get("outcome_w_frac", "0.2")),
            amplitude=float(spec.get("outcome_amplitude", "0")),
            period=float(spec.get("outcome_period", "8")),
        )
    else:
        raise ValueError(f"unknown outcome family {outcome_name!r}")
    initial = _parse_initial(spec.get("initial", "uniform"), n_states)
    return build_env(
        n_states=n_states,
        t_mix=t_mix,
        sigma=sigma,
        base_kernels={0: base, 1: base},
        anchor_dists={0: a0, 1: a1},
        outcome_family=outcome,
        initial_dist=initial,
        modulation=modulation,
    )

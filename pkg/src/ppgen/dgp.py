"""Synthetic data generation.

A *world* is one fully specified data-generating process: an outcome surface
per treatment arm, a trial-participation logit, and an observational
treatment-assignment logit, each either a Gaussian-process draw realized on a
lattice or a degree-5 polynomial (the GLM variant).

GP surfaces use the composite kernel

    k((x,u),(x',u')) = a_x x x' + a_u u u' + exp(-(x-x')^2 / (2 l_x^2)
                                                -(u-u')^2 / (2 l_u^2)),

where an inactive length-scale makes the corresponding SE factor identically
one.  Because the kernel is a linear part plus a separable SE product, a draw
decomposes into a random linear trend plus a Kronecker-factorized SE field;
this costs one Cholesky per axis (O(G^3) on the G-point lattice) instead of a
factorization of the full G^2 x G^2 covariance, and is exact in distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, ndtri

from .domain import (
    OS,
    TARGET,
    TRIAL,
    CompositeSample,
    GenerationError,
    GlmLogitParams,
    GlmOutcomeParams,
    KernelParams,
    Observation,
    ScenarioSpec,
    derive_seed,
)

PROB_CLIP = (0.1, 0.9)  # positivity floor/ceiling for GP-drawn probabilities


def kernel_eval(params: KernelParams, p: tuple[float, float], q: tuple[float, float]) -> float:
    """Composite linear + squared-exponential kernel between two (x, u) points."""
    x, u = p
    xq, uq = q
    exponent = 0.0
    if params.l_x is not None:
        exponent += (x - xq) ** 2 / (2.0 * params.l_x**2)
    if params.l_u is not None:
        exponent += (u - uq) ** 2 / (2.0 * params.l_u**2)
    return params.alpha_x * x * xq + params.alpha_u * u * uq + float(np.exp(-exponent))


@dataclass(frozen=True)
class GridFunction:
    """A function on [-1,1]^2 stored as lattice values with bilinear interpolation."""

    grid_size: int
    values: np.ndarray  # shape (G, G); values[i, j] = f(x_i, u_j)
    params: KernelParams
    seed: int

    @cached_property
    def _lattice(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.grid_size)

    def __call__(self, x, u) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        g = self.grid_size - 1
        tx = np.clip((x + 1.0) * 0.5 * g, 0.0, g)
        tu = np.clip((u + 1.0) * 0.5 * g, 0.0, g)
        ix = np.minimum(tx.astype(np.int64), g - 1)
        iu = np.minimum(tu.astype(np.int64), g - 1)
        fx = tx - ix
        fu = tu - iu
        v = self.values
        return (
            v[ix, iu] * (1 - fx) * (1 - fu)
            + v[ix + 1, iu] * fx * (1 - fu)
            + v[ix, iu + 1] * (1 - fx) * fu
            + v[ix + 1, iu + 1] * fx * fu
        )


def _se_factor_cholesky(lattice: np.ndarray, length_scale: float | None) -> np.ndarray:
    """Cholesky factor of one SE axis kernel; a ones column when inactive."""
    if length_scale is None:
        return np.ones((lattice.shape[0], 1))
    diff = lattice[:, None] - lattice[None, :]
    k = np.exp(-(diff**2) / (2.0 * length_scale**2))
    jitter = 1e-8
    while jitter <= 1e-4:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(lattice.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GenerationError("SE kernel factorization failed even at jitter 1e-4")


def sample_gp(params: KernelParams, grid_size: int = 101, seed: int = 0) -> GridFunction:
    """Draw one zero-mean GP surface with the composite kernel on the lattice.

    The linear kernel part is a random plane sqrt(a_x) A x + sqrt(a_u) B u
    with A, B standard normal; the SE part is L_x Z L_u' with Z standard
    normal, which realizes the separable SE covariance exactly.
    """
    if not 21 <= grid_size <= 301:
        raise ValueError("grid_size must lie in [21, 301]")
    rng = np.random.default_rng(seed)
    lattice = np.linspace(-1.0, 1.0, grid_size)
    a, b = rng.standard_normal(2)
    latent = rng.standard_normal((grid_size, grid_size))
    lx = _se_factor_cholesky(lattice, params.l_x)
    lu = _se_factor_cholesky(lattice, params.l_u)
    se_part = lx @ latent[: lx.shape[1], : lu.shape[1]] @ lu.T
    linear = (
        np.sqrt(params.alpha_x) * a * lattice[:, None]
        + np.sqrt(params.alpha_u) * b * lattice[None, :]
    )
    return GridFunction(grid_size, linear + se_part, params, seed)


def _glm_poly(x: np.ndarray, coefs: tuple[float, ...]) -> np.ndarray:
    out = np.zeros_like(x)
    for j, c in enumerate(coefs, start=1):
        out += c * x**j
    return out


def glm_outcome(params: GlmOutcomeParams, x, u) -> np.ndarray:
    """Degree-5 polynomial outcome surface with confounding multiplier gamma."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return (
        params.beta0
        + _glm_poly(x, params.beta_x)
        + params.gamma * (_glm_poly(u, params.beta_u) + _glm_poly(x * u, params.beta_xu))
    )


def glm_logit_prob(params: GlmLogitParams, x, u) -> np.ndarray:
    """1 / (1 + exp(scale*(c0 + sum c_x x^j) + gamma*(u and xu terms))).

    The linear predictor enters with a plus sign inside the exponential, so
    larger values mean lower probability; no clipping is applied here.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lin = params.scale * (params.c0 + _glm_poly(x, params.c_x)) + params.gamma * (
        _glm_poly(u, params.c_u) + _glm_poly(x * u, params.c_xu)
    )
    return expit(-lin)


@dataclass(frozen=True)
class World:
    """A fully realized data-generating process."""

    kind: str  # "gp" | "glm"
    fom: tuple  # (arm 0, arm 1), each GridFunction | GlmOutcomeParams
    ps_logit: object  # GridFunction | GlmLogitParams
    pa_logit: object  # GridFunction | GlmLogitParams
    noise_sigma: float

    def outcome(self, a: int, x, u) -> np.ndarray:
        fom = self.fom[a]
        if self.kind == "gp":
            return fom(x, u)
        return glm_outcome(fom, x, u)

    def participation_prob(self, x, u) -> np.ndarray:
        if self.kind == "gp":
            return np.clip(expit(self.ps_logit(x, u)), *PROB_CLIP)
        return glm_logit_prob(self.ps_logit, x, u)

    def treatment_prob(self, x, u) -> np.ndarray:
        if self.kind == "gp":
            return np.clip(expit(self.pa_logit(x, u)), *PROB_CLIP)
        return glm_logit_prob(self.pa_logit, x, u)


def participation_prob(world: World, x, u) -> np.ndarray:
    """P(S=1 | x, u): the median of sigmoid(L_PS), 0.1 and 0.9 for GP worlds."""
    return world.participation_prob(x, u)


def world_from_spec(spec: ScenarioSpec, seed_tag: object = "world") -> World:
    """Realize a world from a scenario specification, deterministically.

    GP surfaces are drawn with seeds derived from (master_seed, seed_tag,
    component); GLM worlds are already fully parameterized.
    """
    if spec.dgp_kind == "glm":
        return World("glm", spec.fom_params, spec.ps_params, spec.pa_params, spec.noise_sigma)
    fom = tuple(
        sample_gp(spec.fom_params[a], seed=derive_seed(spec.master_seed, seed_tag, "fom", a))
        for a in (0, 1)
    )
    ps = sample_gp(spec.ps_params, seed=derive_seed(spec.master_seed, seed_tag, "ps"))
    pa = sample_gp(spec.pa_params, seed=derive_seed(spec.master_seed, seed_tag, "pa"))
    return World("gp", fom, ps, pa, spec.noise_sigma)


# -- cohort sampling ---------------------------------------------------------


def _draw_conditional(
    world: World, n: int, s_value: int, rng: np.random.Generator, max_batches: int = 10_000
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n (x, u) pairs from P(x, u | S=s) by rejection on uniform draws."""
    xs: list[np.ndarray] = []
    us: list[np.ndarray] = []
    got = 0
    batch = max(4096, 2 * n)
    for _ in range(max_batches):
        x = rng.uniform(-1.0, 1.0, batch)
        u = rng.uniform(-1.0, 1.0, batch)
        p = world.participation_prob(x, u)
        s = rng.random(batch) < p
        keep = s if s_value == TRIAL else ~s
        xs.append(x[keep])
        us.append(u[keep])
        got += int(keep.sum())
        if got >= n:
            x_all = np.concatenate(xs)[:n]
            u_all = np.concatenate(us)[:n]
            return x_all, u_all
    raise GenerationError(f"rejection sampling did not reach {n} draws for s={s_value}")


def draw_trial(world: World, n1: int, seed: int) -> list[Observation]:
    """Trial cohort: P(x,u | S=1) covariates, Bernoulli(1/2) treatment, noisy outcome."""
    if n1 < 1:
        raise ValueError("n1 must be positive")
    rng = np.random.default_rng(seed)
    x, u = _draw_conditional(world, n1, TRIAL, rng)
    a = (rng.random(n1) < 0.5).astype(np.int64)
    eps = rng.standard_normal(n1) * world.noise_sigma
    y = np.where(a == 1, world.outcome(1, x, u), world.outcome(0, x, u)) + eps
    return [
        Observation(float(x[i]), float(u[i]), TRIAL, int(a[i]), float(y[i])) for i in range(n1)
    ]


def draw_target(world: World, n0: int, seed: int) -> list[Observation]:
    """Target cohort: P(x,u | S=0) covariates only."""
    if n0 < 1:
        raise ValueError("n0 must be positive")
    rng = np.random.default_rng(seed)
    x, u = _draw_conditional(world, n0, TARGET, rng)
    return [Observation(float(x[i]), float(u[i]), TARGET) for i in range(n0)]


def generate_trial_target(world: World, n1: int, n0: int, seed: int) -> CompositeSample:
    """A composite sample with exactly n1 trial and n0 target records."""
    trial = draw_trial(world, n1, derive_seed(seed, "trial"))
    target = draw_target(world, n0, derive_seed(seed, "target"))
    return CompositeSample.from_records(trial + target)


def generate_os(world: World, n_os: int, seed: int) -> list[Observation]:
    """Observational cohort: uniform covariates, confounded treatment, noisy outcome."""
    if n_os < 1:
        raise ValueError("n_os must be positive")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n_os)
    u = rng.uniform(-1.0, 1.0, n_os)
    pa = world.treatment_prob(x, u)
    a = (rng.random(n_os) < pa).astype(np.int64)
    eps = rng.standard_normal(n_os) * world.noise_sigma
    y = np.where(a == 1, world.outcome(1, x, u), world.outcome(0, x, u)) + eps
    return [
        Observation(float(x[i]), float(u[i]), OS, int(a[i]), float(y[i])) for i in range(n_os)
    ]


def os_arm_arrays(records: list[Observation], a: int) -> tuple[np.ndarray, np.ndarray]:
    """Covariates and outcomes of the observational records under treatment a."""
    x = np.array([r.x for r in records if r.a == a])
    y = np.array([r.y for r in records if r.a == a])
    return x, y


# -- i.i.d.-noise predictor --------------------------------------------------


def _splitmix64(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic is modular by design here
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class NoisePredictor:
    """A fixed function whose values look like i.i.d. standard normals across x.

    Each value is keyed by a hash of (seed, x quantized at 1e-9), so repeated
    evaluation at the same point returns the same number: this is a genuine
    function, just a useless one as a predictor.
    """

    seed: int

    def predict(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        quantized = np.round(x / 1e-9).astype(np.int64).view(np.uint64)
        seed_key = _splitmix64(np.array(self.seed & (2**64 - 1), dtype=np.uint64))
        mixed = _splitmix64(quantized ^ seed_key)
        uniform = (np.right_shift(mixed, np.uint64(11)).astype(np.float64) + 0.5) / 2**53
        return ndtri(uniform)


def noise_predictor(seed: int) -> NoisePredictor:
    return NoisePredictor(seed)


# -- world export ------------------------------------------------------------


def world_lattice_table(world: World, grid_size: int = 101) -> dict[str, np.ndarray]:
    """Flattened lattice columns (x, u, fom0, fom1, ps, pa) for external plotting."""
    g = np.linspace(-1.0, 1.0, grid_size)
    xg, ug = np.meshgrid(g, g, indexing="ij")
    x, u = xg.ravel(), ug.ravel()
    return {
        "x": x,
        "u": u,
        "fom0": world.outcome(0, x, u),
        "fom1": world.outcome(1, x, u),
        "ps": world.participation_prob(x, u),
        "pa": world.treatment_prob(x, u),
    }

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from ppgen.dgp import (
    GridFunction,
    World,
    draw_target,
    draw_trial,
    generate_os,
    generate_trial_target,
    glm_logit_prob,
    glm_outcome,
    kernel_eval,
    noise_predictor,
    participation_prob,
    sample_gp,
    world_from_spec,
)
from ppgen.domain import (
    OS,
    GlmLogitParams,
    GlmOutcomeParams,
    KernelParams,
    ScenarioSpec,
)

SE_ONLY = KernelParams(0.0, 0.0, 0.5, None)


def constant_grid(value, grid_size=21):
    return GridFunction(grid_size, np.full((grid_size, grid_size), float(value)), SE_ONLY, 0)


def flat_world(fom1=2.0, fom0=0.0, ps_logit=0.0, pa_logit=0.0, noise=0.0):
    return World(
        "gp",
        (constant_grid(fom0), constant_grid(fom1)),
        constant_grid(ps_logit),
        constant_grid(pa_logit),
        noise,
    )


# -- kernel ---------------------------------------------------------------------


def test_kernel_zero_distance():
    params = KernelParams(10.0, 0.0, 1.0, None)
    assert kernel_eval(params, (0.5, 0.3), (0.5, 0.3)) == pytest.approx(3.5)


def test_kernel_se_term():
    params = KernelParams(0.0, 0.0, 1.0, None)
    assert kernel_eval(params, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(np.exp(-0.5))


def test_kernel_participation_params_ignore_u():
    params = KernelParams(10.0, 0.0, 1.0, None)  # the trial-participation kernel
    base = kernel_eval(params, (0.3, -0.8), (0.7, 0.2))
    for u, uq in [(0.0, 0.0), (1.0, -1.0), (-0.5, 0.9)]:
        assert kernel_eval(params, (0.3, u), (0.7, uq)) == pytest.approx(base)


# -- GP sampling ------------------------------------------------------------------


def test_sample_gp_deterministic():
    a = sample_gp(SE_ONLY, grid_size=21, seed=42)
    b = sample_gp(SE_ONLY, grid_size=21, seed=42)
    assert np.array_equal(a.values, b.values)


def test_sample_gp_marginal_moments():
    values = np.array(
        [sample_gp(SE_ONLY, grid_size=21, seed=s).values[10, 10] for s in range(10_000)]
    )
    k_pp = kernel_eval(SE_ONLY, (0.0, 0.0), (0.0, 0.0))
    assert abs(values.mean()) < 3 * values.std() / 100
    assert abs(values.var() - k_pp) < 0.05 * k_pp


def test_sample_gp_inactive_u_axis_constant():
    grid = sample_gp(KernelParams(1.0, 0.0, 0.5, None), grid_size=31, seed=3)
    assert np.max(np.ptp(grid.values, axis=1)) < 1e-9


def test_sample_gp_grid_size_bounds():
    with pytest.raises(ValueError):
        sample_gp(SE_ONLY, grid_size=20)


def test_grid_function_interpolation():
    g = np.linspace(-1, 1, 21)
    values = g[:, None] * 2 + 0.5 * g[None, :]  # bilinear surface: interp is exact
    fn = GridFunction(21, values, SE_ONLY, 0)
    assert fn(g[3], g[7])[0] == pytest.approx(values[3, 7])
    assert fn(0.05, -0.13)[0] == pytest.approx(2 * 0.05 + 0.5 * -0.13)


# -- participation probability ----------------------------------------------------


def test_participation_prob_examples():
    assert participation_prob(flat_world(ps_logit=0.0), 0.0, 0.0)[0] == pytest.approx(0.5)
    assert participation_prob(flat_world(ps_logit=10.0), 0.0, 0.0)[0] == pytest.approx(0.9)
    assert participation_prob(flat_world(ps_logit=-2.1972), 0.0, 0.0)[0] == pytest.approx(0.1, abs=1e-4)


def test_participation_prob_always_clipped():
    world = world_from_spec(_gp_spec(), "clip-test")
    rng = np.random.default_rng(0)
    p = world.participation_prob(rng.uniform(-1, 1, 10_000), rng.uniform(-1, 1, 10_000))
    assert p.min() >= 0.1 and p.max() <= 0.9


# -- cohort generation --------------------------------------------------------------


def _gp_spec(n1=200, n0=500, n_os=500, seed=5):
    return ScenarioSpec(
        dgp_kind="gp",
        fom_params=(KernelParams(1.0, 1.0, 0.5, None), KernelParams(1.0, 1.0, 0.5, None)),
        ps_params=KernelParams(10.0, 0.0, 1.0, None),
        pa_params=KernelParams(1.0, 0.0, 1.0, 0.5),
        n1=n1,
        n0=n0,
        n_os=n_os,
        noise_sigma=0.0,
        master_seed=seed,
    )


def test_exact_cohort_sizes():
    world = world_from_spec(_gp_spec(), "sizes")
    sample = generate_trial_target(world, 200, 20_000, seed=1)
    assert (sample.n1, sample.n0) == (200, 20_000)


def test_constant_world_outcomes():
    sample = generate_trial_target(flat_world(fom1=2.0), 50, 10, seed=2)
    for rec in sample.records:
        if rec.s == 1 and rec.a == 1:
            assert rec.y == pytest.approx(2.0, abs=1e-12)


def test_trial_treatment_fraction_clt_band():
    world = flat_world()
    trial = draw_trial(world, 10_000, seed=3)
    frac = np.mean([r.a for r in trial])
    assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / 10_000)


def test_noise_free_consistency():
    world = world_from_spec(_gp_spec(), "consistency")
    trial = draw_trial(world, 500, seed=4)
    for rec in trial:
        assert rec.y == pytest.approx(float(world.outcome(rec.a, rec.x, rec.u)[0]), abs=1e-12)


def test_trial_randomization_chi_square():
    world = world_from_spec(_gp_spec(), "chi2")
    trial = draw_trial(world, 50_000, seed=6)
    x = np.array([r.x for r in trial])
    a = np.array([r.a for r in trial])
    bins = np.digitize(x, np.linspace(-1, 1, 11)[1:-1])
    table = np.array([[np.sum((bins == b) & (a == t)) for t in (0, 1)] for b in range(10)])
    _, p_value, _, _ = chi2_contingency(table)
    assert p_value > 0.001


def test_os_counts_and_balanced_treatment():
    records = generate_os(flat_world(pa_logit=0.0), 50_000, seed=7)
    assert len(records) == 50_000
    assert all(r.s == OS for r in records)
    frac = np.mean([r.a for r in records])
    assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / 50_000)


def test_os_treatment_independent_of_u_without_confounding():
    world = world_from_spec(_gp_spec(), "no-conf")  # pa has alpha_u=0... override below
    spec = _gp_spec()
    spec = ScenarioSpec(
        dgp_kind="gp",
        fom_params=spec.fom_params,
        ps_params=spec.ps_params,
        pa_params=KernelParams(1.0, 0.0, 1.0, None),  # no u dependence at all
        n1=200,
        n0=500,
        n_os=50_000,
        noise_sigma=0.0,
        master_seed=5,
    )
    world = world_from_spec(spec, "no-conf")
    records = generate_os(world, 50_000, seed=8)
    u = np.array([r.u for r in records])
    a = np.array([r.a for r in records])
    lo, hi = a[u < 0], a[u >= 0]
    se = np.sqrt(lo.var() / lo.size + hi.var() / hi.size)
    assert abs(lo.mean() - hi.mean()) < 3 * se


def test_target_records_carry_no_outcome():
    target = draw_target(flat_world(), 100, seed=9)
    assert all(r.a is None and r.y is None for r in target)


# -- GLM variant -----------------------------------------------------------------


def test_glm_outcome_gamma_zero_ignores_u():
    params = GlmOutcomeParams(0.3, (1, 0, 2, 0, 0), (5, 5, 5, 5, 5), (1, 1, 1, 1, 1), gamma=0.0)
    x = np.linspace(-1, 1, 11)
    for u in (-1.0, 0.0, 0.7):
        assert np.allclose(glm_outcome(params, x, np.full(11, u)), glm_outcome(params, x, np.zeros(11)))


def test_glm_outcome_zero_params():
    params = GlmOutcomeParams(0.0, (0,) * 5, (0,) * 5, (0,) * 5, gamma=1.0)
    assert glm_outcome(params, 0.3, -0.7)[0] == 0.0


def test_glm_outcome_hand_value():
    params = GlmOutcomeParams(1.0, (2, 0, 0, 0, 0), (0,) * 5, (0,) * 5, gamma=0.0)
    assert glm_outcome(params, 0.5, 0.0)[0] == pytest.approx(2.0)


def test_glm_logit_prob_zero_coefficients():
    params = GlmLogitParams(0.0, (0,) * 5, (0,) * 5, (0,) * 5, gamma=0.0, scale=1.0)
    assert glm_logit_prob(params, 0.3, 0.3)[0] == pytest.approx(0.5)


def test_glm_logit_prob_plus_sign_convention():
    params = GlmLogitParams(1.0, (0,) * 5, (0,) * 5, (0,) * 5, gamma=0.0, scale=1.0)
    assert glm_logit_prob(params, 0.0, 0.0)[0] == pytest.approx(1 / (1 + np.e))


def test_glm_logit_prob_scale_sharpens():
    params1 = GlmLogitParams(0.4, (0.5, -0.2, 0.1, 0.0, 0.3), (0,) * 5, (0,) * 5, 0.0, scale=1.0)
    params2 = GlmLogitParams(0.4, (0.5, -0.2, 0.1, 0.0, 0.3), (0,) * 5, (0,) * 5, 0.0, scale=2.0)
    x = np.linspace(-1, 1, 41)
    p1 = glm_logit_prob(params1, x, np.zeros(41))
    p2 = glm_logit_prob(params2, x, np.zeros(41))
    assert np.all(np.abs(p2 - 0.5) >= np.abs(p1 - 0.5) - 1e-12)


# -- noise predictor ---------------------------------------------------------------


def test_noise_predictor_is_a_function():
    f = noise_predictor(seed=13)
    x = np.array([0.123456789, -0.5, 0.123456789])
    vals = f.predict(x)
    assert vals[0] == vals[2]
    assert np.array_equal(vals, f.predict(x))


def test_noise_predictor_moments():
    f = noise_predictor(seed=14)
    x = np.linspace(-1, 1, 10_000)
    vals = f.predict(x)
    assert abs(vals.mean()) < 3 / np.sqrt(10_000)
    assert abs(vals.var() - 1.0) < 0.1


def test_noise_predictor_uncorrelated_with_smooth_functions():
    f = noise_predictor(seed=15)
    x = np.linspace(-1, 1, 10_000)
    vals = f.predict(x)
    for g in (np.sin(3 * x), x**2, np.exp(x)):
        corr = np.corrcoef(vals, g)[0, 1]
        assert abs(corr) < 0.05


# -- full-pipeline determinism -------------------------------------------------------


def test_pipeline_determinism():
    spec = _gp_spec(seed=77)
    world_a = world_from_spec(spec, "det")
    world_b = world_from_spec(spec, "det")
    sample_a = generate_trial_target(world_a, spec.n1, spec.n0, seed=spec.master_seed)
    sample_b = generate_trial_target(world_b, spec.n1, spec.n0, seed=spec.master_seed)
    assert sample_a == sample_b
    os_a = generate_os(world_a, spec.n_os, seed=spec.master_seed)
    os_b = generate_os(world_b, spec.n_os, seed=spec.master_seed)
    assert os_a == os_b

"""Point estimators of the target-population mean potential outcome.

Regression-based: the trial-only outcome model (OM), the observational
predictor applied directly (OS-OM), additive bias correction (ABC), and the
augmented outcome model (AOM).  Weighting-based: inverse-odds weighting (IPW)
and three doubly-robust combinations (DR, DR-ABC, DR-PA).

Every estimator sees only observed covariates, treatments and outcomes; the
hidden covariate never enters any code path here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import TARGET, TRIAL, CompositeSample, EstimateRecord, PositivityError
from .regression import DEFAULT_PENALTY_GRID, RidgeFit, logistic_fit, ridge_cv


@dataclass(frozen=True)
class EstimatorConfig:
    """Trial-side fitting configuration shared by the regression estimators."""

    degree: int
    a: int = 1
    penalty_grid: tuple[float, ...] = tuple(DEFAULT_PENALTY_GRID)
    n_folds: int = 5
    fold_seed: int = 0

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")


@dataclass(frozen=True)
class NuisanceSet:
    """Trial-participation and treatment-assignment nuisances for weighting.

    ``pi_a`` is the known randomization probability, not an estimate.
    ``p_hat`` must expose predict(x) -> P(S=1 | x) over the composite
    (trial + target) sample.
    """

    p_hat_marginal: float
    p_hat: object
    pi_a: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p_hat_marginal < 1.0:
            raise ValueError("marginal participation probability must lie in (0,1)")


def fit_nuisances(
    sample: CompositeSample, degree: int, penalty: float = 1e-6
) -> NuisanceSet:
    """Fit P(S=1|X) by penalized logistic regression on the composite sample."""
    arr_s = sample.s_array()
    keep = arr_s != 2  # trial + target records only
    labels = (arr_s[keep] == TRIAL).astype(float)
    fit = logistic_fit(sample.x_array()[keep], labels, degree, penalty)
    return NuisanceSet(p_hat_marginal=sample.n1 / (sample.n1 + sample.n0), p_hat=fit)


def _trial_arm(sample: CompositeSample, cfg: EstimatorConfig) -> tuple[np.ndarray, np.ndarray]:
    x, y = sample.trial_arm_arrays(cfg.a)
    if x.shape[0] < cfg.degree + 2:
        raise ValueError(
            f"trial arm a={cfg.a} has {x.shape[0]} records; need at least degree+2"
        )
    if sample.n0 < 1:
        raise ValueError("no target records")
    return x, y


def _fit_trial(cfg, targets, x, extra_column=None) -> RidgeFit:
    return ridge_cv(
        x,
        targets,
        cfg.degree,
        penalty_grid=cfg.penalty_grid,
        n_folds=cfg.n_folds,
        fold_seed=cfg.fold_seed,
        extra_column=extra_column,
    )


def estimate_om(sample: CompositeSample, cfg: EstimatorConfig) -> EstimateRecord:
    """Outcome model: fit the trial arm, average predictions over the target."""
    x, y = _trial_arm(sample, cfg)
    fit = _fit_trial(cfg, y, x)
    est = float(np.mean(fit.predict(sample.target_x())))
    return EstimateRecord("om", cfg.degree, est, cfg.a)


def categorical_point_estimate(target_props: np.ndarray, group_means: np.ndarray) -> float:
    """The categorical outcome-model estimate: sum_k p0(k) * mean_k."""
    return float(np.dot(target_props, group_means))


def estimate_om_categorical(sample: CompositeSample, a: int) -> EstimateRecord:
    """Outcome model for categorical covariates: target-weighted group means.

    Groups are the distinct covariate values present in the target sample; a
    group with positive target proportion but no trial-arm record is a
    positivity failure.
    """
    x0 = sample.target_x()
    x1, y1 = sample.trial_arm_arrays(a)
    groups = np.unique(x0)
    props = np.empty(groups.shape[0])
    means = np.empty(groups.shape[0])
    for i, k in enumerate(groups):
        props[i] = np.mean(x0 == k)
        arm = y1[x1 == k]
        if arm.shape[0] == 0:
            raise PositivityError(f"target group {k} has no trial-arm records")
        means[i] = np.mean(arm)
    est = categorical_point_estimate(props, means)
    return EstimateRecord("om-categorical", 0, est, a)


def estimate_os_om(sample: CompositeSample, f_a) -> EstimateRecord:
    """Average the observational predictor over the target sample; no trial data."""
    if sample.n0 < 1:
        raise ValueError("no target records")
    est = float(np.mean(f_a.predict(sample.target_x())))
    return EstimateRecord("os-om", -1, est, 1)


def estimate_abc(sample: CompositeSample, f_a, cfg: EstimatorConfig) -> EstimateRecord:
    """Additive bias correction: subtract a trial-fitted bias of the predictor.

    Fits the prediction errors z_i = f(x_i) - y_i on the trial arm, then
    averages f - fitted-bias over the target.
    """
    x, y = _trial_arm(sample, cfg)
    z = f_a.predict(x) - y
    bias_fit = _fit_trial(cfg, z, x)
    x0 = sample.target_x()
    est = float(np.mean(f_a.predict(x0) - bias_fit.predict(x0)))
    return EstimateRecord("abc", cfg.degree, est, cfg.a)


def estimate_aom(sample: CompositeSample, f_a, cfg: EstimatorConfig) -> EstimateRecord:
    """Augmented outcome model: the predictor becomes an extra regressor."""
    x, y = _trial_arm(sample, cfg)
    fit = _fit_trial(cfg, y, x, extra_column=f_a)
    est = float(np.mean(fit.predict(sample.target_x())))
    return EstimateRecord("aom", cfg.degree, est, cfg.a)


# -- weighting-based estimators ----------------------------------------------


def _weight_pieces(sample: CompositeSample, nuis: NuisanceSet, a: int):
    """Shared scaffolding for the weighted estimators.

    Returns the trial-arm mask, target mask, inverse-odds weights on the
    trial arm, the 1/(n(1-p)) normalizer, and any extreme-weight warnings.
    """
    arr_s = sample.s_array()
    keep = arr_s != 2
    x = sample.x_array()[keep]
    s = arr_s[keep]
    a_arr = sample.a_array()[keep]
    y = sample.y_array()[keep]
    trial_arm = (s == TRIAL) & (a_arr == a)
    target = s == TARGET
    p_x = np.asarray(nuis.p_hat.predict(x[trial_arm]), dtype=float)
    warnings = ()
    if trial_arm.any() and ((p_x <= 1e-3) | (p_x >= 1 - 1e-3)).any():
        warnings = ("extreme participation probabilities in inverse-odds weights",)
    weights = (1.0 - p_x) / (p_x * nuis.pi_a)
    n = s.shape[0]
    norm = 1.0 / (n * (1.0 - nuis.p_hat_marginal))
    return x, y, trial_arm, target, weights, norm, warnings


def estimate_ipw(sample: CompositeSample, nuis: NuisanceSet, a: int = 1) -> EstimateRecord:
    """Inverse-odds weighting of trial-arm outcomes."""
    x, y, trial_arm, _, weights, norm, warns = _weight_pieces(sample, nuis, a)
    if not trial_arm.any():
        raise ValueError("empty trial arm")
    est = norm * float(np.sum(weights * y[trial_arm]))
    return EstimateRecord("ipw", -1, est, a, warnings=warns)


def estimate_dr_baseline(
    sample: CompositeSample,
    nuis: NuisanceSet,
    cfg: EstimatorConfig,
    outcome_fit=None,
) -> EstimateRecord:
    """Doubly-robust baseline: outcome-model term plus weighted residuals.

    ``outcome_fit`` overrides the internally fitted trial-arm regression
    (used for the robustness checks with deliberately corrupted fits).
    """
    if outcome_fit is None:
        x1, y1 = _trial_arm(sample, cfg)
        outcome_fit = _fit_trial(cfg, y1, x1)
    x, y, trial_arm, target, weights, norm, warns = _weight_pieces(sample, nuis, cfg.a)
    g_target = outcome_fit.predict(x[target])
    g_trial = outcome_fit.predict(x[trial_arm])
    est = norm * (
        float(np.sum(g_target)) + float(np.sum(weights * (y[trial_arm] - g_trial)))
    )
    return EstimateRecord("dr", cfg.degree, est, cfg.a, warnings=warns)


def estimate_dr_abc(
    sample: CompositeSample,
    f_a,
    nuis: NuisanceSet,
    cfg: EstimatorConfig,
    bias_fit=None,
) -> EstimateRecord:
    """Doubly-robust additive bias correction.

    The bias estimate and its weighted residual are *subtracted* from the
    target average of the predictor; this is the sign under which the
    estimator reduces to ABC when the weighted residuals vanish and to IPW
    when both regression components are zero, recovering the identification
    target in both limits.
    """
    if bias_fit is None:
        x1, y1 = _trial_arm(sample, cfg)
        bias_fit = _fit_trial(cfg, f_a.predict(x1) - y1, x1)
    x, y, trial_arm, target, weights, norm, warns = _weight_pieces(sample, nuis, cfg.a)
    z_trial = f_a.predict(x[trial_arm]) - y[trial_arm]
    b_target = bias_fit.predict(x[target])
    b_trial = bias_fit.predict(x[trial_arm])
    f_target_mean = float(np.mean(f_a.predict(x[target])))
    correction = norm * (
        float(np.sum(b_target)) + float(np.sum(weights * (z_trial - b_trial)))
    )
    return EstimateRecord("dr-abc", cfg.degree, f_target_mean - correction, cfg.a, warnings=warns)


def estimate_dr_aom(
    sample: CompositeSample,
    f_a,
    nuis: NuisanceSet,
    cfg: EstimatorConfig,
    augmented_fit=None,
) -> EstimateRecord:
    """Doubly-robust augmented outcome model (DR-PA)."""
    if augmented_fit is None:
        x1, y1 = _trial_arm(sample, cfg)
        augmented_fit = _fit_trial(cfg, y1, x1, extra_column=f_a)
    x, y, trial_arm, target, weights, norm, warns = _weight_pieces(sample, nuis, cfg.a)
    h_target = augmented_fit.predict(x[target])
    h_trial = augmented_fit.predict(x[trial_arm])
    est = norm * (
        float(np.sum(h_target)) + float(np.sum(weights * (y[trial_arm] - h_trial)))
    )
    return EstimateRecord("dr-pa", cfg.degree, est, cfg.a, warnings=warns)

"""Core data types shared by every other module.

An observation is one record of the composite sample: an observed covariate,
a population label, and (for trial / observational records) a treatment and
an outcome.  Each record also carries the hidden covariate that drives
confounding in the synthetic worlds; estimator code must never read it, so
it is exposed only through the oracle-flagged accessors below
(``hidden_u_array``, ``include_hidden=`` in the CSV writer) and can be
stripped wholesale with :meth:`CompositeSample.public`.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Population labels.
TARGET = 0
TRIAL = 1
OS = 2

_LABELS = (TARGET, TRIAL, OS)


class PositivityError(ValueError):
    """A covariate group present in the target has no trial support."""


class GenerationError(RuntimeError):
    """Synthetic data generation failed (e.g. covariance factorization)."""


def derive_seed(*parts) -> int:
    """Derive a stable 64-bit seed from an arbitrary tuple of parts.

    Uses blake2b over the reprs, so results do not depend on
    PYTHONHASHSEED or on the process the call runs in.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class Observation:
    """One composite-sample record (x, s, s*a, s*y) plus the hidden covariate."""

    x: float
    u: float
    s: int
    a: int | None = None
    y: float | None = None

    def __post_init__(self):
        if self.s not in _LABELS:
            raise ValueError(f"unknown population label {self.s}")
        has_a, has_y = self.a is not None, self.y is not None
        if has_a != has_y:
            raise ValueError("treatment and outcome must be both present or both absent")
        if (self.s == TARGET) == has_a:
            raise ValueError("treatment/outcome present iff the record is not a target record")


@dataclass(frozen=True)
class CompositeSample:
    """An ordered collection of observations with trial/target counts.

    ``n1``/``n0`` count trial and target records; observational records may
    be carried alongside but do not enter either count.
    """

    records: tuple[Observation, ...]
    n1: int
    n0: int

    @staticmethod
    def from_records(records: Iterable[Observation]) -> "CompositeSample":
        recs = tuple(records)
        n1 = sum(1 for r in recs if r.s == TRIAL)
        n0 = sum(1 for r in recs if r.s == TARGET)
        return CompositeSample(recs, n1, n0)

    def __post_init__(self):
        n1 = sum(1 for r in self.records if r.s == TRIAL)
        n0 = sum(1 for r in self.records if r.s == TARGET)
        if (n1, n0) != (self.n1, self.n0):
            raise ValueError("n1/n0 do not match the record labels")

    # -- array views ---------------------------------------------------
    # Estimators consume these; none of them expose the hidden covariate.

    @cached_property
    def _arrays(self) -> dict[str, np.ndarray]:
        n = len(self.records)
        x = np.empty(n)
        s = np.empty(n, dtype=np.int64)
        a = np.full(n, -1, dtype=np.int64)
        y = np.full(n, np.nan)
        for i, r in enumerate(self.records):
            x[i] = r.x
            s[i] = r.s
            if r.a is not None:
                a[i] = r.a
                y[i] = r.y
        return {"x": x, "s": s, "a": a, "y": y}

    def x_array(self) -> np.ndarray:
        return self._arrays["x"]

    def s_array(self) -> np.ndarray:
        return self._arrays["s"]

    def a_array(self) -> np.ndarray:
        """Treatments; -1 where absent (target records)."""
        return self._arrays["a"]

    def y_array(self) -> np.ndarray:
        """Outcomes; NaN where absent (target records)."""
        return self._arrays["y"]

    def target_x(self) -> np.ndarray:
        arr = self._arrays
        return arr["x"][arr["s"] == TARGET]

    def trial_arm_arrays(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Covariates and outcomes of trial records with treatment ``a``."""
        arr = self._arrays
        mask = (arr["s"] == TRIAL) & (arr["a"] == a)
        return arr["x"][mask], arr["y"][mask]

    def hidden_u_array(self) -> np.ndarray:
        """Oracle accessor: the hidden covariate of every record, in order."""
        return np.array([r.u for r in self.records])

    def public(self) -> "CompositeSample":
        """A copy with the hidden covariate blanked out (NaN) on every record."""
        return CompositeSample(
            tuple(replace(r, u=math.nan) for r in self.records), self.n1, self.n0
        )


def partition(sample: CompositeSample, s: int, a: int | None = None) -> list[Observation]:
    """Records of ``sample`` with population label ``s`` (and treatment ``a`` if given)."""
    if not sample.records:
        raise ValueError("empty sample")
    out = [r for r in sample.records if r.s == s and (a is None or r.a == a)]
    return out


# -- scenario specifications ------------------------------------------------


@dataclass(frozen=True)
class KernelParams:
    """Linear + squared-exponential kernel weights for one GP-drawn function.

    A length-scale of ``None`` marks the inactive axis: the SE factor along
    that axis is identically 1 (the infinite-length-scale limit, exactly).
    """

    alpha_x: float
    alpha_u: float
    l_x: float | None
    l_u: float | None

    def __post_init__(self):
        if self.alpha_x < 0 or self.alpha_u < 0:
            raise ValueError("linear-kernel weights must be nonnegative")
        for l in (self.l_x, self.l_u):
            if l is not None and not l > 0:
                raise ValueError("active length-scales must be strictly positive")


@dataclass(frozen=True)
class GlmOutcomeParams:
    """Degree-5 polynomial outcome surface with confounding multiplier."""

    beta0: float
    beta_x: tuple[float, ...]
    beta_u: tuple[float, ...]
    beta_xu: tuple[float, ...]
    gamma: float

    def __post_init__(self):
        for arr in (self.beta_x, self.beta_u, self.beta_xu):
            if len(arr) != 5:
                raise ValueError("coefficient arrays must have length 5")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass(frozen=True)
class GlmLogitParams:
    """Degree-5 polynomial logit for participation / treatment probabilities."""

    c0: float
    c_x: tuple[float, ...]
    c_u: tuple[float, ...]
    c_xu: tuple[float, ...]
    gamma: float
    scale: float = 1.0

    def __post_init__(self):
        for arr in (self.c_x, self.c_u, self.c_xu):
            if len(arr) != 5:
                raise ValueError("coefficient arrays must have length 5")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to rebuild one synthetic world and its samples."""

    dgp_kind: str  # "gp" | "glm"
    fom_params: tuple  # (arm-0 params, arm-1 params)
    ps_params: KernelParams | GlmLogitParams
    pa_params: KernelParams | GlmLogitParams
    n1: int
    n0: int
    n_os: int
    noise_sigma: float
    predictor_kind: str = "learned"  # "learned" | "iid_noise"
    master_seed: int = 0

    def __post_init__(self):
        if self.dgp_kind not in ("gp", "glm"):
            raise ValueError(f"unknown dgp kind {self.dgp_kind!r}")
        if self.predictor_kind not in ("learned", "iid_noise"):
            raise ValueError(f"unknown predictor kind {self.predictor_kind!r}")
        if min(self.n1, self.n0, self.n_os) < 1:
            raise ValueError("sample sizes must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


# -- result records ----------------------------------------------------------


@dataclass(frozen=True)
class EstimateRecord:
    """A single point estimate of the target-population mean potential outcome."""

    estimator_name: str
    degree: int
    point_estimate: float
    a: int
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.point_estimate):
            raise ValueError("point estimate must be finite")


@dataclass(frozen=True)
class DecompositionReport:
    """Monte Carlo bias / variance / MSE summary for one estimator on one world."""

    bias: float
    variance: float
    mse: float
    n_replications: int
    n_failures: int = 0

    def __post_init__(self):
        if self.variance < 0 or self.mse < 0:
            raise ValueError("variance and mse must be nonnegative")


# -- CSV serialization -------------------------------------------------------

_CSV_HEADER = ["x", "u", "s", "a", "y"]


def write_observations_csv(
    records: Sequence[Observation], path: str | Path, include_hidden: bool = False
) -> None:
    """Write records as CSV (columns x,u,s,a,y; empty cells for absent fields).

    The hidden covariate is written only when ``include_hidden`` is set;
    otherwise its column is left empty.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for r in records:
            writer.writerow(
                [
                    repr(r.x),
                    repr(r.u) if include_hidden else "",
                    r.s,
                    "" if r.a is None else r.a,
                    "" if r.y is None else repr(r.y),
                ]
            )


def read_observations_csv(path: str | Path) -> list[Observation]:
    """Read records written by :func:`write_observations_csv`."""
    out: list[Observation] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for row in reader:
            x, u, s, a, y = row
            out.append(
                Observation(
                    x=float(x),
                    u=float(u) if u else math.nan,
                    s=int(s),
                    a=int(a) if a else None,
                    y=float(y) if y else None,
                )
            )
    return out


def write_sample_csv(sample: CompositeSample, path: str | Path, include_hidden: bool = False) -> None:
    write_observations_csv(sample.records, path, include_hidden=include_hidden)


def read_sample_csv(path: str | Path) -> CompositeSample:
    return CompositeSample.from_records(read_observations_csv(path))

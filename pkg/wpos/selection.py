"""
Adaptive feature-size selection.

For every candidate F the mean ordered PDP is split into F signal bins and
N_b - F noise bins. Three quantities are scored per F:

- the log-likelihood gain LL_F - LL_0 of the split under chi-square bin laws,
- the probability of acquiring f of the F signal bins above the separating
  threshold (Marcum-Q exceedance, Poisson-binomial count),
- the mean inter-zone KNN Kullback-Leibler divergence of the feature sets.

F* maximises  w * E[f/F] * norm(LL_F - LL_0) + (1 - w) * norm(KL_F),
where norm() divides by the maximum over the F grid.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

MARCUM_TOL = 1e-10
MARCUM_MAX_TERMS = 1_000_000
ZERO_DISTANCE = 1e-12

# Mean ordered powers of the worked LOS / 15 dB example (N_b = 10, nu = 2).
REFERENCE_MEAN_ORDERED = np.array([53.9, 26.8, 17.4, 12.5, 9.46, 6.35, 5.22, 4.06, 3.76, 2.55]) * 1e-7
REFERENCE_NU = 2
REFERENCE_F_RANGE = (3, 8)
REFERENCE_WEIGHT = 0.5
REFERENCE_CRITERION = (0.79, 0.76, 0.89, 0.88, 0.87, 0.85)


def log_gamma(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log_gamma needs x > 0")
    return special.gammaln(x)


def _check_chi2_domain(x, psi2, nu) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    psi2 = np.asarray(psi2, dtype=float)
    if np.any(x <= 0):
        raise ValueError("chi-square density needs x > 0")
    if np.any(psi2 <= 0):
        raise ValueError("chi-square scale psi^2 must be positive")
    if nu < 1:
        raise ValueError("degrees of freedom nu must be >= 1")
    return x, psi2


def chi2_log_pdf_central(x, psi2, nu):
    """log f(x; psi^2, nu) of the scaled central chi-square law."""
    x, psi2 = _check_chi2_domain(x, psi2, nu)
    half = nu / 2.0
    return -half * np.log(2 * psi2) + (half - 1) * np.log(x) - log_gamma(half) - x / (2 * psi2)


def noncentral_eta2(psi2, lam, nu):
    """Moment-matched scale eta^2 of the central approximation; equals psi^2 at lam = 0."""
    psi2 = np.asarray(psi2, dtype=float)
    lam = np.asarray(lam, dtype=float)
    numerator = 2 * nu * psi2 ** 2 + 4 * psi2 * lam + (nu * psi2 + lam) ** 2
    return np.sqrt(numerator / (nu * (2 + nu)))


def chi2_log_pdf_noncentral_approx(x, psi2, lam, nu):
    """Central-form approximation of the non-central chi-square log density."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("non-centrality lambda must be non-negative")
    _check_chi2_domain(x, psi2, nu)
    return chi2_log_pdf_central(x, noncentral_eta2(psi2, lam, nu), nu)


def _check_mean_ordered(mean_ordered) -> np.ndarray:
    eps = np.asarray(mean_ordered, dtype=float)
    if eps.ndim != 1 or len(eps) < 2:
        raise ValueError("mean ordered powers must be a vector of at least two bins")
    if np.any(eps <= 0):
        raise ValueError("mean ordered powers must be positive")
    if np.any(np.diff(eps) > 1e-12 * eps.max()):
        raise ValueError("mean ordered powers must be non-increasing")
    return eps


def estimate_parameters(mean_ordered, F: int) -> Tuple[float, np.ndarray]:
    """psi^2_F (noise-bin mean) and lambda^(F)_n = eps_n - psi^2_F."""
    eps = _check_mean_ordered(mean_ordered)
    if not 0 <= F < len(eps):
        raise ValueError(f"F must lie in [0, {len(eps) - 1}] so that noise bins remain, got {F}")
    psi2 = float(eps[F:].mean())
    lam = eps[:F] - psi2
    if np.any(lam < 0):
        log.warning("clipping %d negative lambda estimates to 0 (F=%d)", int((lam < 0).sum()), F)
        lam = np.maximum(lam, 0.0)
    return psi2, lam


def log_likelihood(mean_ordered, F: int, nu: int) -> float:
    """LL_F: F bins non-central (approximated), the rest central with psi^2_F."""
    eps = _check_mean_ordered(mean_ordered)
    psi2, lam = estimate_parameters(eps, F)
    signal = 0.0
    if F:
        signal = float(np.sum(chi2_log_pdf_central(eps[:F], noncentral_eta2(psi2, lam, nu), nu)))
    noise = float(np.sum(chi2_log_pdf_central(eps[F:], psi2, nu)))
    return signal + noise


def power_threshold(mean_ordered, F: int) -> float:
    eps = _check_mean_ordered(mean_ordered)
    if not 1 <= F < len(eps):
        raise ValueError(f"threshold needs 1 <= F < {len(eps)}")
    return float((eps[F - 1] + eps[F]) / 2)


def marcum_q(order: float, a: float, b: float) -> float:
    """Generalised Marcum Q-function Q_order(a, b) for half-integer orders.

    Poisson(a^2/2)-weighted sum of regularized upper incomplete gamma terms,
    truncated once the Poisson tail falls below MARCUM_TOL.
    """
    if order < 0.5 or abs(2 * order - round(2 * order)) > 1e-12:
        raise ValueError(f"Marcum order must be a half-integer >= 0.5, got {order}")
    if a < 0 or b < 0:
        raise ValueError("Marcum arguments must be non-negative")
    if b == 0:
        return 1.0
    x = a * a / 2.0
    y = b * b / 2.0
    if x == 0:
        return float(special.gammaincc(order, y))

    k_max = int(math.ceil(x + 10 * math.sqrt(x) + 50))
    while stats.poisson.sf(k_max, x) > MARCUM_TOL:
        k_max *= 2
        if k_max > MARCUM_MAX_TERMS:
            raise RuntimeError(f"Marcum Q series did not converge (order={order}, a={a}, b={b})")
    k = np.arange(k_max + 1)
    total = np.sum(stats.poisson.pmf(k, x) * special.gammaincc(order + k, y))
    return float(min(max(total, 0.0), 1.0))


def exceedance_probs(psi2: float, lam, p_th: float, nu: int) -> np.ndarray:
    """p_n = Q_{nu/2}(sqrt(2 (lambda_n / psi^2)^2), sqrt(2 P_th / psi^2))."""
    if psi2 <= 0:
        raise ValueError("psi^2 must be positive")
    b = math.sqrt(2 * p_th / psi2)
    return np.array([marcum_q(nu / 2.0, math.sqrt(2 * (value / psi2) ** 2), b) for value in np.asarray(lam)])


def acquisition_probs(p) -> np.ndarray:
    """Poisson-binomial masses P_f for f = 0..F of F independent exceedances."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("exceedance probabilities must lie in [0, 1]")
    mass = np.zeros(len(p) + 1)
    mass[0] = 1.0
    for prob in p:
        mass[1:] = mass[1:] * (1 - prob) + mass[:-1] * prob
        mass[0] *= 1 - prob
    return mass


def acquisition_prob(p, f: int) -> float:
    if not 0 <= f <= len(p):
        raise ValueError(f"f must lie in [0, {len(p)}]")
    return float(acquisition_probs(p)[f])


def _as_samples(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2:
        samples = samples.reshape(len(samples), -1)
    return samples


def _kth_distance(tree: cKDTree, points: np.ndarray, k: int) -> np.ndarray:
    distance, _ = tree.query(points, k=[k])
    distance = distance[:, 0]
    zero = distance <= 0
    if np.any(zero):
        log.warning("%d zero nearest-neighbour distances, using %g", int(zero.sum()), ZERO_DISTANCE)
        distance = np.where(zero, ZERO_DISTANCE, distance)
    return distance


def knn_kl(samples_p, samples_q, u: int, dim_factor: float) -> float:
    """KNN estimate of D(P || Q) from samples of P and Q.

    The u-th neighbour distance within P excludes the point itself; passing
    the same array object for both sets gives the self-divergence.
    """
    same = samples_p is samples_q
    p = _as_samples(samples_p)
    q = p if same else _as_samples(samples_q)
    n, m = len(p), len(q)
    if u < 1:
        raise ValueError("neighbour count u must be >= 1")
    if n <= u or m <= u:
        raise ValueError(f"need more than u={u} samples per set (got {n} and {m})")
    if p.shape[1] != q.shape[1]:
        raise ValueError("sample sets have different dimensions")

    tree_p = cKDTree(p)
    r_own = _kth_distance(tree_p, p, u + 1)
    r_other = r_own if same else _kth_distance(cKDTree(q), p, u)
    return float(dim_factor / n * np.sum(np.log(r_other / r_own)) + math.log(m / (n - 1)))


def mean_kl(groups: Sequence[np.ndarray], F: int, u: int, dim_factor: Optional[float] = None) -> float:
    """Average pairwise divergence over all ordered zone pairs, diagonal included."""
    n_zones = len(groups)
    if n_zones < 1:
        raise ValueError("no zone groups")
    factor = F if dim_factor is None else dim_factor
    total = 0.0
    for i in range(n_zones):
        for j in range(n_zones):
            total += knn_kl(groups[i], groups[j], u, factor)
    return total / (n_zones ** 2 * math.sqrt(F))


def normalize_by_max(values, label: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    peak = float(values.max())
    if peak <= 0:
        log.warning("max of %s is %.4g <= 0, dropping the term", label, peak)
        return np.zeros_like(values)
    return values / peak


def combine_criterion(term_a, term_b, weight: float, f_values: Sequence[int]) -> Tuple[np.ndarray, int]:
    """Weighted criterion and its argmax F (smallest F on ties)."""
    if not 0 <= weight <= 1:
        raise ValueError("criterion weight must lie in [0, 1]")
    term_a = np.asarray(term_a, dtype=float)
    term_b = np.asarray(term_b, dtype=float)
    if not (len(term_a) == len(term_b) == len(f_values)):
        raise ValueError("criterion terms must match the F grid")
    criterion = weight * term_a + (1 - weight) * term_b
    return criterion, int(list(f_values)[int(np.argmax(criterion))])


@dataclass(frozen=True, eq=False)
class SelectionInputs:
    mean_ordered: np.ndarray
    nu: int
    f_min: int
    f_max: int
    weight: float
    neighbors: int = 30
    zone_samples: Optional[Mapping[int, Sequence[np.ndarray]]] = None
    kl_dim_factor: str = "F"
    sensors: int = 1

    def __post_init__(self):
        eps = _check_mean_ordered(self.mean_ordered)
        if not 1 <= self.f_min <= self.f_max < len(eps):
            raise ValueError(f"need 1 <= F_min <= F_max < N_b={len(eps)}")
        if not 0 <= self.weight <= 1:
            raise ValueError("criterion weight must lie in [0, 1]")
        if self.neighbors < 1:
            raise ValueError("neighbour count u must be >= 1")
        if self.kl_dim_factor not in ("F", "2FM"):
            raise ValueError("kl_dim_factor must be 'F' or '2FM'")
        if self.zone_samples is not None:
            for F in self.f_values:
                groups = self.zone_samples.get(F)
                if groups is None:
                    raise ValueError(f"no zone samples for F={F}")
                for zone, group in enumerate(groups):
                    if len(group) <= self.neighbors:
                        raise ValueError(f"zone {zone} has {len(group)} samples at F={F}, need > {self.neighbors}")

    @property
    def f_values(self) -> List[int]:
        return list(range(self.f_min, self.f_max + 1))

    def dim_factor(self, F: int) -> float:
        return F if self.kl_dim_factor == "F" else 2 * F * self.sensors


@dataclass(frozen=True, eq=False)
class SelectionRow:
    F: int
    psi2: float
    lam: np.ndarray
    eta2: np.ndarray
    ll: float
    ll_gain: float
    p_th: float
    p: np.ndarray
    acquisition: np.ndarray
    expected_fraction: float
    kl: float = float("nan")
    term_a: float = float("nan")
    term_b: float = float("nan")
    criterion: float = float("nan")


@dataclass(frozen=True, eq=False)
class SelectionTables:
    rows: List[SelectionRow]
    f_star: int
    weight: float
    ll0: float = float("nan")
    neighbors: int = 0

    def row(self, F: int) -> SelectionRow:
        for row in self.rows:
            if row.F == F:
                return row
        raise KeyError(F)

    def to_records(self) -> List[Dict[str, object]]:
        """Flat rows for CSV output; vectors are ';'-joined."""
        def join(values):
            return ";".join(f"{value:.6g}" for value in np.asarray(values))

        return [
            {
                "F": row.F,
                "psi2": row.psi2,
                "lambda": join(row.lam),
                "eta2": join(row.eta2),
                "ll_gain": row.ll_gain,
                "p_th": row.p_th,
                "p": join(row.p),
                "acquisition": join(row.acquisition),
                "kl": row.kl,
                "term_a": row.term_a,
                "term_b": row.term_b,
                "criterion": row.criterion,
                "selected": int(row.F == self.f_star),
            }
            for row in self.rows
        ]


def information_rows(mean_ordered, nu: int, f_values: Sequence[int]) -> Tuple[List[SelectionRow], float]:
    """Likelihood and acquisition columns for each F, plus LL_0."""
    eps = _check_mean_ordered(mean_ordered)
    ll0 = log_likelihood(eps, 0, nu)
    rows = []
    for F in f_values:
        psi2, lam = estimate_parameters(eps, F)
        ll = log_likelihood(eps, F, nu)
        p_th = power_threshold(eps, F)
        p = exceedance_probs(psi2, lam, p_th, nu)
        acquisition = acquisition_probs(p)
        fraction = float(np.dot(acquisition, np.arange(F + 1) / F))
        rows.append(
            SelectionRow(
                F=F,
                psi2=psi2,
                lam=lam,
                eta2=noncentral_eta2(psi2, lam, nu),
                ll=ll,
                ll_gain=ll - ll0,
                p_th=p_th,
                p=p,
                acquisition=acquisition,
                expected_fraction=fraction,
            )
        )
    return rows, ll0


def separability(inputs: SelectionInputs, workers: int = 1) -> List[float]:
    """KL_F for every F in the grid, evaluated in grid order."""
    if inputs.zone_samples is None:
        raise ValueError("zone samples are required to estimate KL_F")

    def one(F):
        value = mean_kl(inputs.zone_samples[F], F, inputs.neighbors, inputs.dim_factor(F))
        log.debug("KL_%d = %.4f", F, value)
        return value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, inputs.f_values))
    return [one(F) for F in inputs.f_values]


def select_feature_size(
    inputs: SelectionInputs,
    kl_values: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> SelectionTables:
    """Evaluate the criterion over [F_min, F_max] and pick F*.

    kl_values, when given, replaces the KNN estimate of KL_F.
    """
    f_values = inputs.f_values
    rows, ll0 = information_rows(inputs.mean_ordered, inputs.nu, f_values)
    if kl_values is None:
        kl_values = separability(inputs, workers=workers)
    if len(kl_values) != len(f_values):
        raise ValueError("one KL value per F is required")

    gains = normalize_by_max([row.ll_gain for row in rows], "LL_F - LL_0")
    term_a = np.array([row.expected_fraction for row in rows]) * gains
    term_b = normalize_by_max(kl_values, "KL_F")
    criterion, f_star = combine_criterion(term_a, term_b, inputs.weight, f_values)

    finished = [
        replace(row, kl=float(kl), term_a=float(a), term_b=float(b), criterion=float(c))
        for row, kl, a, b, c in zip(rows, kl_values, term_a, term_b, criterion)
    ]
    log.info("selected F*=%d (weight=%.2f)", f_star, inputs.weight)
    return SelectionTables(finished, f_star, inputs.weight, ll0, inputs.neighbors)

"""Per-topic growth modeling by first-order rate kinetics.

Yearly fractional document counts n(t) are fit to n0 * exp(k * t) by
weighted nonlinear least squares; the rate constant converts to a compound
annual growth rate, 100 * (exp(k) - 1), with the error carried through the
delta method. Error bars on the counts follow sqrt(n) scaled by a global
factor that is calibrated until the reduced chi-squared distribution modes
at 1.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class TopicTimeSeries:
    topic_id: int
    t: np.ndarray       # years since window start, t[0] = 0
    n: np.ndarray       # fractional document counts
    sigma: np.ndarray   # per-point errors

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.n = np.asarray(self.n, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not (len(self.t) == len(self.n) == len(self.sigma)):
            raise ValueError("t, n, sigma must have equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("t must be strictly increasing")
        if np.any(self.n < 0):
            raise ValueError("counts must be non-negative")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")


@dataclass
class FitResult:
    topic_id: int
    n0_hat: float
    k_hat: float
    err_n0: float
    err_k: float
    cagr: float
    err_cagr: float
    chi2_red: float
    dof: int
    converged: bool

    @property
    def fittable(self) -> bool:
        return math.isfinite(self.k_hat)

    @property
    def pct_err(self) -> float:
        """CAGR percentage error, 100 * |err_cagr / cagr|; inf when cagr = 0."""
        if self.cagr == 0.0 or not math.isfinite(self.cagr):
            return math.inf
        return 100.0 * abs(self.err_cagr / self.cagr)


@dataclass
class CalibrationResult:
    scale: float
    mode_chi2: float
    iterations: int
    converged: bool
    skipped: bool = False


@dataclass
class CagrDistributionStats:
    mean: float
    std: float
    mean_std_err: float
    n_excluded: int


def cagr_from_rate(k: float) -> float:
    """Annual percent growth implied by rate constant k."""
    return 100.0 * (math.exp(k) - 1.0)


def cagr_two_point(n0: float, nn: float, t0: int, tn: int) -> float:
    """Classic two-endpoint growth rate, 100 * ((nn/n0)^(1/(tn-t0)) - 1)."""
    if n0 <= 0:
        raise ValueError("two-point growth rate undefined for n0 <= 0")
    if tn <= t0:
        raise ValueError("tn must exceed t0")
    return 100.0 * ((nn / n0) ** (1.0 / (tn - t0)) - 1.0)


def build_time_series(sums, scale: float = 1.0, year_range=None):
    """Turn per-topic per-year counts into fittable time series.

    `sums` maps topic_id -> {year: count}. Years missing inside the window
    are filled with zero counts. sigma_i = scale * max(sqrt(n_i), 1); the
    floor keeps zero-count years from getting infinite weight.

    Returns (series_list, excluded) where excluded maps topic_id -> reason.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if year_range is None:
        all_years = [y for per_year in sums.values() for y in per_year]
        if not all_years:
            return [], {}
        year_range = (min(all_years), max(all_years))
    y0, y1 = year_range
    years = list(range(y0, y1 + 1))

    series, excluded = [], {}
    for topic_id in sorted(sums):
        per_year = sums[topic_id]
        if len(years) < 3:
            excluded[topic_id] = f"window has {len(years)} year(s), need 3"
            continue
        n = np.array([float(per_year.get(y, 0.0)) for y in years])
        sigma = scale * np.maximum(np.sqrt(n), 1.0)
        series.append(TopicTimeSeries(topic_id, np.arange(len(years), dtype=float), n, sigma))
    return series, excluded


def _model(params, t):
    n0, k = params
    return n0 * np.exp(k * t)


def _chi2(params, ts):
    r = (ts.n - _model(params, ts.t)) / ts.sigma
    return float(r @ r)


def _seed_params(ts: TopicTimeSeries) -> np.ndarray:
    """Log-linear least squares on the positive points; flat fallback."""
    pos = ts.n > 0
    if pos.sum() >= 2:
        t, ln_n = ts.t[pos], np.log(ts.n[pos])
        slope, intercept = np.polyfit(t, ln_n, 1)
        return np.array([math.exp(intercept), slope])
    return np.array([float(ts.n.mean()), 0.0])


def _newton_polish(params, chi2, ts, rounds: int = 3):
    """Undamped Gauss-Newton refinement from inside the convergence basin."""
    for _ in range(rounds):
        n0, k = params
        ekt = np.exp(k * ts.t)
        r = (ts.n - n0 * ekt) / ts.sigma
        J = np.column_stack([-ekt / ts.sigma, -n0 * ts.t * ekt / ts.sigma])
        try:
            step = np.linalg.solve(J.T @ J + 1e-30 * np.eye(2), -(J.T @ r))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        trial = params + step
        trial_chi2 = _chi2(trial, ts)
        # tolerate ulp jitter but never a real ascent
        if not np.isfinite(trial_chi2) or trial_chi2 > chi2 * (1.0 + 1e-9):
            break
        params, chi2 = trial, trial_chi2
    return params, chi2


def fit_exponential(ts: TopicTimeSeries, max_iter: int = 200) -> FitResult:
    """Weighted nonlinear least squares for n0 * exp(k t).

    Damped (Levenberg-Marquardt style) Gauss-Newton: the damping factor is
    multiplied by 10 on a rejected step and divided by 10 on an accepted
    one. Parameter errors come from the inverse weighted normal-equations
    matrix scaled by the reduced chi-squared, matching the convention of
    standard curve-fitting packages.
    """
    if len(ts.n) < 3:
        raise ValueError("need at least 3 points to fit")
    dof = len(ts.n) - 2

    if not np.any(ts.n > 0):
        # nothing to fit: flat zero series
        return FitResult(ts.topic_id, 0.0, math.nan, math.nan, math.nan,
                         math.nan, math.nan, math.nan, dof, False)

    params = _seed_params(ts)
    chi2 = _chi2(params, ts)
    lam = 1e-3
    converged = False

    for _ in range(max_iter):
        n0, k = params
        ekt = np.exp(k * ts.t)
        # residuals r_i = (n_i - n0 e^{k t_i}) / sigma_i and Jacobian dr/dp
        r = (ts.n - n0 * ekt) / ts.sigma
        J = np.column_stack([-ekt / ts.sigma, -n0 * ts.t * ekt / ts.sigma])
        g = J.T @ r
        H = J.T @ J

        step = None
        for _ in range(50):
            try:
                step = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-30 * np.eye(2), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            trial_chi2 = _chi2(trial, ts)
            if np.isfinite(trial_chi2) and trial_chi2 <= chi2:
                break
            lam *= 10.0
        else:
            break

        old_chi2 = chi2
        params, chi2 = params + step, trial_chi2
        lam = max(lam / 10.0, 1e-12)

        if old_chi2 == 0.0:
            converged = True
            break
        if (old_chi2 - chi2) / old_chi2 < 1e-10 or np.linalg.norm(step) < 1e-12:
            converged = True
            break

    if converged and chi2 > 0.0:
        # the damped loop stops within ~sqrt(eps) of the optimum, which
        # leaks the approach path into the last digits; a couple of plain
        # Newton steps contract that to round-off
        params, chi2 = _newton_polish(params, chi2, ts)

    n0, k = float(params[0]), float(params[1])
    chi2_red = chi2 / dof

    # covariance from the normal equations, inflated by chi2_red when the
    # residuals overshoot the error bars; a fortuitously low chi2_red on a
    # short series must not shrink the quoted errors below the propagated
    # ones, so the factor is floored at 1
    ekt = np.exp(k * ts.t)
    J = np.column_stack([-ekt / ts.sigma, -n0 * ts.t * ekt / ts.sigma])
    H = J.T @ J
    try:
        cov = np.linalg.inv(H) * max(chi2_red, 1.0)
        err_n0 = math.sqrt(max(cov[0, 0], 0.0))
        err_k = math.sqrt(max(cov[1, 1], 0.0))
    except np.linalg.LinAlgError:
        err_n0 = err_k = math.inf

    cagr = cagr_from_rate(k)
    err_cagr = 100.0 * math.exp(k) * err_k
    return FitResult(ts.topic_id, n0, k, err_n0, err_k, cagr, err_cagr, chi2_red, dof, converged)


def fit_many(series, max_iter: int = 200):
    return [fit_exponential(ts, max_iter=max_iter) for ts in series]


def chi2_mode(values, lo: float = 0.0, hi: float = 5.0, min_width: float = 0.05) -> float:
    """Histogram mode of the reduced chi-squared sample.

    Freedman-Diaconis bin width with a floor, histogram over [lo, hi],
    mode = center of the fullest bin, ties resolved to the lower bin.
    """
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        raise ValueError("no finite values")
    q75, q25 = np.percentile(v, [75, 25])
    width = 2.0 * (q75 - q25) / (v.size ** (1.0 / 3.0))
    width = max(width, min_width)
    edges = np.arange(lo, hi + width, width)
    counts, _ = np.histogram(np.clip(v, lo, hi - 1e-12), bins=edges)
    i = int(np.argmax(counts))  # argmax takes the first (lower) maximal bin
    return float((edges[i] + edges[i + 1]) / 2.0)


def calibrate_error_scale(sums, tol: float = 0.05, max_iter: int = 20,
                          year_range=None, min_topics: int = 100) -> CalibrationResult:
    """Find the sigma scale at which the chi2_red distribution modes at 1.

    Each round refits every topic at the current scale, reads the
    histogram mode m, and updates scale <- scale * sqrt(m); chi2_red
    scales as 1/scale^2, so one step lands the mode near 1.
    """
    scale = 1.0
    series, _ = build_time_series(sums, scale=1.0, year_range=year_range)
    fittable = [ts for ts in series if np.any(ts.n > 0)]
    if len(fittable) < min_topics:
        logger.warning("calibration skipped: %d fittable topics < %d", len(fittable), min_topics)
        return CalibrationResult(scale=1.0, mode_chi2=math.nan, iterations=0,
                                 converged=False, skipped=True)

    mode = math.nan
    for it in range(1, max_iter + 1):
        series, _ = build_time_series(sums, scale=scale, year_range=year_range)
        fits = fit_many(series)
        chis = [f.chi2_red for f in fits if f.fittable and f.converged]
        if all(c < 1e-9 for c in chis):
            raise RuntimeError("calibration aborted: every chi2_red is ~0 (degenerate ensemble)")
        mode = chi2_mode(chis)
        if abs(mode - 1.0) <= tol:
            return CalibrationResult(scale=scale, mode_chi2=mode, iterations=it, converged=True)
        scale *= math.sqrt(mode)
    logger.warning("calibration hit max_iter=%d with mode %.3f", max_iter, mode)
    return CalibrationResult(scale=scale, mode_chi2=mode, iterations=max_iter, converged=False)


def screen_good_neighborhood(fits, chi_lo: float = 0.5, chi_hi: float = 1.5,
                             max_pct_err: float = 50.0):
    """Partition fits into good / large-chi-but-precise / rest buckets.

    Good needs both an in-band chi2_red and a CAGR percentage error below
    the limit; out-of-band fits that are still precise get their own
    bucket because their large chi2 may only reflect misestimated error
    bars.
    """
    good, large_chi, rest = [], [], []
    for f in fits:
        if not f.fittable:
            rest.append(f.topic_id)
            continue
        precise = f.pct_err < max_pct_err
        in_band = chi_lo < f.chi2_red < chi_hi
        if in_band and precise:
            good.append(f.topic_id)
        elif not in_band and precise:
            large_chi.append(f.topic_id)
        else:
            rest.append(f.topic_id)
    return good, large_chi, rest


def cagr_distribution_stats(fits, n_sigma: float = 3.0, max_passes: int = 10,
                            bins: int = 60):
    """Outlier-trimmed mean/std of the CAGR sample plus histogram data.

    The trim iterates: compute mean/std, drop |x - mean| > n_sigma * std,
    repeat until the excluded set stops changing (or max_passes).
    """
    usable = [f for f in fits if f.fittable and math.isfinite(f.cagr)]
    if len(usable) < 2:
        raise ValueError("need at least 2 fits")
    values = np.array([f.cagr for f in usable])
    errs = np.array([f.err_cagr for f in usable])

    included = np.ones(len(values), dtype=bool)
    for _ in range(max_passes):
        if included.sum() == 0:
            raise ValueError("all values excluded; distribution is pathological")
        mean = values[included].mean()
        std = values[included].std(ddof=1) if included.sum() > 1 else 0.0
        new_included = np.abs(values - mean) <= n_sigma * std if std > 0 else included
        if np.array_equal(new_included, included):
            break
        included = new_included
    if included.sum() == 0:
        raise ValueError("all values excluded; distribution is pathological")

    mean = float(values[included].mean())
    std = float(values[included].std(ddof=1)) if included.sum() > 1 else 0.0
    stats = CagrDistributionStats(
        mean=mean,
        std=std,
        mean_std_err=float(errs[included].mean()),
        n_excluded=int((~included).sum()),
    )
    counts, edges = np.histogram(values[included], bins=bins)
    return stats, (counts, edges)


def rank_emerging(fits, sizes, top_n: int = 200, coherence_floor: float = -1000.0,
                  coherences=None, junk=None):
    """Rank screened topics by CAGR descending.

    Topics below the coherence floor or flagged junk are dropped before
    ranking. `sizes` maps topic_id -> fractional document count and rides
    along for the size-vs-growth scatter.
    """
    coherences = coherences or {}
    junk = junk or (lambda tid: False)
    rows = []
    for f in fits:
        if not f.fittable:
            continue
        coh = coherences.get(f.topic_id)
        if coh is not None and not (math.isfinite(coh) and coh >= coherence_floor):
            continue
        if junk(f.topic_id):
            continue
        rows.append((f.topic_id, f.cagr, f.err_cagr, sizes.get(f.topic_id, 0.0), coh))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows[:top_n]


def aggregate_supertopic_fit(member_topics, sums, scale: float = 1.0,
                             year_range=None) -> FitResult:
    """Sum member yearly counts into one series and fit it."""
    members = [t for t in member_topics if t in sums]
    if not members:
        raise ValueError("supertopic has no members with counts")
    combined: dict[int, float] = {}
    for t in members:
        for year, c in sums[t].items():
            combined[year] = combined.get(year, 0.0) + c
    series, excluded = build_time_series({-1: combined}, scale=scale, year_range=year_range)
    if excluded:
        raise ValueError(f"aggregate series unusable: {excluded[-1]}")
    return fit_exponential(series[0])


# --- CSV interfaces --------------------------------------------------------

def read_topic_year_counts(path):
    """CSV `topic_id,year,count` -> {topic_id: {year: count}}."""
    sums: dict[int, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:3]] != ["topic_id", "year", "count"]:
            raise ValueError(f"{path}: expected header topic_id,year,count")
        for row in reader:
            if not row:
                continue
            tid, year, count = int(row[0]), int(row[1]), float(row[2])
            per_year = sums.setdefault(tid, {})
            per_year[year] = per_year.get(year, 0.0) + count
    return sums


def write_topic_year_counts(sums, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic_id", "year", "count"])
        for tid in sorted(sums):
            for year in sorted(sums[tid]):
                w.writerow([tid, year, repr(sums[tid][year])])


FITS_HEADER = ["topic_id", "n0", "k", "err_k", "cagr", "err_cagr", "chi2_red", "dof", "converged"]


def write_fits(fits, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FITS_HEADER)
        for f in sorted(fits, key=lambda f: f.topic_id):
            w.writerow([f.topic_id, repr(f.n0_hat), repr(f.k_hat), repr(f.err_k),
                        repr(f.cagr), repr(f.err_cagr), repr(f.chi2_red), f.dof,
                        int(f.converged)])


def read_fits(path):
    fits = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != FITS_HEADER:
            raise ValueError(f"{path}: unexpected fits header {header}")
        for row in reader:
            if not row:
                continue
            k = float(row[2])
            err_k = float(row[3])
            fits.append(FitResult(
                topic_id=int(row[0]), n0_hat=float(row[1]), k_hat=k,
                err_n0=math.nan, err_k=err_k, cagr=float(row[4]),
                err_cagr=float(row[5]), chi2_red=float(row[6]), dof=int(row[7]),
                converged=bool(int(row[8])),
            ))
    return fits


def write_screen(fits, path, **kwargs) -> None:
    """Screen report CSV with a bucket column."""
    good, large_chi, rest = screen_good_neighborhood(fits, **kwargs)
    bucket = {}
    bucket.update({t: "good" for t in good})
    bucket.update({t: "large_chi_but_precise" for t in large_chi})
    bucket.update({t: "rest" for t in rest})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic_id", "cagr", "err_cagr", "chi2_red", "bucket"])
        for f in sorted(fits, key=lambda f: f.topic_id):
            w.writerow([f.topic_id, repr(f.cagr), repr(f.err_cagr), repr(f.chi2_red),
                        bucket[f.topic_id]])


def write_histogram(counts, edges, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for i, c in enumerate(counts):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(c)])

#pragma once

// Post-processing of training trajectories: fitting the power-law bound
// delta * tau^alpha >= c, classifying the three learning stages
// (independent / correlation / degradation), and assembling rescaled
// collapse overlays across problem sizes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbmlab/common.hpp"

namespace rbmlab {

struct fit_error : std::runtime_error {
    explicit fit_error(const std::string& what) : std::runtime_error(what) {}
};

// Minimal trajectory view used by the post-processing steps.  delta is the
// reported loss (exact or proxy); delta_train is the training-set loss when
// a separate one was measured (NaN otherwise).
struct TrajectoryPoint {
    double epoch = 0.0;
    double delta = std::numeric_limits<double>::quiet_NaN();
    double tau = 1.0;
    double delta_train = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------------------
// Smoothing
// ---------------------------------------------------------------------------
// 5-point running median followed by a 5-point running mean; windows shrink
// symmetrically at the edges.  Applied per coordinate, in log space, before
// slopes or stage boundaries are read off.

namespace detail {

inline std::vector<double> running_median5(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    std::vector<double> win;
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t lo = i >= 2 ? i - 2 : 0;
        std::size_t hi = std::min(v.size() - 1, i + 2);
        std::size_t r = std::min(i - lo, hi - i);  // symmetric shrink
        win.assign(v.begin() + static_cast<std::ptrdiff_t>(i - r),
                   v.begin() + static_cast<std::ptrdiff_t>(i + r + 1));
        std::sort(win.begin(), win.end());
        out[i] = win[win.size() / 2];
    }
    return out;
}

inline std::vector<double> running_mean5(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t lo = i >= 2 ? i - 2 : 0;
        std::size_t hi = std::min(v.size() - 1, i + 2);
        std::size_t r = std::min(i - lo, hi - i);
        double s = 0.0;
        for (std::size_t k = i - r; k <= i + r; ++k) s += v[k];
        out[i] = s / static_cast<double>(2 * r + 1);
    }
    return out;
}

}  // namespace detail

inline std::vector<double> smooth_series(const std::vector<double>& v) {
    return detail::running_mean5(detail::running_median5(v));
}

inline std::vector<double> smooth_log_series(const std::vector<double>& v) {
    std::vector<double> lg(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) lg[i] = std::log(v[i]);
    return smooth_series(lg);
}

// ---------------------------------------------------------------------------
// Stage classification
// ---------------------------------------------------------------------------

enum class Stage { independent, correlation, degradation, unclassified };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::independent: return "independent";
        case Stage::correlation: return "correlation";
        case Stage::degradation: return "degradation";
        case Stage::unclassified: return "unclassified";
    }
    return "?";
}

struct StageSegment {
    Stage stage = Stage::unclassified;
    std::size_t begin = 0;  // point indices, [begin, end)
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

struct StageReport {
    std::vector<StageSegment> segments;
    double tau_tol = 0.1;
    int window = 5;
    std::vector<double> smooth_log_delta;
    std::vector<double> smooth_log_tau;

    const StageSegment* find(Stage s) const {
        for (const auto& seg : segments)
            if (seg.stage == s) return &seg;
        return nullptr;
    }
};

// Splits a trajectory (sorted by epoch) into at most three contiguous
// segments:
//   independent  — while tau stays within 1 + tau_tol;
//   correlation  — loss still making progress while tau grows;
//   degradation  — from the last windowed improvement of the loss onward,
//                  or from where the test loss rises while the training loss
//                  keeps falling (when both are present).
// Boundaries are read off the smoothed series.  Too few points for the
// window machinery yield one "unclassified" segment.
inline StageReport classify_stages(const std::vector<TrajectoryPoint>& traj,
                                   double tau_tol = 0.1, int window = 5) {
    StageReport rep;
    rep.tau_tol = tau_tol;
    rep.window = window;
    const std::size_t n = traj.size();
    const std::size_t w = static_cast<std::size_t>(window);
    if (n < 2 * w) {
        rep.segments.push_back({Stage::unclassified, 0, n});
        return rep;
    }

    std::vector<double> delta(n), tau(n);
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = traj[i].delta;
        tau[i] = traj[i].tau;
    }
    rep.smooth_log_delta = smooth_log_series(delta);
    rep.smooth_log_tau = smooth_log_series(tau);
    const std::vector<double>& ld = rep.smooth_log_delta;
    const std::vector<double>& lt = rep.smooth_log_tau;

    // End of the independent stage: first point with tau above the band.
    const double tau_band = std::log(1.0 + tau_tol);
    std::size_t b1 = n;
    for (std::size_t i = 0; i < n; ++i)
        if (lt[i] > tau_band) {
            b1 = i;
            break;
        }

    // Start of degradation, branch (a): the loss stops improving.  Track the
    // last index that improved the running minimum by a relative margin; if
    // at least `window` points follow it without further improvement, the
    // stall is real.
    const double improve = std::log1p(-1e-3);  // required relative progress
    std::size_t last_improve = 0;
    double best = ld[0];
    for (std::size_t i = 1; i < n; ++i)
        if (ld[i] < best + improve) {
            best = ld[i];
            last_improve = i;
        }
    std::size_t b2 = n;
    if (n - 1 - last_improve >= w) b2 = last_improve + 1;

    // Branch (b): generalization gap — test loss rising over a window while
    // the training loss still falls.
    bool have_train = true;
    for (const TrajectoryPoint& p : traj)
        if (!std::isfinite(p.delta_train)) {
            have_train = false;
            break;
        }
    if (have_train) {
        std::vector<double> dtrain(n);
        for (std::size_t i = 0; i < n; ++i) dtrain[i] = traj[i].delta_train;
        std::vector<double> ltr = smooth_log_series(dtrain);
        for (std::size_t i = w; i < n; ++i) {
            bool test_rising = ld[i] > ld[i - w] - improve;
            bool train_falling = ltr[i] < ltr[i - w] + improve;
            if (test_rising && train_falling) {
                b2 = std::min(b2, i);
                break;
            }
        }
    }

    // A stall inside the tau ~ 1 band is still independent-stage behavior
    // (e.g. an expressivity-limited machine that plateaus without ever
    // developing correlations), so degradation cannot begin before b1.
    b2 = std::max(b2, b1);

    if (b1 > 0)
        rep.segments.push_back({Stage::independent, 0, b1});
    if (b2 > b1)
        rep.segments.push_back({Stage::correlation, b1, b2});
    if (b2 < n)
        rep.segments.push_back({Stage::degradation, b2, n});
    return rep;
}

// ---------------------------------------------------------------------------
// Power-law bound fit
// ---------------------------------------------------------------------------

struct BoundFit {
    double alpha = 0.0;
    double c = 0.0;
    std::vector<double> residuals;  // per input point: delta*tau^alpha - c
    double slope_dispersion = 0.0;  // std dev of the local slopes
    bool early_weighted = false;    // true when dispersion forced early weighting
    std::size_t n_slopes = 0;
};

// alpha is the mean local slope -d ln(delta) / d ln(tau) across the
// correlation-stage points of the smoothed trajectory; when the slopes
// scatter too much the early part of the stage decides (flagged).  c is then
// the largest constant with delta * tau^alpha >= c on every point of the
// whole trajectory, i.e. the min over raw points.
inline BoundFit fit_bound(const std::vector<TrajectoryPoint>& traj,
                          const StageReport& stages) {
    const StageSegment* corr = stages.find(Stage::correlation);
    if (!corr || corr->size() < 3)
        throw fit_error("fit_bound: need at least 3 correlation-stage points");
    const std::vector<double>& ld = stages.smooth_log_delta;
    const std::vector<double>& lt = stages.smooth_log_tau;
    if (ld.size() != traj.size())
        throw fit_error("fit_bound: stage report does not match trajectory");

    std::vector<double> slopes;
    for (std::size_t i = corr->begin + 1; i + 1 < corr->end; ++i) {
        double dlt = lt[i + 1] - lt[i - 1];
        if (std::abs(dlt) < 1e-3) continue;  // tau plateau, slope undefined
        slopes.push_back(-(ld[i + 1] - ld[i - 1]) / dlt);
    }
    if (slopes.empty())
        throw fit_error("fit_bound: no usable slope (tau never moves)");

    BoundFit fit;
    fit.n_slopes = slopes.size();
    double mean = 0.0;
    for (double s : slopes) mean += s;
    mean /= static_cast<double>(slopes.size());
    double var = 0.0;
    for (double s : slopes) var += (s - mean) * (s - mean);
    fit.slope_dispersion = slopes.size() > 1
                               ? std::sqrt(var / static_cast<double>(
                                                     slopes.size() - 1))
                               : 0.0;
    if (fit.slope_dispersion > 0.5 * std::abs(mean) && slopes.size() >= 6) {
        std::size_t head = (slopes.size() + 2) / 3;
        double early = 0.0;
        for (std::size_t i = 0; i < head; ++i) early += slopes[i];
        fit.alpha = early / static_cast<double>(head);
        fit.early_weighted = true;
    } else {
        fit.alpha = mean;
    }

    double cmin = std::numeric_limits<double>::infinity();
    for (const TrajectoryPoint& p : traj)
        cmin = std::min(cmin, p.delta * std::pow(p.tau, fit.alpha));
    fit.c = cmin;
    fit.residuals.reserve(traj.size());
    for (const TrajectoryPoint& p : traj)
        fit.residuals.push_back(p.delta * std::pow(p.tau, fit.alpha) - fit.c);
    return fit;
}

inline BoundFit fit_bound(const std::vector<TrajectoryPoint>& traj,
                          double tau_tol = 0.1, int window = 5) {
    return fit_bound(traj, classify_stages(traj, tau_tol, window));
}

// Bound fit at a prescribed exponent: c is the largest constant with
// delta * tau^alpha >= c on every point.
inline BoundFit fit_bound_fixed_alpha(const std::vector<TrajectoryPoint>& traj,
                                      double alpha) {
    if (traj.empty())
        throw fit_error("fixed-alpha bound fit needs at least one point");
    BoundFit fit;
    fit.alpha = alpha;
    double cmin = std::numeric_limits<double>::infinity();
    for (const TrajectoryPoint& p : traj)
        cmin = std::min(cmin, p.delta * std::pow(p.tau, alpha));
    fit.c = cmin;
    fit.residuals.reserve(traj.size());
    for (const TrajectoryPoint& p : traj)
        fit.residuals.push_back(p.delta * std::pow(p.tau, alpha) - fit.c);
    return fit;
}

// ---------------------------------------------------------------------------
// Collapse overlays
// ---------------------------------------------------------------------------

struct CollapseResult {
    // Per trajectory: (tau, delta / ctot) for every pre-degradation point.
    std::vector<std::vector<std::pair<double, double>>> overlays;
    // Pairwise sup distance of the rescaled losses over the overlapping
    // correlation-stage tau range (NaN when the ranges do not overlap).
    std::vector<std::vector<double>> pairwise;
    double max_distance = 0.0;
};

namespace detail {

// Piecewise-linear evaluation of y(x) on a sorted polyline.
inline double interp_polyline(const std::vector<std::pair<double, double>>& c,
                              double x) {
    auto it = std::lower_bound(
        c.begin(), c.end(), x,
        [](const std::pair<double, double>& p, double v) { return p.first < v; });
    if (it == c.begin()) return it->second;
    if (it == c.end()) return (c.end() - 1)->second;
    auto prev = it - 1;
    double span = it->first - prev->first;
    if (span <= 0) return prev->second;
    double t = (x - prev->first) / span;
    return prev->second + t * (it->second - prev->second);
}

}  // namespace detail

// Rescales each trajectory's loss by its target's total correlation and
// overlays them against tau.  The collapse quality is the sup distance of
// the rescaled losses over the common correlation-stage tau window.
inline CollapseResult rescale_collapse(
    const std::vector<std::vector<TrajectoryPoint>>& trajs,
    const std::vector<double>& ctots, double tau_tol = 0.1, int window = 5) {
    if (trajs.size() != ctots.size())
        throw config_error("rescale_collapse: need one ctot per trajectory");
    CollapseResult out;
    std::vector<std::vector<std::pair<double, double>>> corr_curves;
    for (std::size_t t = 0; t < trajs.size(); ++t) {
        const auto& traj = trajs[t];
        StageReport rep = classify_stages(traj, tau_tol, window);
        const StageSegment* deg = rep.find(Stage::degradation);
        std::size_t pre_end = deg ? deg->begin : traj.size();
        std::vector<std::pair<double, double>> overlay;
        for (std::size_t i = 0; i < pre_end; ++i)
            overlay.emplace_back(traj[i].tau, traj[i].delta / ctots[t]);
        out.overlays.push_back(std::move(overlay));

        std::vector<std::pair<double, double>> curve;
        const StageSegment* corr = rep.find(Stage::correlation);
        if (corr && !rep.smooth_log_tau.empty()) {
            for (std::size_t i = corr->begin; i < corr->end; ++i)
                curve.emplace_back(rep.smooth_log_tau[i],
                                   std::exp(rep.smooth_log_delta[i]) /
                                       ctots[t]);
            std::sort(curve.begin(), curve.end());
        }
        corr_curves.push_back(std::move(curve));
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.pairwise.assign(trajs.size(), std::vector<double>(trajs.size(), 0.0));
    for (std::size_t a = 0; a < trajs.size(); ++a) {
        for (std::size_t b = a + 1; b < trajs.size(); ++b) {
            const auto& ca = corr_curves[a];
            const auto& cb = corr_curves[b];
            double d = nan;
            if (ca.size() >= 2 && cb.size() >= 2) {
                double lo = std::max(ca.front().first, cb.front().first);
                double hi = std::min(ca.back().first, cb.back().first);
                if (lo <= hi) {
                    d = 0.0;
                    auto probe = [&](double x) {
                        double va = detail::interp_polyline(ca, x);
                        double vb = detail::interp_polyline(cb, x);
                        d = std::max(d, std::abs(va - vb));
                    };
                    for (const auto& p : ca)
                        if (p.first >= lo && p.first <= hi) probe(p.first);
                    for (const auto& p : cb)
                        if (p.first >= lo && p.first <= hi) probe(p.first);
                }
            }
            out.pairwise[a][b] = out.pairwise[b][a] = d;
            if (std::isfinite(d)) out.max_distance = std::max(out.max_distance, d);
        }
    }
    return out;
}

}  // namespace rbmlab

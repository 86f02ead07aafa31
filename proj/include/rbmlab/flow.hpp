#pragma once

// Exact continuous-time gradient flow for machines small enough to
// enumerate.  The flow field replaces the stochastic negative phase by the
// exactly evaluated n-step chain distribution (or the model marginal for
// n = infinity, where the field is exactly minus the loss gradient), and the
// ODE is integrated with an adaptive embedded Runge-Kutta pair
// (Dormand-Prince 5(4)), stepping exactly onto the requested measurement
// times.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"
#include "rbmlab/exact.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/train.hpp"

namespace rbmlab {

// Right-hand side of the flow at the current parameters:
//   dw_ij/dt = sum_x x_i P(h_j=1|x) [p(x) - pn(x)]
//   da_i/dt  = sum_x x_i           [p(x) - pn(x)]
//   db_j/dt  = sum_x P(h_j=1|x)    [p(x) - pn(x)]
// where pn is the distribution after n one-step visible updates applied to
// the target p (n_cd < 0 selects the stationary model marginal instead).
inline Gradient flow_rhs(const RBM& r, const std::vector<double>& p_target,
                         int n_cd, int enum_cap = 25) {
    check_enum_cap(r.m, enum_cap, "visible layer");
    const std::size_t total = std::size_t{1} << r.m;
    if (p_target.size() != total)
        throw config_error("flow_rhs: target table has wrong size");
    std::vector<double> pn = n_cd < 0
                                 ? model_marginal_dense(r, enum_cap)
                                 : cd_distribution_dense(r, p_target, n_cd);

    Gradient g(r.m, r.n);
    std::vector<KahanSum> sw(g.w.size());
    std::vector<KahanSum> sa(g.a.size());
    std::vector<KahanSum> sb(g.b.size());
    std::vector<double> u(static_cast<std::size_t>(r.n));
    std::vector<double> pi(static_cast<std::size_t>(r.n));
    for (std::size_t xi = 0; xi < total; ++xi) {
        double d = p_target[xi] - pn[xi];
        if (d == 0.0) continue;
        state_t x = static_cast<state_t>(xi);
        r.hidden_fields(x, u);
        for (int j = 0; j < r.n; ++j) {
            pi[static_cast<std::size_t>(j)] =
                logistic(u[static_cast<std::size_t>(j)]);
            sb[static_cast<std::size_t>(j)].add(
                pi[static_cast<std::size_t>(j)] * d);
        }
        state_t rest = x;
        while (rest) {
            int i = std::countr_zero(rest);
            rest &= rest - 1;
            sa[static_cast<std::size_t>(i)].add(d);
            for (int j = 0; j < r.n; ++j)
                sw[static_cast<std::size_t>(i) *
                       static_cast<std::size_t>(r.n) +
                   static_cast<std::size_t>(j)]
                    .add(pi[static_cast<std::size_t>(j)] * d);
        }
    }
    for (std::size_t k = 0; k < g.w.size(); ++k) g.w[k] = sw[k].value();
    for (std::size_t k = 0; k < g.a.size(); ++k) g.a[k] = sa[k].value();
    for (std::size_t k = 0; k < g.b.size(); ++k) g.b[k] = sb[k].value();
    return g;
}

struct FlowConfig {
    double t_end = 1.0;
    int n_cd = -1;  // -1 = infinity (stationary model marginal)
    double rel_tol = 1e-8;
    double abs_tol = 1e-12;
    std::vector<double> measure_times;  // 0 and t_end are always included
    int enum_cap = 25;
};

struct FlowPoint {
    double t = 0.0;
    RBM params;
};

struct FlowResult {
    std::vector<FlowPoint> path;
    std::size_t n_steps = 0;
    std::size_t n_rejected = 0;
    std::size_t n_rhs = 0;
};

namespace detail {

inline std::vector<double> pack_params(const RBM& r) {
    std::vector<double> y;
    y.reserve(r.w.size() + r.a.size() + r.b.size());
    y.insert(y.end(), r.w.begin(), r.w.end());
    y.insert(y.end(), r.a.begin(), r.a.end());
    y.insert(y.end(), r.b.begin(), r.b.end());
    return y;
}

inline void unpack_params(const std::vector<double>& y, RBM& r) {
    std::size_t k = 0;
    for (double& v : r.w) v = y[k++];
    for (double& v : r.a) v = y[k++];
    for (double& v : r.b) v = y[k++];
}

inline std::vector<double> pack_gradient(const Gradient& g) {
    std::vector<double> y;
    y.reserve(g.w.size() + g.a.size() + g.b.size());
    y.insert(y.end(), g.w.begin(), g.w.end());
    y.insert(y.end(), g.a.begin(), g.a.end());
    y.insert(y.end(), g.b.begin(), g.b.end());
    return y;
}

}  // namespace detail

// Integrates the flow from `start` to cfg.t_end, recording the parameters at
// t = 0, every requested measurement time, and t_end.  Throws on step-size
// underflow (the error control cannot meet the tolerance).
inline FlowResult exact_flow(const RBM& start,
                             const TabulatedDistribution& target,
                             const FlowConfig& cfg) {
    if (cfg.t_end <= 0) throw config_error("exact_flow: t_end must be > 0");
    if (cfg.rel_tol <= 0 || cfg.abs_tol < 0)
        throw config_error("exact_flow: bad tolerances");
    if (target.num_units() != start.m)
        throw config_error("exact_flow: target dimension mismatch");
    check_enum_cap(start.m, cfg.enum_cap, "visible layer");

    std::vector<double> p = dense_from_tabulated(target);

    // Dormand-Prince 5(4) tableau (the field is autonomous, so the stage
    // nodes c_k never appear explicitly).
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                            a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113,
                            b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600,
                            e3 = 500.0 / 1113 - 7571.0 / 16695,
                            e4 = 125.0 / 192 - 393.0 / 640,
                            e5 = -2187.0 / 6784 + 92097.0 / 339200,
                            e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    RBM work = start;
    std::vector<double> y = detail::pack_params(start);
    const std::size_t dim = y.size();

    FlowResult out;
    auto rhs = [&](const std::vector<double>& yy) {
        detail::unpack_params(yy, work);
        out.n_rhs++;
        return detail::pack_gradient(flow_rhs(work, p, cfg.n_cd, cfg.enum_cap));
    };

    std::vector<double> times{0.0, cfg.t_end};
    for (double t : cfg.measure_times)
        if (t > 0.0 && t < cfg.t_end) times.push_back(t);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    auto record = [&](double t) {
        detail::unpack_params(y, work);
        out.path.push_back({t, work});
    };

    double t = 0.0;
    record(t);
    std::vector<double> k1 = rhs(y);
    std::vector<double> k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
    std::vector<double> ytmp(dim), y5(dim), err(dim);

    double fnorm = 0.0, ynorm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        fnorm = std::max(fnorm, std::abs(k1[i]));
        ynorm = std::max(ynorm, std::abs(y[i]));
    }
    double h = 0.01 * (1.0 + ynorm) / (1.0 + fnorm);

    for (std::size_t seg = 1; seg < times.size(); ++seg) {
        const double t_goal = times[seg];
        while (t < t_goal) {
            bool clipped = t + h >= t_goal;
            double hs = clipped ? t_goal - t : h;
            if (hs < 16.0 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(t)) &&
                !clipped)
                throw std::runtime_error(
                    "exact_flow: step size underflow at t = " +
                    std::to_string(t));

            auto stage = [&](std::vector<double>& dst, auto&&... terms) {
                auto pairs = {terms...};
                for (std::size_t i = 0; i < dim; ++i) {
                    double acc = 0.0;
                    for (auto [coef, kv] : pairs) acc += coef * (*kv)[i];
                    dst[i] = y[i] + hs * acc;
                }
            };
            using P = std::pair<double, const std::vector<double>*>;
            stage(ytmp, P{a21, &k1});
            k2 = rhs(ytmp);
            stage(ytmp, P{a31, &k1}, P{a32, &k2});
            k3 = rhs(ytmp);
            stage(ytmp, P{a41, &k1}, P{a42, &k2}, P{a43, &k3});
            k4 = rhs(ytmp);
            stage(ytmp, P{a51, &k1}, P{a52, &k2}, P{a53, &k3}, P{a54, &k4});
            k5 = rhs(ytmp);
            stage(ytmp, P{a61, &k1}, P{a62, &k2}, P{a63, &k3}, P{a64, &k4},
                  P{a65, &k5});
            k6 = rhs(ytmp);
            stage(y5, P{b1, &k1}, P{b3, &k3}, P{b4, &k4}, P{b5, &k5},
                  P{b6, &k6});
            k7 = rhs(y5);

            double errnorm = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                double e = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] +
                                 e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                double sc = cfg.abs_tol +
                            cfg.rel_tol * std::max(std::abs(y[i]),
                                                   std::abs(y5[i]));
                errnorm += (e / sc) * (e / sc);
            }
            errnorm = std::sqrt(errnorm / static_cast<double>(dim));

            if (errnorm <= 1.0) {
                t = clipped ? t_goal : t + hs;
                y.swap(y5);
                k1.swap(k7);  // first-same-as-last
                out.n_steps++;
            } else {
                out.n_rejected++;
            }
            double factor = errnorm > 0.0
                                ? 0.9 * std::pow(errnorm, -0.2)
                                : 5.0;
            factor = std::min(5.0, std::max(0.2, factor));
            double hnew = hs * factor;
            if (!clipped || errnorm > 1.0)
                h = hnew;
            else
                h = std::max(h, hnew);
            if (!(h > 0.0) || !std::isfinite(h))
                throw std::runtime_error(
                    "exact_flow: step size underflow at t = " +
                    std::to_string(t) + " (error estimate " +
                    std::to_string(errnorm) + ")");
        }
        record(t);
    }
    return out;
}

}  // namespace rbmlab

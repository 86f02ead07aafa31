#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/rng.hpp"

namespace rbmlab {

inline double logistic(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// ln(1 + e^x), stable for large |x|.
inline double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

// Restricted Boltzmann machine with binary units,
//   E(x, h) = -sum_ij w_ij x_i h_j - sum_i a_i x_i - sum_j b_j h_j,
// m visible units x and n hidden units h. Weights are stored row-major:
// w[i*n + j] couples visible i to hidden j.
struct RBM {
    int m = 0;
    int n = 0;
    std::vector<double> w;  // m*n
    std::vector<double> a;  // m
    std::vector<double> b;  // n

    RBM() = default;
    RBM(int m_, int n_)
        : m(m_), n(n_), w(static_cast<std::size_t>(m_) * n_, 0.0),
          a(static_cast<std::size_t>(m_), 0.0),
          b(static_cast<std::size_t>(n_), 0.0) {}

    double& wij(int i, int j) { return w[static_cast<std::size_t>(i) * n + j]; }
    double wij(int i, int j) const {
        return w[static_cast<std::size_t>(i) * n + j];
    }

    double energy(state_t x, state_t h) const {
        double e = 0.0;
        for (int i = 0; i < m; ++i) {
            if (!get_bit(x, i)) continue;
            e -= a[i];
            const double* row = w.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j)
                if (get_bit(h, j)) e -= row[j];
        }
        for (int j = 0; j < n; ++j)
            if (get_bit(h, j)) e -= b[j];
        return e;
    }

    // Field on hidden unit j given visible state x: u_j = b_j + sum_i w_ij x_i.
    double hidden_field(state_t x, int j) const {
        double u = b[j];
        for (int i = 0; i < m; ++i)
            if (get_bit(x, i)) u += wij(i, j);
        return u;
    }

    void hidden_fields(state_t x, std::vector<double>& u) const {
        u.assign(b.begin(), b.end());
        for (int i = 0; i < m; ++i) {
            if (!get_bit(x, i)) continue;
            const double* row = w.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) u[j] += row[j];
        }
    }

    // Field on visible unit i given hidden state h: v_i = a_i + sum_j w_ij h_j.
    double visible_field(state_t h, int i) const {
        double v = a[i];
        const double* row = w.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j)
            if (get_bit(h, j)) v += row[j];
        return v;
    }

    void visible_fields(state_t h, std::vector<double>& v) const {
        v.assign(a.begin(), a.end());
        for (int i = 0; i < m; ++i) {
            const double* row = w.data() + static_cast<std::size_t>(i) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j)
                if (get_bit(h, j)) s += row[j];
            v[i] += s;
        }
    }

    // ln of the unnormalized marginal weight of a visible state:
    //   ln sum_h e^{-E(x,h)} = sum_i a_i x_i + sum_j ln(1 + e^{u_j(x)}).
    double log_weight_visible(state_t x) const {
        double s = 0.0;
        for (int i = 0; i < m; ++i)
            if (get_bit(x, i)) s += a[i];
        std::vector<double> u;
        hidden_fields(x, u);
        for (int j = 0; j < n; ++j) s += softplus(u[j]);
        return s;
    }

    // ln of the unnormalized marginal weight of a hidden state.
    double log_weight_hidden(state_t h) const {
        double s = 0.0;
        for (int j = 0; j < n; ++j)
            if (get_bit(h, j)) s += b[j];
        std::vector<double> v;
        visible_fields(h, v);
        for (int i = 0; i < m; ++i) s += softplus(v[i]);
        return s;
    }

    state_t sample_hidden(state_t x, Philox& rng) const {
        std::vector<double> u;
        hidden_fields(x, u);
        state_t h = 0;
        for (int j = 0; j < n; ++j)
            if (rng.bernoulli(logistic(u[j]))) h |= state_t{1} << j;
        return h;
    }

    state_t sample_visible(state_t h, Philox& rng) const {
        std::vector<double> v;
        visible_fields(h, v);
        state_t x = 0;
        for (int i = 0; i < m; ++i)
            if (rng.bernoulli(logistic(v[i]))) x |= state_t{1} << i;
        return x;
    }

    // Entropy of the conditional hidden distribution p(h|x); factorizes over
    // hidden units, each contributing softplus(u_j) - u_j * logistic(u_j).
    double conditional_hidden_entropy(state_t x) const {
        std::vector<double> u;
        hidden_fields(x, u);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += softplus(u[j]) - u[j] * logistic(u[j]);
        return s;
    }

    double sigma_w() const {
        std::size_t k = w.size();
        if (k <= 1) return 0.0;
        KahanSum s;
        for (double v : w) s.add(v * v);
        return std::sqrt(s.value() / static_cast<double>(k - 1));
    }
};

enum class InitScheme { zeros, gaussian, hinton };

struct InitParams {
    InitScheme scheme = InitScheme::gaussian;
    double w_std = 0.01;
    double bias_std = 0.1;
    // hinton: visible biases from data unit means, clipped to this magnitude.
    double logit_clip = 2.0;
};

inline RBM make_rbm(int m, int n, const InitParams& init, Philox rng,
                    const std::vector<double>* visible_means = nullptr) {
    RBM r(m, n);
    switch (init.scheme) {
        case InitScheme::zeros:
            break;
        case InitScheme::gaussian: {
            Philox gw = rng.substream("init.w");
            Philox ga = rng.substream("init.a");
            Philox gb = rng.substream("init.b");
            for (auto& v : r.w) v = init.w_std * gw.next_normal();
            for (auto& v : r.a) v = init.bias_std * ga.next_normal();
            for (auto& v : r.b) v = init.bias_std * gb.next_normal();
            break;
        }
        case InitScheme::hinton: {
            Philox gw = rng.substream("init.w");
            for (auto& v : r.w) v = init.w_std * gw.next_normal();
            if (visible_means) {
                for (int i = 0; i < m; ++i) {
                    double nu = (*visible_means)[static_cast<std::size_t>(i)];
                    double logit;
                    if (nu <= 0.0)
                        logit = -init.logit_clip;
                    else if (nu >= 1.0)
                        logit = init.logit_clip;
                    else
                        logit = std::clamp(std::log(nu / (1.0 - nu)),
                                           -init.logit_clip, init.logit_clip);
                    r.a[static_cast<std::size_t>(i)] = logit;
                }
            }
            break;
        }
    }
    return r;
}

}  // namespace rbmlab

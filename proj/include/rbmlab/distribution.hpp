#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"

namespace rbmlab {

// A probability distribution over binary states of m units, stored as the
// support only: (state, probability) pairs sorted by state. Suitable for
// targets whose support is far smaller than 2^m.
class TabulatedDistribution {
public:
    TabulatedDistribution() = default;

    TabulatedDistribution(int m, std::vector<std::pair<state_t, double>> table,
                          bool renormalize = false)
        : m_(m), table_(std::move(table)) {
        std::sort(table_.begin(), table_.end(),
                  [](const auto& l, const auto& r) { return l.first < r.first; });
        // Merge duplicate states.
        std::size_t out = 0;
        for (std::size_t i = 0; i < table_.size(); ++i) {
            if (out > 0 && table_[out - 1].first == table_[i].first) {
                table_[out - 1].second += table_[i].second;
            } else {
                table_[out++] = table_[i];
            }
        }
        table_.resize(out);
        std::erase_if(table_, [](const auto& e) { return e.second <= 0.0; });
        if (renormalize) {
            KahanSum z;
            for (const auto& e : table_) z.add(e.second);
            for (auto& e : table_) e.second /= z.value();
        }
    }

    int num_units() const { return m_; }
    std::size_t support_size() const { return table_.size(); }
    const std::vector<std::pair<state_t, double>>& table() const {
        return table_;
    }

    double prob(state_t x) const {
        auto it = std::lower_bound(
            table_.begin(), table_.end(), x,
            [](const auto& e, state_t v) { return e.first < v; });
        if (it != table_.end() && it->first == x) return it->second;
        return 0.0;
    }

    double total_mass() const {
        KahanSum s;
        for (const auto& e : table_) s.add(e.second);
        return s.value();
    }

    // Shannon entropy in nats.
    double entropy() const {
        KahanSum s;
        for (const auto& e : table_)
            if (e.second > 0.0) s.add(-e.second * std::log(e.second));
        return s.value();
    }

    std::vector<double> marginals() const {
        std::vector<double> mu(static_cast<std::size_t>(m_), 0.0);
        std::vector<KahanSum> acc(static_cast<std::size_t>(m_));
        for (const auto& e : table_) {
            state_t x = e.first;
            while (x) {
                int i = std::countr_zero(x);
                acc[static_cast<std::size_t>(i)].add(e.second);
                x &= x - 1;
            }
        }
        for (int i = 0; i < m_; ++i)
            mu[static_cast<std::size_t>(i)] =
                acc[static_cast<std::size_t>(i)].value();
        return mu;
    }

    // Total correlation: the information content beyond independent units,
    //   C = -S(p) + sum_i H_b(mu_i).
    double total_correlation() const {
        double c = -entropy();
        for (double mu : marginals()) c += binary_entropy(mu);
        return c;
    }

    // Draws one state; uses inverse-CDF over the sorted table.
    state_t sample(Philox& rng) const {
        double u = rng.next_double();
        double acc = 0.0;
        for (const auto& e : table_) {
            acc += e.second;
            if (u < acc) return e.first;
        }
        return table_.back().first;
    }

private:
    int m_ = 0;
    std::vector<std::pair<state_t, double>> table_;
};

// KL divergence D(p || q) = sum_{x in supp(p)} p(x) ln(p(x)/q(x)); +inf when
// the support of p is not covered by q.
inline double kl_divergence(const TabulatedDistribution& p,
                            const TabulatedDistribution& q) {
    KahanSum s;
    for (const auto& e : p.table()) {
        double qx = q.prob(e.first);
        if (qx <= 0.0) return std::numeric_limits<double>::infinity();
        s.add(e.second * (std::log(e.second) - std::log(qx)));
    }
    return s.value();
}

// KL divergence between two Bernoulli distributions with means p and q.
inline double bernoulli_kl(double p, double q) {
    auto term = [](double a, double b) {
        if (a <= 0.0) return 0.0;
        return a * (std::log(a) - std::log(b));
    };
    if ((q <= 0.0 && p > 0.0) || (q >= 1.0 && p < 1.0))
        return std::numeric_limits<double>::infinity();
    return term(p, q) + term(1.0 - p, 1.0 - q);
}

}  // namespace rbmlab

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"

namespace rbmlab::targets {

// ---------------------------------------------------------------------------
// Free-fermion solution (the analytic oracle)
// ---------------------------------------------------------------------------

// Transverse-field Ising chain H = -(1/2) sum_i (sx_i sx_{i+1} + g sz_i),
// periodic, M even. Diagonalization data in the even-particle sector with
// fermionic momenta k = (2n+1) pi / M.
struct TficSpectrum {
    std::vector<double> k;
    std::vector<double> eps;    // quasiparticle energies
    std::vector<double> alpha;  // -(g + cos k)
    std::vector<double> beta;   // sin k
    std::vector<double> omega;  // sqrt(2 eps (eps + alpha))
    std::vector<double> u;      // (eps + alpha) / omega
    std::vector<double> v;      // beta / omega (imaginary part; i*v in full form)
    double ground_energy = 0.0;  // -(1/2) sum_k eps_k
};

inline TficSpectrum tfic_spectrum(int m, double g) {
    TficSpectrum s;
    KahanSum e0;
    for (int n = 0; n < m; ++n) {
        double k = (2.0 * n + 1.0) * std::numbers::pi / m;
        double alpha = -(g + std::cos(k));
        double beta = std::sin(k);
        double eps = std::sqrt(alpha * alpha + beta * beta);
        double omega = std::sqrt(2.0 * eps * (eps + alpha));
        s.k.push_back(k);
        s.alpha.push_back(alpha);
        s.beta.push_back(beta);
        s.eps.push_back(eps);
        s.omega.push_back(omega);
        if (omega > 0.0) {
            s.u.push_back((eps + alpha) / omega);
            s.v.push_back(beta / omega);
        } else {
            s.u.push_back(1.0);
            s.v.push_back(0.0);
        }
        e0.add(eps);
    }
    s.ground_energy = -0.5 * e0.value();
    return s;
}

// ---------------------------------------------------------------------------
// Ground state in the sigma-z computational basis
// ---------------------------------------------------------------------------

// H acting on a 2^m vector in the z basis. Bit i = 1 means sz_i = -1, so the
// field term is diagonal, -(g/2)(m - 2 popcount); each bond flips its two
// bits with amplitude -1/2 (for m = 2 the single distinct flip mask carries
// both bonds). Parity of popcount is conserved.
inline void tfic_apply(int m, double g, const std::vector<double>& in,
                       std::vector<double>& out) {
    const std::uint64_t n = std::uint64_t{1} << m;
    out.assign(n, 0.0);
    for (std::uint64_t s = 0; s < n; ++s)
        out[s] = -0.5 * g * (m - 2 * std::popcount(s)) * in[s];
    for (int b = 0; b < m; ++b) {
        state_t mask = (state_t{1} << b) | (state_t{1} << ((b + 1) % m));
        for (std::uint64_t s = 0; s < n; ++s) out[s ^ mask] -= 0.5 * in[s];
    }
}

struct GroundStateResult {
    double energy = 0.0;
    std::vector<double> psi;
    int matvecs = 0;
    bool converged = false;
};

// Lanczos with full reorthogonalization and restarting, converging the lowest
// eigenpair to the requested residual norm. The start vector is the uniform
// superposition over even-popcount states, which has strictly positive
// overlap with the (Perron) ground state of the even sector.
inline GroundStateResult tfic_ground_state_vector(int m, double g,
                                                  double tol = 1e-11,
                                                  int basis_size = 40,
                                                  int max_restarts = 12) {
    const std::uint64_t n = std::uint64_t{1} << m;
    GroundStateResult result;

    std::vector<double> v0(n, 0.0);
    for (std::uint64_t s = 0; s < n; ++s)
        if (std::popcount(s) % 2 == 0) v0[s] = 1.0;
    auto normalize = [&](std::vector<double>& v) {
        KahanSum nrm;
        for (double x : v) nrm.add(x * x);
        double inv = 1.0 / std::sqrt(nrm.value());
        for (double& x : v) x *= inv;
    };
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        KahanSum s;
        for (std::uint64_t i = 0; i < n; ++i) s.add(a[i] * b[i]);
        return s.value();
    };
    normalize(v0);

    double scale = 0.5 * m * (1.0 + std::abs(g));  // crude norm bound of H
    std::vector<double> w(n);
    for (int restart = 0; restart < max_restarts; ++restart) {
        std::vector<std::vector<double>> basis;
        basis.push_back(v0);
        std::vector<double> alpha, beta;
        for (int j = 0; j < basis_size; ++j) {
            tfic_apply(m, g, basis.back(), w);
            result.matvecs++;
            double a = dot(w, basis.back());
            alpha.push_back(a);
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& q : basis) {
                    double c = dot(w, q);
                    for (std::uint64_t i = 0; i < n; ++i) w[i] -= c * q[i];
                }
            KahanSum nrm;
            for (double x : w) nrm.add(x * x);
            double b = std::sqrt(nrm.value());

            Eigen::Index dim = static_cast<Eigen::Index>(alpha.size());
            Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(dim, dim);
            for (Eigen::Index i = 0; i < dim; ++i) {
                tri(i, i) = alpha[static_cast<std::size_t>(i)];
                if (i + 1 < dim) {
                    tri(i, i + 1) = beta[static_cast<std::size_t>(i)];
                    tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
                }
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
            Eigen::Index lo;
            es.eigenvalues().minCoeff(&lo);
            double theta = es.eigenvalues()(lo);
            double residual = b * std::abs(es.eigenvectors()(dim - 1, lo));

            bool done = residual <= tol * scale;
            if (done || b < 1e-14 * scale || j + 1 == basis_size) {
                std::vector<double> ritz(n, 0.0);
                for (Eigen::Index i = 0; i < dim; ++i) {
                    double c = es.eigenvectors()(i, lo);
                    const auto& q = basis[static_cast<std::size_t>(i)];
                    for (std::uint64_t s = 0; s < n; ++s) ritz[s] += c * q[s];
                }
                normalize(ritz);
                v0 = std::move(ritz);
                result.energy = theta;
                result.converged = done || b < 1e-14 * scale;
                break;
            }
            beta.push_back(b);
            for (double& x : w) x /= b;
            basis.push_back(w);
        }
        if (result.converged) break;
    }
    if (!result.converged)
        throw std::runtime_error("ground-state eigensolver did not converge");

    // Fix the global phase so amplitudes are nonnegative.
    double extreme = 0.0;
    for (double x : v0)
        if (std::abs(x) > std::abs(extreme)) extreme = x;
    if (extreme < 0.0)
        for (double& x : v0) x = -x;
    result.psi = std::move(v0);
    return result;
}

// In-place fast Walsh-Hadamard transform (unnormalized butterflies).
inline void fwht(std::vector<double>& a) {
    const std::size_t n = a.size();
    for (std::size_t len = 1; len < n; len <<= 1)
        for (std::size_t i = 0; i < n; i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                double u = a[j], v = a[j + len];
                a[j] = u + v;
                a[j + len] = u - v;
            }
}

enum class TficBasis { z, x };

// Measurement distribution p(x) = psi(x)^2 of the ground state in the chosen
// basis. The x basis applies the full m-fold Hadamard rotation (FWHT scaled
// by 2^(-m/2)); amplitudes are checked to be nonnegative within 1e-9 in
// either basis before squaring.
inline TabulatedDistribution tfic_ground_state(int m, double g, TficBasis basis,
                                               double tol = 1e-11) {
    if (m % 2 != 0) throw config_error("chain length must be even");
    if (m > 24) throw capacity_error("full tabulation needs 2^m amplitudes", "m");
    GroundStateResult gs = tfic_ground_state_vector(m, g, tol);
    std::vector<double>& psi = gs.psi;
    if (basis == TficBasis::x) {
        fwht(psi);
        double scale = std::pow(2.0, -0.5 * m);
        for (double& x : psi) x *= scale;
        double extreme = 0.0;
        for (double x : psi)
            if (std::abs(x) > std::abs(extreme)) extreme = x;
        if (extreme < 0.0)
            for (double& x : psi) x = -x;
    }
    for (double x : psi)
        if (x < -1e-9)
            throw std::runtime_error(
                "negative ground-state amplitude beyond tolerance");
    std::vector<std::pair<state_t, double>> table;
    for (std::uint64_t s = 0; s < psi.size(); ++s)
        if (psi[s] != 0.0) table.emplace_back(s, psi[s] * psi[s]);
    return TabulatedDistribution(m, std::move(table), /*renormalize=*/true);
}

struct TficSymmetryReport {
    double odd_parity_mass = 0.0;    // z basis: must vanish
    double max_flip_asymmetry = 0.0; // x basis: max |p(x) - p(~x)|
    bool pass = false;
};

inline TficSymmetryReport tfic_symmetry_checks(const TabulatedDistribution& d,
                                               TficBasis basis) {
    TficSymmetryReport rep;
    int m = d.num_units();
    if (basis == TficBasis::z) {
        KahanSum odd;
        for (const auto& e : d.table())
            if (popcount(e.first) % 2 == 1) odd.add(e.second);
        rep.odd_parity_mass = odd.value();
        rep.pass = rep.odd_parity_mass == 0.0;
    } else {
        state_t all = mask_of(m);
        double worst = 0.0;
        for (const auto& e : d.table())
            worst = std::max(worst,
                             std::abs(e.second - d.prob(e.first ^ all)));
        rep.max_flip_asymmetry = worst;
        rep.pass = worst < 1e-10;
    }
    return rep;
}

}  // namespace rbmlab::targets

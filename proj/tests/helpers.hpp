#pragma once

#include "somcot/chain_model.hpp"
#include "somcot/coupling_lp.hpp"
#include "somcot/rounding.hpp"
#include "somcot/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace testing {

using namespace somcot;

inline Vector random_simplex(Rng& rng, Index n, double zero_prob = 0.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.uniform() < zero_prob ? 0.0 : -std::log(1.0 - rng.uniform());
    if (v.sum() == 0.0) v(static_cast<Index>(rng.index(n))) = 1.0;
    return v / v.sum();
}

inline MarkovChain random_chain(Rng& rng, Index n, double zero_prob = 0.0) {
    Matrix p(n, n);
    for (Index x = 0; x < n; ++x) p.row(x) = random_simplex(rng, n, zero_prob).transpose();
    // rows sum to 1 only up to rounding; push the defect into the largest entry
    for (Index x = 0; x < n; ++x) {
        Index j = 0;
        p.row(x).maxCoeff(&j);
        p(x, j) += 1.0 - p.row(x).sum();
    }
    std::vector<double> r(n);
    for (double& v : r) v = rng.uniform();
    return MarkovChain(p, static_cast<Index>(rng.index(n)), r);
}

// Northwest-corner coupling of p and q after permuting the columns.
inline Matrix corner_coupling(const Vector& p, const Vector& q, const std::vector<Index>& perm) {
    Matrix g = Matrix::Zero(p.size(), q.size());
    Vector a = p;
    Vector b(q.size());
    for (Index j = 0; j < q.size(); ++j) b(j) = q(perm[j]);
    Index i = 0, j = 0;
    while (i < p.size() && j < q.size()) {
        const double m = std::min(a(i), b(j));
        g(i, perm[j]) += m;
        a(i) -= m;
        b(j) -= m;
        if (a(i) <= b(j)) ++i;
        else ++j;
    }
    return g;
}

inline Matrix random_coupling(Rng& rng, const Vector& p, const Vector& q) {
    std::vector<Index> perm(q.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[rng.index(k)]);
    const double w = rng.uniform();
    return w * (p * q.transpose()) + (1.0 - w) * corner_coupling(p, q, perm);
}

inline TransitionCoupling random_transition_coupling(Rng& rng, const MarkovChain& x, const MarkovChain& y) {
    TransitionCoupling pi(x.size(), y.size());
    for (Index i = 0; i < x.size(); ++i)
        for (Index k = 0; k < y.size(); ++k)
            pi.set_block(i, k, random_coupling(rng, x.transition().row(i).transpose(), y.transition().row(k).transpose()));
    return pi;
}

inline OccupancyCoupling random_tensor(Rng& rng, Index nx, Index ny) {
    OccupancyCoupling mu(nx, ny);
    double z = 0.0;
    for (double& v : mu.values()) z += (v = rng.uniform());
    for (double& v : mu.values()) v /= z;
    return mu;
}

inline ConditionalKernel random_kernel(Rng& rng, Index rows, Index cols) {
    ConditionalKernel k;
    k.values.resize(rows, cols);
    for (Index i = 0; i < rows; ++i) k.values.row(i) = random_simplex(rng, cols).transpose();
    return k;
}

inline DualVariables random_duals(Rng& rng, Index nx, Index ny, double gamma) {
    DualVariables d(nx, ny);
    const double ra = DualVariables::alpha_radius(gamma);
    const double rv = DualVariables::value_radius(gamma);
    for (double& v : d.alpha_x) v = ra * (2.0 * rng.uniform() - 1.0);
    for (double& v : d.alpha_y) v = ra * (2.0 * rng.uniform() - 1.0);
    for (Index i = 0; i < nx; ++i)
        for (Index k = 0; k < ny; ++k) d.v(i, k) = rv * (2.0 * rng.uniform() - 1.0);
    return d;
}

inline MarkovChain two_cycle() {
    Matrix p(2, 2);
    p << 0, 1, 1, 0;
    return MarkovChain(p, 0);
}

inline MarkovChain single_state() { return MarkovChain(Matrix::Ones(1, 1), 0, {0.0}); }

// Frozen solver state with random duals, μ and λ on the given shape.
inline SolverState random_state(Rng& rng, Index nx, Index ny, double gamma) {
    SolverState s = SolverState::initial(nx, ny);
    s.duals = random_duals(rng, nx, ny, gamma);
    s.mu = random_tensor(rng, nx, ny);
    s.marginals = coupling_marginals(s.mu);
    s.lambda_x = random_kernel(rng, nx, ny);
    s.lambda_y = random_kernel(rng, ny, nx);
    return s;
}

// Running mean and variance per entry.
struct Moments {
    std::vector<double> sum, sq;
    int n = 0;

    explicit Moments(std::size_t size) : sum(size, 0.0), sq(size, 0.0) {}
    void add(const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            sum[i] += v[i];
            sq[i] += v[i] * v[i];
        }
        ++n;
    }
    double mean(std::size_t i) const { return sum[i] / n; }
    double se(std::size_t i) const {
        const double m = mean(i);
        return std::sqrt(std::max(0.0, sq[i] / n - m * m) / n);
    }
};

inline std::vector<double> flat(const Matrix& m) {
    std::vector<double> v;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index k = 0; k < m.cols(); ++k) v.push_back(m(i, k));
    return v;
}

inline int count_outside(const Moments& m, const std::vector<double>& exact) {
    int bad = 0;
    for (std::size_t i = 0; i < exact.size(); ++i)
        if (std::abs(m.mean(i) - exact[i]) > 3 * m.se(i) + 1e-12) ++bad;
    return bad;
}

}  // namespace testing

#include "somcot/rounding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace somcot {

TransitionCoupling::TransitionCoupling(Index nx, Index ny)
    : nx_(nx), ny_(ny), values_(static_cast<std::size_t>(nx) * ny * nx * ny, 0.0) {}

TransitionCoupling TransitionCoupling::independent(const MarkovChain& chain_x, const MarkovChain& chain_y) {
    TransitionCoupling pi(chain_x.size(), chain_y.size());
    for (Index x = 0; x < pi.nx_; ++x)
        for (Index y = 0; y < pi.ny_; ++y)
            pi.set_block(x, y, chain_x.transition().row(x).transpose() * chain_y.transition().row(y));
    return pi;
}

Matrix TransitionCoupling::block(Index x, Index y) const {
    Matrix b(nx_, ny_);
    for (Index xn = 0; xn < nx_; ++xn)
        for (Index yn = 0; yn < ny_; ++yn) b(xn, yn) = (*this)(x, y, xn, yn);
    return b;
}

void TransitionCoupling::set_block(Index x, Index y, const Matrix& b) {
    for (Index xn = 0; xn < nx_; ++xn)
        for (Index yn = 0; yn < ny_; ++yn) (*this)(x, y, xn, yn) = b(xn, yn);
}

double TransitionCoupling::max_marginal_defect(const MarkovChain& chain_x, const MarkovChain& chain_y) const {
    double worst = 0.0;
    for (Index x = 0; x < nx_; ++x)
        for (Index y = 0; y < ny_; ++y) {
            const Matrix b = block(x, y);
            worst = std::max(worst, (b.rowwise().sum() - chain_x.transition().row(x).transpose()).cwiseAbs().maxCoeff());
            worst = std::max(worst, (b.colwise().sum() - chain_y.transition().row(y)).cwiseAbs().maxCoeff());
        }
    return worst;
}

double TransitionCoupling::max_mass_defect() const {
    double worst = 0.0;
    for (Index x = 0; x < nx_; ++x)
        for (Index y = 0; y < ny_; ++y) worst = std::max(worst, std::abs(block(x, y).sum() - 1.0));
    return worst;
}

TransitionCoupling transition_coupling_of(const OccupancyCoupling& mu, const MarkovChain& chain_x,
                                          const MarkovChain& chain_y, double threshold) {
    const Index nx = mu.nx();
    const Index ny = mu.ny();
    if (chain_x.size() != nx || chain_y.size() != ny) throw std::invalid_argument("chain sizes do not match coupling");
    const Matrix mass = mu.state_marginal();
    TransitionCoupling pi(nx, ny);
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y) {
            if (mass(x, y) > threshold) {
                for (Index xn = 0; xn < nx; ++xn)
                    for (Index yn = 0; yn < ny; ++yn) pi(x, y, xn, yn) = mu(x, y, xn, yn) / mass(x, y);
            } else {
                pi.set_block(x, y, chain_x.transition().row(x).transpose() * chain_y.transition().row(y));
            }
        }
    return pi;
}

Matrix round_to_coupling(const Matrix& f, const Vector& p, const Vector& q) {
    if (f.rows() != p.size() || f.cols() != q.size()) throw std::invalid_argument("round_to_coupling: shape mismatch");
    Matrix g = f;
    const Vector r = g.rowwise().sum();
    for (Index i = 0; i < g.rows(); ++i)
        if (r(i) > p(i)) g.row(i) *= p(i) / r(i);
    const Vector c = g.colwise().sum().transpose();
    for (Index j = 0; j < g.cols(); ++j)
        if (c(j) > q(j)) g.col(j) *= q(j) / c(j);
    // Scaling leaves both deficits nonnegative up to roundoff.
    const Vector err_p = (p - g.rowwise().sum()).cwiseMax(0.0);
    const Vector err_q = (q - g.colwise().sum().transpose()).cwiseMax(0.0);
    const double mass = err_p.lpNorm<1>();
    if (mass > 0.0) g += err_p * err_q.transpose() / mass;
    return g;
}

Matrix round_symmetric(const Matrix& f, const Vector& p, const Vector& q) {
    return 0.5 * (round_to_coupling(f, p, q) + round_to_coupling(f.transpose(), q, p).transpose());
}

OccupancyCoupling induced_occupancy(const TransitionCoupling& pi, InitialPair nu0, double gamma) {
    const Index nx = pi.nx();
    const Index ny = pi.ny();
    const Index n = nx * ny;
    // Row s of the joint kernel is π(·|s) flattened as (x', y').
    Matrix kernel(n, n);
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index xn = 0; xn < nx; ++xn)
                for (Index yn = 0; yn < ny; ++yn) kernel(x * ny + y, xn * ny + yn) = pi(x, y, xn, yn);
    Matrix system = Matrix::Identity(n, n) - gamma * kernel.transpose();
    Vector rhs = Vector::Zero(n);
    rhs(nu0.x * ny + nu0.y) = 1.0 - gamma;
    const Vector xi = system.partialPivLu().solve(rhs);
    if (!xi.allFinite()) throw std::logic_error("induced_occupancy: non-finite solution");

    OccupancyCoupling mu(nx, ny);
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index xn = 0; xn < nx; ++xn)
                for (Index yn = 0; yn < ny; ++yn) mu(x, y, xn, yn) = xi(x * ny + y) * pi(x, y, xn, yn);
    return mu;
}

RoundedOccupancy round_occupancy(const OccupancyCoupling& mu, const MarkovChain& chain_x, const MarkovChain& chain_y,
                                 double gamma) {
    TransitionCoupling pi = transition_coupling_of(mu, chain_x, chain_y);
    for (Index x = 0; x < mu.nx(); ++x)
        for (Index y = 0; y < mu.ny(); ++y)
            pi.set_block(x, y,
                         round_symmetric(pi.block(x, y), chain_x.transition().row(x).transpose(),
                                         chain_y.transition().row(y).transpose()));
    RoundedOccupancy out;
    out.mu = induced_occupancy(pi, {chain_x.initial_state(), chain_y.initial_state()}, gamma);
    out.l1_gap = mu.l1_distance(out.mu);
    return out;
}

}  // namespace somcot

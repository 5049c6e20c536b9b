#pragma once

// Projection of an approximate occupancy coupling onto the feasible set:
// transition couplings, marginal rounding and induced occupancies.

#include "somcot/chain_model.hpp"
#include "somcot/coupling_lp.hpp"

#include <vector>

namespace somcot {

/// π(x', y' | x, y), stored with the same flat layout as OccupancyCoupling.
class TransitionCoupling {
public:
    TransitionCoupling() = default;
    TransitionCoupling(Index nx, Index ny);

    /// π(·|x,y) = P_X(·|x) ⊗ P_Y(·|y) for every pair.
    static TransitionCoupling independent(const MarkovChain& chain_x, const MarkovChain& chain_y);

    Index nx() const { return nx_; }
    Index ny() const { return ny_; }
    double operator()(Index x, Index y, Index xn, Index yn) const { return values_[index(x, y, xn, yn)]; }
    double& operator()(Index x, Index y, Index xn, Index yn) { return values_[index(x, y, xn, yn)]; }

    /// Conditional π(·|x,y) as an |X|×|Y| matrix.
    Matrix block(Index x, Index y) const;
    void set_block(Index x, Index y, const Matrix& b);

    /// Largest |row or column sum of π(·|x,y) − P_X(·|x) or P_Y(·|y)|.
    double max_marginal_defect(const MarkovChain& chain_x, const MarkovChain& chain_y) const;
    /// Largest |Σ π(·|x,y) − 1|.
    double max_mass_defect() const;

private:
    std::size_t index(Index x, Index y, Index xn, Index yn) const {
        return (static_cast<std::size_t>(x * ny_ + y) * nx_ + xn) * ny_ + yn;
    }

    Index nx_ = 0;
    Index ny_ = 0;
    std::vector<double> values_;
};

inline constexpr double kStateMassThreshold = 1e-12;

/// π_μ = μ / ν_μ where ν_μ(x,y) > threshold, the product kernel elsewhere.
TransitionCoupling transition_coupling_of(const OccupancyCoupling& mu, const MarkovChain& chain_x,
                                          const MarkovChain& chain_y, double threshold = kStateMassThreshold);

/// Scale rows down to p, columns down to q, then spread the remaining
/// deficit as err_p err_qᵀ / ‖err_p‖₁.
Matrix round_to_coupling(const Matrix& f, const Vector& p, const Vector& q);

/// (r(F, p, q) + r(Fᵀ, q, p)ᵀ) / 2.
Matrix round_symmetric(const Matrix& f, const Vector& p, const Vector& q);

/// Solves ξ = γΠᵀξ + (1−γ)δ_{nu0} over the joint states and returns
/// μ(x,y,x',y') = ξ(x,y)π(x',y'|x,y).
OccupancyCoupling induced_occupancy(const TransitionCoupling& pi, InitialPair nu0, double gamma);

struct RoundedOccupancy {
    OccupancyCoupling mu;
    double l1_gap = 0.0;
};

/// Symmetric rounding of every conditional of π_μ followed by the induced
/// occupancy; l1_gap = ‖μ − r(μ)‖₁.
RoundedOccupancy round_occupancy(const OccupancyCoupling& mu, const MarkovChain& chain_x, const MarkovChain& chain_y,
                                 double gamma);

}  // namespace somcot

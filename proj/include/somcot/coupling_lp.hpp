#pragma once

// Primal and dual objects of the occupancy-coupling linear program, and the
// quantities evaluated on them: constraint residuals, the Lagrangian, the
// transport cost and the feasibility-aware dual certificate.

#include "somcot/chain_model.hpp"

#include <vector>

namespace somcot {

/// Pair of initial states (x0, y0); the joint initial law is its Dirac mass.
struct InitialPair {
    Index x = 0;
    Index y = 0;
};

/// Dense nonnegative tensor μ(x, y, x', y') over X×Y×X×Y, stored row-major
/// in that index order. Viewed as a matrix, rows are the current state pair
/// s = (x, y) and columns the next pair s' = (x', y').
class OccupancyCoupling {
public:
    OccupancyCoupling() = default;
    OccupancyCoupling(Index nx, Index ny, double fill = 0.0);

    static OccupancyCoupling uniform(Index nx, Index ny);

    Index nx() const { return nx_; }
    Index ny() const { return ny_; }
    Index pairs() const { return nx_ * ny_; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(Index x, Index y, Index xn, Index yn) const {
        return (static_cast<std::size_t>(x * ny_ + y) * nx_ + xn) * ny_ + yn;
    }
    double operator()(Index x, Index y, Index xn, Index yn) const { return values_[index(x, y, xn, yn)]; }
    double& operator()(Index x, Index y, Index xn, Index yn) { return values_[index(x, y, xn, yn)]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double total() const;
    /// ν_μ(x, y) = Σ_{x'y'} μ(x, y, x', y').
    Matrix state_marginal() const;
    /// (Eμ)(x, y) = Σ_{x̂ŷ} μ(x̂, ŷ, x, y).
    Matrix shifted_marginal() const;
    /// Σ_{y y'} μ(x, y, x', y') as an |X|×|X| table.
    Matrix x_transition_marginal() const;
    /// Σ_{x x'} μ(x, y, x', y') as a |Y|×|Y| table.
    Matrix y_transition_marginal() const;

    double l1_distance(const OccupancyCoupling& other) const;

private:
    Index nx_ = 0;
    Index ny_ = 0;
    std::vector<double> values_;
};

/// Conditional kernel λ(target | conditioning): one probability row per
/// conditioning state. λ_X ∈ Δ_{Y|X} has |X| rows over Y; λ_Y ∈ Δ_{X|Y} has
/// |Y| rows over X.
struct ConditionalKernel {
    Matrix values;

    static ConditionalKernel uniform(Index conditioning, Index targets);

    Index rows() const { return static_cast<Index>(values.rows()); }
    Index cols() const { return static_cast<Index>(values.cols()); }
    double operator()(Index conditioning, Index target) const { return values(conditioning, target); }
    /// Largest |row sum − 1|.
    double max_row_defect() const;
};

/// Lagrange multipliers: α_X(x, x', y), α_Y(x, y, y') and V(x, y).
struct DualVariables {
    Index nx = 0;
    Index ny = 0;
    std::vector<double> alpha_x;  // (x, x', y) row-major
    std::vector<double> alpha_y;  // (x, y, y') row-major
    Matrix v;

    DualVariables() = default;
    DualVariables(Index nx, Index ny);

    std::size_t ax_index(Index x, Index xn, Index y) const {
        return (static_cast<std::size_t>(x) * nx + xn) * ny + y;
    }
    std::size_t ay_index(Index x, Index y, Index yn) const {
        return (static_cast<std::size_t>(x) * ny + y) * ny + yn;
    }
    double ax(Index x, Index xn, Index y) const { return alpha_x[ax_index(x, xn, y)]; }
    double ay(Index x, Index y, Index yn) const { return alpha_y[ay_index(x, y, yn)]; }

    /// Radii of the ∞-norm balls: 6/(1−γ) for α, 2/(1−γ) for V.
    static double alpha_radius(double gamma) { return 6.0 / (1.0 - gamma); }
    static double value_radius(double gamma) { return 2.0 / (1.0 - gamma); }

    bool within_domain(double gamma) const;
};

/// Partial sums of μ gathered in one pass. `sum_over_yn` is laid out like
/// α_X (x, x', y) and `sum_over_xn` like α_Y (x, y, y').
struct CouplingMarginals {
    Index nx = 0;
    Index ny = 0;
    Matrix out;  // ν_μ(x, y)
    Matrix in;   // (Eμ)(x, y)
    std::vector<double> sum_over_yn;
    std::vector<double> sum_over_xn;

    std::size_t ax_index(Index x, Index xn, Index y) const {
        return (static_cast<std::size_t>(x) * nx + xn) * ny + y;
    }
    std::size_t ay_index(Index x, Index y, Index yn) const {
        return (static_cast<std::size_t>(x) * ny + y) * ny + yn;
    }
};

CouplingMarginals coupling_marginals(const OccupancyCoupling& mu);

/// ℓ₁ sums of absolute equation residuals of the flow constraint and of the
/// two causality constraints.
struct ConstraintResiduals {
    double flow = 0.0;
    double causal_x = 0.0;
    double causal_y = 0.0;
};

ConstraintResiduals residuals(const OccupancyCoupling& mu, const ConditionalKernel& lx, const ConditionalKernel& ly,
                              const OccupancyTable& nu_x, const OccupancyTable& nu_y, InitialPair nu0, double gamma);

/// Same residuals evaluated from precomputed marginals of μ.
ConstraintResiduals residuals(const CouplingMarginals& m, const ConditionalKernel& lx, const ConditionalKernel& ly,
                              const OccupancyTable& nu_x, const OccupancyTable& nu_y, InitialPair nu0, double gamma);

/// Only the flow part of `residuals`; needs no marginal occupancies.
double flow_residual(const OccupancyCoupling& mu, InitialPair nu0, double gamma);

/// L = Σ μ·(c − α_X − α_Y + γV' − V) + Σ ν_X λ_X α_X + Σ ν_Y λ_Y α_Y + (1−γ)V(x0, y0),
/// evaluated with the solver-scale cost values.
double lagrangian(const OccupancyCoupling& mu, const ConditionalKernel& lx, const ConditionalKernel& ly,
                  const DualVariables& duals, const CostMatrix& cost, const OccupancyTable& nu_x,
                  const OccupancyTable& nu_y, InitialPair nu0, double gamma);

/// ⟨μ, c⟩ against an arbitrary X×Y matrix.
double inner_cost(const OccupancyCoupling& mu, const Matrix& c);

/// ⟨μ, c⟩ reported in the original cost units (times cost.scale).
double distance_of(const OccupancyCoupling& mu, const CostMatrix& cost);

/// ⟨μ, c⟩ + (6·causal_x + 6·causal_y + 2·flow)/(1−γ), in original cost units.
double dual_certificate(const OccupancyCoupling& mu, const CostMatrix& cost, const ConstraintResiduals& res,
                        double gamma);

/// Comparison of the sampled-measure constraint system (flow, causality with
/// λ) with the kernel-based system (flow, marginal factorization through
/// P_X, P_Y) on one μ.
struct EquivalenceReport {
    /// Largest absolute equation residual of flow / X-causality / Y-causality.
    double lp_residual = 0.0;
    /// Largest absolute equation residual of flow / X-marginal / Y-marginal.
    double kernel_residual = 0.0;
    /// λ_X(y|x) = Σ_{x'y'} μ(x,y,x',y') / ν_X(x), and its λ_Y counterpart.
    ConditionalKernel lambda_x;
    ConditionalKernel lambda_y;
    /// Rows with ν_X(x) (resp. ν_Y(y)) at or below the threshold are left
    /// uniform and marked false.
    std::vector<bool> lambda_x_determined;
    std::vector<bool> lambda_y_determined;
    /// Largest |reconstructed λ − given λ| over determined rows.
    double lambda_x_gap = 0.0;
    double lambda_y_gap = 0.0;
};

inline constexpr double kLambdaThreshold = 1e-8;

EquivalenceReport check_formulation_equivalence(const OccupancyCoupling& mu, const ConditionalKernel& lx,
                                          const ConditionalKernel& ly, const MarkovChain& chain_x,
                                          const MarkovChain& chain_y, double gamma);

/// Conditionals of μ: λ_X(y|x) = ν_μ-mass on (x, y) divided by ν_X(x) (and
/// symmetrically), uniform where the divisor is at or below `threshold`.
ConditionalKernel induced_lambda_x(const OccupancyCoupling& mu, const OccupancyTable& nu_x,
                                   double threshold = kLambdaThreshold);
ConditionalKernel induced_lambda_y(const OccupancyCoupling& mu, const OccupancyTable& nu_y,
                                   double threshold = kLambdaThreshold);

}  // namespace somcot

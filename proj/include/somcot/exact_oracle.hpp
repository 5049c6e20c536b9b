#pragma once

// Ground-truth distances on small instances: value iteration on the joint
// chain with an exact transport solve per state pair.

#include "somcot/chain_model.hpp"
#include "somcot/coupling_lp.hpp"
#include "somcot/rounding.hpp"

namespace somcot {

struct OracleResult {
    /// (1−γ)·W(x0, y0) in raw cost units.
    double distance = 0.0;
    /// W(x, y) = c(x, y) + γ·OT_W(P_X(·|x), P_Y(·|y)), raw cost units.
    Matrix value_table;
    /// Transport plans that are optimal against the final W.
    TransitionCoupling optimal_pi;
    int sweeps = 0;
};

/// One Bellman sweep: (T W)(x, y) = c(x, y) + γ·OT_W(P_X(·|x), P_Y(·|y)).
Matrix bellman_operator(const MarkovChain& chain_x, const MarkovChain& chain_y, const Matrix& cost, const Matrix& w,
                        double gamma);

/// Iterates the Bellman operator from W ≡ 0 until ‖ΔW‖∞ ≤ tol·(1−γ)/(2γ).
OracleResult bicausal_value_iteration(const MarkovChain& chain_x, const MarkovChain& chain_y, const CostMatrix& cost,
                                      double gamma, double tol = 1e-8);

/// Induced occupancy of the oracle's greedy transition coupling.
OccupancyCoupling oracle_occupancy(const MarkovChain& chain_x, const MarkovChain& chain_y, const CostMatrix& cost,
                                   double gamma, double tol = 1e-8);

}  // namespace somcot

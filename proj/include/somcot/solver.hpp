#pragma once

// Stochastic primal-dual solver for the occupancy-coupling LP: sampled
// gradient estimates, exponentiated primal steps, clamped dual steps and
// iterate averaging.

#include "somcot/chain_model.hpp"
#include "somcot/coupling_lp.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace somcot {

enum class RatePreset { theory, practical };

struct SolverConfig {
    double gamma = 0.9;
    std::int64_t iterations = 1000;
    int batch_size = 1;
    std::uint64_t seed = 0;
    RatePreset preset = RatePreset::practical;
    // practical preset: η_k = eta0/√(1 + decay·k), constant dual rate beta0
    double eta0 = 0.1;
    double decay = 0.001;
    double beta0 = 0.5;
    std::int64_t snapshot_every = 1000;
    /// Extra iterations at which a trace entry is recorded.
    std::vector<std::int64_t> snapshot_at;
    bool average_last_half = false;
    /// When false the averaged tensor μ̄ is not accumulated; traces and λ̄
    /// are unaffected.
    bool keep_mu_bar = true;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct LearningRates {
    double eta = 0.0;
    double eta_x = 0.0;
    double eta_y = 0.0;
    double beta_x = 0.0;
    double beta_y = 0.0;
    double beta = 0.0;
};

LearningRates theory_rates(Index nx, Index ny, double gamma, std::int64_t iterations);

/// Rates used at iteration k (1-based).
LearningRates rates_at(const SolverConfig& config, Index nx, Index ny, std::int64_t k);

/// Everything the objective needs besides samples: cost, joint start and,
/// when the kernels are known, the exact marginal occupancies used for
/// residual diagnostics.
struct Problem {
    CostMatrix cost;
    InitialPair nu0;
    std::optional<OccupancyTable> nu_x;
    std::optional<OccupancyTable> nu_y;

    Index nx() const { return cost.rows(); }
    Index ny() const { return cost.cols(); }

    static Problem from_chains(const MarkovChain& chain_x, const MarkovChain& chain_y, CostMatrix cost, double gamma);
};

struct SolverState {
    OccupancyCoupling mu;
    ConditionalKernel lambda_x;  // |X| rows over Y
    ConditionalKernel lambda_y;  // |Y| rows over X
    DualVariables duals;

    // log μ up to a constant is the sum of these four cumulative tables.
    Matrix log_pair;               // (x, y)
    std::vector<double> log_x;     // (x, x', y)
    std::vector<double> log_y;     // (x, y, y')
    Matrix log_next;               // (x', y')
    Matrix lambda_x_logits;
    Matrix lambda_y_logits;

    /// Marginals of the current μ, kept in step with every update.
    CouplingMarginals marginals;

    // Running sums of post-update iterates, fed while `averaging` is set.
    std::vector<double> mu_sum;
    Matrix lambda_x_sum;
    Matrix lambda_y_sum;
    CouplingMarginals marginals_sum;
    std::int64_t averaged = 0;
    bool averaging = true;
    bool track_mu_sum = true;
    std::int64_t k = 0;

    static SolverState initial(Index nx, Index ny);

    /// Rebuilds μ from the cumulative logit tables. Errors name iteration
    /// k + 1, the iterate being produced.
    void rematerialize_mu();
};

/// Deterministic part of the μ gradient, evaluated lazily:
/// c(x,y) − α_X(x,x',y) − α_Y(x,y,y') + γV(x',y') − V(x,y).
class MuGradient {
public:
    MuGradient(const DualVariables& duals, const Matrix& cost, double gamma)
        : duals_(&duals), cost_(&cost), gamma_(gamma) {}

    double operator()(Index x, Index y, Index xn, Index yn) const {
        return (*cost_)(x, y) - duals_->ax(x, xn, y) - duals_->ay(x, y, yn) + gamma_ * duals_->v(xn, yn) -
               duals_->v(x, y);
    }
    OccupancyCoupling dense() const;

    const DualVariables& duals() const { return *duals_; }
    const Matrix& cost() const { return *cost_; }
    double gamma() const { return gamma_; }

private:
    const DualVariables* duals_;
    const Matrix* cost_;
    double gamma_;
};

/// Batch-averaged λ gradient: only `rows` carry nonzero values.
struct RowGradient {
    Matrix values;
    std::vector<Index> rows;
};

struct PrimalGradients {
    MuGradient mu;
    RowGradient lambda_x;
    RowGradient lambda_y;
};

struct DualGradients {
    std::vector<double> alpha_x;
    std::vector<double> alpha_y;
    Matrix v;
};

PrimalGradients estimate_primal_gradients(const SolverState& state, const CostMatrix& cost,
                                          std::span<const TransitionPair> samples_x,
                                          std::span<const TransitionPair> samples_y, double gamma);

DualGradients estimate_dual_gradients(const SolverState& state, std::span<const TransitionPair> samples_x,
                                      std::span<const TransitionPair> samples_y, InitialPair nu0, double gamma);

/// p ← p·exp(−η g) / Z, with the exponent shifted by its maximum.
void exponentiated_step(std::span<double> p, std::span<const double> g, double eta);

/// Exponentiated steps on μ (all entries) and on the sampled λ rows; the
/// new iterates are added to the running sums when state.averaging is set.
void update_primal(SolverState& state, const PrimalGradients& grads, const LearningRates& rates);

/// Clamped gradient steps α ← clamp(α − β g), V ← clamp(V − β g).
void update_dual(SolverState& state, const DualGradients& grads, const LearningRates& rates, double gamma);

struct IterateDiagnostics {
    std::int64_t k = 0;
    double distance_estimate = 0.0;
    /// Present only when the problem carries exact marginal occupancies.
    std::optional<ConstraintResiduals> residuals;
    std::optional<double> certificate;
};

struct RunResult {
    /// Empty when config.keep_mu_bar is false.
    OccupancyCoupling mu_bar;
    ConditionalKernel lambda_x_bar;
    ConditionalKernel lambda_y_bar;
    std::vector<IterateDiagnostics> trace;
    double distance = 0.0;
};

/// Diagnostics of the running average held in `state`.
IterateDiagnostics diagnose(const SolverState& state, const Problem& problem, double gamma);

/// Runs config.iterations steps drawing config.batch_size pairs per chain per
/// step. Throws std::runtime_error naming the iteration on a non-finite value.
RunResult run(const Problem& problem, TransitionSampler& sampler_x, TransitionSampler& sampler_y,
              const SolverConfig& config);

/// Exact-geometric samplers seeded from config.seed.
RunResult run(const MarkovChain& chain_x, const MarkovChain& chain_y, const CostMatrix& cost,
              const SolverConfig& config);

}  // namespace somcot

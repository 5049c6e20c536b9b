#include "somcot/solver.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <string>

namespace somcot {

namespace {

// μ is refreshed from its logit tables at this period so that entries
// flushed to zero by the multiplicative path can come back.
constexpr std::int64_t kRematerializePeriod = 64;
// Largest total exponent spread handled by the multiplicative path.
constexpr double kMaxFactorSpread = 600.0;

void fail_non_finite(std::int64_t k, const char* what) {
    throw std::runtime_error(std::string("non-finite ") + what + " at iteration " + std::to_string(k));
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

void zero_marginals(CouplingMarginals& m, Index nx, Index ny) {
    m.nx = nx;
    m.ny = ny;
    m.out = Matrix::Zero(nx, ny);
    m.in = Matrix::Zero(nx, ny);
    m.sum_over_yn.assign(static_cast<std::size_t>(nx) * nx * ny, 0.0);
    m.sum_over_xn.assign(static_cast<std::size_t>(nx) * ny * ny, 0.0);
}

void scale_marginals(CouplingMarginals& m, double s) {
    m.out *= s;
    m.in *= s;
    for (double& v : m.sum_over_yn) v *= s;
    for (double& v : m.sum_over_xn) v *= s;
}

void softmax_row(const Matrix& logits, Matrix& probs, Index row) {
    const double m = logits.row(row).maxCoeff();
    double z = 0.0;
    for (Index j = 0; j < logits.cols(); ++j) {
        probs(row, j) = std::exp(logits(row, j) - m);
        z += probs(row, j);
    }
    probs.row(row) /= z;
}

}  // namespace

void SolverConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (snapshot_every < 1) throw std::invalid_argument("snapshot_every must be at least 1");
    for (std::int64_t k : snapshot_at)
        if (k < 1) throw std::invalid_argument("snapshot_at entries must be at least 1");
    if (preset == RatePreset::practical) {
        if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
        if (!(decay >= 0.0)) throw std::invalid_argument("decay must be nonnegative");
        if (!(beta0 > 0.0)) throw std::invalid_argument("beta0 must be positive");
    }
}

LearningRates theory_rates(Index nx, Index ny, double gamma, std::int64_t iterations) {
    const double K = static_cast<double>(iterations);
    const double X = nx;
    const double Y = ny;
    const double g2 = (1.0 - gamma) * (1.0 - gamma);
    LearningRates r;
    r.eta = std::sqrt(std::log(X * X * Y * Y) * g2 / K);
    r.eta_x = std::sqrt(X * std::log(Y) * g2 / K);
    r.eta_y = std::sqrt(Y * std::log(X) * g2 / K);
    r.beta_x = std::sqrt(X * X * Y / (g2 * K));
    r.beta_y = std::sqrt(X * Y * Y / (g2 * K));
    r.beta = std::sqrt(X * Y / (g2 * K));
    return r;
}

LearningRates rates_at(const SolverConfig& config, Index nx, Index ny, std::int64_t k) {
    if (config.preset == RatePreset::theory) return theory_rates(nx, ny, config.gamma, config.iterations);
    const double eta = config.eta0 / std::sqrt(1.0 + config.decay * static_cast<double>(k));
    return {eta, eta, eta, config.beta0, config.beta0, config.beta0};
}

Problem Problem::from_chains(const MarkovChain& chain_x, const MarkovChain& chain_y, CostMatrix cost, double gamma) {
    if (cost.rows() != chain_x.size() || cost.cols() != chain_y.size())
        throw std::invalid_argument("cost shape does not match the chains");
    Problem p;
    p.cost = std::move(cost);
    p.nu0 = {chain_x.initial_state(), chain_y.initial_state()};
    p.nu_x = exact_occupancy(chain_x, gamma);
    p.nu_y = exact_occupancy(chain_y, gamma);
    return p;
}

SolverState SolverState::initial(Index nx, Index ny) {
    SolverState s;
    s.mu = OccupancyCoupling::uniform(nx, ny);
    s.lambda_x = ConditionalKernel::uniform(nx, ny);
    s.lambda_y = ConditionalKernel::uniform(ny, nx);
    s.duals = DualVariables(nx, ny);
    s.log_pair = Matrix::Zero(nx, ny);
    s.log_x.assign(static_cast<std::size_t>(nx) * nx * ny, 0.0);
    s.log_y.assign(static_cast<std::size_t>(nx) * ny * ny, 0.0);
    s.log_next = Matrix::Zero(nx, ny);
    s.lambda_x_logits = Matrix::Zero(nx, ny);
    s.lambda_y_logits = Matrix::Zero(ny, nx);
    s.marginals = coupling_marginals(s.mu);
    s.mu_sum.assign(s.mu.size(), 0.0);
    s.lambda_x_sum = Matrix::Zero(nx, ny);
    s.lambda_y_sum = Matrix::Zero(ny, nx);
    zero_marginals(s.marginals_sum, nx, ny);
    return s;
}

void SolverState::rematerialize_mu() {
    const Index nx = mu.nx();
    const Index ny = mu.ny();
    std::vector<double>& v = mu.values();
    auto logit = [&](Index x, Index y, Index xn, Index yn) {
        return log_pair(x, y) + log_x[duals.ax_index(x, xn, y)] + log_y[duals.ay_index(x, y, yn)] +
               log_next(xn, yn);
    };
    double top = -INFINITY;
    std::size_t i = 0;
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index xn = 0; xn < nx; ++xn)
                for (Index yn = 0; yn < ny; ++yn, ++i) {
                    v[i] = logit(x, y, xn, yn);
                    top = std::max(top, v[i]);
                }
    if (!std::isfinite(top)) fail_non_finite(k + 1, "coupling logit");
    double z = 0.0;
    for (double& t : v) {
        t = std::exp(t - top);
        if (t < DBL_MIN) t = 0.0;
        z += t;
    }
    for (double& t : v) t /= z;
    marginals = coupling_marginals(mu);
}

OccupancyCoupling MuGradient::dense() const {
    const Index nx = duals_->nx;
    const Index ny = duals_->ny;
    OccupancyCoupling g(nx, ny);
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index xn = 0; xn < nx; ++xn)
                for (Index yn = 0; yn < ny; ++yn) g(x, y, xn, yn) = (*this)(x, y, xn, yn);
    return g;
}

PrimalGradients estimate_primal_gradients(const SolverState& state, const CostMatrix& cost,
                                          std::span<const TransitionPair> samples_x,
                                          std::span<const TransitionPair> samples_y, double gamma) {
    const DualVariables& d = state.duals;
    const Index nx = d.nx;
    const Index ny = d.ny;
    if (samples_x.empty() || samples_y.empty()) throw std::invalid_argument("empty sample batch");
    PrimalGradients g{MuGradient(d, cost.values, gamma), {Matrix::Zero(nx, ny), {}}, {Matrix::Zero(ny, nx), {}}};

    const double wx = 1.0 / static_cast<double>(samples_x.size());
    for (const TransitionPair& s : samples_x) {
        for (Index y = 0; y < ny; ++y) g.lambda_x.values(s.from, y) += wx * d.ax(s.from, s.to, y);
        g.lambda_x.rows.push_back(s.from);
    }
    const double wy = 1.0 / static_cast<double>(samples_y.size());
    for (const TransitionPair& s : samples_y) {
        for (Index x = 0; x < nx; ++x) g.lambda_y.values(s.from, x) += wy * d.ay(x, s.from, s.to);
        g.lambda_y.rows.push_back(s.from);
    }
    for (RowGradient* r : {&g.lambda_x, &g.lambda_y}) {
        std::sort(r->rows.begin(), r->rows.end());
        r->rows.erase(std::unique(r->rows.begin(), r->rows.end()), r->rows.end());
    }
    return g;
}

DualGradients estimate_dual_gradients(const SolverState& state, std::span<const TransitionPair> samples_x,
                                      std::span<const TransitionPair> samples_y, InitialPair nu0, double gamma) {
    const CouplingMarginals& m = state.marginals;
    const Index nx = m.nx;
    const Index ny = m.ny;
    if (samples_x.empty() || samples_y.empty()) throw std::invalid_argument("empty sample batch");
    DualGradients g{m.sum_over_yn, m.sum_over_xn, m.out - gamma * m.in};
    g.v(nu0.x, nu0.y) -= 1.0 - gamma;

    const double wx = 1.0 / static_cast<double>(samples_x.size());
    for (const TransitionPair& s : samples_x)
        for (Index y = 0; y < ny; ++y) g.alpha_x[m.ax_index(s.from, s.to, y)] -= wx * state.lambda_x(s.from, y);
    const double wy = 1.0 / static_cast<double>(samples_y.size());
    for (const TransitionPair& s : samples_y)
        for (Index x = 0; x < nx; ++x) g.alpha_y[m.ay_index(x, s.from, s.to)] -= wy * state.lambda_y(s.from, x);
    return g;
}

void exponentiated_step(std::span<double> p, std::span<const double> g, double eta) {
    if (p.size() != g.size()) throw std::invalid_argument("exponentiated_step: size mismatch");
    double top = -INFINITY;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) top = std::max(top, -eta * g[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) p[i] *= std::exp(-eta * g[i] - top);
        z += p[i];
    }
    for (double& v : p) v /= z;
}

void update_primal(SolverState& state, const PrimalGradients& grads, const LearningRates& rates) {
    const MuGradient& gm = grads.mu;
    const DualVariables& d = gm.duals();
    const Matrix& c = gm.cost();
    const double gamma = gm.gamma();
    const Index nx = d.nx;
    const Index ny = d.ny;
    const double eta = rates.eta;

    // −η·g_mu splits into four tables; each is shifted by its maximum before
    // exponentiation.
    Matrix inc_pair = -eta * (c - d.v);
    std::vector<double> inc_x(d.alpha_x.size());
    std::vector<double> inc_y(d.alpha_y.size());
    for (std::size_t i = 0; i < inc_x.size(); ++i) inc_x[i] = eta * d.alpha_x[i];
    for (std::size_t i = 0; i < inc_y.size(); ++i) inc_y[i] = eta * d.alpha_y[i];
    Matrix inc_next = -eta * gamma * d.v;

    state.log_pair += inc_pair;
    for (std::size_t i = 0; i < inc_x.size(); ++i) state.log_x[i] += inc_x[i];
    for (std::size_t i = 0; i < inc_y.size(); ++i) state.log_y[i] += inc_y[i];
    state.log_next += inc_next;

    const double spread = (inc_pair.maxCoeff() - inc_pair.minCoeff()) +
                          (max_of(inc_x) - *std::min_element(inc_x.begin(), inc_x.end())) +
                          (max_of(inc_y) - *std::min_element(inc_y.begin(), inc_y.end())) +
                          (inc_next.maxCoeff() - inc_next.minCoeff());

    const bool refresh = !(spread <= kMaxFactorSpread) || (state.k + 1) % kRematerializePeriod == 0;
    bool done = false;
    if (!refresh) {
        const Matrix fa = (inc_pair.array() - inc_pair.maxCoeff()).exp().matrix();
        std::vector<double> fb(inc_x.size());
        std::vector<double> fc(inc_y.size());
        const double mb = max_of(inc_x);
        const double mc = max_of(inc_y);
        for (std::size_t i = 0; i < fb.size(); ++i) fb[i] = std::exp(inc_x[i] - mb);
        for (std::size_t i = 0; i < fc.size(); ++i) fc[i] = std::exp(inc_y[i] - mc);
        // row-major copy of the (x', y') factor for the inner loop
        std::vector<double> fd(static_cast<std::size_t>(nx) * ny);
        const double md = inc_next.maxCoeff();
        for (Index xn = 0; xn < nx; ++xn)
            for (Index yn = 0; yn < ny; ++yn) fd[xn * ny + yn] = std::exp(inc_next(xn, yn) - md);

        CouplingMarginals& m = state.marginals;
        zero_marginals(m, nx, ny);
        std::vector<double> in(static_cast<std::size_t>(nx) * ny, 0.0);
        // First pass gathers the marginals of the unnormalized update, the
        // second recomputes it, normalizes and accumulates.
        const double* p = state.mu.values().data();
        double total = 0.0;
        for (Index x = 0; x < nx; ++x)
            for (Index y = 0; y < ny; ++y) {
                const double f0 = fa(x, y);
                double* __restrict sy = m.sum_over_xn.data() + m.ay_index(x, y, 0);
                const double* __restrict fcy = fc.data() + d.ay_index(x, y, 0);
                double row = 0.0;
                for (Index xn = 0; xn < nx; ++xn, p += ny) {
                    const double f1 = f0 * fb[d.ax_index(x, xn, y)];
                    const double* __restrict cell = p;
                    const double* __restrict fdx = fd.data() + static_cast<std::size_t>(xn) * ny;
                    double* __restrict inx = in.data() + static_cast<std::size_t>(xn) * ny;
                    // four interleaved partial sums break the add latency chain
                    double lane[4] = {0.0, 0.0, 0.0, 0.0};
                    for (Index yn = 0; yn < ny; ++yn) {
                        double v = cell[yn] * f1 * fcy[yn] * fdx[yn];
                        v = v < DBL_MIN ? 0.0 : v;
                        sy[yn] += v;
                        inx[yn] += v;
                        lane[yn & 3] += v;
                    }
                    const double partial = (lane[0] + lane[1]) + (lane[2] + lane[3]);
                    m.sum_over_yn[m.ax_index(x, xn, y)] = partial;
                    row += partial;
                }
                m.out(x, y) = row;
                total += row;
            }
        if (std::isfinite(total) && total > 0.0) {
            const double inv = 1.0 / total;
            const bool add = state.averaging && state.track_mu_sum;
            double* q = state.mu.values().data();
            double* sum = state.mu_sum.data();
            for (Index x = 0; x < nx; ++x)
                for (Index y = 0; y < ny; ++y) {
                    const double f0 = fa(x, y) * inv;
                    const double* __restrict fcy = fc.data() + d.ay_index(x, y, 0);
                    for (Index xn = 0; xn < nx; ++xn, q += ny, sum += ny) {
                        const double f1 = f0 * fb[d.ax_index(x, xn, y)];
                        double* __restrict cell = q;
                        double* __restrict acc = sum;
                        const double* __restrict fdx = fd.data() + static_cast<std::size_t>(xn) * ny;
                        for (Index yn = 0; yn < ny; ++yn) {
                            double v = cell[yn] * f1 * fcy[yn] * fdx[yn];
                            v = v < DBL_MIN ? 0.0 : v;
                            cell[yn] = v;
                            if (add) acc[yn] += v;
                        }
                    }
                }
            for (Index xn = 0; xn < nx; ++xn)
                for (Index yn = 0; yn < ny; ++yn) m.in(xn, yn) = in[xn * ny + yn];
            scale_marginals(m, inv);
            done = true;
        }
    }
    if (!done) {
        state.rematerialize_mu();
        if (state.averaging && state.track_mu_sum) {
            const std::vector<double>& v = state.mu.values();
            for (std::size_t i = 0; i < v.size(); ++i) state.mu_sum[i] += v[i];
        }
    }

    for (Index x : grads.lambda_x.rows) {
        state.lambda_x_logits.row(x) -= rates.eta_x * grads.lambda_x.values.row(x);
        softmax_row(state.lambda_x_logits, state.lambda_x.values, x);
        if (!state.lambda_x.values.row(x).allFinite()) fail_non_finite(state.k + 1, "lambda_x");
    }
    for (Index y : grads.lambda_y.rows) {
        state.lambda_y_logits.row(y) -= rates.eta_y * grads.lambda_y.values.row(y);
        softmax_row(state.lambda_y_logits, state.lambda_y.values, y);
        if (!state.lambda_y.values.row(y).allFinite()) fail_non_finite(state.k + 1, "lambda_y");
    }

    if (state.averaging) {
        state.lambda_x_sum += state.lambda_x.values;
        state.lambda_y_sum += state.lambda_y.values;
        CouplingMarginals& sm = state.marginals_sum;
        const CouplingMarginals& m = state.marginals;
        sm.out += m.out;
        sm.in += m.in;
        for (std::size_t i = 0; i < sm.sum_over_yn.size(); ++i) sm.sum_over_yn[i] += m.sum_over_yn[i];
        for (std::size_t i = 0; i < sm.sum_over_xn.size(); ++i) sm.sum_over_xn[i] += m.sum_over_xn[i];
        ++state.averaged;
    }
}

void update_dual(SolverState& state, const DualGradients& grads, const LearningRates& rates, double gamma) {
    DualVariables& d = state.duals;
    const double ra = DualVariables::alpha_radius(gamma);
    const double rv = DualVariables::value_radius(gamma);
    for (std::size_t i = 0; i < d.alpha_x.size(); ++i)
        d.alpha_x[i] = std::clamp(d.alpha_x[i] - rates.beta_x * grads.alpha_x[i], -ra, ra);
    for (std::size_t i = 0; i < d.alpha_y.size(); ++i)
        d.alpha_y[i] = std::clamp(d.alpha_y[i] - rates.beta_y * grads.alpha_y[i], -ra, ra);
    d.v = (d.v - rates.beta * grads.v).cwiseMax(-rv).cwiseMin(rv);
    if (!d.v.allFinite()) fail_non_finite(state.k + 1, "value dual");
}

IterateDiagnostics diagnose(const SolverState& state, const Problem& problem, double gamma) {
    CouplingMarginals m = state.marginals;
    ConditionalKernel lx = state.lambda_x;
    ConditionalKernel ly = state.lambda_y;
    if (state.averaged > 0) {
        const double inv = 1.0 / static_cast<double>(state.averaged);
        m = state.marginals_sum;
        scale_marginals(m, inv);
        lx.values = state.lambda_x_sum * inv;
        ly.values = state.lambda_y_sum * inv;
    }
    IterateDiagnostics diag;
    diag.k = state.k;
    const double inner = m.out.cwiseProduct(problem.cost.values).sum();
    diag.distance_estimate = inner * problem.cost.scale;
    if (problem.nu_x && problem.nu_y) {
        const ConstraintResiduals r = residuals(m, lx, ly, *problem.nu_x, *problem.nu_y, problem.nu0, gamma);
        diag.residuals = r;
        diag.certificate =
            problem.cost.scale * (inner + (6.0 * r.causal_x + 6.0 * r.causal_y + 2.0 * r.flow) / (1.0 - gamma));
    }
    return diag;
}

RunResult run(const Problem& problem, TransitionSampler& sampler_x, TransitionSampler& sampler_y,
              const SolverConfig& config) {
    config.validate();
    const Index nx = problem.nx();
    const Index ny = problem.ny();
    if (sampler_x.state_count() > nx || sampler_y.state_count() > ny)
        throw std::invalid_argument("sampler states exceed the cost matrix shape");
    if (problem.nu0.x < 0 || problem.nu0.x >= nx || problem.nu0.y < 0 || problem.nu0.y >= ny)
        throw std::invalid_argument("initial pair outside the state spaces");
    if (problem.cost.values.size() > 0 && problem.cost.values.maxCoeff() > 1.0)
        throw std::invalid_argument("solver cost must satisfy max <= 1");

    SolverState state = SolverState::initial(nx, ny);
    state.track_mu_sum = config.keep_mu_bar;
    const std::int64_t first_averaged = config.average_last_half ? config.iterations / 2 + 1 : 1;
    const auto b = static_cast<std::size_t>(config.batch_size);
    std::vector<TransitionPair> xs(b);
    std::vector<TransitionPair> ys(b);
    RunResult result;
    std::vector<std::int64_t> marks = config.snapshot_at;
    std::sort(marks.begin(), marks.end());
    auto next_mark = marks.begin();

    for (std::int64_t k = 1; k <= config.iterations; ++k) {
        for (std::size_t i = 0; i < b; ++i) {
            xs[i] = sampler_x.sample(config.gamma);
            ys[i] = sampler_y.sample(config.gamma);
        }
        const LearningRates rates = rates_at(config, nx, ny, k);
        state.averaging = k >= first_averaged;
        const PrimalGradients pg = estimate_primal_gradients(state, problem.cost, xs, ys, config.gamma);
        const DualGradients dg = estimate_dual_gradients(state, xs, ys, problem.nu0, config.gamma);
        update_primal(state, pg, rates);
        update_dual(state, dg, rates, config.gamma);
        state.k = k;
        bool marked = false;
        while (next_mark != marks.end() && *next_mark <= k) marked |= *next_mark++ == k;
        if (marked || k % config.snapshot_every == 0 || k == config.iterations)
            result.trace.push_back(diagnose(state, problem, config.gamma));
    }

    const double inv = 1.0 / static_cast<double>(state.averaged);
    if (config.keep_mu_bar) {
        result.mu_bar = OccupancyCoupling(nx, ny);
        std::vector<double>& bar = result.mu_bar.values();
        for (std::size_t i = 0; i < bar.size(); ++i) bar[i] = state.mu_sum[i] * inv;
    }
    result.lambda_x_bar.values = state.lambda_x_sum * inv;
    result.lambda_y_bar.values = state.lambda_y_sum * inv;
    result.distance = result.trace.back().distance_estimate;
    return result;
}

RunResult run(const MarkovChain& chain_x, const MarkovChain& chain_y, const CostMatrix& cost,
              const SolverConfig& config) {
    config.validate();
    const Problem problem = Problem::from_chains(chain_x, chain_y, cost, config.gamma);
    TransitionSampler sx = TransitionSampler::exact(chain_x, derive_seed(config.seed, 1));
    TransitionSampler sy = TransitionSampler::exact(chain_y, derive_seed(config.seed, 2));
    return run(problem, sx, sy, config);
}

}  // namespace somcot

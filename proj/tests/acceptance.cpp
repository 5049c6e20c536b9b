// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [name...]   (no names runs everything)

#include "helpers.hpp"

#include "somcot/exact_oracle.hpp"
#include "somcot/harness.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace somcot;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SolverConfig practical(double gamma, std::int64_t iterations, std::uint64_t seed, bool last_half) {
    SolverConfig cfg = preset_config("oracle-check");
    cfg.average_last_half = last_half;
    cfg.gamma = gamma;
    cfg.iterations = iterations;
    cfg.seed = seed;
    cfg.snapshot_every = iterations;
    cfg.keep_mu_bar = false;
    return cfg;
}

Outcome zero_case() {
    const MarkovChain walk = make_random_walk(5, 0.5);
    const CostMatrix cost = indicator_cost(walk, walk);
    std::vector<double> d;
    std::string detail = "estimates";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        d.push_back(run(walk, walk, cost, practical(0.9, 300000, seed, true)).distance);
        detail += " " + fmt("%.4f", d.back());
    }
    const double m = median(d);
    return {m <= 0.05, "median " + fmt("%.4f", m) + " <= 0.05 (" + detail + ")"};
}

Outcome nonzero_case() {
    const MarkovChain x = make_random_walk(4, 0.3);
    const MarkovChain y = make_random_walk(4, 0.7);
    const CostMatrix cost = reward_abs_diff_cost(x, y);
    const double exact = bicausal_value_iteration(x, y, cost, 0.9).distance;
    std::vector<double> err;
    std::string detail = "errors";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        err.push_back(std::abs(run(x, y, cost, practical(0.9, 500000, seed, true)).distance - exact));
        detail += " " + fmt("%.4f", err.back());
    }
    const double m = median(err);
    return {m <= 0.05, "oracle " + fmt("%.6f", exact) + ", median |error| " + fmt("%.4f", m) + " <= 0.05 (" +
                           detail + ")"};
}

Outcome rate_scaling() {
    const MarkovChain x = make_random_walk(4, 0.3);
    const MarkovChain y = make_random_walk(4, 0.7);
    const CostMatrix cost = reward_abs_diff_cost(x, y);
    const double exact = bicausal_value_iteration(x, y, cost, 0.9).distance;
    const std::int64_t k0 = 80000;
    std::vector<double> small, large;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SolverConfig cfg = practical(0.9, 4 * k0, 100 + seed, false);
        cfg.snapshot_at = {k0};
        const RunResult r = run(x, y, cost, cfg);
        for (const IterateDiagnostics& t : r.trace) {
            if (t.k == k0) small.push_back(std::abs(t.distance_estimate - exact));
            if (t.k == 4 * k0) large.push_back(std::abs(t.distance_estimate - exact));
        }
    }
    const double a = median(small);
    const double b = median(large);
    const double ratio = a / b;
    return {ratio >= 1.5 && ratio <= 3.0, "median error " + fmt("%.4f", a) + " at K=80000, " + fmt("%.4f", b) +
                                              " at K=320000, ratio " + fmt("%.3f", ratio) + " in [1.5, 3]"};
}

Outcome unbiasedness() {
    Rng rng(3);
    const int draws = 100000;
    int outside = 0;
    std::size_t checked = 0;
    double deterministic_gap = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const Index nx = 2 + trial % 2;
        const Index ny = 3 - trial % 2;
        const MarkovChain cx = random_chain(rng, nx, 0.2);
        const MarkovChain cy = random_chain(rng, ny, 0.2);
        const double gamma = 0.6 + 0.1 * trial;
        const OccupancyTable nu_x = exact_occupancy(cx, gamma);
        const OccupancyTable nu_y = exact_occupancy(cy, gamma);
        const SolverState s = random_state(rng, nx, ny, gamma);
        const DualVariables& d = s.duals;
        const CostMatrix cost = CostMatrix::from_raw(Matrix::Random(nx, ny).cwiseAbs());
        const InitialPair nu0{cx.initial_state(), cy.initial_state()};

        Matrix lx_exact = Matrix::Zero(nx, ny);
        Matrix ly_exact = Matrix::Zero(ny, nx);
        std::vector<double> ax_exact = s.marginals.sum_over_yn;
        std::vector<double> ay_exact = s.marginals.sum_over_xn;
        for (Index x = 0; x < nx; ++x)
            for (Index xn = 0; xn < nx; ++xn)
                for (Index y = 0; y < ny; ++y) {
                    lx_exact(x, y) += nu_x(x, xn) * d.ax(x, xn, y);
                    ax_exact[d.ax_index(x, xn, y)] -= nu_x(x, xn) * s.lambda_x(x, y);
                }
        for (Index y = 0; y < ny; ++y)
            for (Index yn = 0; yn < ny; ++yn)
                for (Index x = 0; x < nx; ++x) {
                    ly_exact(y, x) += nu_y(y, yn) * d.ay(x, y, yn);
                    ay_exact[d.ay_index(x, y, yn)] -= nu_y(y, yn) * s.lambda_y(y, x);
                }
        Matrix v_exact = s.marginals.out - gamma * s.marginals.in;
        v_exact(nu0.x, nu0.y) -= 1 - gamma;

        TransitionSampler sx = TransitionSampler::exact(cx, 10 + trial);
        TransitionSampler sy = TransitionSampler::exact(cy, 20 + trial);
        Moments mlx(nx * ny), mly(nx * ny), max(ax_exact.size()), may(ay_exact.size());
        for (int i = 0; i < draws; ++i) {
            const std::vector<TransitionPair> xs{sx.sample(gamma)}, ys{sy.sample(gamma)};
            const PrimalGradients pg = estimate_primal_gradients(s, cost, xs, ys, gamma);
            const DualGradients dg = estimate_dual_gradients(s, xs, ys, nu0, gamma);
            mlx.add(flat(pg.lambda_x.values));
            mly.add(flat(pg.lambda_y.values));
            max.add(dg.alpha_x);
            may.add(dg.alpha_y);
            if (i < 100) {
                deterministic_gap = std::max(deterministic_gap, (dg.v - v_exact).cwiseAbs().maxCoeff());
                const OccupancyCoupling g = pg.mu.dense();
                for (Index x = 0; x < nx; ++x)
                    for (Index y = 0; y < ny; ++y)
                        for (Index xn = 0; xn < nx; ++xn)
                            for (Index yn = 0; yn < ny; ++yn) {
                                const double e = cost.values(x, y) - d.ax(x, xn, y) - d.ay(x, y, yn) +
                                                 gamma * d.v(xn, yn) - d.v(x, y);
                                deterministic_gap = std::max(deterministic_gap, std::abs(g(x, y, xn, yn) - e));
                            }
            }
        }
        outside += count_outside(mlx, flat(lx_exact)) + count_outside(mly, flat(ly_exact)) +
                   count_outside(max, ax_exact) + count_outside(may, ay_exact);
        checked += 2 * static_cast<std::size_t>(nx * ny) + ax_exact.size() + ay_exact.size();
    }
    return {outside == 0 && deterministic_gap <= 1e-12,
            std::to_string(outside) + " of " + std::to_string(checked) +
                " sampled entries outside 3 SE at 1e5 draws; exact coupling/value gradients off by " +
                fmt("%.1e", deterministic_gap)};
}

OccupancyCoupling perturbed(Rng& rng, const OccupancyCoupling& mu, double noise) {
    OccupancyCoupling out = mu;
    double z = 0.0;
    for (double& v : out.values()) z += (v = v * (1.0 + noise * (2 * rng.uniform() - 1)) + noise * 1e-2 * rng.uniform());
    for (double& v : out.values()) v /= z;
    return out;
}

Outcome feasibility_rounding() {
    Rng rng(41);
    double marginal_err = 0.0, fixed_gap = 0.0;
    int bound7 = 0, bound3 = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index r = 1 + static_cast<Index>(rng.index(5));
        const Index c = 1 + static_cast<Index>(rng.index(5));
        const Vector p = random_simplex(rng, r, 0.2);
        const Vector q = random_simplex(rng, c, 0.2);
        Matrix f(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index k = 0; k < c; ++k) f(i, k) = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
        f *= (0.5 + rng.uniform()) / std::max(f.sum(), 1e-300);
        const Matrix g = round_to_coupling(f, p, q);
        marginal_err = std::max({marginal_err, (g.rowwise().sum() - p).cwiseAbs().maxCoeff(),
                                 (g.colwise().sum().transpose() - q).cwiseAbs().maxCoeff()});
        const double violation =
            (f.rowwise().sum() - p).cwiseAbs().sum() + (f.colwise().sum().transpose() - q).cwiseAbs().sum();
        if ((g - f).cwiseAbs().sum() > 2 * violation + 1e-12) ++bound7;

        const Index nx = 1 + static_cast<Index>(rng.index(4));
        const Index ny = 1 + static_cast<Index>(rng.index(4));
        const MarkovChain x = random_chain(rng, nx, 0.3);
        const MarkovChain y = random_chain(rng, ny, 0.3);
        const double gamma = 0.2 + 0.75 * rng.uniform();
        const InitialPair nu0{x.initial_state(), y.initial_state()};
        const OccupancyTable nu_x = exact_occupancy(x, gamma);
        const OccupancyTable nu_y = exact_occupancy(y, gamma);
        const OccupancyCoupling base = induced_occupancy(random_transition_coupling(rng, x, y), nu0, gamma);
        fixed_gap = std::max(fixed_gap, round_occupancy(base, x, y, gamma).l1_gap);
        const OccupancyCoupling mu =
            trial % 4 == 0 ? random_tensor(rng, nx, ny) : perturbed(rng, base, 0.02 * (1 + trial % 10));
        const ConstraintResiduals res =
            residuals(mu, induced_lambda_x(mu, nu_x), induced_lambda_y(mu, nu_y), nu_x, nu_y, nu0, gamma);
        if (round_occupancy(mu, x, y, gamma).l1_gap > (3 * res.causal_x + 3 * res.causal_y + res.flow) / (1 - gamma) + 1e-6)
            ++bound3;
    }
    const bool ok = marginal_err <= 1e-12 && bound7 == 0 && bound3 == 0 && fixed_gap <= 1e-9;
    return {ok, "rounded marginal error " + fmt("%.1e", marginal_err) + ", coupling bound violated " +
                    std::to_string(bound7) + "/200, occupancy bound violated " + std::to_string(bound3) +
                    "/200, fixed-point gap " + fmt("%.1e", fixed_gap)};
}

Outcome equivalence() {
    Rng rng(42);
    double worst = 0.0;
    int rejected = 0, tried = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index nx = 1 + static_cast<Index>(rng.index(4));
        const Index ny = 1 + static_cast<Index>(rng.index(4));
        const MarkovChain x = random_chain(rng, nx, 0.3);
        const MarkovChain y = random_chain(rng, ny, 0.3);
        const double gamma = 0.1 + 0.85 * rng.uniform();
        const InitialPair nu0{x.initial_state(), y.initial_state()};
        const OccupancyTable nu_x = exact_occupancy(x, gamma);
        const OccupancyTable nu_y = exact_occupancy(y, gamma);
        const OccupancyCoupling mu = induced_occupancy(random_transition_coupling(rng, x, y), nu0, gamma);
        const EquivalenceReport rep =
            check_formulation_equivalence(mu, induced_lambda_x(mu, nu_x), induced_lambda_y(mu, nu_y), x, y, gamma);
        worst = std::max({worst, rep.lp_residual, rep.kernel_residual});
        if (nx * ny < 2) continue;
        ++tried;
        const OccupancyCoupling bad = random_tensor(rng, nx, ny);
        const EquivalenceReport b =
            check_formulation_equivalence(bad, induced_lambda_x(bad, nu_x), induced_lambda_y(bad, nu_y), x, y, gamma);
        if (b.lp_residual > 1e-8 && b.kernel_residual > 1e-8) ++rejected;
    }
    return {worst <= 1e-8 && rejected == tried,
            "worst residual " + fmt("%.1e", worst) + " on 100 valid couplings, " + std::to_string(rejected) + "/" +
                std::to_string(tried) + " random tensors violate both systems"};
}

Outcome model_selection() {
    ExperimentConfig c;
    c.command = "model-select";
    c.iterations_grid = {6000, 12000, 24000};
    c.seeds = {1};
    c.oracle = false;
    c.out = fs::temp_directory_path() / "somcot_acceptance_model_select";
    const std::vector<ModelSelectRow> rows = cmd_model_select(c);
    std::vector<double> d;
    for (const ModelSelectRow& r : rows)
        if (r.k == 24000) d.push_back(r.distance);
    const std::size_t best = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
    int inversions = 0;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
        const bool left = c.thetas[i + 1] <= 0.5;
        if (left ? d[i] < d[i + 1] : d[i] > d[i + 1]) ++inversions;
    }
    std::string detail = "estimates at K=24000:";
    for (double v : d) detail += " " + fmt("%.4f", v);
    return {c.thetas[best] == 0.5 && inversions <= 1,
            "argmin theta " + fmt("%.1f", c.thetas[best]) + ", " + std::to_string(inversions) + " inversions (" +
                detail + ")"};
}

Outcome exact_occupancy_check() {
    Rng rng(43);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const MarkovChain c = random_chain(rng, 1 + static_cast<Index>(rng.index(8)), 0.3);
        const double gamma = 0.05 + 0.9 * rng.uniform();
        worst = std::max(worst, occupancy_equation_residual(c, exact_occupancy(c, gamma), gamma));
    }
    double worst_tv = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.index(4));
        const MarkovChain c = random_chain(rng, n, 0.3);
        const double gamma = 0.5 + 0.4 * rng.uniform();
        const OccupancyTable nu = exact_occupancy(c, gamma);
        TransitionSampler s = TransitionSampler::exact(c, 200 + trial);
        Matrix freq = Matrix::Zero(n, n);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) {
            const TransitionPair p = s.sample(gamma);
            freq(p.from, p.to) += 1.0 / draws;
        }
        worst_tv = std::max(worst_tv, 0.5 * (freq - nu.values).cwiseAbs().sum());
    }
    return {worst <= 1e-10 && worst_tv <= 0.02, "worst residual " + fmt("%.1e", worst) +
                                                    " over 100 chains, worst sampler TV " + fmt("%.4f", worst_tv)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "somcot_acceptance_determinism";
    std::string traces[2];
    for (int i = 0; i < 2; ++i) {
        ExperimentConfig c;
        c.chain_x.theta = 0.3;
        c.chain_y.theta = 0.7;
        c.solver.iterations = 20000;
        c.solver.seed = 17;
        c.out = root / std::to_string(i);
        cmd_solve(c);
        traces[i] = slurp(c.out / "trace.csv");
    }
    return {!traces[0].empty() && traces[0] == traces[1],
            std::to_string(traces[0].size()) + " trace bytes, identical: " + (traces[0] == traces[1] ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle-zero-case", zero_case},
        {"oracle-nonzero-case", nonzero_case},
        {"rate-scaling", rate_scaling},
        {"gradient-unbiasedness", unbiasedness},
        {"feasibility-rounding", feasibility_rounding},
        {"lp-kernel-equivalence", equivalence},
        {"model-selection", model_selection},
        {"exact-occupancy", exact_occupancy_check},
        {"determinism", determinism},
    };
    const std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && !only.count(name)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}

#pragma once

// Finite Markov chains, discounted state-transition occupancy measures and
// samplers that draw transitions from those measures.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace somcot {

using Index = int;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Seeded generator whose uniform draws depend only on the 64-bit engine
/// output, so sampling is reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform draw in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n);

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Deterministic seed derivation (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Time-homogeneous chain with a Dirac initial distribution.
class MarkovChain {
public:
    /// Throws std::invalid_argument unless every row is a probability vector
    /// (within row_tolerance) and initial_state is a valid index.
    MarkovChain(Matrix transition, Index initial_state, std::vector<double> rewards = {},
                std::vector<std::string> labels = {}, double row_tolerance = 1e-12);

    Index size() const { return static_cast<Index>(transition_.rows()); }
    const Matrix& transition() const { return transition_; }
    double prob(Index from, Index to) const { return transition_(from, to); }
    Index initial_state() const { return initial_; }

    /// Per-state reward metadata; empty when the chain carries none.
    const std::vector<double>& rewards() const { return rewards_; }
    /// Per-state labels; defaults to the decimal state index.
    const std::vector<std::string>& labels() const { return labels_; }

    MarkovChain with_initial_state(Index initial_state) const;

private:
    Matrix transition_;
    Index initial_;
    std::vector<double> rewards_;
    std::vector<std::string> labels_;
};

/// Nonnegative ground cost over X×Y. `values` always satisfies max ≤ 1; the
/// factor removed on construction is kept in `scale` and multiplied back into
/// every reported distance.
struct CostMatrix {
    Matrix values;
    double scale = 1.0;

    /// Rescales `raw` by its maximum entry when that exceeds 1.
    static CostMatrix from_raw(const Matrix& raw);

    Matrix raw() const { return values * scale; }
    Index rows() const { return static_cast<Index>(values.rows()); }
    Index cols() const { return static_cast<Index>(values.cols()); }
};

/// c(x,y) = |r(x) − r(y)| from the chains' reward metadata.
CostMatrix reward_abs_diff_cost(const MarkovChain& x, const MarkovChain& y);
/// c(x,y) = 1{label(x) ≠ label(y)}.
CostMatrix indicator_cost(const MarkovChain& x, const MarkovChain& y);

struct TransitionPair {
    Index from = 0;
    Index to = 0;

    friend bool operator==(const TransitionPair&, const TransitionPair&) = default;
};

/// Discounted, (1−γ)-normalized distribution over (state, next state).
struct OccupancyTable {
    Matrix values;

    Index size() const { return static_cast<Index>(values.rows()); }
    double operator()(Index x, Index xn) const { return values(x, xn); }
    /// ν(x) = Σ_{x'} ν(x, x').
    Vector marginal() const { return values.rowwise().sum(); }
};

/// ν(x,x') = P(x'|x) ξ(x) with (I − γPᵀ) ξ = (1−γ) δ_{x0}.
OccupancyTable exact_occupancy(const MarkovChain& chain, double gamma);

/// Largest absolute residual of the two defining equations of the occupancy
/// measure (flow balance and the kernel factorization).
double occupancy_equation_residual(const MarkovChain& chain, const OccupancyTable& nu, double gamma);

/// Draws transitions either from the exact occupancy measure of a chain
/// (geometric stopping) or uniformly, with replacement, from a stored buffer.
class TransitionSampler {
public:
    enum class Mode { exact_geometric, buffer };

    static TransitionSampler exact(const MarkovChain& chain, std::uint64_t seed);
    /// Throws std::invalid_argument on an empty buffer.
    static TransitionSampler from_buffer(std::vector<TransitionPair> pairs, std::uint64_t seed);

    Mode mode() const { return mode_; }
    TransitionPair sample(double gamma);

    /// Number of states spanned by the sampler (chain size, or max index + 1).
    Index state_count() const { return states_; }
    const std::vector<TransitionPair>& buffer() const { return buffer_; }

private:
    TransitionSampler(Mode mode, std::uint64_t seed) : mode_(mode), rng_(seed) {}

    Index step(Index from);

    Mode mode_;
    Rng rng_;
    Index states_ = 0;
    Index initial_ = 0;
    std::vector<std::vector<double>> cdf_;
    std::vector<TransitionPair> buffer_;
};

/// Geometric stopping time G with P(G = t) = (1−γ)γ^t, by inverse CDF.
std::uint64_t sample_geometric(Rng& rng, double gamma);

/// Interior state x moves right w.p. θ and left w.p. 1−θ; the two end states
/// stay put w.p. 0.9. Zero-based indices: the walk starts at state 0, rewards
/// are +1 at state 0 and −1 at state n−1.
MarkovChain make_random_walk(Index n, double theta);

/// Adds an irrelevant uniform noise coordinate b ∈ [0, B) to every state:
/// lifted index x·B + b, transition P(x'|x)/B, start (x0, 0). Labels and
/// rewards are copied from the base state.
MarkovChain make_block_lift(const MarkovChain& base, Index blocks);

struct IngestedTransitions {
    std::vector<TransitionPair> pairs;
    Index max_index = 0;
};

/// Parses `from,to` pairs (one per line, zero-based). Errors carry the line
/// number. Blank lines are skipped; a file with no pairs is an error.
IngestedTransitions read_transitions(const std::filesystem::path& path);
TransitionSampler ingest_transitions(const std::filesystem::path& path, std::uint64_t seed);
void write_transitions(const std::filesystem::path& path, const std::vector<TransitionPair>& pairs);

/// Chain file: a JSON object with `n`, `initial`, `rows` and optional
/// `rewards` / `labels`. Rows must sum to 1 within 1e-9.
MarkovChain read_chain_file(const std::filesystem::path& path);
void write_chain_file(const std::filesystem::path& path, const MarkovChain& chain);

}  // namespace somcot

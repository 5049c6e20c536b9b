#include "somcot/chain_model.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace somcot {

std::size_t Rng::index(std::size_t n) {
    // Multiply-shift keeps the mapping identical on every platform.
    const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(wide >> 64);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

MarkovChain::MarkovChain(Matrix transition, Index initial_state, std::vector<double> rewards,
                         std::vector<std::string> labels, double row_tolerance)
    : transition_(std::move(transition)),
      initial_(initial_state),
      rewards_(std::move(rewards)),
      labels_(std::move(labels)) {
    const Index n = static_cast<Index>(transition_.rows());
    if (n < 1 || transition_.cols() != n) {
        throw std::invalid_argument("transition matrix must be square and nonempty");
    }
    for (Index x = 0; x < n; ++x) {
        double sum = 0.0;
        for (Index xn = 0; xn < n; ++xn) {
            const double p = transition_(x, xn);
            if (!(p >= 0.0) || !std::isfinite(p)) {
                throw std::invalid_argument("transition row " + std::to_string(x) + " has a negative or non-finite entry");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > row_tolerance) {
            std::ostringstream msg;
            msg << "transition row " << x << " sums to " << sum;
            throw std::invalid_argument(msg.str());
        }
    }
    if (initial_ < 0 || initial_ >= n) {
        throw std::invalid_argument("initial state " + std::to_string(initial_) + " out of range");
    }
    if (!rewards_.empty() && static_cast<Index>(rewards_.size()) != n) {
        throw std::invalid_argument("rewards must have one entry per state");
    }
    if (labels_.empty()) {
        labels_.reserve(n);
        for (Index x = 0; x < n; ++x) labels_.push_back(std::to_string(x));
    } else if (static_cast<Index>(labels_.size()) != n) {
        throw std::invalid_argument("labels must have one entry per state");
    }
}

MarkovChain MarkovChain::with_initial_state(Index initial_state) const {
    return MarkovChain(transition_, initial_state, rewards_, labels_, 1e-9);
}

CostMatrix CostMatrix::from_raw(const Matrix& raw) {
    if (raw.size() == 0) throw std::invalid_argument("cost matrix is empty");
    if (!raw.allFinite() || raw.minCoeff() < 0.0) {
        throw std::invalid_argument("cost entries must be finite and nonnegative");
    }
    CostMatrix cost;
    const double top = raw.maxCoeff();
    cost.scale = top > 1.0 ? top : 1.0;
    cost.values = raw / cost.scale;
    return cost;
}

CostMatrix reward_abs_diff_cost(const MarkovChain& x, const MarkovChain& y) {
    if (x.rewards().empty() || y.rewards().empty()) {
        throw std::invalid_argument("reward-abs-diff cost needs reward metadata on both chains");
    }
    Matrix raw(x.size(), y.size());
    for (Index i = 0; i < x.size(); ++i)
        for (Index j = 0; j < y.size(); ++j) raw(i, j) = std::abs(x.rewards()[i] - y.rewards()[j]);
    return CostMatrix::from_raw(raw);
}

CostMatrix indicator_cost(const MarkovChain& x, const MarkovChain& y) {
    Matrix raw(x.size(), y.size());
    for (Index i = 0; i < x.size(); ++i)
        for (Index j = 0; j < y.size(); ++j) raw(i, j) = x.labels()[i] == y.labels()[j] ? 0.0 : 1.0;
    return CostMatrix::from_raw(raw);
}

OccupancyTable exact_occupancy(const MarkovChain& chain, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    const Index n = chain.size();
    const Matrix system = Matrix::Identity(n, n) - gamma * chain.transition().transpose();
    Vector rhs = Vector::Zero(n);
    rhs(chain.initial_state()) = 1.0 - gamma;
    const Eigen::PartialPivLU<Matrix> lu(system);
    const Vector xi = lu.solve(rhs);
    if (!xi.allFinite()) throw std::logic_error("occupancy solve broke down");

    OccupancyTable nu;
    nu.values = xi.asDiagonal() * chain.transition();
    return nu;
}

double occupancy_equation_residual(const MarkovChain& chain, const OccupancyTable& nu, double gamma) {
    const Index n = chain.size();
    const Vector out = nu.values.rowwise().sum();
    const Vector in = nu.values.colwise().sum().transpose();
    double worst = 0.0;
    for (Index x = 0; x < n; ++x) {
        const double start = x == chain.initial_state() ? 1.0 - gamma : 0.0;
        worst = std::max(worst, std::abs(out(x) - gamma * in(x) - start));
        for (Index xn = 0; xn < n; ++xn) {
            worst = std::max(worst, std::abs(nu(x, xn) - chain.prob(x, xn) * out(x)));
        }
    }
    return worst;
}

std::uint64_t sample_geometric(Rng& rng, double gamma) {
    if (gamma <= 0.0) return 0;
    // P(G ≥ t) = γ^t, so G = floor(log U / log γ) for U uniform on (0, 1].
    const double u = 1.0 - rng.uniform();
    const double g = std::floor(std::log(u) / std::log(gamma));
    constexpr double cap = 1e15;
    return static_cast<std::uint64_t>(std::min(g, cap));
}

TransitionSampler TransitionSampler::exact(const MarkovChain& chain, std::uint64_t seed) {
    TransitionSampler sampler(Mode::exact_geometric, seed);
    sampler.states_ = chain.size();
    sampler.initial_ = chain.initial_state();
    sampler.cdf_.resize(chain.size());
    for (Index x = 0; x < chain.size(); ++x) {
        auto& row = sampler.cdf_[x];
        row.resize(chain.size());
        double acc = 0.0;
        for (Index xn = 0; xn < chain.size(); ++xn) {
            acc += chain.prob(x, xn);
            row[xn] = acc;
        }
    }
    return sampler;
}

TransitionSampler TransitionSampler::from_buffer(std::vector<TransitionPair> pairs, std::uint64_t seed) {
    if (pairs.empty()) throw std::invalid_argument("transition buffer is empty");
    TransitionSampler sampler(Mode::buffer, seed);
    Index top = 0;
    for (const auto& p : pairs) {
        if (p.from < 0 || p.to < 0) throw std::invalid_argument("negative state index in transition buffer");
        top = std::max({top, p.from, p.to});
    }
    sampler.states_ = top + 1;
    sampler.buffer_ = std::move(pairs);
    return sampler;
}

Index TransitionSampler::step(Index from) {
    const auto& row = cdf_[from];
    const double u = rng_.uniform() * row.back();
    const auto it = std::upper_bound(row.begin(), row.end(), u);
    // u < row.back(), so the search always lands on a positive-probability state.
    return static_cast<Index>(it - row.begin());
}

TransitionPair TransitionSampler::sample(double gamma) {
    if (mode_ == Mode::buffer) return buffer_[rng_.index(buffer_.size())];
    const std::uint64_t stop = sample_geometric(rng_, gamma);
    Index state = initial_;
    for (std::uint64_t t = 0; t < stop; ++t) state = step(state);
    return {state, step(state)};
}

MarkovChain make_random_walk(Index n, double theta) {
    if (n < 2) throw std::invalid_argument("random walk needs at least two states");
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in [0, 1]");
    Matrix p = Matrix::Zero(n, n);
    p(0, 0) = 0.9;
    p(0, 1) = 0.1;
    p(n - 1, n - 1) = 0.9;
    p(n - 1, n - 2) = 0.1;
    for (Index x = 1; x + 1 < n; ++x) {
        p(x, x + 1) = theta;
        p(x, x - 1) = 1.0 - theta;
    }
    std::vector<double> rewards(n, 0.0);
    rewards.front() = 1.0;
    rewards.back() = -1.0;
    return MarkovChain(std::move(p), 0, std::move(rewards));
}

MarkovChain make_block_lift(const MarkovChain& base, Index blocks) {
    if (blocks < 1) throw std::invalid_argument("block count must be positive");
    const Index n = base.size();
    const Index m = n * blocks;
    Matrix p = Matrix::Zero(m, m);
    for (Index x = 0; x < n; ++x)
        for (Index xn = 0; xn < n; ++xn) {
            const double share = base.prob(x, xn) / blocks;
            for (Index b = 0; b < blocks; ++b)
                for (Index bn = 0; bn < blocks; ++bn) p(x * blocks + b, xn * blocks + bn) = share;
        }
    std::vector<double> rewards;
    std::vector<std::string> labels;
    labels.reserve(m);
    for (Index x = 0; x < n; ++x)
        for (Index b = 0; b < blocks; ++b) {
            if (!base.rewards().empty()) rewards.push_back(base.rewards()[x]);
            labels.push_back(base.labels()[x]);
        }
    return MarkovChain(std::move(p), base.initial_state() * blocks, std::move(rewards), std::move(labels), 1e-10);
}

IngestedTransitions read_transitions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open transition file " + path.string());
    IngestedTransitions out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        long long from = 0;
        long long to = 0;
        char comma = 0;
        std::istringstream fields(line);
        std::string rest;
        if (!(fields >> from >> comma >> to) || comma != ',' || (fields >> rest)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed transition '" + line + "'");
        }
        if (from < 0 || to < 0) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": negative state index");
        }
        if (from > std::numeric_limits<Index>::max() || to > std::numeric_limits<Index>::max()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": state index too large");
        }
        out.pairs.push_back({static_cast<Index>(from), static_cast<Index>(to)});
        out.max_index = std::max({out.max_index, static_cast<Index>(from), static_cast<Index>(to)});
    }
    if (out.pairs.empty()) throw std::runtime_error(path.string() + ": no transitions found");
    return out;
}

TransitionSampler ingest_transitions(const std::filesystem::path& path, std::uint64_t seed) {
    return TransitionSampler::from_buffer(read_transitions(path).pairs, seed);
}

void write_transitions(const std::filesystem::path& path, const std::vector<TransitionPair>& pairs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& p : pairs) out << p.from << ',' << p.to << '\n';
}

MarkovChain read_chain_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open chain file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    auto field = [&](const char* name) -> const nlohmann::json& {
        if (!doc.contains(name)) throw std::runtime_error(path.string() + ": missing field '" + name + "'");
        return doc.at(name);
    };
    try {
        const Index n = field("n").get<Index>();
        if (n < 1) throw std::runtime_error(path.string() + ": field 'n' must be positive");
        const auto& init = field("initial");
        if (!init.is_number_integer()) {
            throw std::runtime_error(path.string() + ": field 'initial' must be a single state index");
        }
        const auto& rows = field("rows");
        if (!rows.is_array() || static_cast<Index>(rows.size()) != n) {
            throw std::runtime_error(path.string() + ": field 'rows' must hold n rows");
        }
        Matrix p(n, n);
        for (Index x = 0; x < n; ++x) {
            if (static_cast<Index>(rows[x].size()) != n) {
                throw std::runtime_error(path.string() + ": row " + std::to_string(x) + " must hold n entries");
            }
            for (Index xn = 0; xn < n; ++xn) p(x, xn) = rows[x][xn].get<double>();
        }
        std::vector<double> rewards;
        if (doc.contains("rewards")) rewards = doc["rewards"].get<std::vector<double>>();
        std::vector<std::string> labels;
        if (doc.contains("labels")) labels = doc["labels"].get<std::vector<std::string>>();
        return MarkovChain(std::move(p), init.get<Index>(), std::move(rewards), std::move(labels), 1e-9);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_chain_file(const std::filesystem::path& path, const MarkovChain& chain) {
    nlohmann::json doc;
    doc["n"] = chain.size();
    doc["initial"] = chain.initial_state();
    auto rows = nlohmann::json::array();
    for (Index x = 0; x < chain.size(); ++x) {
        std::vector<double> row(chain.size());
        for (Index xn = 0; xn < chain.size(); ++xn) row[xn] = chain.prob(x, xn);
        rows.push_back(row);
    }
    doc["rows"] = rows;
    if (!chain.rewards().empty()) doc["rewards"] = chain.rewards();
    doc["labels"] = chain.labels();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace somcot

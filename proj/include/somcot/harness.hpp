#pragma once

// Experiment configuration, command recipes and CSV emission for the CLI.

#include "somcot/chain_model.hpp"
#include "somcot/exact_oracle.hpp"
#include "somcot/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace somcot {

/// A chain given by a generator, a chain file, or a transition buffer.
struct ChainSpec {
    enum class Kind { walk, file, transitions };
    Kind kind = Kind::walk;
    Index n = 4;
    double theta = 0.5;
    /// Overrides the start state of a file chain; walks default to 0.
    std::optional<Index> initial;
    Index blocks = 1;
    std::filesystem::path path;
    /// Buffer mode only: per-state rewards, which also fix the state count.
    std::vector<double> rewards;
};

struct CostSpec {
    enum class Kind { reward_abs_diff, indicator, matrix };
    Kind kind = Kind::reward_abs_diff;
    Matrix matrix;
};

/// Solver settings of a named preset: model-select, enc-dec, dist-matrix,
/// oracle-check or theory. Throws std::invalid_argument on other names.
SolverConfig preset_config(const std::string& name);
/// Overwrites the rate, batch and (where the preset fixes it) discount
/// fields of `solver`.
void apply_preset(SolverConfig& solver, const std::string& name);
std::vector<std::string> preset_names();

struct ExperimentConfig {
    std::string command = "solve";
    ChainSpec chain_x;
    ChainSpec chain_y;
    CostSpec cost;
    std::string preset = "model-select";
    SolverConfig solver = preset_config("model-select");

    std::vector<double> thetas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::int64_t> iterations_grid;
    std::vector<std::uint64_t> seeds;
    std::vector<std::int64_t> sample_sizes{1000, 10000, 100000};
    std::vector<Index> initial_states;
    Index n = 10;
    Index blocks = 5;
    double base_theta = 0.5;
    /// Walks built by dist-matrix get reward 1 at both ends.
    bool symmetric_rewards = false;

    bool oracle = true;
    double oracle_tol = 1e-8;
    bool dump_tensors = false;
    /// Path of an oracle output (file or directory), or "auto".
    std::string compare_oracle;
    std::filesystem::path out = "out";
    unsigned threads = 0;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Reads a JSON config; relative paths are resolved against `base_dir`.
/// Errors name the field or the file.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Throws for transition-buffer specs, which carry no kernel.
MarkovChain build_chain(const ChainSpec& spec);
CostMatrix build_cost(const CostSpec& spec, const MarkovChain& chain_x, const MarkovChain& chain_y);

/// Comma-separated table with a header row; reals use 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    CsvTable& row();
    CsvTable& add(double v);
    CsvTable& add(std::int64_t v);
    CsvTable& add(const std::string& v);

    std::string str() const;
    void write(const std::filesystem::path& path) const;
    std::size_t rows() const { return rows_; }

private:
    std::vector<std::string> header_;
    std::string body_;
    std::size_t rows_ = 0;
    std::size_t fields_ = 0;
};

std::string format_real(double v);

CsvTable tensor_table(const OccupancyCoupling& mu);
/// One row per conditioning state, one column per target state.
CsvTable kernel_table(const ConditionalKernel& k, const std::string& row_name, const std::string& col_prefix);

/// Distance stored by cmd_oracle, read back from oracle.csv or its directory.
double read_oracle_distance(const std::filesystem::path& path);

/// Runs fn(0..count-1) on up to `threads` workers (0 = hardware) and
/// returns results by index. The first exception is rethrown.
template <class T>
std::vector<T> parallel_map(std::size_t count, unsigned threads, const std::function<T(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(threads, count);
    std::vector<std::optional<T>> slots(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    auto work = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                slots[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> hold(failure_lock);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::future<void>> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.push_back(std::async(std::launch::async, work));
        for (auto& f : pool) f.get();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<T> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

struct SolveOutcome {
    RunResult run;
    std::optional<double> oracle;
};
SolveOutcome cmd_solve(const ExperimentConfig& config);

OracleResult cmd_oracle(const ExperimentConfig& config);

struct ModelSelectRow {
    double theta = 0.0;
    std::uint64_t seed = 0;
    std::int64_t k = 0;
    double distance = 0.0;
    std::optional<double> oracle;
};
std::vector<ModelSelectRow> cmd_model_select(const ExperimentConfig& config);

struct EncDecTables {
    std::int64_t samples = 0;
    ConditionalKernel lambda_x;
    ConditionalKernel lambda_y;
};
std::vector<EncDecTables> cmd_enc_dec(const ExperimentConfig& config);

struct DistanceMatrix {
    /// (initial state, θ) per instance, in row order.
    std::vector<std::pair<Index, double>> instances;
    Matrix estimate;
    std::optional<Matrix> oracle;
};
DistanceMatrix cmd_dist_matrix(const ExperimentConfig& config);

struct SweepRow {
    std::uint64_t seed = 0;
    std::int64_t k = 0;
    double distance = 0.0;
    std::optional<double> oracle;
};
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config);

/// Dispatches config.command; returns the process exit status.
int run_command(const ExperimentConfig& config);

}  // namespace somcot

#include "somcot/harness.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace somcot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
    throw std::invalid_argument(field + ": " + what);
}

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) field_error(where.empty() ? key : where + "." + key, "unknown field");
}

template <class T>
T read_field(const json& j, const std::string& key, const std::string& field) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        field_error(field, "missing or of the wrong type");
    }
}

template <class T>
void maybe(const json& j, const std::string& key, const std::string& where, T& into) {
    if (j.contains(key)) into = read_field<T>(j, key, where.empty() ? key : where + "." + key);
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

ChainSpec parse_chain(const json& j, const std::string& where, const fs::path& base) {
    if (!j.is_object()) field_error(where, "expected an object");
    reject_unknown(j, where, {"kind", "n", "theta", "initial", "blocks", "path", "rewards"});
    ChainSpec spec;
    const std::string kind = j.contains("kind") ? read_field<std::string>(j, "kind", where + ".kind") : "walk";
    if (kind == "walk")
        spec.kind = ChainSpec::Kind::walk;
    else if (kind == "file")
        spec.kind = ChainSpec::Kind::file;
    else if (kind == "transitions")
        spec.kind = ChainSpec::Kind::transitions;
    else
        field_error(where + ".kind", "expected walk, file or transitions, got '" + kind + "'");
    maybe(j, "n", where, spec.n);
    maybe(j, "theta", where, spec.theta);
    maybe(j, "blocks", where, spec.blocks);
    maybe(j, "rewards", where, spec.rewards);
    if (j.contains("initial")) spec.initial = read_field<Index>(j, "initial", where + ".initial");
    if (j.contains("path")) spec.path = resolve(read_field<std::string>(j, "path", where + ".path"), base);
    return spec;
}

Matrix read_matrix_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cost file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (rows.empty()) continue;  // header
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric cost entry");
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": ragged cost row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("cost file " + path.string() + " has no rows");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index k = 0; k < m.cols(); ++k) m(i, k) = rows[i][k];
    return m;
}

CostSpec parse_cost(const json& j, const fs::path& base) {
    CostSpec spec;
    if (j.is_string()) {
        const std::string name = j.get<std::string>();
        if (name == "reward-abs-diff")
            spec.kind = CostSpec::Kind::reward_abs_diff;
        else if (name == "indicator")
            spec.kind = CostSpec::Kind::indicator;
        else
            field_error("cost", "expected reward-abs-diff, indicator or an object, got '" + name + "'");
        return spec;
    }
    if (!j.is_object()) field_error("cost", "expected a string or an object");
    reject_unknown(j, "cost", {"matrix", "file"});
    spec.kind = CostSpec::Kind::matrix;
    if (j.contains("file")) {
        spec.matrix = read_matrix_csv(resolve(read_field<std::string>(j, "file", "cost.file"), base));
    } else {
        const auto rows = read_field<std::vector<std::vector<double>>>(j, "matrix", "cost.matrix");
        if (rows.empty() || rows.front().empty()) field_error("cost.matrix", "empty matrix");
        spec.matrix.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.front().size()) field_error("cost.matrix", "ragged rows");
            for (std::size_t k = 0; k < rows[i].size(); ++k)
                spec.matrix(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
        }
    }
    return spec;
}

void parse_solver(const json& j, SolverConfig& s) {
    if (!j.is_object()) field_error("solver", "expected an object");
    reject_unknown(j, "solver", {"gamma", "iterations", "batch_size", "seed", "eta0", "decay", "beta0",
                                 "snapshot_every", "average_last_half"});
    maybe(j, "gamma", "solver", s.gamma);
    maybe(j, "iterations", "solver", s.iterations);
    maybe(j, "batch_size", "solver", s.batch_size);
    maybe(j, "seed", "solver", s.seed);
    maybe(j, "eta0", "solver", s.eta0);
    maybe(j, "decay", "solver", s.decay);
    maybe(j, "beta0", "solver", s.beta0);
    maybe(j, "snapshot_every", "solver", s.snapshot_every);
    maybe(j, "average_last_half", "solver", s.average_last_half);
}

// One side of the problem: a chain with a known kernel, or a buffer.
struct Side {
    std::optional<MarkovChain> chain;
    std::vector<TransitionPair> buffer;
    Index states = 0;
    Index initial = 0;
    std::vector<double> rewards;
    std::vector<std::string> labels;
};

Side build_side(const ChainSpec& spec) {
    Side side;
    if (spec.kind != ChainSpec::Kind::transitions) {
        side.chain = build_chain(spec);
        side.states = side.chain->size();
        side.initial = side.chain->initial_state();
        side.rewards = side.chain->rewards();
        side.labels = side.chain->labels();
        return side;
    }
    IngestedTransitions data = read_transitions(spec.path);
    side.buffer = std::move(data.pairs);
    side.states = data.max_index + 1;
    if (!spec.rewards.empty()) {
        if (static_cast<Index>(spec.rewards.size()) < side.states)
            throw std::invalid_argument("rewards: fewer entries than states in " + spec.path.string());
        side.states = static_cast<Index>(spec.rewards.size());
        side.rewards = spec.rewards;
    }
    side.initial = spec.initial.value_or(0);
    if (side.initial < 0 || side.initial >= side.states) throw std::invalid_argument("initial: state out of range");
    for (Index i = 0; i < side.states; ++i) side.labels.push_back(std::to_string(i));
    return side;
}

CostMatrix cost_between(const CostSpec& spec, const Side& x, const Side& y) {
    Matrix c(x.states, y.states);
    switch (spec.kind) {
        case CostSpec::Kind::reward_abs_diff:
            if (static_cast<Index>(x.rewards.size()) != x.states || static_cast<Index>(y.rewards.size()) != y.states)
                throw std::invalid_argument("cost: reward-abs-diff needs rewards on both chains");
            for (Index i = 0; i < x.states; ++i)
                for (Index k = 0; k < y.states; ++k) c(i, k) = std::abs(x.rewards[i] - y.rewards[k]);
            break;
        case CostSpec::Kind::indicator:
            for (Index i = 0; i < x.states; ++i)
                for (Index k = 0; k < y.states; ++k) c(i, k) = x.labels[i] == y.labels[k] ? 0.0 : 1.0;
            break;
        case CostSpec::Kind::matrix:
            if (spec.matrix.rows() != x.states || spec.matrix.cols() != y.states)
                throw std::invalid_argument("cost: matrix is " + std::to_string(spec.matrix.rows()) + "x" +
                                            std::to_string(spec.matrix.cols()) + ", chains need " +
                                            std::to_string(x.states) + "x" + std::to_string(y.states));
            c = spec.matrix;
            break;
    }
    return CostMatrix::from_raw(c);
}

std::vector<std::uint64_t> seeds_of(const ExperimentConfig& config) {
    return config.seeds.empty() ? std::vector<std::uint64_t>{config.solver.seed} : config.seeds;
}

std::vector<std::int64_t> grid_of(const ExperimentConfig& config) {
    std::vector<std::int64_t> grid = config.iterations_grid;
    if (grid.empty()) grid.push_back(config.solver.iterations);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

// Rates independent of K let one long run stand in for every shorter one.
bool snapshots_suffice(const SolverConfig& s) { return s.preset == RatePreset::practical && !s.average_last_half; }

// Distances at each K of `grid` for one seed.
std::vector<double> distances_over_grid(const MarkovChain& x, const MarkovChain& y, const CostMatrix& cost,
                                        SolverConfig cfg, const std::vector<std::int64_t>& grid) {
    cfg.keep_mu_bar = false;
    std::vector<double> out;
    if (snapshots_suffice(cfg)) {
        cfg.iterations = grid.back();
        cfg.snapshot_at = grid;
        cfg.snapshot_every = cfg.iterations;
        const RunResult r = run(x, y, cost, cfg);
        for (std::int64_t k : grid)
            for (const IterateDiagnostics& d : r.trace)
                if (d.k == k) out.push_back(d.distance_estimate);
        return out;
    }
    for (std::int64_t k : grid) {
        cfg.iterations = k;
        cfg.snapshot_every = k;
        out.push_back(run(x, y, cost, cfg).distance);
    }
    return out;
}

MarkovChain walk_instance(const ExperimentConfig& config, Index initial, double theta) {
    MarkovChain walk = make_random_walk(config.n, theta).with_initial_state(initial);
    if (!config.symmetric_rewards) return walk;
    std::vector<double> r(static_cast<std::size_t>(config.n), 0.0);
    r.front() = 1.0;
    r.back() = 1.0;
    return MarkovChain(walk.transition(), initial, r, walk.labels());
}

void prepare_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SolverConfig preset_config(const std::string& name) {
    SolverConfig s;
    apply_preset(s, name);
    return s;
}

void apply_preset(SolverConfig& s, const std::string& name) {
    s.preset = RatePreset::practical;
    if (name == "model-select") {
        s.eta0 = 0.1, s.decay = 0.001, s.beta0 = 0.5, s.batch_size = 8, s.gamma = 0.95;
    } else if (name == "enc-dec") {
        s.eta0 = 40.0, s.decay = 0.0, s.beta0 = 0.2, s.batch_size = 1, s.gamma = 0.99;
    } else if (name == "dist-matrix") {
        s.eta0 = 20.0, s.decay = 0.0, s.beta0 = 0.5, s.batch_size = 1, s.gamma = 0.99;
    } else if (name == "oracle-check") {
        s.eta0 = 0.3, s.decay = 0.1, s.beta0 = 5.0, s.batch_size = 8;
    } else if (name == "theory") {
        s.preset = RatePreset::theory;
        s.batch_size = 1;
    } else {
        throw std::invalid_argument("preset: unknown preset '" + name + "'");
    }
}

std::vector<std::string> preset_names() { return {"model-select", "enc-dec", "dist-matrix", "oracle-check", "theory"}; }

void ExperimentConfig::validate() const {
    static const std::set<std::string> commands{"solve", "oracle", "model-select", "enc-dec", "dist-matrix", "sweep"};
    if (!commands.count(command)) field_error("command", "unknown command '" + command + "'");
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        field_error("solver", e.what());
    }
    for (const auto* side : {&chain_x, &chain_y}) {
        const std::string name = side == &chain_x ? "chain_x" : "chain_y";
        if (side->kind == ChainSpec::Kind::walk) {
            if (side->n < 2) field_error(name + ".n", "need at least 2 states");
            if (!(side->theta >= 0.0 && side->theta <= 1.0)) field_error(name + ".theta", "must lie in [0, 1]");
        } else if (!fs::exists(side->path)) {
            field_error(name + ".path", "file not found: " + side->path.string());
        }
        if (side->blocks < 1) field_error(name + ".blocks", "must be at least 1");
    }
    if (command == "model-select" || command == "dist-matrix") {
        if (thetas.empty()) field_error("thetas", "grid is empty");
        for (double t : thetas)
            if (!(t >= 0.0 && t <= 1.0)) field_error("thetas", "entries must lie in [0, 1]");
        if (n < 2) field_error("n", "need at least 2 states");
        if (blocks < 1) field_error("blocks", "must be at least 1");
    }
    if (command == "enc-dec") {
        if (sample_sizes.empty()) field_error("sample_sizes", "grid is empty");
        for (std::int64_t s : sample_sizes)
            if (s < 1) field_error("sample_sizes", "entries must be positive");
    }
    for (Index s : initial_states)
        if (s < 0 || s >= n) field_error("initial_states", "entries must be states of the walk");
    for (std::int64_t k : iterations_grid)
        if (k < 1) field_error("iterations_grid", "entries must be positive");
    if (!(oracle_tol > 0.0)) field_error("oracle_tol", "must be positive");
    if (!compare_oracle.empty() && compare_oracle != "auto" && !fs::exists(compare_oracle))
        field_error("compare_oracle", "file not found: " + compare_oracle);
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    reject_unknown(j, "", {"command", "chain_x", "chain_y", "cost", "solver", "preset", "thetas", "iterations_grid",
                           "seeds", "sample_sizes", "initial_states", "n", "blocks", "base_theta",
                           "symmetric_rewards", "oracle", "oracle_tol", "dump_tensors", "compare_oracle", "out",
                           "threads"});
    ExperimentConfig c;
    maybe(j, "command", "", c.command);
    maybe(j, "preset", "", c.preset);
    apply_preset(c.solver, c.preset);
    if (j.contains("solver")) parse_solver(j["solver"], c.solver);
    if (j.contains("chain_x")) c.chain_x = parse_chain(j["chain_x"], "chain_x", base);
    if (j.contains("chain_y")) c.chain_y = parse_chain(j["chain_y"], "chain_y", base);
    if (j.contains("cost")) c.cost = parse_cost(j["cost"], base);
    maybe(j, "thetas", "", c.thetas);
    maybe(j, "iterations_grid", "", c.iterations_grid);
    maybe(j, "seeds", "", c.seeds);
    maybe(j, "sample_sizes", "", c.sample_sizes);
    maybe(j, "initial_states", "", c.initial_states);
    maybe(j, "n", "", c.n);
    maybe(j, "blocks", "", c.blocks);
    maybe(j, "base_theta", "", c.base_theta);
    maybe(j, "symmetric_rewards", "", c.symmetric_rewards);
    maybe(j, "oracle", "", c.oracle);
    maybe(j, "oracle_tol", "", c.oracle_tol);
    maybe(j, "dump_tensors", "", c.dump_tensors);
    maybe(j, "threads", "", c.threads);
    if (j.contains("compare_oracle")) {
        c.compare_oracle = read_field<std::string>(j, "compare_oracle", "compare_oracle");
        if (c.compare_oracle != "auto") c.compare_oracle = resolve(c.compare_oracle, base).string();
    }
    if (j.contains("out")) c.out = resolve(read_field<std::string>(j, "out", "out"), base);
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str(), path.parent_path());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

MarkovChain build_chain(const ChainSpec& spec) {
    MarkovChain chain = [&] {
        switch (spec.kind) {
            case ChainSpec::Kind::walk:
                return make_random_walk(spec.n, spec.theta).with_initial_state(spec.initial.value_or(0));
            case ChainSpec::Kind::file: {
                MarkovChain c = read_chain_file(spec.path);
                return spec.initial ? c.with_initial_state(*spec.initial) : c;
            }
            case ChainSpec::Kind::transitions:
                break;
        }
        throw std::invalid_argument("a transition buffer carries no kernel: " + spec.path.string());
    }();
    return spec.blocks > 1 ? make_block_lift(chain, spec.blocks) : chain;
}

CostMatrix build_cost(const CostSpec& spec, const MarkovChain& chain_x, const MarkovChain& chain_y) {
    Side x;
    x.states = chain_x.size();
    x.rewards = chain_x.rewards();
    x.labels = chain_x.labels();
    Side y;
    y.states = chain_y.size();
    y.rewards = chain_y.rewards();
    y.labels = chain_y.labels();
    return cost_between(spec, x, y);
}

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
    if (rows_ > 0 && fields_ != header_.size()) throw std::logic_error("csv row has the wrong number of fields");
    if (rows_ > 0) body_ += '\n';
    ++rows_;
    fields_ = 0;
    return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
    if (rows_ == 0 || fields_ == header_.size()) throw std::logic_error("csv field outside a row");
    if (fields_ > 0) body_ += ',';
    body_ += v;
    ++fields_;
    return *this;
}

CsvTable& CsvTable::add(double v) { return add(format_real(v)); }
CsvTable& CsvTable::add(std::int64_t v) { return add(std::to_string(v)); }

std::string CsvTable::str() const {
    if (rows_ > 0 && fields_ != header_.size()) throw std::logic_error("csv row has the wrong number of fields");
    std::string s;
    for (std::size_t i = 0; i < header_.size(); ++i) s += (i ? "," : "") + header_[i];
    s += '\n';
    if (rows_ > 0) s += body_ + '\n';
    return s;
}

void CsvTable::write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << str();
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

CsvTable tensor_table(const OccupancyCoupling& mu) {
    CsvTable t({"x", "y", "x_next", "y_next", "value"});
    for (Index x = 0; x < mu.nx(); ++x)
        for (Index y = 0; y < mu.ny(); ++y)
            for (Index xn = 0; xn < mu.nx(); ++xn)
                for (Index yn = 0; yn < mu.ny(); ++yn)
                    t.row().add(std::int64_t{x}).add(std::int64_t{y}).add(std::int64_t{xn}).add(std::int64_t{yn}).add(
                        mu(x, y, xn, yn));
    return t;
}

CsvTable kernel_table(const ConditionalKernel& k, const std::string& row_name, const std::string& col_prefix) {
    std::vector<std::string> header{row_name};
    for (Index j = 0; j < k.cols(); ++j) header.push_back(col_prefix + std::to_string(j));
    CsvTable t(std::move(header));
    for (Index i = 0; i < k.rows(); ++i) {
        t.row().add(std::int64_t{i});
        for (Index j = 0; j < k.cols(); ++j) t.add(k(i, j));
    }
    return t;
}

double read_oracle_distance(const fs::path& path) {
    const fs::path file = fs::is_directory(path) ? path / "oracle.csv" : path;
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open oracle output " + file.string());
    std::string header, line;
    std::getline(in, header);
    std::getline(in, line);
    std::stringstream hs(header), ls(line);
    std::string name, cell;
    while (std::getline(hs, name, ',')) {
        if (!std::getline(ls, cell, ',')) break;
        if (name == "distance") {
            try {
                return std::stod(cell);
            } catch (const std::exception&) {
                break;
            }
        }
    }
    throw std::runtime_error("no distance value in " + file.string());
}

SolveOutcome cmd_solve(const ExperimentConfig& config) {
    config.validate();
    const SolverConfig& cfg = config.solver;
    const Side x = build_side(config.chain_x);
    const Side y = build_side(config.chain_y);
    CostMatrix cost = cost_between(config.cost, x, y);

    Problem problem;
    if (x.chain && y.chain) {
        problem = Problem::from_chains(*x.chain, *y.chain, cost, cfg.gamma);
    } else {
        problem.cost = cost;
        problem.nu0 = {x.initial, y.initial};
    }
    auto sampler = [](const Side& s, std::uint64_t seed) {
        return s.chain ? TransitionSampler::exact(*s.chain, seed) : TransitionSampler::from_buffer(s.buffer, seed);
    };
    TransitionSampler sx = sampler(x, derive_seed(cfg.seed, 1));
    TransitionSampler sy = sampler(y, derive_seed(cfg.seed, 2));

    SolverConfig run_cfg = cfg;
    run_cfg.keep_mu_bar = config.dump_tensors;
    SolveOutcome outcome;
    outcome.run = run(problem, sx, sy, run_cfg);

    if (config.compare_oracle == "auto") {
        if (!x.chain || !y.chain) throw std::invalid_argument("compare_oracle: auto needs known kernels on both sides");
        outcome.oracle = bicausal_value_iteration(*x.chain, *y.chain, cost, cfg.gamma, config.oracle_tol).distance;
    } else if (!config.compare_oracle.empty()) {
        outcome.oracle = read_oracle_distance(config.compare_oracle);
    }

    prepare_out(config.out);
    const bool has_res = !outcome.run.trace.empty() && outcome.run.trace.front().residuals.has_value();
    std::vector<std::string> header{"k", "distance"};
    if (has_res) header.insert(header.end(), {"flow", "causal_x", "causal_y", "certificate"});
    if (outcome.oracle) header.push_back("abs_error");
    CsvTable trace(header);
    for (const IterateDiagnostics& d : outcome.run.trace) {
        trace.row().add(d.k).add(d.distance_estimate);
        if (has_res) trace.add(d.residuals->flow).add(d.residuals->causal_x).add(d.residuals->causal_y).add(*d.certificate);
        if (outcome.oracle) trace.add(std::abs(d.distance_estimate - *outcome.oracle));
    }
    trace.write(config.out / "trace.csv");

    std::vector<std::string> sh{"iterations", "seed", "distance"};
    if (has_res) sh.insert(sh.end(), {"flow", "causal_x", "causal_y", "certificate"});
    if (outcome.oracle) sh.insert(sh.end(), {"oracle", "abs_error"});
    CsvTable summary(sh);
    const IterateDiagnostics& last = outcome.run.trace.back();
    summary.row().add(cfg.iterations).add(std::to_string(cfg.seed)).add(outcome.run.distance);
    if (has_res) summary.add(last.residuals->flow).add(last.residuals->causal_x).add(last.residuals->causal_y).add(*last.certificate);
    if (outcome.oracle) summary.add(*outcome.oracle).add(std::abs(outcome.run.distance - *outcome.oracle));
    summary.write(config.out / "summary.csv");

    if (config.dump_tensors) {
        tensor_table(outcome.run.mu_bar).write(config.out / "mu_bar.csv");
        kernel_table(outcome.run.lambda_x_bar, "x", "y").write(config.out / "lambda_x.csv");
        kernel_table(outcome.run.lambda_y_bar, "y", "x").write(config.out / "lambda_y.csv");
    }
    return outcome;
}

OracleResult cmd_oracle(const ExperimentConfig& config) {
    config.validate();
    const MarkovChain x = build_chain(config.chain_x);
    const MarkovChain y = build_chain(config.chain_y);
    const CostMatrix cost = build_cost(config.cost, x, y);
    OracleResult r = bicausal_value_iteration(x, y, cost, config.solver.gamma, config.oracle_tol);
    const OccupancyCoupling mu = induced_occupancy(r.optimal_pi, {x.initial_state(), y.initial_state()}, config.solver.gamma);

    prepare_out(config.out);
    CsvTable head({"distance", "gamma", "sweeps"});
    head.row().add(r.distance).add(config.solver.gamma).add(std::int64_t{r.sweeps});
    head.write(config.out / "oracle.csv");

    CsvTable values({"x", "y", "value"});
    for (Index i = 0; i < x.size(); ++i)
        for (Index k = 0; k < y.size(); ++k) values.row().add(std::int64_t{i}).add(std::int64_t{k}).add(r.value_table(i, k));
    values.write(config.out / "value_table.csv");

    const Matrix mass = mu.state_marginal();
    CsvTable marg({"x", "y", "mass"});
    for (Index i = 0; i < x.size(); ++i)
        for (Index k = 0; k < y.size(); ++k) marg.row().add(std::int64_t{i}).add(std::int64_t{k}).add(mass(i, k));
    marg.write(config.out / "mu_star_marginal.csv");
    if (config.dump_tensors) tensor_table(mu).write(config.out / "mu_star.csv");
    return r;
}

std::vector<ModelSelectRow> cmd_model_select(const ExperimentConfig& config) {
    config.validate();
    const MarkovChain target = make_block_lift(make_random_walk(config.n, config.base_theta), config.blocks);
    const std::vector<std::uint64_t> seeds = seeds_of(config);
    const std::vector<std::int64_t> grid = grid_of(config);
    const std::size_t runs = config.thetas.size() * seeds.size();

    const auto estimates = parallel_map<std::vector<double>>(runs, config.threads, [&](std::size_t i) {
        const MarkovChain cand = make_random_walk(config.n, config.thetas[i / seeds.size()]);
        SolverConfig cfg = config.solver;
        cfg.seed = seeds[i % seeds.size()];
        return distances_over_grid(cand, target, reward_abs_diff_cost(cand, target), cfg, grid);
    });
    std::vector<std::optional<double>> exact(config.thetas.size());
    if (config.oracle) {
        const auto values = parallel_map<double>(config.thetas.size(), config.threads, [&](std::size_t t) {
            const MarkovChain cand = make_random_walk(config.n, config.thetas[t]);
            return bicausal_value_iteration(cand, target, reward_abs_diff_cost(cand, target), config.solver.gamma,
                                            config.oracle_tol)
                .distance;
        });
        for (std::size_t t = 0; t < values.size(); ++t) exact[t] = values[t];
    }

    std::vector<ModelSelectRow> rows;
    std::vector<std::string> header{"theta", "seed", "k", "distance"};
    if (config.oracle) header.push_back("oracle");
    CsvTable table(header);
    for (std::size_t i = 0; i < runs; ++i)
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::size_t t = i / seeds.size();
            ModelSelectRow r{config.thetas[t], seeds[i % seeds.size()], grid[g], estimates[i][g], exact[t]};
            table.row().add(r.theta).add(std::to_string(r.seed)).add(r.k).add(r.distance);
            if (r.oracle) table.add(*r.oracle);
            rows.push_back(r);
        }
    prepare_out(config.out);
    table.write(config.out / "model_select.csv");
    return rows;
}

std::vector<EncDecTables> cmd_enc_dec(const ExperimentConfig& config) {
    config.validate();
    const MarkovChain x = build_chain(config.chain_x);
    const MarkovChain y = build_chain(config.chain_y);
    const CostMatrix cost = build_cost(config.cost, x, y);
    std::vector<std::int64_t> sizes = config.sample_sizes;
    const auto tables = parallel_map<EncDecTables>(sizes.size(), config.threads, [&](std::size_t i) {
        SolverConfig cfg = config.solver;
        cfg.iterations = (sizes[i] + cfg.batch_size - 1) / cfg.batch_size;
        cfg.snapshot_every = cfg.iterations;
        cfg.keep_mu_bar = false;
        RunResult r = run(x, y, cost, cfg);
        return EncDecTables{sizes[i], std::move(r.lambda_x_bar), std::move(r.lambda_y_bar)};
    });
    prepare_out(config.out);
    for (const EncDecTables& t : tables) {
        const std::string tag = std::to_string(t.samples);
        kernel_table(t.lambda_x, "x", "y").write(config.out / ("lambda_x_" + tag + ".csv"));
        kernel_table(t.lambda_y, "y", "x").write(config.out / ("lambda_y_" + tag + ".csv"));
    }
    return tables;
}

DistanceMatrix cmd_dist_matrix(const ExperimentConfig& config) {
    config.validate();
    DistanceMatrix m;
    const std::vector<Index> starts = config.initial_states.empty() ? std::vector<Index>{0} : config.initial_states;
    for (Index s : starts)
        for (double t : config.thetas) m.instances.emplace_back(s, t);
    const std::size_t g = m.instances.size();
    std::vector<MarkovChain> chains;
    for (const auto& [s, t] : m.instances) chains.push_back(walk_instance(config, s, t));

    const auto values = parallel_map<double>(g * g, config.threads, [&](std::size_t i) {
        const MarkovChain& a = chains[i / g];
        const MarkovChain& b = chains[i % g];
        SolverConfig cfg = config.solver;
        cfg.snapshot_every = cfg.iterations;
        cfg.keep_mu_bar = false;
        return run(a, b, build_cost(config.cost, a, b), cfg).distance;
    });
    m.estimate.resize(static_cast<Index>(g), static_cast<Index>(g));
    for (std::size_t i = 0; i < g * g; ++i) m.estimate(static_cast<Index>(i / g), static_cast<Index>(i % g)) = values[i];
    if (config.oracle) {
        const auto exact = parallel_map<double>(g * g, config.threads, [&](std::size_t i) {
            const MarkovChain& a = chains[i / g];
            const MarkovChain& b = chains[i % g];
            return bicausal_value_iteration(a, b, build_cost(config.cost, a, b), config.solver.gamma, config.oracle_tol)
                .distance;
        });
        Matrix o(static_cast<Index>(g), static_cast<Index>(g));
        for (std::size_t i = 0; i < g * g; ++i) o(static_cast<Index>(i / g), static_cast<Index>(i % g)) = exact[i];
        m.oracle = o;
    }

    prepare_out(config.out);
    CsvTable inst({"instance", "initial", "theta"});
    for (std::size_t i = 0; i < g; ++i)
        inst.row().add(static_cast<std::int64_t>(i)).add(std::int64_t{m.instances[i].first}).add(m.instances[i].second);
    inst.write(config.out / "instances.csv");
    auto dense = [&](const Matrix& v) {
        std::vector<std::string> header{"instance"};
        for (std::size_t j = 0; j < g; ++j) header.push_back(std::to_string(j));
        CsvTable t(header);
        for (Index i = 0; i < v.rows(); ++i) {
            t.row().add(std::int64_t{i});
            for (Index j = 0; j < v.cols(); ++j) t.add(v(i, j));
        }
        return t;
    };
    dense(m.estimate).write(config.out / "dist_matrix.csv");
    if (m.oracle) dense(*m.oracle).write(config.out / "oracle_matrix.csv");
    return m;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config) {
    config.validate();
    const MarkovChain x = build_chain(config.chain_x);
    const MarkovChain y = build_chain(config.chain_y);
    const CostMatrix cost = build_cost(config.cost, x, y);
    const std::vector<std::uint64_t> seeds = seeds_of(config);
    const std::vector<std::int64_t> grid = grid_of(config);

    const auto estimates = parallel_map<std::vector<double>>(seeds.size(), config.threads, [&](std::size_t i) {
        SolverConfig cfg = config.solver;
        cfg.seed = seeds[i];
        return distances_over_grid(x, y, cost, cfg, grid);
    });
    std::optional<double> exact;
    if (config.compare_oracle == "auto" || (config.compare_oracle.empty() && config.oracle))
        exact = bicausal_value_iteration(x, y, cost, config.solver.gamma, config.oracle_tol).distance;
    else if (!config.compare_oracle.empty())
        exact = read_oracle_distance(config.compare_oracle);

    std::vector<SweepRow> rows;
    std::vector<std::string> header{"seed", "k", "distance"};
    if (exact) header.insert(header.end(), {"oracle", "abs_error"});
    CsvTable table(header);
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t g = 0; g < grid.size(); ++g) {
            SweepRow r{seeds[i], grid[g], estimates[i][g], exact};
            table.row().add(std::to_string(r.seed)).add(r.k).add(r.distance);
            if (exact) table.add(*exact).add(std::abs(r.distance - *exact));
            rows.push_back(r);
        }
    std::vector<std::string> sh{"k", "runs", "median_distance"};
    if (exact) sh.push_back("median_abs_error");
    CsvTable summary(sh);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<double> d, e;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            d.push_back(estimates[i][g]);
            if (exact) e.push_back(std::abs(estimates[i][g] - *exact));
        }
        summary.row().add(grid[g]).add(static_cast<std::int64_t>(seeds.size())).add(median(d));
        if (exact) summary.add(median(e));
    }
    prepare_out(config.out);
    table.write(config.out / "sweep.csv");
    summary.write(config.out / "sweep_summary.csv");
    return rows;
}

int run_command(const ExperimentConfig& config) {
    const std::string& c = config.command;
    if (c == "solve") {
        const SolveOutcome o = cmd_solve(config);
        std::cout << "distance " << format_real(o.run.distance);
        if (o.oracle) std::cout << " oracle " << format_real(*o.oracle);
        std::cout << '\n';
    } else if (c == "oracle") {
        const OracleResult r = cmd_oracle(config);
        std::cout << "distance " << format_real(r.distance) << " sweeps " << r.sweeps << '\n';
    } else if (c == "model-select") {
        const auto rows = cmd_model_select(config);
        std::cout << "rows " << rows.size() << '\n';
    } else if (c == "enc-dec") {
        std::cout << "tables " << 2 * cmd_enc_dec(config).size() << '\n';
    } else if (c == "dist-matrix") {
        std::cout << "instances " << cmd_dist_matrix(config).instances.size() << '\n';
    } else if (c == "sweep") {
        std::cout << "rows " << cmd_sweep(config).size() << '\n';
    } else {
        config.validate();
        return 2;
    }
    std::cout << "wrote " << config.out.string() << '\n';
    return 0;
}

}  // namespace somcot

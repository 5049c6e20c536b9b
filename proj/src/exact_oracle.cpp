#include "somcot/exact_oracle.hpp"

#include "somcot/transport.hpp"

#include <stdexcept>

namespace somcot {

namespace {

void check_inputs(const MarkovChain& chain_x, const MarkovChain& chain_y, const Matrix& cost, double gamma) {
    if (cost.rows() != chain_x.size() || cost.cols() != chain_y.size())
        throw std::invalid_argument("cost shape does not match the chains");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
}

}  // namespace

Matrix bellman_operator(const MarkovChain& chain_x, const MarkovChain& chain_y, const Matrix& cost, const Matrix& w,
                        double gamma) {
    check_inputs(chain_x, chain_y, cost, gamma);
    Matrix next(cost.rows(), cost.cols());
    for (Index x = 0; x < chain_x.size(); ++x)
        for (Index y = 0; y < chain_y.size(); ++y) {
            const TransportResult ot = solve_transport(chain_x.transition().row(x).transpose(),
                                                       chain_y.transition().row(y).transpose(), w);
            next(x, y) = cost(x, y) + gamma * ot.value;
        }
    return next;
}

OracleResult bicausal_value_iteration(const MarkovChain& chain_x, const MarkovChain& chain_y, const CostMatrix& cost,
                                      double gamma, double tol) {
    const Matrix c = cost.raw();
    check_inputs(chain_x, chain_y, c, gamma);
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");

    OracleResult result;
    Matrix w = Matrix::Zero(c.rows(), c.cols());
    const double stop = tol * (1.0 - gamma) / (2.0 * gamma);
    while (true) {
        Matrix next = bellman_operator(chain_x, chain_y, c, w, gamma);
        ++result.sweeps;
        const double delta = (next - w).cwiseAbs().maxCoeff();
        w = std::move(next);
        if (delta <= stop) break;
    }

    result.value_table = w;
    result.distance = (1.0 - gamma) * w(chain_x.initial_state(), chain_y.initial_state());
    result.optimal_pi = TransitionCoupling(chain_x.size(), chain_y.size());
    for (Index x = 0; x < chain_x.size(); ++x)
        for (Index y = 0; y < chain_y.size(); ++y) {
            const TransportResult ot = solve_transport(chain_x.transition().row(x).transpose(),
                                                       chain_y.transition().row(y).transpose(), w);
            result.optimal_pi.set_block(x, y, ot.plan);
        }
    return result;
}

OccupancyCoupling oracle_occupancy(const MarkovChain& chain_x, const MarkovChain& chain_y, const CostMatrix& cost,
                                   double gamma, double tol) {
    const OracleResult r = bicausal_value_iteration(chain_x, chain_y, cost, gamma, tol);
    return induced_occupancy(r.optimal_pi, {chain_x.initial_state(), chain_y.initial_state()}, gamma);
}

}  // namespace somcot

#include "somcot/coupling_lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace somcot {

OccupancyCoupling::OccupancyCoupling(Index nx, Index ny, double fill)
    : nx_(nx), ny_(ny), values_(static_cast<std::size_t>(nx) * ny * nx * ny, fill) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("coupling dimensions must be positive");
}

OccupancyCoupling OccupancyCoupling::uniform(Index nx, Index ny) {
    const double n = static_cast<double>(nx) * ny * nx * ny;
    return OccupancyCoupling(nx, ny, 1.0 / n);
}

double OccupancyCoupling::total() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

Matrix OccupancyCoupling::state_marginal() const {
    Matrix out = Matrix::Zero(nx_, ny_);
    const std::size_t block = static_cast<std::size_t>(nx_) * ny_;
    for (Index x = 0; x < nx_; ++x)
        for (Index y = 0; y < ny_; ++y) {
            const double* row = values_.data() + index(x, y, 0, 0);
            out(x, y) = std::accumulate(row, row + block, 0.0);
        }
    return out;
}

Matrix OccupancyCoupling::shifted_marginal() const {
    Matrix in = Matrix::Zero(nx_, ny_);
    for (Index x = 0; x < nx_; ++x)
        for (Index y = 0; y < ny_; ++y)
            for (Index xn = 0; xn < nx_; ++xn)
                for (Index yn = 0; yn < ny_; ++yn) in(xn, yn) += (*this)(x, y, xn, yn);
    return in;
}

Matrix OccupancyCoupling::x_transition_marginal() const {
    Matrix m = Matrix::Zero(nx_, nx_);
    for (Index x = 0; x < nx_; ++x)
        for (Index y = 0; y < ny_; ++y)
            for (Index xn = 0; xn < nx_; ++xn)
                for (Index yn = 0; yn < ny_; ++yn) m(x, xn) += (*this)(x, y, xn, yn);
    return m;
}

Matrix OccupancyCoupling::y_transition_marginal() const {
    Matrix m = Matrix::Zero(ny_, ny_);
    for (Index x = 0; x < nx_; ++x)
        for (Index y = 0; y < ny_; ++y)
            for (Index xn = 0; xn < nx_; ++xn)
                for (Index yn = 0; yn < ny_; ++yn) m(y, yn) += (*this)(x, y, xn, yn);
    return m;
}

double OccupancyCoupling::l1_distance(const OccupancyCoupling& other) const {
    if (other.nx_ != nx_ || other.ny_ != ny_) throw std::invalid_argument("coupling shapes differ");
    double d = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) d += std::abs(values_[i] - other.values_[i]);
    return d;
}

ConditionalKernel ConditionalKernel::uniform(Index conditioning, Index targets) {
    return {Matrix::Constant(conditioning, targets, 1.0 / targets)};
}

double ConditionalKernel::max_row_defect() const {
    double worst = 0.0;
    for (Index r = 0; r < rows(); ++r) worst = std::max(worst, std::abs(values.row(r).sum() - 1.0));
    return worst;
}

DualVariables::DualVariables(Index nx_, Index ny_)
    : nx(nx_),
      ny(ny_),
      alpha_x(static_cast<std::size_t>(nx_) * nx_ * ny_, 0.0),
      alpha_y(static_cast<std::size_t>(nx_) * ny_ * ny_, 0.0),
      v(Matrix::Zero(nx_, ny_)) {}

bool DualVariables::within_domain(double gamma) const {
    const double ra = alpha_radius(gamma);
    const double rv = value_radius(gamma);
    auto inside = [](const std::vector<double>& a, double r) {
        return std::all_of(a.begin(), a.end(), [r](double t) { return std::abs(t) <= r; });
    };
    return inside(alpha_x, ra) && inside(alpha_y, ra) && v.cwiseAbs().maxCoeff() <= rv;
}

CouplingMarginals coupling_marginals(const OccupancyCoupling& mu) {
    const Index nx = mu.nx();
    const Index ny = mu.ny();
    CouplingMarginals m;
    m.nx = nx;
    m.ny = ny;
    m.out = Matrix::Zero(nx, ny);
    m.in = Matrix::Zero(nx, ny);
    m.sum_over_yn.assign(static_cast<std::size_t>(nx) * nx * ny, 0.0);
    m.sum_over_xn.assign(static_cast<std::size_t>(nx) * ny * ny, 0.0);
    const double* p = mu.values().data();
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y) {
            double row = 0.0;
            double* sy = m.sum_over_xn.data() + m.ay_index(x, y, 0);
            for (Index xn = 0; xn < nx; ++xn) {
                double partial = 0.0;
                for (Index yn = 0; yn < ny; ++yn, ++p) {
                    const double v = *p;
                    partial += v;
                    sy[yn] += v;
                    m.in(xn, yn) += v;
                }
                m.sum_over_yn[m.ax_index(x, xn, y)] = partial;
                row += partial;
            }
            m.out(x, y) = row;
        }
    return m;
}

namespace {

void check_shapes(const OccupancyCoupling& mu, const ConditionalKernel& lx, const ConditionalKernel& ly,
                  const OccupancyTable& nu_x, const OccupancyTable& nu_y) {
    const Index nx = mu.nx();
    const Index ny = mu.ny();
    if (lx.rows() != nx || lx.cols() != ny || ly.rows() != ny || ly.cols() != nx || nu_x.size() != nx ||
        nu_y.size() != ny) {
        throw std::invalid_argument("shape mismatch between coupling, kernels and occupancies");
    }
}

}  // namespace

double flow_residual(const OccupancyCoupling& mu, InitialPair nu0, double gamma) {
    const CouplingMarginals m = coupling_marginals(mu);
    double flow = 0.0;
    for (Index x = 0; x < mu.nx(); ++x)
        for (Index y = 0; y < mu.ny(); ++y) {
            const double start = (x == nu0.x && y == nu0.y) ? 1.0 - gamma : 0.0;
            flow += std::abs(m.out(x, y) - gamma * m.in(x, y) - start);
        }
    return flow;
}

ConstraintResiduals residuals(const CouplingMarginals& m, const ConditionalKernel& lx, const ConditionalKernel& ly,
                              const OccupancyTable& nu_x, const OccupancyTable& nu_y, InitialPair nu0, double gamma) {
    const Index nx = m.nx;
    const Index ny = m.ny;
    if (lx.rows() != nx || lx.cols() != ny || ly.rows() != ny || ly.cols() != nx || nu_x.size() != nx ||
        nu_y.size() != ny) {
        throw std::invalid_argument("shape mismatch between coupling, kernels and occupancies");
    }
    ConstraintResiduals r;
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y) {
            const double start = (x == nu0.x && y == nu0.y) ? 1.0 - gamma : 0.0;
            r.flow += std::abs(m.out(x, y) - gamma * m.in(x, y) - start);
        }
    for (Index x = 0; x < nx; ++x)
        for (Index xn = 0; xn < nx; ++xn)
            for (Index y = 0; y < ny; ++y)
                r.causal_x += std::abs(m.sum_over_yn[m.ax_index(x, xn, y)] - nu_x(x, xn) * lx(x, y));
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index yn = 0; yn < ny; ++yn)
                r.causal_y += std::abs(m.sum_over_xn[m.ay_index(x, y, yn)] - nu_y(y, yn) * ly(y, x));
    return r;
}

ConstraintResiduals residuals(const OccupancyCoupling& mu, const ConditionalKernel& lx, const ConditionalKernel& ly,
                              const OccupancyTable& nu_x, const OccupancyTable& nu_y, InitialPair nu0, double gamma) {
    check_shapes(mu, lx, ly, nu_x, nu_y);
    return residuals(coupling_marginals(mu), lx, ly, nu_x, nu_y, nu0, gamma);
}

double lagrangian(const OccupancyCoupling& mu, const ConditionalKernel& lx, const ConditionalKernel& ly,
                  const DualVariables& duals, const CostMatrix& cost, const OccupancyTable& nu_x,
                  const OccupancyTable& nu_y, InitialPair nu0, double gamma) {
    check_shapes(mu, lx, ly, nu_x, nu_y);
    const Index nx = mu.nx();
    const Index ny = mu.ny();
    const CouplingMarginals m = coupling_marginals(mu);

    double value = inner_cost(mu, cost.values);
    for (Index x = 0; x < nx; ++x)
        for (Index xn = 0; xn < nx; ++xn)
            for (Index y = 0; y < ny; ++y) {
                const double a = duals.ax(x, xn, y);
                value += a * (nu_x(x, xn) * lx(x, y) - m.sum_over_yn[m.ax_index(x, xn, y)]);
            }
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index yn = 0; yn < ny; ++yn) {
                const double a = duals.ay(x, y, yn);
                value += a * (nu_y(y, yn) * ly(y, x) - m.sum_over_xn[m.ay_index(x, y, yn)]);
            }
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y) value += duals.v(x, y) * (gamma * m.in(x, y) - m.out(x, y));
    value += (1.0 - gamma) * duals.v(nu0.x, nu0.y);
    return value;
}

double inner_cost(const OccupancyCoupling& mu, const Matrix& c) {
    if (c.rows() != mu.nx() || c.cols() != mu.ny()) throw std::invalid_argument("cost shape mismatch");
    const Matrix out = mu.state_marginal();
    return out.cwiseProduct(c).sum();
}

double distance_of(const OccupancyCoupling& mu, const CostMatrix& cost) {
    return inner_cost(mu, cost.values) * cost.scale;
}

double dual_certificate(const OccupancyCoupling& mu, const CostMatrix& cost, const ConstraintResiduals& res,
                        double gamma) {
    const double penalty = (6.0 * res.causal_x + 6.0 * res.causal_y + 2.0 * res.flow) / (1.0 - gamma);
    return distance_of(mu, cost) + cost.scale * penalty;
}

ConditionalKernel induced_lambda_x(const OccupancyCoupling& mu, const OccupancyTable& nu_x, double threshold) {
    const Matrix out = mu.state_marginal();
    const Vector mass = nu_x.marginal();
    ConditionalKernel lx = ConditionalKernel::uniform(mu.nx(), mu.ny());
    for (Index x = 0; x < mu.nx(); ++x)
        if (mass(x) > threshold) lx.values.row(x) = out.row(x) / mass(x);
    return lx;
}

ConditionalKernel induced_lambda_y(const OccupancyCoupling& mu, const OccupancyTable& nu_y, double threshold) {
    const Matrix out = mu.state_marginal();
    const Vector mass = nu_y.marginal();
    ConditionalKernel ly = ConditionalKernel::uniform(mu.ny(), mu.nx());
    for (Index y = 0; y < mu.ny(); ++y)
        if (mass(y) > threshold) ly.values.row(y) = out.col(y).transpose() / mass(y);
    return ly;
}

EquivalenceReport check_formulation_equivalence(const OccupancyCoupling& mu, const ConditionalKernel& lx,
                                          const ConditionalKernel& ly, const MarkovChain& chain_x,
                                          const MarkovChain& chain_y, double gamma) {
    const Index nx = mu.nx();
    const Index ny = mu.ny();
    if (chain_x.size() != nx || chain_y.size() != ny) throw std::invalid_argument("chain sizes do not match coupling");
    const OccupancyTable nu_x = exact_occupancy(chain_x, gamma);
    const OccupancyTable nu_y = exact_occupancy(chain_y, gamma);
    check_shapes(mu, lx, ly, nu_x, nu_y);
    const CouplingMarginals m = coupling_marginals(mu);
    const InitialPair nu0{chain_x.initial_state(), chain_y.initial_state()};

    EquivalenceReport rep;
    double flow = 0.0;
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y) {
            const double start = (x == nu0.x && y == nu0.y) ? 1.0 - gamma : 0.0;
            flow = std::max(flow, std::abs(m.out(x, y) - gamma * m.in(x, y) - start));
        }
    double causal = 0.0;
    double marginal = 0.0;
    for (Index x = 0; x < nx; ++x)
        for (Index xn = 0; xn < nx; ++xn)
            for (Index y = 0; y < ny; ++y) {
                const double s = m.sum_over_yn[m.ax_index(x, xn, y)];
                causal = std::max(causal, std::abs(s - nu_x(x, xn) * lx(x, y)));
                marginal = std::max(marginal, std::abs(s - chain_x.prob(x, xn) * m.out(x, y)));
            }
    for (Index x = 0; x < nx; ++x)
        for (Index y = 0; y < ny; ++y)
            for (Index yn = 0; yn < ny; ++yn) {
                const double s = m.sum_over_xn[m.ay_index(x, y, yn)];
                causal = std::max(causal, std::abs(s - nu_y(y, yn) * ly(y, x)));
                marginal = std::max(marginal, std::abs(s - chain_y.prob(y, yn) * m.out(x, y)));
            }
    rep.lp_residual = std::max(flow, causal);
    rep.kernel_residual = std::max(flow, marginal);

    rep.lambda_x = induced_lambda_x(mu, nu_x);
    rep.lambda_y = induced_lambda_y(mu, nu_y);
    const Vector mass_x = nu_x.marginal();
    const Vector mass_y = nu_y.marginal();
    rep.lambda_x_determined.resize(nx);
    rep.lambda_y_determined.resize(ny);
    for (Index x = 0; x < nx; ++x) {
        rep.lambda_x_determined[x] = mass_x(x) > kLambdaThreshold;
        if (rep.lambda_x_determined[x])
            rep.lambda_x_gap =
                std::max(rep.lambda_x_gap, (rep.lambda_x.values.row(x) - lx.values.row(x)).cwiseAbs().maxCoeff());
    }
    for (Index y = 0; y < ny; ++y) {
        rep.lambda_y_determined[y] = mass_y(y) > kLambdaThreshold;
        if (rep.lambda_y_determined[y])
            rep.lambda_y_gap =
                std::max(rep.lambda_y_gap, (rep.lambda_y.values.row(y) - ly.values.row(y)).cwiseAbs().maxCoeff());
    }
    return rep;
}

}  // namespace somcot

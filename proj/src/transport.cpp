#include "somcot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace somcot {

namespace {

struct Cell {
    int i;
    int j;
};

class TransportSimplex {
public:
    TransportSimplex(std::vector<double> supply, std::vector<double> demand, Matrix cost)
        : m_(static_cast<int>(supply.size())),
          n_(static_cast<int>(demand.size())),
          cost_(std::move(cost)),
          flow_(Matrix::Zero(m_, n_)),
          basic_(static_cast<std::size_t>(m_) * n_, false) {
        northwest_corner(std::move(supply), std::move(demand));
        const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
        eps_ = 1e-12 * scale;
    }

    void solve() {
        // Bland's rule terminates; the cap only turns a bug into an error.
        const long cap = 1000L * (m_ + n_) * (m_ + n_) + 1000;
        for (long it = 0; it < cap; ++it) {
            compute_potentials();
            const auto entering = find_entering();
            if (!entering) return;
            pivot(*entering);
        }
        throw std::logic_error("transportation simplex failed to terminate");
    }

    const Matrix& flow() const { return flow_; }

private:
    bool is_basic(int i, int j) const { return basic_[static_cast<std::size_t>(i) * n_ + j]; }
    void set_basic(int i, int j, bool b) { basic_[static_cast<std::size_t>(i) * n_ + j] = b; }

    void northwest_corner(std::vector<double> a, std::vector<double> b) {
        int i = 0;
        int j = 0;
        while (true) {
            const double x = std::min(a[i], b[j]);
            flow_(i, j) = x;
            set_basic(i, j, true);
            a[i] -= x;
            b[j] -= x;
            if (i == m_ - 1 && j == n_ - 1) break;
            if (i == m_ - 1) {
                ++j;
            } else if (j == n_ - 1) {
                ++i;
            } else if (a[i] <= b[j]) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    void compute_potentials() {
        u_.assign(m_, std::numeric_limits<double>::quiet_NaN());
        v_.assign(n_, std::numeric_limits<double>::quiet_NaN());
        u_[0] = 0.0;
        // Breadth-first over the basis tree; rows are nodes 0..m-1, columns m..m+n-1.
        std::vector<int> queue{0};
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const int node = queue[h];
            if (node < m_) {
                const int i = node;
                for (int j = 0; j < n_; ++j)
                    if (is_basic(i, j) && std::isnan(v_[j])) {
                        v_[j] = cost_(i, j) - u_[i];
                        queue.push_back(m_ + j);
                    }
            } else {
                const int j = node - m_;
                for (int i = 0; i < m_; ++i)
                    if (is_basic(i, j) && std::isnan(u_[i])) {
                        u_[i] = cost_(i, j) - v_[j];
                        queue.push_back(i);
                    }
            }
        }
    }

    std::optional<Cell> find_entering() const {
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < n_; ++j)
                if (!is_basic(i, j) && cost_(i, j) - u_[i] - v_[j] < -eps_) return Cell{i, j};
        return std::nullopt;
    }

    // Path in the basis tree from row node `from_row` to column node `to_col`,
    // as the list of basic cells along it.
    std::vector<Cell> tree_path(int from_row, int to_col) const {
        const int nodes = m_ + n_;
        std::vector<int> parent(nodes, -2);
        std::vector<int> queue{from_row};
        parent[from_row] = -1;
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const int node = queue[h];
            if (node == m_ + to_col) break;
            if (node < m_) {
                for (int j = 0; j < n_; ++j)
                    if (is_basic(node, j) && parent[m_ + j] == -2) {
                        parent[m_ + j] = node;
                        queue.push_back(m_ + j);
                    }
            } else {
                const int j = node - m_;
                for (int i = 0; i < m_; ++i)
                    if (is_basic(i, j) && parent[i] == -2) {
                        parent[i] = node;
                        queue.push_back(i);
                    }
            }
        }
        std::vector<Cell> path;
        for (int node = m_ + to_col; parent[node] != -1; node = parent[node]) {
            const int prev = parent[node];
            path.push_back(node < m_ ? Cell{node, prev - m_} : Cell{prev, node - m_});
        }
        return path;
    }

    void pivot(Cell enter) {
        // Cycle: the entering cell (+), then the tree path from column enter.j
        // back to row enter.i with signs −, +, −, ...
        const std::vector<Cell> path = tree_path(enter.i, enter.j);
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        for (std::size_t k = 0; k < path.size(); k += 2) {
            const Cell c = path[k];
            const double f = flow_(c.i, c.j);
            const int idx = c.i * n_ + c.j;
            if (f < theta || (f == theta && idx < leave)) {
                theta = f;
                leave = idx;
            }
        }
        flow_(enter.i, enter.j) += theta;
        for (std::size_t k = 0; k < path.size(); ++k) {
            const Cell c = path[k];
            flow_(c.i, c.j) += (k % 2 == 0) ? -theta : theta;
        }
        const int li = leave / n_;
        const int lj = leave % n_;
        flow_(li, lj) = 0.0;
        set_basic(li, lj, false);
        set_basic(enter.i, enter.j, true);
    }

    int m_;
    int n_;
    Matrix cost_;
    Matrix flow_;
    std::vector<bool> basic_;
    std::vector<double> u_;
    std::vector<double> v_;
    double eps_ = 0.0;
};

}  // namespace

TransportResult solve_transport(const Vector& p, const Vector& q, const Matrix& cost) {
    if (cost.rows() != p.size() || cost.cols() != q.size()) throw std::invalid_argument("transport: shape mismatch");
    if ((p.array() < 0.0).any() || (q.array() < 0.0).any()) throw std::invalid_argument("transport: negative mass");
    if (!cost.allFinite()) throw std::invalid_argument("transport: non-finite cost");
    if (std::abs(p.sum() - q.sum()) > 1e-9) throw std::invalid_argument("transport: unequal masses");

    std::vector<int> rows;
    std::vector<int> cols;
    for (int i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) rows.push_back(i);
    for (int j = 0; j < q.size(); ++j)
        if (q(j) > 0.0) cols.push_back(j);

    TransportResult result{0.0, Matrix::Zero(p.size(), q.size())};
    if (rows.empty() || cols.empty()) return result;

    std::vector<double> a(rows.size());
    std::vector<double> b(cols.size());
    Matrix sub(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        a[r] = p(rows[r]);
        for (std::size_t c = 0; c < cols.size(); ++c) sub(r, c) = cost(rows[r], cols[c]);
    }
    for (std::size_t c = 0; c < cols.size(); ++c) b[c] = q(cols[c]);

    TransportSimplex simplex(std::move(a), std::move(b), std::move(sub));
    simplex.solve();
    const Matrix& f = simplex.flow();
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) {
            result.plan(rows[r], cols[c]) = f(r, c);
            result.value += f(r, c) * cost(rows[r], cols[c]);
        }
    return result;
}

}  // namespace somcot

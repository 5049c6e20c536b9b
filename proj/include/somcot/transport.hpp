#pragma once

// Exact discrete optimal transport by the transportation simplex method.

#include "somcot/chain_model.hpp"

namespace somcot {

struct TransportResult {
    double value = 0.0;
    Matrix plan;
};

/// min ⟨P, C⟩ over couplings P of p and q. Starts from the northwest-corner
/// basis and pivots with Bland's rule (first improving cell in row-major
/// order enters; the lowest-index blocking cell leaves). Rows and columns
/// outside the supports of p and q are dropped before pivoting.
///
/// Throws std::invalid_argument unless p and q are nonnegative, have equal
/// mass within 1e-9, and match the cost shape.
TransportResult solve_transport(const Vector& p, const Vector& q, const Matrix& cost);

}  // namespace somcot

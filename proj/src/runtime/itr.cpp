#include "runtime/itr.hpp"

#include "common/error.hpp"

#include <cmath>

namespace mibci::runtime {

double compute_itr(const ItrParams& params)
{
    const auto n = static_cast<double>(params.n);
    const double p = params.p;
    require(params.n >= 2, ErrorCode::kParameter, "ITR needs at least two classes");
    require(params.t > 0 && std::isfinite(params.t), ErrorCode::kParameter,
        "seconds per selection must be positive");
    require(p >= 1.0 / n - 1e-12 && p <= 1.0, ErrorCode::kParameter,
        "accuracy must lie in [1/N, 1]");
    double bits = std::log2(n);
    if (p < 1.0)
        bits += p * std::log2(p) + (1.0 - p) * std::log2((1.0 - p) / (n - 1.0));
    return std::max(bits, 0.0) * 60.0 / params.t;
}

} // namespace mibci::runtime

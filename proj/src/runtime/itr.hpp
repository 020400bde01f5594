#pragma once

namespace mibci::runtime {

struct ItrParams {
    int n = 3;       // class count
    double p = 1.0;  // accuracy in [1/N, 1]
    double t = 1.0;  // seconds per selection
};

/// Wolpaw information transfer rate in bits per minute.
double compute_itr(const ItrParams& params);

} // namespace mibci::runtime

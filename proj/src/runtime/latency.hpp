#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mibci::runtime {

enum class Stage { kAcquisition = 0, kPreprocessing = 1, kClassification = 2, kTransfer = 3 };

inline constexpr std::size_t kStageCount = 4;
const char* stage_name(Stage stage);

// Monotonic-clock seconds per message. `done` is when a stage published its
// result, `start` when it picked the message up. For acquisition, `start` is
// the nominal arrival time of the newest sample and `done` its emission time.
struct LatencyEntry {
    std::uint64_t seq = 0;
    std::array<double, kStageCount> start {};
    std::array<double, kStageCount> done {};

    double compute(Stage s) const { return done[static_cast<std::size_t>(s)] - start[static_cast<std::size_t>(s)]; }
    /// Time from the previous stage's publication to this stage's publication.
    double delta(Stage s) const;
    double total() const { return done[3] - done[0]; }

    nlohmann::json to_json() const;
    static LatencyEntry from_json(const nlohmann::json& j);
};

void write_ledger(std::ostream& out, const std::vector<LatencyEntry>& ledger);
std::vector<LatencyEntry> read_ledger(std::istream& in);

struct Percentiles {
    double median = 0.0;
    double p95 = 0.0;
    double p99 = 0.0;
};

/// Linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);
Percentiles summarize(const std::vector<double>& values);

struct LatencyReport {
    std::size_t messages = 0;
    std::array<Percentiles, kStageCount> stage;   // per-stage delta, seconds
    std::array<Percentiles, kStageCount> compute; // per-stage compute time, seconds
    Percentiles total;
    /// Entries whose total is smaller than the sum of their compute times.
    std::size_t accounting_violations = 0;
    std::size_t monotonicity_violations = 0;

    nlohmann::json to_json() const;
    std::string table() const;
};

inline constexpr std::size_t kMinLedgerEntries = 100;

LatencyReport latency_report(const std::vector<LatencyEntry>& ledger);

} // namespace mibci::runtime

#include "runtime/latency.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mibci::runtime {

const char* stage_name(Stage stage)
{
    switch (stage) {
    case Stage::kAcquisition: return "acquisition";
    case Stage::kPreprocessing: return "preprocessing";
    case Stage::kClassification: return "classification";
    case Stage::kTransfer: return "transfer";
    }
    return "?";
}

double LatencyEntry::delta(Stage s) const
{
    const auto i = static_cast<std::size_t>(s);
    return i == 0 ? done[0] - start[0] : done[i] - done[i - 1];
}

nlohmann::json LatencyEntry::to_json() const
{
    nlohmann::json j;
    j["seq"] = seq;
    for (std::size_t i = 0; i < kStageCount; ++i) {
        const std::string name = stage_name(static_cast<Stage>(i));
        j[name] = done[i];
        j[name + "_start"] = start[i];
    }
    return j;
}

LatencyEntry LatencyEntry::from_json(const nlohmann::json& j)
{
    LatencyEntry e;
    e.seq = j.at("seq").get<std::uint64_t>();
    for (std::size_t i = 0; i < kStageCount; ++i) {
        const std::string name = stage_name(static_cast<Stage>(i));
        e.done[i] = j.at(name).get<double>();
        e.start[i] = j.value(name + "_start", e.done[i]);
    }
    return e;
}

void write_ledger(std::ostream& out, const std::vector<LatencyEntry>& ledger)
{
    for (const auto& e : ledger)
        out << e.to_json().dump() << '\n';
}

std::vector<LatencyEntry> read_ledger(std::istream& in)
{
    std::vector<LatencyEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            out.push_back(LatencyEntry::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kParse, "ledger line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

double percentile(std::vector<double> values, double q)
{
    require(!values.empty(), ErrorCode::kReport, "no values to summarize");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0)
        return values[lo];
    return values[lo] + frac * (values[hi] - values[lo]);
}

Percentiles summarize(const std::vector<double>& values)
{
    return {percentile(values, 50.0), percentile(values, 95.0), percentile(values, 99.0)};
}

LatencyReport latency_report(const std::vector<LatencyEntry>& ledger)
{
    require(!ledger.empty(), ErrorCode::kReport, "latency ledger is empty");
    require(ledger.size() >= kMinLedgerEntries, ErrorCode::kReport,
        "latency ledger has " + std::to_string(ledger.size()) + " messages, at least "
            + std::to_string(kMinLedgerEntries) + " are required");
    LatencyReport r;
    r.messages = ledger.size();
    std::array<std::vector<double>, kStageCount> stage, compute;
    std::vector<double> total;
    for (const auto& e : ledger) {
        double compute_sum = 0.0;
        double previous = -std::numeric_limits<double>::infinity();
        bool monotonic = true;
        for (std::size_t i = 0; i < kStageCount; ++i) {
            const auto s = static_cast<Stage>(i);
            stage[i].push_back(e.delta(s));
            compute[i].push_back(e.compute(s));
            if (i > 0)
                compute_sum += e.compute(s);
            monotonic = monotonic && e.start[i] >= previous && e.done[i] >= e.start[i];
            previous = e.done[i];
        }
        total.push_back(e.total());
        if (e.total() < compute_sum)
            ++r.accounting_violations;
        if (!monotonic)
            ++r.monotonicity_violations;
    }
    for (std::size_t i = 0; i < kStageCount; ++i) {
        r.stage[i] = summarize(stage[i]);
        r.compute[i] = summarize(compute[i]);
    }
    r.total = summarize(total);
    return r;
}

nlohmann::json LatencyReport::to_json() const
{
    auto ms = [](const Percentiles& p) {
        return nlohmann::json {{"median_ms", p.median * 1e3}, {"p95_ms", p.p95 * 1e3}, {"p99_ms", p.p99 * 1e3}};
    };
    nlohmann::json j;
    j["messages"] = messages;
    for (std::size_t i = 0; i < kStageCount; ++i) {
        const std::string name = stage_name(static_cast<Stage>(i));
        j["stages"][name] = ms(stage[i]);
        j["compute"][name] = ms(compute[i]);
    }
    j["total"] = ms(total);
    j["accounting_violations"] = accounting_violations;
    j["monotonicity_violations"] = monotonicity_violations;
    return j;
}

std::string LatencyReport::table() const
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(16) << "stage" << std::right << std::setw(12) << "median ms"
       << std::setw(10) << "p95 ms" << std::setw(10) << "p99 ms" << std::setw(16) << "compute med ms" << '\n';
    for (std::size_t i = 0; i < kStageCount; ++i)
        os << std::left << std::setw(16) << stage_name(static_cast<Stage>(i)) << std::right << std::setw(12)
           << stage[i].median * 1e3 << std::setw(10) << stage[i].p95 * 1e3 << std::setw(10)
           << stage[i].p99 * 1e3 << std::setw(16) << compute[i].median * 1e3 << '\n';
    os << std::left << std::setw(16) << "total" << std::right << std::setw(12) << total.median * 1e3
       << std::setw(10) << total.p95 * 1e3 << std::setw(10) << total.p99 * 1e3 << '\n';
    os << messages << " messages, " << accounting_violations << " accounting violations, "
       << monotonicity_violations << " monotonicity violations\n";
    return os.str();
}

} // namespace mibci::runtime

#include "runtime/transfer.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>

namespace mibci::runtime {

namespace {

constexpr double kFullTolerance = 1e-9;

double decay(double value, double delta)
{
    if (value > 0)
        return std::max(0.0, value - delta);
    return std::min(0.0, value + delta);
}

} // namespace

std::string to_string(Action action)
{
    switch (action) {
    case Action::kXNeg: return "x_neg";
    case Action::kXPos: return "x_pos";
    case Action::kYNeg: return "y_neg";
    case Action::kYPos: return "y_pos";
    case Action::kNeutral: return "neutral";
    case Action::kBinA: return "bin_a";
    case Action::kBinB: return "bin_b";
    }
    return "neutral";
}

Action parse_action(const std::string& name)
{
    for (Action a : {Action::kXNeg, Action::kXPos, Action::kYNeg, Action::kYPos, Action::kNeutral,
             Action::kBinA, Action::kBinB})
        if (to_string(a) == name)
            return a;
    fail(ErrorCode::kConfig, "unknown action '" + name + "'");
}

TransferConfig TransferConfig::defaults(const std::vector<std::string>& classes)
{
    TransferConfig c;
    c.classes = classes;
    for (const auto& cls : classes) {
        c.thresholds.push_back(0.5);
        if (cls == "left")
            c.mapping.push_back(Action::kXNeg);
        else if (cls == "right")
            c.mapping.push_back(Action::kYPos);
        else
            c.mapping.push_back(Action::kNeutral);
    }
    return c;
}

void TransferConfig::validate() const
{
    require(buffer_len >= 1, ErrorCode::kConfig, "buffer_len must be at least 1");
    require(!classes.empty(), ErrorCode::kConfig, "transfer config lists no classes");
    require(thresholds.size() == classes.size(), ErrorCode::kConfig, "one threshold per class is required");
    require(mapping.size() == classes.size(), ErrorCode::kConfig,
        "the mapping must cover every class exactly once");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        require(std::count(classes.begin(), classes.end(), classes[i]) == 1, ErrorCode::kConfig,
            "class '" + classes[i] + "' is listed twice");
        require(thresholds[i] > 1.0 / 3.0 && thresholds[i] <= 1.0, ErrorCode::kConfig,
            "threshold for '" + classes[i] + "' must lie in (1/3, 1]");
    }
    require(delta_up >= 0 && delta_up <= 1 && delta_down >= 0 && delta_down <= 1, ErrorCode::kConfig,
        "fill rates must lie in [0, 1]");
}

std::size_t TransferConfig::index_of(const std::string& cls) const
{
    const auto it = std::find(classes.begin(), classes.end(), cls);
    require(it != classes.end(), ErrorCode::kConfig, "unknown class '" + cls + "'");
    return static_cast<std::size_t>(it - classes.begin());
}

nlohmann::json TransferConfig::to_message() const
{
    nlohmann::json th = nlohmann::json::object(), map = nlohmann::json::object();
    for (std::size_t i = 0; i < classes.size(); ++i) {
        th[classes[i]] = thresholds[i];
        map[classes[i]] = to_string(mapping[i]);
    }
    return {{"type", "config"}, {"thresholds", th}, {"mapping", map}, {"buffer_len", buffer_len}};
}

void TransferConfig::apply_json(const nlohmann::json& j)
{
    try {
        if (j.contains("buffer_len"))
            buffer_len = j.at("buffer_len").get<std::size_t>();
        if (j.contains("delta_up"))
            delta_up = j.at("delta_up").get<double>();
        if (j.contains("delta_down"))
            delta_down = j.at("delta_down").get<double>();
        if (j.contains("thresholds"))
            for (const auto& [cls, v] : j.at("thresholds").items())
                thresholds[index_of(cls)] = v.get<double>();
        if (j.contains("mapping"))
            for (const auto& [cls, v] : j.at("mapping").items())
                mapping[index_of(cls)] = parse_action(v.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed transfer config: ") + e.what());
    }
    validate();
}

nlohmann::json ControlFrame::to_message() const
{
    return {{"type", "control"}, {"x", x}, {"y", y}, {"a", a}, {"b", b}, {"a_fill", a_fill},
        {"b_fill", b_fill}, {"probs", std::vector<double>(probs.data(), probs.data() + probs.size())},
        {"label", label}, {"ts", ts}};
}

ControlFrame transfer_step(
    TransferState& state, const TransferConfig& config, const Eigen::VectorXd& probs, double ts)
{
    require(probs.size() == static_cast<Eigen::Index>(config.classes.size()), ErrorCode::kShape,
        "probability vector does not match the class count");
    require((probs.array() >= -1e-9).all() && std::abs(probs.sum() - 1.0) < 1e-6, ErrorCode::kParameter,
        "probabilities must lie on the simplex");

    state.buffer.push_back(probs);
    while (state.buffer.size() > config.buffer_len)
        state.buffer.pop_front();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(probs.size());
    for (const auto& p : state.buffer)
        mean += p;
    mean /= static_cast<double>(state.buffer.size());

    Eigen::Index label = 0;
    const double top = mean.maxCoeff(&label);
    const auto li = static_cast<std::size_t>(label);
    const double theta = config.thresholds[li];
    const Action action = config.mapping[li];
    const bool active = top >= theta;

    double x = decay(state.x, config.delta_down);
    double y = decay(state.y, config.delta_down);
    double a_fill = std::max(0.0, state.a_fill - config.delta_down);
    double b_fill = std::max(0.0, state.b_fill - config.delta_down);

    if (active) {
        const double drive = theta < 1.0 ? (top - theta) / (1.0 - theta) : 1.0;
        switch (action) {
        case Action::kXNeg: x = -drive; break;
        case Action::kXPos: x = drive; break;
        case Action::kYNeg: y = -drive; break;
        case Action::kYPos: y = drive; break;
        case Action::kBinA: a_fill = state.a_fill + config.delta_up; break;
        case Action::kBinB: b_fill = state.b_fill + config.delta_up; break;
        case Action::kNeutral: break;
        }
    }

    ControlFrame f;
    f.a = a_fill >= 1.0 - kFullTolerance;
    f.b = b_fill >= 1.0 - kFullTolerance;
    state.x = std::clamp(x, -1.0, 1.0);
    state.y = std::clamp(y, -1.0, 1.0);
    state.a_fill = f.a ? 0.0 : std::clamp(a_fill, 0.0, 1.0);
    state.b_fill = f.b ? 0.0 : std::clamp(b_fill, 0.0, 1.0);

    f.x = state.x;
    f.y = state.y;
    f.a_fill = state.a_fill;
    f.b_fill = state.b_fill;
    f.probs = mean;
    f.label_index = static_cast<int>(label);
    f.label = config.classes[li];
    f.ts = ts;
    state.last = f;
    return f;
}

} // namespace mibci::runtime

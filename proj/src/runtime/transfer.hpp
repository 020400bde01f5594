#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <deque>
#include <string>
#include <vector>

namespace mibci::runtime {

enum class Action { kXNeg, kXPos, kYNeg, kYPos, kNeutral, kBinA, kBinB };

std::string to_string(Action action);
Action parse_action(const std::string& name);

struct TransferConfig {
    std::size_t buffer_len = 10;
    std::vector<std::string> classes;
    std::vector<double> thresholds; // per class, in (1/3, 1]
    std::vector<Action> mapping;    // per class
    double delta_up = 0.2;
    double delta_down = 0.1;

    /// left -> x_neg, right -> y_pos, anything else -> neutral; thresholds 0.5.
    static TransferConfig defaults(const std::vector<std::string>& classes);

    /// Throws kConfig on an invalid table; unmapped classes are rejected here, never at runtime.
    void validate() const;
    std::size_t index_of(const std::string& cls) const;

    /// Server-to-client "config" message.
    nlohmann::json to_message() const;
    /// Applies optional "buffer_len", "thresholds", "mapping", "delta_up", "delta_down" keys.
    void apply_json(const nlohmann::json& j);
};

struct ControlFrame {
    double x = 0.0;
    double y = 0.0;
    bool a = false;
    bool b = false;
    double a_fill = 0.0;
    double b_fill = 0.0;
    Eigen::VectorXd probs; // smoothed class probabilities
    int label_index = -1;
    std::string label;
    double ts = 0.0;       // stream time of the newest sample behind this frame

    nlohmann::json to_message() const;
};

struct TransferState {
    std::deque<Eigen::VectorXd> buffer;
    double x = 0.0;
    double y = 0.0;
    double a_fill = 0.0;
    double b_fill = 0.0;
    ControlFrame last;
};

ControlFrame transfer_step(
    TransferState& state, const TransferConfig& config, const Eigen::VectorXd& probs, double ts);

} // namespace mibci::runtime

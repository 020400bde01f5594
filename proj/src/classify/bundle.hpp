#pragma once

#include "classify/baselines.hpp"
#include "classify/s4d_model.hpp"
#include "features/csp.hpp"
#include "features/morlet.hpp"
#include "features/windowing.hpp"
#include "signal/asr.hpp"
#include "signal/filter.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

namespace mibci::classify {

inline constexpr std::uint32_t kBundleVersion = 1;

struct FeatureConfig {
    features::MorletConfig morlet;
    features::WindowConfig window;
    bool use_csp = true;
    int csp_components = 4;
};

nlohmann::json to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const nlohmann::json& j);

// Everything the online chain needs to reproduce the offline feature path.
struct ModelBundle {
    std::optional<S4dModel> s4d;
    std::optional<BaselineModel> baseline;
    std::optional<features::CspModel> csp;
    std::optional<signal::AsrModel> asr;
    signal::NormalizationStats normalization;
    signal::BandpassDesign filter;
    signal::EpochConfig epoch;
    FeatureConfig features;
    std::vector<std::string> channel_names;
    double sample_rate_hz = 250.0;
    std::vector<std::string> class_names;
    signal::ClassMapping mapping;
    nlohmann::json training = nlohmann::json::object();

    std::string classifier_name() const;
    int n_classes() const { return static_cast<int>(class_names.size()); }
};

std::vector<std::uint8_t> encode_bundle(const ModelBundle& bundle);
ModelBundle decode_bundle(std::span<const std::uint8_t> bytes);

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

} // namespace mibci::classify

#include "classify/bundle.hpp"

#include "common/error.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace mibci::classify {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'B', 'C', 'I', 'B', 'N', '1'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 8;

using nlohmann::json;

class TensorWriter {
public:
    void add(const std::string& name, const Eigen::MatrixXd& m)
    {
        add_raw(name, m.rows(), m.cols(), m.data());
    }
    void add(const std::string& name, const Eigen::VectorXd& v) { add_raw(name, v.size(), 1, v.data()); }
    void add(const std::string& name, const std::vector<double>& v)
    {
        add_raw(name, static_cast<Eigen::Index>(v.size()), 1, v.data());
    }

    json manifest() const { return manifest_; }
    const std::vector<std::uint8_t>& data() const { return data_; }

private:
    void add_raw(const std::string& name, Eigen::Index rows, Eigen::Index cols, const double* p)
    {
        const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
        manifest_.push_back({{"name", name}, {"shape", {rows, cols}}, {"offset", data_.size()}});
        const auto* b = reinterpret_cast<const std::uint8_t*>(p);
        data_.insert(data_.end(), b, b + bytes);
    }

    json manifest_ = json::array();
    std::vector<std::uint8_t> data_;
};

class TensorReader {
public:
    TensorReader(const json& manifest, std::span<const std::uint8_t> data) : data_(data)
    {
        for (const auto& e : manifest)
            entries_[e.at("name").get<std::string>()] = e;
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    Eigen::MatrixXd matrix(const std::string& name) const
    {
        const auto it = entries_.find(name);
        if (it == entries_.end())
            fail(ErrorCode::kParse, "bundle tensor '" + name + "' is missing");
        const auto rows = it->second.at("shape").at(0).get<Eigen::Index>();
        const auto cols = it->second.at("shape").at(1).get<Eigen::Index>();
        const auto offset = it->second.at("offset").get<std::size_t>();
        require(rows >= 0 && cols >= 0, ErrorCode::kParse, "bundle tensor '" + name + "' has a bad shape");
        const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
        require(offset <= data_.size() && bytes <= data_.size() - offset, ErrorCode::kParse,
            "bundle tensor '" + name + "' lies outside the data section");
        Eigen::MatrixXd m(rows, cols);
        if (bytes > 0)
            std::memcpy(m.data(), data_.data() + offset, bytes);
        return m;
    }

    Eigen::VectorXd vector(const std::string& name) const
    {
        const Eigen::MatrixXd m = matrix(name);
        return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    }

    std::vector<double> list(const std::string& name) const
    {
        const Eigen::MatrixXd m = matrix(name);
        return std::vector<double>(m.data(), m.data() + m.size());
    }

private:
    std::span<const std::uint8_t> data_;
    std::map<std::string, json> entries_;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value)
{
    const auto* b = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset)
{
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

json config_json(const S4dConfig& c)
{
    return {{"input_dim", c.input_dim}, {"n_layers", c.n_layers}, {"hidden", c.hidden},
        {"state", c.state}, {"dropout", c.dropout}, {"bidirectional", c.bidirectional},
        {"n_classes", c.n_classes}, {"dt_min", c.dt_min}, {"dt_max", c.dt_max}};
}

S4dConfig config_from_json(const json& j)
{
    S4dConfig c;
    c.input_dim = j.at("input_dim").get<Eigen::Index>();
    c.n_layers = j.at("n_layers").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.state = j.at("state").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.bidirectional = j.at("bidirectional").get<bool>();
    c.n_classes = j.at("n_classes").get<int>();
    c.dt_min = j.at("dt_min").get<double>();
    c.dt_max = j.at("dt_max").get<double>();
    return c;
}

json filter_json(const signal::BandpassDesign& s)
{
    return {{"low_hz", s.low_hz}, {"high_hz", s.high_hz}, {"order", s.order},
        {"stopband_db", s.stopband_db}, {"sample_rate_hz", s.sample_rate_hz},
        {"stop_low_hz", s.stop_low_hz}, {"stop_high_hz", s.stop_high_hz}};
}

signal::BandpassDesign filter_from_json(const json& j)
{
    signal::BandpassDesign s;
    s.low_hz = j.at("low_hz").get<double>();
    s.high_hz = j.at("high_hz").get<double>();
    s.order = j.at("order").get<int>();
    s.stopband_db = j.at("stopband_db").get<double>();
    s.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    s.stop_low_hz = j.at("stop_low_hz").get<double>();
    s.stop_high_hz = j.at("stop_high_hz").get<double>();
    return s;
}

} // namespace

nlohmann::json to_json(const FeatureConfig& c)
{
    return {{"freqs_hz", c.morlet.freqs_hz}, {"n_cycles", c.morlet.n_cycles},
        {"time_decim", c.morlet.time_decim}, {"window_s", c.window.window_s},
        {"stride_s", c.window.stride_s}, {"use_csp", c.use_csp}, {"csp_components", c.csp_components}};
}

FeatureConfig feature_config_from_json(const nlohmann::json& j)
{
    FeatureConfig c;
    if (j.contains("freqs_hz"))
        c.morlet.freqs_hz = j.at("freqs_hz").get<std::vector<double>>();
    c.morlet.n_cycles = j.value("n_cycles", c.morlet.n_cycles);
    c.morlet.time_decim = j.value("time_decim", c.morlet.time_decim);
    c.window.window_s = j.value("window_s", c.window.window_s);
    c.window.stride_s = j.value("stride_s", c.window.stride_s);
    c.use_csp = j.value("use_csp", c.use_csp);
    c.csp_components = j.value("csp_components", c.csp_components);
    return c;
}

std::string ModelBundle::classifier_name() const
{
    if (s4d)
        return "s4d";
    if (baseline)
        return to_string(baseline->kind);
    return "none";
}

std::vector<std::uint8_t> encode_bundle(const ModelBundle& b)
{
    require(b.s4d.has_value() != b.baseline.has_value(), ErrorCode::kParameter,
        "a bundle holds exactly one classifier");
    require(!b.features.use_csp || b.csp.has_value(), ErrorCode::kParameter,
        "feature config requires a CSP model");
    TensorWriter tensors;
    json meta;
    meta["classifier"] = b.classifier_name();
    meta["layout"] = "column-major float64 little-endian";
    meta["class_names"] = b.class_names;
    meta["mapping"] = b.mapping;
    meta["montage"] = {{"channels", b.channel_names}, {"sample_rate_hz", b.sample_rate_hz}};
    meta["filter"] = filter_json(b.filter);
    meta["epoch"] = {{"tmin", b.epoch.tmin}, {"tmax", b.epoch.tmax},
        {"baseline_start", b.epoch.baseline_start}, {"baseline_end", b.epoch.baseline_end}};
    meta["features"] = to_json(b.features);
    meta["training"] = b.training;

    if (b.s4d) {
        const S4dModel& m = *b.s4d;
        meta["s4d"] = {{"config", config_json(m.config())},
            {"meta",
                {{"epochs_run", m.meta.epochs_run}, {"best_epoch", m.meta.best_epoch},
                    {"final_train_loss", m.meta.final_train_loss},
                    {"final_val_loss", m.meta.final_val_loss}, {"seed", m.meta.seed}}}};
        for (const auto& slot : m.layout().slots) {
            Eigen::Map<const Eigen::MatrixXd> view(m.at(slot.offset), slot.rows, slot.cols);
            tensors.add("s4d." + slot.name, Eigen::MatrixXd(view));
        }
    } else {
        const BaselineModel& m = *b.baseline;
        meta["baseline"] = {{"kind", to_string(m.kind)}, {"n_classes", m.n_classes}, {"k", m.options.k},
            {"l2", m.options.l2}, {"iterations", m.options.iterations},
            {"learning_rate", m.options.learning_rate}};
        if (m.kind == BaselineKind::kKnn) {
            tensors.add("baseline.train_x", m.train_x);
            tensors.add("baseline.train_y", std::vector<double>(m.train_y.begin(), m.train_y.end()));
        } else {
            tensors.add("baseline.mean", m.mean);
            tensors.add("baseline.scale", m.scale);
            tensors.add("baseline.weights", m.weights);
            tensors.add("baseline.bias", m.bias);
        }
    }

    if (b.csp) {
        meta["csp"] = {{"class_names", b.csp->class_names}, {"n_components", b.csp->n_components}};
        for (std::size_t c = 0; c < b.csp->filters.size(); ++c) {
            const std::string p = "csp." + std::to_string(c) + ".";
            tensors.add(p + "filters", b.csp->filters[c]);
            tensors.add(p + "eigenvalues", b.csp->eigenvalues[c]);
            tensors.add(p + "class_cov", b.csp->class_cov[c]);
            tensors.add(p + "rest_cov", b.csp->rest_cov[c]);
        }
    }

    meta["normalization"] = {{"flagged", b.normalization.flagged}};
    tensors.add("norm.mean", b.normalization.mean);
    tensors.add("norm.stddev", b.normalization.stddev);

    if (b.asr) {
        const signal::AsrModel& a = *b.asr;
        meta["asr"] = {{"cutoff_k", a.cutoff_k}, {"sample_rate_hz", a.sample_rate_hz},
            {"window_frames", a.window_frames}, {"max_dims_fraction", a.max_dims_fraction}};
        tensors.add("asr.mixing", a.mixing);
        tensors.add("asr.threshold_matrix", a.threshold_matrix);
        tensors.add("asr.component_mean", a.component_mean);
        tensors.add("asr.component_std", a.component_std);
        tensors.add("asr.thresholds", a.thresholds);
    }

    meta["tensors"] = tensors.manifest();
    meta["data_bytes"] = tensors.data().size();
    const std::string text = meta.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put<std::uint32_t>(out, kBundleVersion);
    put<std::uint32_t>(out, 0);
    put<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), tensors.data().begin(), tensors.data().end());
    return out;
}

ModelBundle decode_bundle(std::span<const std::uint8_t> bytes)
{
    require(bytes.size() >= kHeaderBytes, ErrorCode::kParse, "bundle is truncated (header)");
    require(std::memcmp(bytes.data(), kMagic, 8) == 0, ErrorCode::kParse, "not a model bundle (bad magic)");
    const auto version = get<std::uint32_t>(bytes, 8);
    require(version == kBundleVersion, ErrorCode::kVersion,
        "bundle format version " + std::to_string(version) + " is incompatible with version "
            + std::to_string(kBundleVersion));
    const auto meta_len = get<std::uint64_t>(bytes, 16);
    require(meta_len <= bytes.size() - kHeaderBytes, ErrorCode::kParse, "bundle is truncated (metadata)");

    json meta;
    try {
        meta = json::parse(bytes.begin() + kHeaderBytes,
            bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + meta_len));
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, std::string("bundle metadata is not valid JSON: ") + e.what());
    }
    const std::span<const std::uint8_t> data = bytes.subspan(kHeaderBytes + meta_len);

    try {
        require(meta.at("data_bytes").get<std::size_t>() == data.size(), ErrorCode::kParse,
            "bundle is truncated (tensor data)");
        const TensorReader tensors(meta.at("tensors"), data);
        ModelBundle b;
        b.class_names = meta.at("class_names").get<std::vector<std::string>>();
        b.mapping = meta.at("mapping").get<signal::ClassMapping>();
        b.channel_names = meta.at("montage").at("channels").get<std::vector<std::string>>();
        b.sample_rate_hz = meta.at("montage").at("sample_rate_hz").get<double>();
        b.filter = filter_from_json(meta.at("filter"));
        const json& ep = meta.at("epoch");
        b.epoch = {ep.at("tmin").get<double>(), ep.at("tmax").get<double>(),
            ep.at("baseline_start").get<double>(), ep.at("baseline_end").get<double>()};
        b.features = feature_config_from_json(meta.at("features"));
        b.training = meta.at("training");

        const std::string kind = meta.at("classifier").get<std::string>();
        if (kind == "s4d") {
            S4dModel m(config_from_json(meta.at("s4d").at("config")));
            const json& mm = meta.at("s4d").at("meta");
            m.meta = {mm.at("epochs_run").get<int>(), mm.at("best_epoch").get<int>(),
                mm.at("final_train_loss").get<double>(), mm.at("final_val_loss").get<double>(),
                mm.at("seed").get<std::uint64_t>()};
            for (const auto& slot : m.layout().slots) {
                const Eigen::MatrixXd t = tensors.matrix("s4d." + slot.name);
                require(t.rows() == slot.rows && t.cols() == slot.cols, ErrorCode::kParse,
                    "bundle tensor '" + slot.name + "' has the wrong shape");
                std::memcpy(m.at(slot.offset), t.data(), slot.size() * sizeof(double));
            }
            b.s4d = std::move(m);
        } else if (kind == "knn" || kind == "linear") {
            const json& bj = meta.at("baseline");
            BaselineModel m;
            m.kind = parse_baseline_kind(kind);
            m.n_classes = bj.at("n_classes").get<int>();
            m.options = {bj.at("k").get<int>(), bj.at("l2").get<double>(), bj.at("iterations").get<int>(),
                bj.at("learning_rate").get<double>()};
            if (m.kind == BaselineKind::kKnn) {
                m.train_x = tensors.matrix("baseline.train_x");
                for (double y : tensors.list("baseline.train_y"))
                    m.train_y.push_back(static_cast<int>(y));
            } else {
                m.mean = tensors.vector("baseline.mean");
                m.scale = tensors.vector("baseline.scale");
                m.weights = tensors.matrix("baseline.weights");
                m.bias = tensors.vector("baseline.bias");
            }
            b.baseline = std::move(m);
        } else {
            fail(ErrorCode::kParse, "bundle names an unknown classifier '" + kind + "'");
        }

        if (meta.contains("csp")) {
            features::CspModel csp;
            csp.class_names = meta["csp"].at("class_names").get<std::vector<std::string>>();
            csp.n_components = meta["csp"].at("n_components").get<int>();
            for (std::size_t c = 0; c < csp.class_names.size(); ++c) {
                const std::string p = "csp." + std::to_string(c) + ".";
                csp.filters.push_back(tensors.matrix(p + "filters"));
                csp.eigenvalues.push_back(tensors.vector(p + "eigenvalues"));
                csp.class_cov.push_back(tensors.matrix(p + "class_cov"));
                csp.rest_cov.push_back(tensors.matrix(p + "rest_cov"));
            }
            b.csp = std::move(csp);
        }
        require(!b.features.use_csp || b.csp.has_value(), ErrorCode::kParse,
            "bundle lacks the CSP block its feature config requires");

        b.normalization.mean = tensors.list("norm.mean");
        b.normalization.stddev = tensors.list("norm.stddev");
        b.normalization.flagged = meta.at("normalization").at("flagged").get<std::vector<std::size_t>>();

        if (meta.contains("asr")) {
            const json& aj = meta["asr"];
            signal::AsrModel a;
            a.cutoff_k = aj.at("cutoff_k").get<double>();
            a.sample_rate_hz = aj.at("sample_rate_hz").get<double>();
            a.window_frames = aj.at("window_frames").get<Eigen::Index>();
            a.max_dims_fraction = aj.at("max_dims_fraction").get<double>();
            a.mixing = tensors.matrix("asr.mixing");
            a.threshold_matrix = tensors.matrix("asr.threshold_matrix");
            a.component_mean = tensors.vector("asr.component_mean");
            a.component_std = tensors.vector("asr.component_std");
            a.thresholds = tensors.vector("asr.thresholds");
            b.asr = std::move(a);
        }
        return b;
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, std::string("bundle metadata is malformed: ") + e.what());
    }
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path)
{
    const auto bytes = encode_bundle(bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

ModelBundle load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open model bundle '" + path.string() + "'");
    const std::vector<std::uint8_t> bytes(
        (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_bundle(bytes);
}

} // namespace mibci::classify

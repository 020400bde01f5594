#include "sessions/offline_train.hpp"

#include "classify/baselines.hpp"
#include "common/error.hpp"
#include "features/csp.hpp"
#include "features/morlet.hpp"
#include "features/windowing.hpp"
#include "signal/asr.hpp"
#include "signal/filter.hpp"
#include "signal/recording.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

namespace mibci::sessions {

namespace {

using nlohmann::json;

template <typename F>
auto stage(const std::string& name, const std::filesystem::path& file, F&& body)
{
    try {
        return body();
    } catch (const Error& e) {
        std::string where = "stage '" + name + "'";
        if (!file.empty())
            where += " (" + file.string() + ")";
        throw Error(e.code(), where + ": " + e.what());
    }
}

void note(std::ostream* log, const std::string& line)
{
    if (log)
        *log << line << '\n';
}

signal::Recording bandpass(const signal::Recording& in, signal::BandpassDesign design)
{
    design.sample_rate_hz = in.montage.sample_rate_hz;
    signal::Recording out = in;
    auto filter = signal::design_bandpass(design, in.montage.channel_count());
    filter.process(out.samples);
    return out;
}

signal::EpochSet subset(const signal::EpochSet& set, const std::vector<std::size_t>& rows)
{
    signal::EpochSet out = set;
    out.epochs.clear();
    out.labels.clear();
    out.parent.clear();
    out.offset.clear();
    for (const std::size_t r : rows) {
        out.epochs.push_back(set.epochs[r]);
        out.labels.push_back(set.labels[r]);
        out.parent.push_back(set.parent[r]);
        out.offset.push_back(set.offset[r]);
    }
    return out;
}

void append(signal::EpochSet& into, const signal::EpochSet& from)
{
    if (into.epochs.empty() && into.channel_names.empty()) {
        into = from;
        into.parent.clear();
        into.offset.clear();
        into.epochs.clear();
        into.labels.clear();
        into.skipped = 0;
    }
    for (std::size_t i = 0; i < from.size(); ++i) {
        into.parent.push_back(into.epochs.size());
        into.offset.push_back(0);
        into.epochs.push_back(from.epochs[i]);
        into.labels.push_back(from.labels[i]);
    }
    into.skipped += from.skipped;
}

Eigen::MatrixXd calibration_segment(const signal::Recording& rec)
{
    double start = 0.0;
    double end = rec.duration_s();
    for (const auto& m : rec.markers) {
        if (m.label == "calibration_start")
            start = m.timestamp;
        else if (m.label == "calibration_end")
            end = m.timestamp;
    }
    const double fs = rec.montage.sample_rate_hz;
    const auto a = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::llround(start * fs)), 0, rec.frames());
    const auto b = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::llround(end * fs)), a, rec.frames());
    return rec.samples.middleCols(a, b - a);
}

features::FeatureTensor make_features(const signal::EpochSet& windows, const classify::FeatureConfig& config,
    const std::optional<features::CspModel>& csp)
{
    const auto morlet = features::morlet_power(windows, config.morlet);
    Eigen::MatrixXd block(static_cast<Eigen::Index>(windows.size()), 0);
    if (csp)
        block = features::csp_transform(*csp, windows).values;
    return features::stack_features(morlet, block, windows);
}

// CAR leaves the channel covariance with rank n-1, so the unregularized CSP is
// fit without the last channel and that channel gets a zero filter weight.
features::CspModel csp_fit_referenced(const signal::EpochSet& windows, int n_components)
{
    signal::EpochSet reduced = windows;
    const Eigen::Index n = windows.channels();
    for (auto& e : reduced.epochs)
        e.conservativeResize(n - 1, Eigen::NoChange);
    reduced.channel_names.pop_back();
    features::CspModel model = features::csp_fit(reduced, n_components);
    auto pad = [n](const Eigen::MatrixXd& m, Eigen::Index cols) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, cols);
        out.topLeftCorner(m.rows(), m.cols()) = m;
        return out;
    };
    for (auto& f : model.filters)
        f = pad(f, f.cols());
    for (auto& c : model.class_cov)
        c = pad(c, n);
    for (auto& c : model.rest_cov)
        c = pad(c, n);
    return model;
}

json rejected_json(const std::vector<std::pair<std::string, signal::RejectedChannel>>& rejected)
{
    json out = json::array();
    for (const auto& [file, r] : rejected)
        out.push_back({{"recording", file}, {"channel", r.label}, {"reason", r.reason}});
    return out;
}

} // namespace

TrainOptions TrainOptions::from_json(const json& j)
{
    TrainOptions o;
    if (j.contains("recordings"))
        for (const auto& p : j.at("recordings"))
            o.recordings.emplace_back(p.get<std::string>());
    o.calibration = j.value("calibration", std::string());
    o.mapping = j.value("mapping", std::string());
    o.output = j.value("output", std::string());
    o.report = j.value("report", std::string());
    o.seed = j.value("seed", o.seed);
    o.crop_s = j.value("crop_s", o.crop_s);
    o.split_ratio = j.value("split_ratio", o.split_ratio);
    o.val_fraction = j.value("val_fraction", o.val_fraction);
    o.classifier = j.value("classifier", o.classifier);
    if (j.contains("filter")) {
        const auto& f = j.at("filter");
        o.filter.low_hz = f.value("low_hz", o.filter.low_hz);
        o.filter.high_hz = f.value("high_hz", o.filter.high_hz);
        o.filter.order = f.value("order", o.filter.order);
        o.filter.stopband_db = f.value("stopband_db", o.filter.stopband_db);
        o.filter.stop_low_hz = f.value("stop_low_hz", o.filter.stop_low_hz);
        o.filter.stop_high_hz = f.value("stop_high_hz", o.filter.stop_high_hz);
    }
    if (j.contains("rejection")) {
        const auto& r = j.at("rejection");
        o.rejection.flatline_s = r.value("flatline_s", o.rejection.flatline_s);
        o.rejection.noise_z = r.value("noise_z", o.rejection.noise_z);
        o.rejection.spike_uv = r.value("spike_uv", o.rejection.spike_uv);
    }
    if (j.contains("asr")) {
        const auto& a = j.at("asr");
        o.asr.cutoff_k = a.value("cutoff_k", o.asr.cutoff_k);
        o.asr.window_s = a.value("window_s", o.asr.window_s);
        o.asr.calibration_window_s = a.value("calibration_window_s", o.asr.calibration_window_s);
        o.asr.max_dims_fraction = a.value("max_dims_fraction", o.asr.max_dims_fraction);
    }
    if (j.contains("epoch")) {
        const auto& e = j.at("epoch");
        o.epoch.tmin = e.value("tmin", o.epoch.tmin);
        o.epoch.tmax = e.value("tmax", o.epoch.tmax);
        o.epoch.baseline_start = e.value("baseline_start", o.epoch.baseline_start);
        o.epoch.baseline_end = e.value("baseline_end", o.epoch.baseline_end);
    }
    if (j.contains("features"))
        o.features = classify::feature_config_from_json(j.at("features"));
    if (j.contains("model")) {
        const auto& m = j.at("model");
        o.model.n_layers = m.value("n_layers", o.model.n_layers);
        o.model.hidden = m.value("hidden", o.model.hidden);
        o.model.state = m.value("state", o.model.state);
        o.model.dropout = m.value("dropout", o.model.dropout);
        o.model.bidirectional = m.value("bidirectional", o.model.bidirectional);
        o.model.dt_min = m.value("dt_min", o.model.dt_min);
        o.model.dt_max = m.value("dt_max", o.model.dt_max);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        o.train.learning_rate = t.value("learning_rate", o.train.learning_rate);
        o.train.batch_size = t.value("batch_size", o.train.batch_size);
        o.train.max_epochs = t.value("max_epochs", o.train.max_epochs);
        o.train.patience = t.value("patience", o.train.patience);
    }
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        o.baseline.k = b.value("k", o.baseline.k);
        o.baseline.l2 = b.value("l2", o.baseline.l2);
        o.baseline.iterations = b.value("iterations", o.baseline.iterations);
        o.baseline.learning_rate = b.value("learning_rate", o.baseline.learning_rate);
    }
    return o;
}

json TrainOptions::to_json() const
{
    json rec = json::array();
    for (const auto& p : recordings)
        rec.push_back(p.string());
    return {{"recordings", rec}, {"calibration", calibration.string()}, {"mapping", mapping.string()},
        {"output", output.string()}, {"report", report.string()}, {"seed", seed}, {"crop_s", crop_s},
        {"split_ratio", split_ratio}, {"val_fraction", val_fraction}, {"classifier", classifier},
        {"filter",
            {{"low_hz", filter.low_hz}, {"high_hz", filter.high_hz}, {"order", filter.order},
                {"stopband_db", filter.stopband_db}, {"stop_low_hz", filter.stop_low_hz},
                {"stop_high_hz", filter.stop_high_hz}}},
        {"rejection",
            {{"flatline_s", rejection.flatline_s}, {"noise_z", rejection.noise_z},
                {"spike_uv", rejection.spike_uv}}},
        {"asr",
            {{"cutoff_k", asr.cutoff_k}, {"window_s", asr.window_s},
                {"calibration_window_s", asr.calibration_window_s},
                {"max_dims_fraction", asr.max_dims_fraction}}},
        {"epoch",
            {{"tmin", epoch.tmin}, {"tmax", epoch.tmax}, {"baseline_start", epoch.baseline_start},
                {"baseline_end", epoch.baseline_end}}},
        {"features", classify::to_json(features)},
        {"model",
            {{"n_layers", model.n_layers}, {"hidden", model.hidden}, {"state", model.state},
                {"dropout", model.dropout}, {"bidirectional", model.bidirectional},
                {"dt_min", model.dt_min}, {"dt_max", model.dt_max}}},
        {"train",
            {{"learning_rate", train.learning_rate}, {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs}, {"patience", train.patience}}},
        {"baseline",
            {{"k", baseline.k}, {"l2", baseline.l2}, {"iterations", baseline.iterations},
                {"learning_rate", baseline.learning_rate}}}};
}

TrainOutcome cli_train(const TrainOptions& options, std::ostream* log)
{
    require(!options.recordings.empty(), ErrorCode::kParameter, "no training recordings given");
    require(options.split_ratio > 0 && options.split_ratio < 1, ErrorCode::kParameter,
        "split_ratio must lie in (0, 1)");
    require(options.val_fraction > 0 && options.val_fraction < 1, ErrorCode::kParameter,
        "val_fraction must lie in (0, 1)");
    const bool use_s4d = options.classifier == "s4d";
    const std::optional<classify::BaselineKind> baseline_kind = use_s4d
        ? std::nullopt
        : std::optional(stage("options", {}, [&] { return classify::parse_baseline_kind(options.classifier); }));

    const auto mapping = stage("mapping", options.mapping, [&] { return signal::load_mapping(options.mapping); });
    const auto class_names = signal::class_names_of(mapping);

    if (options.calibration.empty() || !std::filesystem::exists(options.calibration))
        fail(ErrorCode::kCalibration,
            "stage 'asr': artifact subspace reconstruction needs a resting calibration recording; "
                + (options.calibration.empty() ? std::string("none was given")
                                               : "'" + options.calibration.string() + "' does not exist"));

    // Per-recording filtering and channel screening.
    std::vector<signal::Recording> filtered;
    std::vector<std::pair<std::string, signal::RejectedChannel>> rejected;
    std::vector<std::string> kept;
    double fs = 0.0;
    for (const auto& path : options.recordings) {
        auto rec = stage("load", path, [&] { return signal::load_recording(path); });
        if (fs == 0.0)
            fs = rec.montage.sample_rate_hz;
        require(rec.montage.sample_rate_hz == fs, ErrorCode::kData,
            "stage 'load' (" + path.string() + "): sample rate differs from the first recording");
        rec = stage("crop", path, [&] { return signal::crop_head(rec, options.crop_s); });
        rec = stage("filter", path, [&] { return bandpass(rec, options.filter); });
        const auto screened = stage("reject", path, [&] { return signal::reject_channels(rec, options.rejection); });
        for (const auto& r : screened.rejected)
            rejected.emplace_back(path.string(), r);
        if (kept.empty() && filtered.empty())
            kept = screened.recording.montage.channel_names;
        else
            std::erase_if(kept, [&](const std::string& c) {
                return !screened.recording.montage.index_of(c).has_value();
            });
        note(log, "loaded " + path.string() + ": " + std::to_string(rec.frames()) + " frames, "
                + std::to_string(screened.rejected.size()) + " channels rejected");
        filtered.push_back(std::move(rec));
    }
    require(kept.size() >= 2, ErrorCode::kDataQuality, "stage 'reject': fewer than two channels survived");

    const auto asr_model = stage("asr", options.calibration, [&] {
        auto cal = signal::load_recording(options.calibration);
        require(cal.montage.sample_rate_hz == fs, ErrorCode::kData,
            "calibration sample rate differs from the training recordings");
        cal = signal::select_channels(cal, kept);
        cal = bandpass(cal, options.filter);
        return signal::asr_calibrate(calibration_segment(cal), fs, options.asr);
    });

    signal::EpochSet all;
    std::vector<std::size_t> car(kept.size());
    for (std::size_t i = 0; i < car.size(); ++i)
        car[i] = i;
    std::size_t asr_modified = 0;
    for (std::size_t r = 0; r < filtered.size(); ++r) {
        const auto& path = options.recordings[r];
        auto rec = stage("reject", path, [&] { return signal::select_channels(filtered[r], kept); });
        stage("asr", path, [&] {
            signal::AsrStream stream(asr_model, static_cast<Eigen::Index>(std::llround(0.1 * fs)));
            stream.process(rec.samples);
            asr_modified += stream.windows_modified();
            return 0;
        });
        rec.samples = signal::common_average_reference(rec.samples, car);
        const auto epochs = stage("epoch", path, [&] { return signal::epoch_and_baseline(rec, mapping, options.epoch); });
        append(all, epochs);
    }
    require(all.size() > 0, ErrorCode::kData, "stage 'epoch': no labelled epochs found");
    all.class_names = class_names;
    note(log, std::to_string(all.size()) + " epochs, " + std::to_string(all.skipped) + " skipped");

    const auto split = stage("split", {}, [&] {
        return features::stratified_split(all.labels, all.parent, options.split_ratio, options.seed);
    });
    const auto norm = stage("normalize", {}, [&] { return signal::normalize_epochs(subset(all, split.train)); });
    const auto test_epochs = signal::normalize_epochs(subset(all, split.test), norm.stats).epochs;

    const auto train_windows = stage("window", {}, [&] { return features::window_epochs(norm.epochs, options.features.window); });
    const auto test_windows = features::window_epochs(test_epochs, options.features.window);

    std::optional<features::CspModel> csp;
    if (options.features.use_csp)
        csp = stage("csp", {}, [&] { return csp_fit_referenced(train_windows, options.features.csp_components); });
    const auto train_all = stage("features", {}, [&] { return make_features(train_windows, options.features, csp); });
    const auto test_set = stage("features", {}, [&] { return make_features(test_windows, options.features, csp); });

    const auto carve = stage("split", {}, [&] {
        return features::stratified_split(train_all.labels, train_all.parent, 1.0 - options.val_fraction,
            options.seed + 1);
    });
    const auto train_set = train_all.subset(carve.train);
    const auto val_set = train_all.subset(carve.test);
    note(log, "windows: " + std::to_string(train_set.size()) + " train, " + std::to_string(val_set.size())
            + " validation, " + std::to_string(test_set.size()) + " test; "
            + std::to_string(train_set.feature_channels()) + " features x " + std::to_string(train_set.steps())
            + " steps");

    TrainOutcome out;
    classify::ModelBundle& bundle = out.bundle;
    json training_json;
    if (use_s4d) {
        classify::S4dConfig cfg = options.model;
        cfg.input_dim = train_set.feature_channels();
        cfg.n_classes = static_cast<int>(class_names.size());
        classify::TrainConfig tc = options.train;
        tc.seed = options.seed;
        auto result = stage("train", {}, [&] {
            return classify::train(classify::s4d_init(cfg, options.seed), train_set, val_set, tc);
        });
        out.evaluation = classify::evaluate(result.model, test_set);
        training_json = result.report.to_json();
        bundle.s4d = std::move(result.model);
    } else {
        auto model = stage("train", {}, [&] {
            return classify::baseline_fit(*baseline_kind, classify::pool_features(train_all), train_all.labels,
                static_cast<int>(class_names.size()), options.baseline);
        });
        const auto predicted = classify::baseline_predict(model, classify::pool_features(test_set));
        out.evaluation = classify::evaluate_predictions(
            test_set.labels, predicted, test_set.parent, static_cast<int>(class_names.size()));
        training_json = {{"classifier", options.classifier}};
        bundle.baseline = std::move(model);
    }
    note(log, out.evaluation.table(class_names));

    out.train_windows = train_set.size();
    out.val_windows = val_set.size();
    out.test_windows = test_set.size();
    out.report = {{"classifier", options.classifier}, {"seed", options.seed},
        {"channels", kept}, {"rejected", rejected_json(rejected)},
        {"epochs", {{"total", all.size()}, {"skipped", all.skipped}, {"train", split.train.size()},
                       {"test", split.test.size()}}},
        {"windows", {{"train", out.train_windows}, {"validation", out.val_windows}, {"test", out.test_windows}}},
        {"asr_windows_modified", asr_modified}, {"training", training_json},
        {"evaluation", out.evaluation.to_json(class_names)}};

    bundle.csp = std::move(csp);
    bundle.asr = asr_model;
    bundle.normalization = norm.stats;
    bundle.filter = options.filter;
    bundle.filter.sample_rate_hz = fs;
    bundle.epoch = options.epoch;
    bundle.features = options.features;
    bundle.channel_names = kept;
    bundle.sample_rate_hz = fs;
    bundle.class_names = class_names;
    bundle.mapping = mapping;
    bundle.training = out.report;

    if (!options.output.empty())
        stage("bundle", options.output, [&] {
            classify::save_model(bundle, options.output);
            return 0;
        });
    if (!options.report.empty())
        stage("report", options.report, [&] {
            std::ofstream f(options.report);
            require(f.good(), ErrorCode::kIo, "cannot open the report file for writing");
            f << out.report.dump(2) << '\n';
            require(f.good(), ErrorCode::kIo, "writing the report failed");
            return 0;
        });
    return out;
}

} // namespace mibci::sessions

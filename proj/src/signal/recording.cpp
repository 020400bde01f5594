#include "signal/recording.hpp"

#include "common/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace mibci::signal {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
    "recording and bundle encoders assume a little-endian host");

std::optional<std::size_t> Montage::index_of(const std::string& label) const
{
    const auto it = std::find(channel_names.begin(), channel_names.end(), label);
    if (it == channel_names.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - channel_names.begin());
}

void Montage::validate() const
{
    require(!channel_names.empty(), ErrorCode::kParameter, "montage has no channels");
    require(sample_rate_hz > 0.0, ErrorCode::kParameter, "sample rate must be positive");
    std::set<std::string> seen(channel_names.begin(), channel_names.end());
    require(seen.size() == channel_names.size(), ErrorCode::kParameter,
        "montage channel names must be unique");
}

Montage default_montage(double sample_rate_hz)
{
    return Montage{{"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2",
                       "FC6", "T7", "C3", "Cz", "C4", "T8", "CP5", "CP1", "CP2", "CP6",
                       "P3", "Pz", "P4", "Oz"},
        sample_rate_hz, ReferenceScheme::kDevice};
}

namespace {

constexpr const char* kFormatName = "mibci-recording";

std::string reference_name(ReferenceScheme scheme)
{
    return scheme == ReferenceScheme::kCommonAverage ? "common_average" : "device";
}

ReferenceScheme parse_reference(const std::string& name)
{
    if (name == "device")
        return ReferenceScheme::kDevice;
    if (name == "common_average")
        return ReferenceScheme::kCommonAverage;
    fail(ErrorCode::kParse, "unknown reference scheme '" + name + "'");
}

json header_json(const Recording& rec, std::uint64_t marker_offset)
{
    return json{
        {"format", kFormatName},
        {"version", kRecordingFormatVersion},
        {"session_id", rec.session_id},
        {"units", "uV"},
        {"montage",
            {{"channels", rec.montage.channel_names},
                {"sample_rate_hz", rec.montage.sample_rate_hz},
                {"reference_scheme", reference_name(rec.montage.reference_scheme)}}},
        {"frames", static_cast<std::uint64_t>(rec.samples.cols())},
        {"marker_offset", marker_offset},
    };
}

} // namespace

std::string encode_recording(const Recording& rec)
{
    rec.montage.validate();
    require(rec.samples.rows() == static_cast<Eigen::Index>(rec.montage.channel_count()),
        ErrorCode::kShape, "sample rows do not match montage");
    require(std::is_sorted(rec.markers.begin(), rec.markers.end(),
                [](const Marker& a, const Marker& b) { return a.timestamp < b.timestamp; }),
        ErrorCode::kData, "markers must be sorted by timestamp");

    const std::uint64_t sample_bytes
        = static_cast<std::uint64_t>(rec.samples.size()) * sizeof(float);

    // The header embeds the trailer offset, which depends on the header's own length.
    std::string header;
    std::uint64_t offset = 0;
    for (int i = 0; i < 8; ++i) {
        header = header_json(rec, offset).dump();
        const std::uint64_t next = header.size() + 1 + sample_bytes;
        if (next == offset)
            break;
        offset = next;
    }
    require(header.size() + 1 + sample_bytes == offset, ErrorCode::kIo,
        "could not settle recording header length");

    json trailer = json::array();
    for (const auto& m : rec.markers)
        trailer.push_back({{"t", m.timestamp}, {"label", m.label}});

    std::string out;
    out.reserve(offset + 64 * rec.markers.size() + 2);
    out += header;
    out += '\n';
    const std::size_t base = out.size();
    out.resize(base + sample_bytes);
    const Eigen::MatrixXf as_float = rec.samples.cast<float>();
    std::memcpy(out.data() + base, as_float.data(), sample_bytes);
    out += trailer.dump();
    return out;
}

Recording decode_recording(const std::string& bytes)
{
    const auto newline = bytes.find('\n');
    require(newline != std::string::npos, ErrorCode::kParse, "recording header line missing");
    json header;
    try {
        header = json::parse(bytes.substr(0, newline));
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, std::string("recording header: ") + e.what());
    }

    Recording rec;
    std::uint64_t frames = 0;
    std::uint64_t marker_offset = 0;
    try {
        require(header.at("format").get<std::string>() == kFormatName, ErrorCode::kParse,
            "not a recording file");
        const int version = header.at("version").get<int>();
        require(version == kRecordingFormatVersion, ErrorCode::kVersion,
            "recording format version " + std::to_string(version) + " is not supported");
        require(header.at("units").get<std::string>() == "uV", ErrorCode::kParse,
            "recording units must be uV");
        const auto& montage = header.at("montage");
        rec.montage.channel_names = montage.at("channels").get<std::vector<std::string>>();
        rec.montage.sample_rate_hz = montage.at("sample_rate_hz").get<double>();
        rec.montage.reference_scheme
            = parse_reference(montage.at("reference_scheme").get<std::string>());
        rec.session_id = header.at("session_id").get<std::string>();
        frames = header.at("frames").get<std::uint64_t>();
        marker_offset = header.at("marker_offset").get<std::uint64_t>();
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, std::string("recording header: ") + e.what());
    }
    rec.montage.validate();

    const std::uint64_t channels = rec.montage.channel_count();
    const std::uint64_t sample_bytes = channels * frames * sizeof(float);
    require(marker_offset == newline + 1 + sample_bytes, ErrorCode::kParse,
        "marker offset inconsistent with header");
    require(bytes.size() >= marker_offset, ErrorCode::kParse, "recording truncated");

    Eigen::MatrixXf as_float(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(frames));
    std::memcpy(as_float.data(), bytes.data() + newline + 1, sample_bytes);
    rec.samples = as_float.cast<double>();

    try {
        const json trailer = json::parse(bytes.substr(marker_offset));
        for (const auto& m : trailer)
            rec.markers.push_back({m.at("t").get<double>(), m.at("label").get<std::string>()});
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, std::string("recording markers: ") + e.what());
    }
    require(std::is_sorted(rec.markers.begin(), rec.markers.end(),
                [](const Marker& a, const Marker& b) { return a.timestamp < b.timestamp; }),
        ErrorCode::kParse, "markers are not sorted");
    return rec;
}

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::kIo, "short write to " + path.string());
}

} // namespace

void save_recording(const Recording& recording, const std::filesystem::path& path)
{
    write_file(path, encode_recording(recording));
}

Recording load_recording(const std::filesystem::path& path)
{
    try {
        return decode_recording(read_file(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kIo)
            throw;
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

ClassMapping load_mapping(const std::filesystem::path& path)
{
    try {
        const json j = json::parse(read_file(path));
        require(j.is_object(), ErrorCode::kParse, "mapping file must be a JSON object");
        ClassMapping mapping;
        for (const auto& [label, cls] : j.items())
            mapping[label] = cls.get<std::string>();
        require(!mapping.empty(), ErrorCode::kParse, "mapping file is empty");
        return mapping;
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, path.string() + ": " + e.what());
    }
}

void save_mapping(const ClassMapping& mapping, const std::filesystem::path& path)
{
    write_file(path, json(mapping).dump(2) + "\n");
}

} // namespace mibci::signal

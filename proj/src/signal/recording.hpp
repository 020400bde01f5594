#pragma once

#include "signal/types.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace mibci::signal {

inline constexpr int kRecordingFormatVersion = 1;

// On-disk layout: one UTF-8 JSON header line, then little-endian float32
// samples frame by frame (all channels of frame 0, then frame 1, ...), then a
// JSON marker trailer starting at the byte offset stored in the header.
std::string encode_recording(const Recording& recording);
Recording decode_recording(const std::string& bytes);

void save_recording(const Recording& recording, const std::filesystem::path& path);
Recording load_recording(const std::filesystem::path& path);

/// Marker label -> class name.
using ClassMapping = std::map<std::string, std::string>;

ClassMapping load_mapping(const std::filesystem::path& path);
void save_mapping(const ClassMapping& mapping, const std::filesystem::path& path);

} // namespace mibci::signal

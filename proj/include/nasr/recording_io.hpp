#pragma once

#include <filesystem>

#include "nasr/preprocess.hpp"

namespace nasr {

// On-disk recording: a JSON header
//   {"fs": 100, "channels": [...], "samples": T, "dtype": "f32le", "layout": "channel_major"}
// next to a raw binary of C*T little-endian float32 values, channel-major.
// The binary lives beside the header with the extension replaced by ".bin".

std::filesystem::path recording_binary_path(const std::filesystem::path& header);

void write_recording(const EegRecording& rec, const std::filesystem::path& header);
EegRecording read_recording(const std::filesystem::path& header);

}  // namespace nasr

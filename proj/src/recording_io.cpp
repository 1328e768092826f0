#include "nasr/recording_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nasr/error.hpp"

namespace nasr {

namespace {

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

}  // namespace

std::filesystem::path recording_binary_path(const std::filesystem::path& header) {
    auto p = header;
    p.replace_extension(".bin");
    return p;
}

void write_recording(const EegRecording& rec, const std::filesystem::path& header) {
    rec.validate();
    nlohmann::json h;
    h["fs"] = rec.fs;
    h["channels"] = rec.channel_labels;
    h["samples"] = rec.samples();
    h["dtype"] = "f32le";
    h["layout"] = "channel_major";

    std::ofstream hs(header);
    if (!hs) throw IoError("cannot write recording header: " + header.string());
    hs << h.dump(2) << '\n';

    const auto bin = recording_binary_path(header);
    std::ofstream bs(bin, std::ios::binary);
    if (!bs) throw IoError("cannot write recording binary: " + bin.string());
    std::vector<std::uint32_t> words(rec.data.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        const float f = static_cast<float>(rec.data.values()[i]);
        words[i] = to_le(std::bit_cast<std::uint32_t>(f));
    }
    bs.write(reinterpret_cast<const char*>(words.data()),
             static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!bs) throw IoError("short write on " + bin.string());
}

EegRecording read_recording(const std::filesystem::path& header) {
    std::ifstream hs(header);
    if (!hs) throw IoError("cannot open recording header: " + header.string());
    nlohmann::json h;
    try {
        hs >> h;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed recording header " + header.string() + ": " + e.what());
    }
    if (h.value("dtype", "") != "f32le" || h.value("layout", "") != "channel_major")
        throw ParseError("unsupported recording encoding in " + header.string());

    EegRecording rec;
    try {
        rec.fs = h.at("fs").get<double>();
        rec.channel_labels = h.at("channels").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("recording header " + header.string() + ": " + e.what());
    }
    const auto t = h.at("samples").get<std::size_t>();
    const std::size_t c = rec.channel_labels.size();

    const auto bin = recording_binary_path(header);
    std::ifstream bs(bin, std::ios::binary);
    if (!bs) throw IoError("cannot open recording binary: " + bin.string());
    std::vector<std::uint32_t> words(c * t);
    bs.read(reinterpret_cast<char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (bs.gcount() != static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)))
        throw ParseError("recording binary " + bin.string() + " is shorter than C*T floats");

    rec.data = Matrix(c, t);
    for (std::size_t i = 0; i < words.size(); ++i)
        rec.data.values()[i] = static_cast<double>(std::bit_cast<float>(to_le(words[i])));
    rec.validate();
    return rec;
}

}  // namespace nasr

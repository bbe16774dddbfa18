#pragma once

// RIFF/WAVE PCM16 reader and writer. Reading keeps channel 0 only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "despawn/error.hpp"

namespace despawn::pipeline {

struct WavData {
    std::vector<double> samples;  // channel 0, in [-1, 1)
    std::uint32_t sample_rate = 0;
    std::uint16_t channels = 0;
};

namespace detail {

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError("truncated file while reading " + std::string(what), pos_);
        }
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }

    std::string tag(const char* what) {
        need(4, what);
        std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
        pos_ += 4;
        return t;
    }

    void skip(std::size_t n) { pos_ = std::min(bytes_.size(), pos_ + n); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace detail

inline WavData parse_wav(std::span<const std::uint8_t> bytes) {
    detail::ByteReader in(bytes);
    if (in.tag("RIFF tag") != "RIFF") throw FormatError("missing RIFF tag", 0);
    in.u32("RIFF size");
    if (in.tag("WAVE tag") != "WAVE") throw FormatError("not a WAVE file", 8);

    WavData out;
    std::uint16_t block_align = 0;
    bool have_fmt = false;
    while (in.remaining() >= 8) {
        const std::size_t chunk_at = in.offset();
        const std::string id = in.tag("chunk id");
        const std::uint32_t size = in.u32("chunk size");
        const std::size_t body = in.offset();
        if (id == "fmt ") {
            if (size < 16) throw FormatError("fmt chunk shorter than 16 bytes", chunk_at);
            std::uint16_t format = in.u16("audio format");
            out.channels = in.u16("channel count");
            out.sample_rate = in.u32("sample rate");
            in.u32("byte rate");
            block_align = in.u16("block align");
            const std::uint16_t bits = in.u16("bits per sample");
            if (format == 0xFFFE && size >= 40) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID starts with the codec
                in.u16("extension size");
                in.u16("valid bits");
                in.u32("channel mask");
                format = in.u16("subformat");
            }
            if (format != 1) throw FormatError("unsupported codec " + std::to_string(format) + " (PCM only)", body);
            if (bits != 16) throw FormatError("unsupported bit depth " + std::to_string(bits), body + 14);
            if (out.channels == 0) throw FormatError("zero channels", body + 2);
            if (out.sample_rate == 0) throw FormatError("zero sample rate", body + 4);
            if (block_align != 2u * out.channels) throw FormatError("block align does not match channels", body + 12);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError("data chunk before fmt chunk", chunk_at);
            in.need(size, "sample data");
            const std::size_t frames = size / block_align;
            out.samples.resize(frames);
            for (std::size_t f = 0; f < frames; ++f) {
                const std::size_t at = body + f * block_align;
                const auto raw = static_cast<std::int16_t>(bytes[at] | (bytes[at + 1] << 8));
                out.samples[f] = static_cast<double>(raw) / 32768.0;
            }
            return out;
        }
        in.skip(body + size + (size & 1u) - in.offset());
    }
    throw FormatError(have_fmt ? "no data chunk" : "no fmt chunk", in.offset());
}

inline WavData read_wav(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorKind::Io, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    return parse_wav(bytes);
}

/// Round to the nearest 16-bit code, saturating outside [-1, 32767/32768].
inline std::int16_t to_pcm16(double x) noexcept {
    const double scaled = std::round(x * 32768.0);
    return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::vector<std::uint8_t> encode_wav(std::span<const double> samples, std::uint32_t sample_rate) {
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    detail::put_tag(out, "RIFF");
    detail::put_u32(out, 36 + data_bytes);
    detail::put_tag(out, "WAVE");
    detail::put_tag(out, "fmt ");
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);
    detail::put_u16(out, 1);
    detail::put_u32(out, sample_rate);
    detail::put_u32(out, sample_rate * 2);
    detail::put_u16(out, 2);
    detail::put_u16(out, 16);
    detail::put_tag(out, "data");
    detail::put_u32(out, data_bytes);
    for (double x : samples) detail::put_u16(out, static_cast<std::uint16_t>(to_pcm16(x)));
    return out;
}

inline void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate) {
    if (sample_rate == 0) throw Error(ErrorKind::Configuration, "sample rate must be positive");
    const auto bytes = encode_wav(samples, sample_rate);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::Io, "cannot write " + path.string());
    file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace despawn::pipeline

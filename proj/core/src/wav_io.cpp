#include "promptcodec/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "promptcodec/errors.hpp"

namespace promptcodec::io {

namespace {

uint16_t rd_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t rd_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void wr_u16(std::ofstream& f, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}
void wr_u32(std::ofstream& f, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>((v >> 8) & 0xff),
                          static_cast<uint8_t>((v >> 16) & 0xff),
                          static_cast<uint8_t>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Waveform read_wav(const std::string& path, int expected_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open WAV file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw InvalidInput("not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t len = rd_u32(bytes.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + len > bytes.size()) throw CorruptStream("truncated WAV chunk: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw CorruptStream("short fmt chunk: " + path);
            format = rd_u16(bytes.data() + body);
            channels = rd_u16(bytes.data() + body + 2);
            rate = rd_u32(bytes.data() + body + 4);
            bits = rd_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = len;
        }
        pos = body + len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data_off == 0) throw CorruptStream("missing fmt/data chunk: " + path);
    if (channels != 1)
        throw InvalidInput("multi-channel WAV rejected (" + std::to_string(channels) +
                           " channels): " + path);
    if (expected_rate > 0 && static_cast<int>(rate) != expected_rate)
        throw InvalidInput("sample-rate mismatch: file " + std::to_string(rate) + " Hz, expected " +
                           std::to_string(expected_rate) + " Hz: " + path);

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        const size_t n = data_len / 2;
        w.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            int16_t v;
            std::memcpy(&v, bytes.data() + data_off + 2 * i, 2);
            w.samples[i] = static_cast<double>(v) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        const size_t n = data_len / 4;
        w.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            float v;
            std::memcpy(&v, bytes.data() + data_off + 4 * i, 4);
            w.samples[i] = static_cast<double>(v);
        }
    } else {
        throw InvalidInput("unsupported WAV format (want 16-bit PCM or 32-bit float): " + path);
    }
    if (w.samples.empty()) throw InvalidInput("empty WAV data: " + path);
    return w;
}

int read_wav_sample_rate(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open WAV file: " + path);
    std::vector<uint8_t> head(4096);
    f.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<size_t>(f.gcount()));
    if (head.size() < 12 || std::memcmp(head.data(), "RIFF", 4) != 0 ||
        std::memcmp(head.data() + 8, "WAVE", 4) != 0)
        throw InvalidInput("not a RIFF/WAVE file: " + path);
    size_t pos = 12;
    while (pos + 8 <= head.size()) {
        const uint32_t len = rd_u32(head.data() + pos + 4);
        if (std::memcmp(head.data() + pos, "fmt ", 4) == 0) {
            if (pos + 8 + 16 > head.size()) throw CorruptStream("short fmt chunk: " + path);
            const uint16_t channels = rd_u16(head.data() + pos + 8 + 2);
            if (channels != 1)
                throw InvalidInput("multi-channel WAV rejected (" + std::to_string(channels) +
                                   " channels): " + path);
            return static_cast<int>(rd_u32(head.data() + pos + 8 + 4));
        }
        pos += 8 + len + (len & 1);
    }
    throw CorruptStream("missing fmt chunk: " + path);
}

void write_wav(const std::string& path, const Waveform& w) {
    if (w.sample_rate <= 0) throw InvalidInput("write_wav: bad sample rate");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create WAV file: " + path);
    const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
    f.write("RIFF", 4);
    wr_u32(f, 36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, 1);  // PCM
    wr_u16(f, 1);  // mono
    wr_u32(f, static_cast<uint32_t>(w.sample_rate));
    wr_u32(f, static_cast<uint32_t>(w.sample_rate) * 2);
    wr_u16(f, 2);
    wr_u16(f, 16);
    f.write("data", 4);
    wr_u32(f, data_len);
    for (double s : w.samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        const int16_t v = static_cast<int16_t>(std::lrint(c * 32767.0));
        const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff),
                              static_cast<uint8_t>((v >> 8) & 0xff)};
        f.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!f) throw IoError("failed writing WAV file: " + path);
}

}  // namespace promptcodec::io

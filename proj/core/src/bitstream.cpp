#include "promptcodec/bitstream.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "promptcodec/errors.hpp"

namespace promptcodec::io {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'D', 'C'};
constexpr size_t kHeaderSize = 20;
// sanity cap on decoded index count so fuzzed headers cannot force huge
// allocations (b = 0 payloads carry no length information of their own)
constexpr uint64_t kMaxIndices = 1ull << 28;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

// MSB-first bit packing
struct BitWriter {
    std::vector<uint8_t>& out;
    uint8_t acc = 0;
    int used = 0;

    void put(uint32_t v, int bits) {
        for (int i = bits - 1; i >= 0; --i) {
            acc = static_cast<uint8_t>((acc << 1) | ((v >> i) & 1u));
            if (++used == 8) {
                out.push_back(acc);
                acc = 0;
                used = 0;
            }
        }
    }
    void finish() {
        if (used > 0) {
            out.push_back(static_cast<uint8_t>(acc << (8 - used)));
            acc = 0;
            used = 0;
        }
    }
};

struct BitReader {
    const uint8_t* data;
    size_t nbytes;
    size_t bit = 0;

    uint32_t get(int bits) {
        uint32_t v = 0;
        for (int i = 0; i < bits; ++i) {
            const size_t byte = bit >> 3;
            const int off = 7 - static_cast<int>(bit & 7);
            v = (v << 1) | ((data[byte] >> off) & 1u);
            ++bit;
        }
        return v;
    }
    bool padding_is_zero() const {
        size_t b = bit;
        while (b < nbytes * 8) {
            const size_t byte = b >> 3;
            const int off = 7 - static_cast<int>(b & 7);
            if ((data[byte] >> off) & 1u) return false;
            ++b;
        }
        return true;
    }
};

}  // namespace

int StreamHeader::bits_per_index() const {
    if (codebook_size <= 1) return 0;
    int b = 0;
    uint32_t v = codebook_size - 1u;
    while (v > 0) {
        ++b;
        v >>= 1;
    }
    return b;
}

uint16_t float_to_half(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    const uint32_t sign = (bits >> 16) & 0x8000u;
    const int32_t exp = static_cast<int32_t>((bits >> 23) & 0xff) - 127 + 15;
    uint32_t mant = bits & 0x7fffffu;
    if (((bits >> 23) & 0xff) == 0xff) {  // inf / nan
        return static_cast<uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0));
    }
    if (exp >= 31) return static_cast<uint16_t>(sign | 0x7c00u);  // overflow -> inf
    if (exp <= 0) {
        if (exp < -10) return static_cast<uint16_t>(sign);  // underflow -> zero
        // subnormal: shift with round-to-nearest-even
        mant |= 0x800000u;
        const int shift = 14 - exp;
        uint32_t half_mant = mant >> shift;
        const uint32_t rem = mant & ((1u << shift) - 1);
        const uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
        return static_cast<uint16_t>(sign | half_mant);
    }
    uint32_t half = sign | (static_cast<uint32_t>(exp) << 10) | (mant >> 13);
    const uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into exponent
    return static_cast<uint16_t>(half);
}

float half_to_float(uint16_t h) {
    const uint32_t sign = (static_cast<uint32_t>(h) & 0x8000u) << 16;
    const uint32_t exp = (h >> 10) & 0x1fu;
    uint32_t mant = h & 0x3ffu;
    uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            int e = -1;
            uint32_t m = mant;
            while (!(m & 0x400u)) {
                m <<= 1;
                ++e;
            }
            bits = sign | (static_cast<uint32_t>(127 - 15 - e) << 23) | ((m & 0x3ffu) << 13);
        }
    } else if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::vector<uint8_t> write_stream(const StreamHeader& header, const CodeIndices& indices,
                                  const PromptBlock* prompts) {
    if (header.groups < 1 || header.residuals < 1)
        throw InvalidInput("stream: groups/residuals must be >= 1");
    if (header.codebook_size < 1) throw InvalidInput("stream: codebook size must be >= 1");
    if (indices.frames != static_cast<int>(header.n_frames) || indices.n_q != header.n_q())
        throw InvalidInput("stream: header/indices disagree");
    if ((header.prompt_flag == 1) != (prompts != nullptr))
        throw InvalidInput("stream: prompt flag / prompt block disagree");

    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(header.version);
    put_u32(out, header.sample_rate);
    put_u16(out, header.hop);
    out.push_back(header.groups);
    out.push_back(header.residuals);
    put_u16(out, header.codebook_size);
    put_u32(out, header.n_frames);
    out.push_back(header.prompt_flag);

    if (prompts) {
        if (prompts->z_pc.size() != prompts->z_pv.size() || prompts->z_pc.empty())
            throw InvalidInput("stream: prompt vectors must be non-empty and equal-sized");
        if (prompts->z_pc.size() > 0xffff) throw InvalidInput("stream: prompt dimension too large");
        put_u16(out, static_cast<uint16_t>(prompts->z_pc.size()));
        for (double v : prompts->z_pc) put_u16(out, float_to_half(static_cast<float>(v)));
        for (double v : prompts->z_pv) put_u16(out, float_to_half(static_cast<float>(v)));
    }

    const int b = header.bits_per_index();
    BitWriter bw{out};
    for (int t = 0; t < indices.frames; ++t)
        for (int q = 0; q < indices.n_q; ++q) {
            const int idx = indices.at(t, q);
            if (idx < 0 || idx >= header.codebook_size)
                throw InvalidInput("stream: index out of range");
            if (b > 0) bw.put(static_cast<uint32_t>(idx), b);
        }
    bw.finish();
    return out;
}

Stream read_stream(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < kHeaderSize) throw CorruptStream("stream: shorter than header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptStream("stream: bad magic");
    Stream s;
    StreamHeader& h = s.header;
    h.version = bytes[4];
    if (h.version != 1) throw CorruptStream("stream: unsupported version");
    h.sample_rate = get_u32(bytes.data() + 5);
    h.hop = get_u16(bytes.data() + 9);
    h.groups = bytes[11];
    h.residuals = bytes[12];
    h.codebook_size = get_u16(bytes.data() + 13);
    h.n_frames = get_u32(bytes.data() + 15);
    h.prompt_flag = bytes[19];
    if (h.sample_rate == 0 || h.hop == 0) throw CorruptStream("stream: zero rate or hop");
    if (h.groups == 0 || h.residuals == 0) throw CorruptStream("stream: zero groups/residuals");
    if (h.codebook_size == 0) throw CorruptStream("stream: zero codebook size");
    if (h.prompt_flag > 1) throw CorruptStream("stream: bad prompt flag");

    size_t pos = kHeaderSize;
    if (h.prompt_flag == 1) {
        if (bytes.size() < pos + 2) throw CorruptStream("stream: truncated prompt block");
        const uint16_t d = get_u16(bytes.data() + pos);
        pos += 2;
        if (d == 0) throw CorruptStream("stream: zero prompt dimension");
        if (bytes.size() < pos + 4u * d) throw CorruptStream("stream: truncated prompt values");
        PromptBlock pb;
        pb.z_pc.resize(d);
        pb.z_pv.resize(d);
        for (int i = 0; i < d; ++i)
            pb.z_pc[i] = static_cast<double>(half_to_float(get_u16(bytes.data() + pos + 2u * i)));
        pos += 2u * d;
        for (int i = 0; i < d; ++i)
            pb.z_pv[i] = static_cast<double>(half_to_float(get_u16(bytes.data() + pos + 2u * i)));
        pos += 2u * d;
        s.prompts = std::move(pb);
    }

    const uint64_t count = static_cast<uint64_t>(h.n_frames) * h.n_q();
    if (count > kMaxIndices) throw CorruptStream("stream: implausible index count");
    const int b = h.bits_per_index();
    const uint64_t payload_bits = count * static_cast<uint64_t>(b);
    const uint64_t payload_bytes = (payload_bits + 7) / 8;
    if (bytes.size() != pos + payload_bytes)
        throw CorruptStream("stream: payload length mismatch (" +
                            std::to_string(bytes.size() - pos) + " bytes, expected " +
                            std::to_string(payload_bytes) + ")");

    s.indices.frames = static_cast<int>(h.n_frames);
    s.indices.n_q = h.n_q();
    s.indices.values.assign(count, 0);
    if (b > 0 && count > 0) {
        BitReader br{bytes.data() + pos, payload_bytes};
        for (uint64_t i = 0; i < count; ++i) {
            const uint32_t v = br.get(b);
            if (v >= h.codebook_size) throw CorruptStream("stream: index out of range");
            s.indices.values[i] = static_cast<int>(v);
        }
        if (!br.padding_is_zero()) throw CorruptStream("stream: nonzero padding bits");
    }
    return s;
}

}  // namespace promptcodec::io

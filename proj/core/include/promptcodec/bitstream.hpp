// Bit-exact compressed stream: 20-byte header, optional half-precision
// prompt block, then code indices packed MSB-first at ceil(log2 K) bits each
// (frame-major, group-major, residual-minor), final byte zero-padded.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "promptcodec/types.hpp"

namespace promptcodec::io {

struct StreamHeader {
    // magic "PCDC", version 1
    uint8_t version = 1;
    uint32_t sample_rate = 0;
    uint16_t hop = 0;       // total stride M
    uint8_t groups = 0;     // G
    uint8_t residuals = 0;  // R
    uint16_t codebook_size = 0;
    uint32_t n_frames = 0;
    uint8_t prompt_flag = 0;  // 0 = receiver-side prompt, 1 = embedded embeddings

    int n_q() const { return static_cast<int>(groups) * residuals; }
    int bits_per_index() const;  // ceil(log2 K); 0 when K == 1
};

struct PromptBlock {
    std::vector<double> z_pc;  // stored as float16
    std::vector<double> z_pv;
};

struct Stream {
    StreamHeader header;
    CodeIndices indices;
    std::optional<PromptBlock> prompts;
};

std::vector<uint8_t> write_stream(const StreamHeader& header, const CodeIndices& indices,
                                  const PromptBlock* prompts = nullptr);

// Strict inverse of write_stream; throws CorruptStream on any inconsistency.
Stream read_stream(const std::vector<uint8_t>& bytes);

// IEEE 754 half-precision conversions (round to nearest even).
uint16_t float_to_half(float v);
float half_to_float(uint16_t h);

}  // namespace promptcodec::io

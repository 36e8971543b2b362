// Model checkpoint container: magic "PCKP", version byte, a UTF-8 key=value
// config block (u32 length prefix, keys sorted), then named float32 tensors
// (u16 name length + name, u8 rank, u32 dims, float32 LE data).
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace promptcodec::io {

using KeyValues = std::map<std::string, std::string>;

struct NamedTensorF32 {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct CheckpointData {
    KeyValues config;
    std::vector<NamedTensorF32> tensors;
};

std::vector<uint8_t> serialize_checkpoint(const CheckpointData& ckpt);
CheckpointData deserialize_checkpoint(const std::vector<uint8_t>& bytes);

void write_checkpoint_file(const std::string& path, const CheckpointData& ckpt);
CheckpointData read_checkpoint_file(const std::string& path);

// key=value line parsing/serialization ('#' starts a comment line).
KeyValues parse_key_values(const std::string& text);
std::string serialize_key_values(const KeyValues& kv);
KeyValues read_key_values_file(const std::string& path);

// typed access with defaults; malformed values raise InvalidConfig
int kv_int(const KeyValues& kv, const std::string& key, int fallback);
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::vector<int> kv_int_list(const KeyValues& kv, const std::string& key,
                             const std::vector<int>& fallback);

std::string format_double(double v);  // shortest round-trip-safe form
std::string format_int_list(const std::vector<int>& v);

}  // namespace promptcodec::io

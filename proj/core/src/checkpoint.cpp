#include "promptcodec/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "promptcodec/errors.hpp"

namespace promptcodec::io {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};

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

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const CheckpointData& ckpt) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(1);  // version
    const std::string cfg = serialize_key_values(ckpt.config);
    put_u32(out, static_cast<uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const NamedTensorF32& t : ckpt.tensors) {
        if (t.name.size() > 0xffff) throw InvalidInput("checkpoint: tensor name too long");
        put_u16(out, static_cast<uint16_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        if (t.shape.size() > 0xff) throw InvalidInput("checkpoint: tensor rank too large");
        out.push_back(static_cast<uint8_t>(t.shape.size()));
        uint64_t n = 1;
        for (int d : t.shape) {
            if (d < 0) throw InvalidInput("checkpoint: negative dimension");
            put_u32(out, static_cast<uint32_t>(d));
            n *= static_cast<uint64_t>(d);
        }
        if (n != t.data.size()) throw InvalidInput("checkpoint: tensor size mismatch");
        const size_t off = out.size();
        out.resize(off + 4 * t.data.size());
        std::memcpy(out.data() + off, t.data.data(), 4 * t.data.size());
    }
    return out;
}

CheckpointData deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
    size_t pos = 0;
    auto need = [&](size_t n, const char* what) {
        if (pos + n > bytes.size())
            throw CorruptStream(std::string("checkpoint: truncated ") + what);
    };
    need(5, "header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptStream("checkpoint: bad magic");
    pos = 4;
    const uint8_t version = bytes[pos++];
    if (version != 1)
        throw CorruptStream("checkpoint: unsupported version " + std::to_string(version));
    need(4, "config length");
    const uint32_t cfg_len = get_u32(bytes.data() + pos);
    pos += 4;
    need(cfg_len, "config block");
    CheckpointData ckpt;
    ckpt.config =
        parse_key_values(std::string(reinterpret_cast<const char*>(bytes.data() + pos), cfg_len));
    pos += cfg_len;
    need(4, "tensor count");
    const uint32_t count = get_u32(bytes.data() + pos);
    pos += 4;
    ckpt.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        need(2, "tensor name length");
        const uint16_t name_len = get_u16(bytes.data() + pos);
        pos += 2;
        need(name_len, "tensor name");
        NamedTensorF32 t;
        t.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        need(1, "tensor rank");
        const uint8_t rank = bytes[pos++];
        uint64_t n = 1;
        for (int d = 0; d < rank; ++d) {
            need(4, "tensor dimension");
            const uint32_t dim = get_u32(bytes.data() + pos);
            pos += 4;
            t.shape.push_back(static_cast<int>(dim));
            n *= dim;
        }
        if (n > (1ull << 32)) throw CorruptStream("checkpoint: implausible tensor size");
        need(4 * n, "tensor data");
        t.data.resize(n);
        std::memcpy(t.data.data(), bytes.data() + pos, 4 * n);
        pos += 4 * n;
        ckpt.tensors.push_back(std::move(t));
    }
    if (pos != bytes.size()) throw CorruptStream("checkpoint: trailing bytes");
    return ckpt;
}

void write_checkpoint_file(const std::string& path, const CheckpointData& ckpt) {
    const std::vector<uint8_t> bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create checkpoint file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing checkpoint file: " + path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw InvalidConfig("config line without '=': " + line);
        std::string key = line.substr(start, eq - start);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        size_t vs = value.find_first_not_of(" \t");
        value = vs == std::string::npos ? "" : value.substr(vs);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
        if (key.empty()) throw InvalidConfig("config line with empty key: " + line);
        kv[key] = value;
    }
    return kv;
}

std::string serialize_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

KeyValues read_key_values_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_key_values(ss.str());
}

int kv_int(const KeyValues& kv, const std::string& key, int fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        const int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("bad integer for key '" + key + "': " + it->second);
    }
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("bad number for key '" + key + "': " + it->second);
    }
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InvalidConfig("bad boolean for key '" + key + "': " + v);
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::vector<int> kv_int_list(const KeyValues& kv, const std::string& key,
                             const std::vector<int>& fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw InvalidConfig("bad integer list for key '" + key + "': " + it->second);
        }
    }
    if (out.empty()) throw InvalidConfig("empty integer list for key '" + key + "'");
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace promptcodec::io

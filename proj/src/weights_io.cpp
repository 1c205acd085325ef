#include "tmvit/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "tmvit/errors.hpp"

namespace tmvit {

namespace {

constexpr std::size_t kMagicLen = 8;

void append_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void append_f32_le(std::string& out, float f) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

struct HeaderEntry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset = 0;
    std::uint64_t byte_len = 0;
};

std::string shape_token(const std::vector<int>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s;
}

HeaderEntry parse_header_line(const std::string& line) {
    std::istringstream is(line);
    HeaderEntry e;
    std::string dtype, shape_str, offset_str;
    if (!(is >> e.name >> dtype >> shape_str >> offset_str) || !(is >> std::ws).eof())
        throw WeightFileError(WeightFileError::Kind::BadHeader,
                              "malformed weight header line: " + line);
    if (dtype != "f32")
        throw WeightFileError(WeightFileError::Kind::BadHeader,
                              "unsupported dtype '" + dtype + "' for tensor " + e.name);
    if (offset_str.empty() || offset_str[0] != '@')
        throw WeightFileError(WeightFileError::Kind::BadHeader,
                              "missing @offset for tensor " + e.name);

    std::uint64_t numel = 1;
    std::size_t pos = 0;
    while (pos < shape_str.size()) {
        std::size_t next = shape_str.find('x', pos);
        std::string dim_str = shape_str.substr(pos, next == std::string::npos ? next : next - pos);
        try {
            int d = std::stoi(dim_str);
            if (d <= 0) throw std::invalid_argument("non-positive");
            e.shape.push_back(d);
            numel *= static_cast<std::uint64_t>(d);
        } catch (const std::exception&) {
            throw WeightFileError(WeightFileError::Kind::BadHeader,
                                  "bad shape '" + shape_str + "' for tensor " + e.name);
        }
        pos = next == std::string::npos ? shape_str.size() : next + 1;
    }
    if (e.shape.empty())
        throw WeightFileError(WeightFileError::Kind::BadHeader, "empty shape for tensor " + e.name);

    try {
        e.offset = std::stoull(offset_str.substr(1));
    } catch (const std::exception&) {
        throw WeightFileError(WeightFileError::Kind::BadHeader,
                              "bad offset '" + offset_str + "' for tensor " + e.name);
    }
    e.byte_len = numel * 4;
    return e;
}

} // namespace

void save_weights(const ModelParams& params, const std::string& path) {
    auto tensors = named_tensors(params);

    std::string header;
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        header += name;
        header += " f32 ";
        header += shape_token(t->shape());
        header += " @" + std::to_string(offset) + "\n";
        offset += static_cast<std::uint64_t>(t->size()) * 4;
    }

    std::string blob;
    blob.reserve(kMagicLen + 8 + header.size() + offset);
    blob.append(kWeightMagic, kMagicLen);
    append_u64_le(blob, header.size());
    blob += header;
    for (const auto& [name, t] : tensors) {
        (void)name;
        if constexpr (std::endian::native == std::endian::little) {
            blob.append(reinterpret_cast<const char*>(t->data()), t->size() * 4);
        } else {
            for (std::size_t i = 0; i < t->size(); ++i) append_f32_le(blob, (*t)[i]);
        }
    }

    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

std::map<std::string, Tensor> load_tensor_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

    if (blob.size() < kMagicLen + 8 || std::memcmp(blob.data(), kWeightMagic, kMagicLen) != 0)
        throw WeightFileError(WeightFileError::Kind::BadMagic,
                              path + " is not a TMWT0001 weight file");
    std::uint64_t header_len = read_u64_le(bytes + kMagicLen);
    if (kMagicLen + 8 + header_len > blob.size())
        throw WeightFileError(WeightFileError::Kind::Truncated,
                              path + " ends inside the header");

    std::vector<HeaderEntry> entries;
    {
        std::istringstream hs(blob.substr(kMagicLen + 8, header_len));
        std::string line;
        while (std::getline(hs, line)) {
            if (line.empty()) continue;
            entries.push_back(parse_header_line(line));
        }
    }

    for (std::size_t i = 0; i < entries.size(); ++i)
        for (std::size_t j = i + 1; j < entries.size(); ++j)
            if (entries[i].name == entries[j].name)
                throw WeightFileError(WeightFileError::Kind::DuplicateTensor,
                                      "tensor " + entries[i].name + " appears twice in " + path);

    // Offsets must ascend and tile the payload with no gap or overlap.
    std::uint64_t expected = 0;
    for (const auto& e : entries) {
        if (e.offset != expected)
            throw WeightFileError(WeightFileError::Kind::BadLayout,
                                  "tensor " + e.name + " at offset " + std::to_string(e.offset) +
                                      ", expected " + std::to_string(expected));
        expected += e.byte_len;
    }
    const std::size_t payload_begin = kMagicLen + 8 + header_len;
    const std::uint64_t payload_size = blob.size() - payload_begin;
    if (payload_size < expected)
        throw WeightFileError(WeightFileError::Kind::Truncated,
                              path + " payload is " + std::to_string(payload_size) +
                                  " bytes, header promises " + std::to_string(expected));
    if (payload_size > expected)
        throw WeightFileError(WeightFileError::Kind::BadLayout,
                              path + " has " + std::to_string(payload_size - expected) +
                                  " trailing payload bytes");

    std::map<std::string, Tensor> out;
    for (const auto& e : entries) {
        std::vector<float> values(e.byte_len / 4);
        const unsigned char* src = bytes + payload_begin + e.offset;
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(values.data(), src, e.byte_len);
        } else {
            for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_f32_le(src + 4 * i);
        }
        out.emplace(e.name, Tensor(e.shape, std::move(values)));
    }
    return out;
}

ModelParams load_weights(const std::string& path, const ModelConfig& cfg) {
    auto tensors = load_tensor_map(path);
    ModelParams p = allocate_params(cfg);
    for (auto& [name, slot] : named_tensors_mut(p)) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw WeightFileError(WeightFileError::Kind::MissingTensor,
                                  path + " lacks required tensor " + name);
        if (it->second.shape() != slot->shape())
            throw WeightFileError(WeightFileError::Kind::ShapeMismatch,
                                  "tensor " + name + " has shape " + it->second.shape_str() +
                                      ", config requires " + slot->shape_str());
        *slot = std::move(it->second);
    }
    return p;
}

} // namespace tmvit

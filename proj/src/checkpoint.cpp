#include "gsnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gsnet {

namespace {

constexpr char kMagic[8] = {'G', 'S', 'N', 'E', 'T', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return v;
}

const char* dtype_str(DType d) { return d == DType::F32 ? "f32" : "f64"; }

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

template <typename Src>
void append_payload(std::string& payload, std::span<const Src> values, DType dtype) {
    for (Src v : values) {
        if (dtype == DType::F32) {
            const float f = static_cast<float>(v);
            payload.append(reinterpret_cast<const char*>(&f), sizeof f);
        } else {
            const double d = static_cast<double>(v);
            payload.append(reinterpret_cast<const char*>(&d), sizeof d);
        }
    }
}

void write_file(const std::filesystem::path& path, const nlohmann::json& metadata, const nlohmann::json& entries,
                const std::string& payload) {
    nlohmann::json header = {{"format", "gsnet-checkpoint"}, {"version", 1}, {"metadata", metadata},
                             {"tensors", entries}};
    const std::string text = header.dump();
    std::string blob(kMagic, sizeof kMagic);
    put_u64(blob, text.size());
    blob += text;
    blob += payload;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    }
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) {
        throw CheckpointError("failed writing checkpoint: " + path.string());
    }
}

}  // namespace

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store,
                      const nlohmann::json& metadata, DType dtype) {
    nlohmann::json entries = nlohmann::json::array();
    std::string payload;
    for (const auto* p : store.all()) {
        const std::size_t start = payload.size();
        append_payload<T>(payload, p->value().values(), dtype);
        entries.push_back({{"name", p->name},
                           {"dtype", dtype_str(dtype)},
                           {"shape", p->value().shape()},
                           {"offset", start},
                           {"nbytes", payload.size() - start}});
    }
    write_file(path, metadata, entries, payload);
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json entries = nlohmann::json::array();
    std::string payload;
    for (const auto& [name, tensor] : ckpt.tensors) {
        auto it = ckpt.dtypes.find(name);
        const DType dtype = it == ckpt.dtypes.end() ? DType::F32 : it->second;
        const std::size_t start = payload.size();
        append_payload<double>(payload, tensor.values(), dtype);
        entries.push_back({{"name", name},
                           {"dtype", dtype_str(dtype)},
                           {"shape", tensor.shape()},
                           {"offset", start},
                           {"nbytes", payload.size() - start}});
    }
    write_file(path, ckpt.metadata, entries, payload);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint: " + path.string());
    }
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError("not a gsnet checkpoint: " + path.string());
    }
    const std::uint64_t header_len = get_u64(blob.data() + 8);
    if (header_len > blob.size() - 16) {
        throw CheckpointError("truncated checkpoint header: " + path.string());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(16, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    const std::size_t payload_start = 16 + header_len;
    const std::size_t payload_len = blob.size() - payload_start;

    Checkpoint ckpt;
    if (header.contains("metadata")) {
        ckpt.metadata = header["metadata"];
    }
    try {
        for (const auto& e : header.at("tensors")) {
            const auto name = e.at("name").get<std::string>();
            const auto dtype_s = e.at("dtype").get<std::string>();
            if (dtype_s != "f32" && dtype_s != "f64") {
                throw CheckpointError("unsupported dtype '" + dtype_s + "' for " + name);
            }
            const DType dtype = dtype_s == "f32" ? DType::F32 : DType::F64;
            const Shape shape = e.at("shape").get<Shape>();
            const auto offset = e.at("offset").get<std::size_t>();
            const auto nbytes = e.at("nbytes").get<std::size_t>();
            const auto count = static_cast<std::size_t>(numel(shape));
            if (nbytes != count * dtype_size(dtype) || offset > payload_len || nbytes > payload_len - offset) {
                throw CheckpointError("inconsistent payload extent for " + name);
            }
            std::vector<double> values(count);
            const char* src = blob.data() + payload_start + offset;
            for (std::size_t i = 0; i < count; ++i) {
                if (dtype == DType::F32) {
                    float f;
                    std::memcpy(&f, src + 4 * i, 4);
                    values[i] = f;
                } else {
                    std::memcpy(&values[i], src + 8 * i, 8);
                }
            }
            ckpt.tensors.emplace(name, Tensor<double>(shape, std::move(values)));
            ckpt.dtypes.emplace(name, dtype);
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    return ckpt;
}

template <typename T>
std::vector<std::string> load_parameters(const Checkpoint& ckpt, ParameterStore<T>& store) {
    // Validate everything before touching the store.
    for (const auto& [name, tensor] : ckpt.tensors) {
        const auto* p = store.find(name);
        if (!p) {
            throw CheckpointError("checkpoint tensor '" + name + "' has no matching parameter");
        }
        if (p->value().shape() != tensor.shape()) {
            throw CheckpointError("shape mismatch for '" + name + "': checkpoint " + shape_str(tensor.shape()) +
                                  " vs model " + shape_str(p->value().shape()));
        }
    }
    std::vector<std::string> loaded;
    for (const auto& [name, tensor] : ckpt.tensors) {
        auto& dst = store.at(name).mutable_value();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<T>(tensor[i]);
        }
        loaded.push_back(name);
    }
    return loaded;
}

template void write_checkpoint(const std::filesystem::path&, const ParameterStore<float>&, const nlohmann::json&,
                               DType);
template void write_checkpoint(const std::filesystem::path&, const ParameterStore<double>&, const nlohmann::json&,
                               DType);
template std::vector<std::string> load_parameters(const Checkpoint&, ParameterStore<float>&);
template std::vector<std::string> load_parameters(const Checkpoint&, ParameterStore<double>&);

}  // namespace gsnet

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsnet/params.hpp"

namespace gsnet {

/// On-disk layout (all integers little-endian):
///
///   offset 0   8 bytes   magic "GSNETCK1"
///   offset 8   u64       header length L in bytes
///   offset 16  L bytes   UTF-8 JSON header
///   offset 16+L          payload: raw tensor data, back to back
///
/// Header: {"format": "gsnet-checkpoint", "version": 1, "metadata": {...},
///          "tensors": [{"name", "dtype": "f32"|"f64", "shape": [..],
///                       "offset", "nbytes"}]}
/// where "offset" counts from the first payload byte. Tensors are written in
/// name order; each payload is the row-major data in the stated dtype.
enum class DType { F32, F64 };

struct Checkpoint {
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, Tensor<double>> tensors;
    std::map<std::string, DType> dtypes;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store,
                      const nlohmann::json& metadata, DType dtype = DType::F32);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `ckpt` into the matching parameter. Partial sets
/// are fine; unknown names and shape mismatches are errors. Returns the names
/// that were loaded.
template <typename T>
std::vector<std::string> load_parameters(const Checkpoint& ckpt, ParameterStore<T>& store);

}  // namespace gsnet

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gsnet/tensor.hpp"

namespace gsnet {

/// Prompt pattern with exactly one "{class}" placeholder.
class PromptTemplate {
public:
    static constexpr const char* kPlaceholder = "{class}";
    static constexpr const char* kDefault = "A photo of a {class}";

    PromptTemplate() : PromptTemplate(kDefault) {}
    explicit PromptTemplate(std::string pattern);

    const std::string& pattern() const { return pattern_; }
    std::string apply(const std::string& class_name) const;

private:
    std::string pattern_;
};

/// Ordered class names and their N x D query embeddings.
struct QuerySet {
    std::vector<std::string> names;
    Tensor<double> embeddings;  // N x D, row i belongs to names[i]
    std::string provider_id;

    std::int64_t size() const { return static_cast<std::int64_t>(names.size()); }
    std::int64_t dim() const { return embeddings.dim(1); }
    /// Row i of the result is row perm[i] of this set.
    QuerySet permuted(const std::vector<std::size_t>& perm) const;
    /// Validates the QuerySet invariants; throws ContractError.
    void validate() const;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    /// `prompt` is the templated text; file-backed providers key on the raw
    /// class name instead.
    virtual std::vector<double> embed(const std::string& class_name, const std::string& prompt,
                                      std::int64_t dim) const = 0;
};

/// Unit-norm pseudo-random vector determined by (prompt, dim, seed).
std::vector<double> hash_embedding(const std::string& prompt, std::int64_t dim, std::uint64_t seed);

class HashProvider final : public EmbeddingProvider {
public:
    explicit HashProvider(std::uint64_t seed = 0) : seed_(seed) {}
    std::string id() const override { return "hash:" + std::to_string(seed_); }
    std::vector<double> embed(const std::string& class_name, const std::string& prompt,
                              std::int64_t dim) const override;

private:
    std::uint64_t seed_;
};

/// Reads {"dim": int, "vectors": {name: [floats]}}.
class FileProvider final : public EmbeddingProvider {
public:
    explicit FileProvider(const std::filesystem::path& path);
    FileProvider(std::int64_t dim, std::map<std::string, std::vector<double>> vectors, std::string source = "memory");

    std::string id() const override { return "file:" + source_; }
    std::vector<double> embed(const std::string& class_name, const std::string& prompt,
                              std::int64_t dim) const override;
    std::int64_t dim() const { return dim_; }

private:
    std::int64_t dim_ = 0;
    std::map<std::string, std::vector<double>> vectors_;
    std::string source_;
};

QuerySet embed_queries(const std::vector<std::string>& names, const EmbeddingProvider& provider,
                       const PromptTemplate& prompt, std::int64_t dim);

}  // namespace gsnet

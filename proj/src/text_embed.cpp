#include "gsnet/text_embed.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "gsnet/params.hpp"

namespace gsnet {

PromptTemplate::PromptTemplate(std::string pattern) : pattern_(std::move(pattern)) {
    const std::string ph = kPlaceholder;
    const auto first = pattern_.find(ph);
    if (first == std::string::npos || pattern_.find(ph, first + 1) != std::string::npos) {
        throw ContractError("prompt template must contain exactly one {class} placeholder: '" + pattern_ + "'");
    }
}

std::string PromptTemplate::apply(const std::string& class_name) const {
    std::string out = pattern_;
    out.replace(out.find(kPlaceholder), std::string(kPlaceholder).size(), class_name);
    return out;
}

QuerySet QuerySet::permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != names.size()) {
        throw ContractError("permutation length does not match query count");
    }
    QuerySet out;
    out.provider_id = provider_id;
    const std::int64_t d = dim();
    out.embeddings = Tensor<double>({size(), d});
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out.names.push_back(names.at(perm[i]));
        for (std::int64_t j = 0; j < d; ++j) {
            out.embeddings[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
                embeddings[perm[i] * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
        }
    }
    return out;
}

void QuerySet::validate() const {
    if (names.empty()) {
        throw ContractError("query set is empty");
    }
    if (embeddings.rank() != 2 || embeddings.dim(0) != size()) {
        throw ContractError("query embeddings must be N x D with N = " + std::to_string(size()));
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) {
            throw ContractError("duplicate query name: " + n);
        }
    }
    const auto d = static_cast<std::size_t>(dim());
    for (std::size_t r = 0; r < names.size(); ++r) {
        double ss = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = embeddings[r * d + j];
            if (!std::isfinite(v)) {
                throw ContractError("non-finite embedding for " + names[r]);
            }
            ss += v * v;
        }
        if (ss == 0) {
            throw ContractError("zero embedding for " + names[r]);
        }
    }
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

std::vector<double> hash_embedding(const std::string& prompt, std::int64_t dim, std::uint64_t seed) {
    if (dim < 8) {
        throw ContractError("hash embedding dimension must be >= 8, got " + std::to_string(dim));
    }
    Rng rng(splitmix(fnv1a(prompt) ^ splitmix(seed) ^ splitmix(static_cast<std::uint64_t>(dim) << 32)));
    std::vector<double> v(static_cast<std::size_t>(dim));
    double ss = 0;
    for (auto& x : v) {
        x = rng.normal();
        ss += x * x;
    }
    const double n = std::sqrt(ss);
    for (auto& x : v) {
        x /= n;
    }
    return v;
}

std::vector<double> HashProvider::embed(const std::string&, const std::string& prompt, std::int64_t dim) const {
    return hash_embedding(prompt, dim, seed_);
}

FileProvider::FileProvider(const std::filesystem::path& path) : source_(path.string()) {
    std::ifstream in(path);
    if (!in) {
        throw ContractError("cannot open embedding file: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
        dim_ = j.at("dim").get<std::int64_t>();
        for (const auto& [name, vec] : j.at("vectors").items()) {
            vectors_.emplace(name, vec.get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ContractError("malformed embedding file " + path.string() + ": " + e.what());
    }
    for (const auto& [name, vec] : vectors_) {
        if (static_cast<std::int64_t>(vec.size()) != dim_) {
            throw ContractError("embedding for '" + name + "' has length " + std::to_string(vec.size()) +
                                ", expected " + std::to_string(dim_));
        }
    }
}

FileProvider::FileProvider(std::int64_t dim, std::map<std::string, std::vector<double>> vectors, std::string source)
    : dim_(dim), vectors_(std::move(vectors)), source_(std::move(source)) {}

std::vector<double> FileProvider::embed(const std::string& class_name, const std::string&, std::int64_t dim) const {
    if (dim != dim_) {
        throw ContractError("embedding file dimension " + std::to_string(dim_) + " does not match requested " +
                            std::to_string(dim));
    }
    auto it = vectors_.find(class_name);
    if (it == vectors_.end()) {
        throw ContractError("no embedding for class '" + class_name + "' in " + source_);
    }
    return it->second;
}

QuerySet embed_queries(const std::vector<std::string>& names, const EmbeddingProvider& provider,
                       const PromptTemplate& prompt, std::int64_t dim) {
    if (names.empty()) {
        throw ContractError("cannot embed an empty class list");
    }
    QuerySet qs;
    qs.names = names;
    qs.provider_id = provider.id();
    qs.embeddings = Tensor<double>({static_cast<std::int64_t>(names.size()), dim});
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto row = provider.embed(names[i], prompt.apply(names[i]), dim);
        if (static_cast<std::int64_t>(row.size()) != dim) {
            throw ContractError("provider returned a vector of the wrong length for " + names[i]);
        }
        std::copy(row.begin(), row.end(), qs.embeddings.data() + i * static_cast<std::size_t>(dim));
    }
    qs.validate();
    return qs;
}

}  // namespace gsnet

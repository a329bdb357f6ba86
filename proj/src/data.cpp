#include "gsnet/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <tuple>

#include "gsnet/image_io.hpp"

namespace gsnet {

namespace fs = std::filesystem;

std::string normalize_class_name(const std::string& name) {
    std::string out;
    bool pending_space = false;
    for (unsigned char ch : name) {
        if (std::isspace(ch)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(ch)));
    }
    return out;
}

const std::vector<std::string>& default_background_synonyms() {
    static const std::vector<std::string> list{"background", "unlabeled", "clutter"};
    return list;
}

namespace {

bool is_background(const std::string& name, const std::vector<std::string>& background) {
    const auto key = normalize_class_name(name);
    return std::any_of(background.begin(), background.end(),
                       [&](const std::string& b) { return normalize_class_name(b) == key; });
}

std::string display_name(const std::string& name) {
    // Keep the original casing, only tidy whitespace.
    std::string out;
    bool pending_space = false;
    for (unsigned char ch : name) {
        if (std::isspace(ch)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(ch));
    }
    return out;
}

}  // namespace

ClassVocabulary::ClassVocabulary(const std::vector<std::string>& names) {
    for (const auto& n : names) {
        if (find(n)) {
            throw ContractError("duplicate class name '" + n + "' in vocabulary");
        }
        add(n);
    }
}

std::optional<std::uint8_t> ClassVocabulary::find(const std::string& name) const {
    auto it = index_.find(normalize_class_name(name));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::uint8_t ClassVocabulary::add(const std::string& name) {
    if (auto i = find(name)) {
        return *i;
    }
    const auto key = normalize_class_name(name);
    if (key.empty()) {
        throw ContractError("empty class name");
    }
    if (names_.size() >= kUnlabeled) {
        throw ContractError("vocabulary is full (255 classes)");
    }
    const auto idx = static_cast<std::uint8_t>(names_.size());
    names_.push_back(display_name(name));
    index_[key] = idx;
    return idx;
}

fs::path DatasetManifest::resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

const Remap& DatasetManifest::remap_for(const std::string& source) const {
    auto it = remaps.find(source);
    if (it == remaps.end()) {
        throw ContractError("manifest '" + name + "' has no remap for source '" + source + "'");
    }
    return it->second;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const fs::path& base_dir,
                                           const std::vector<std::string>& background) {
    DatasetManifest m;
    m.base_dir = base_dir;
    try {
        m.name = j.at("name").get<std::string>();
        const auto classes = j.at("classes").get<std::vector<std::string>>();
        for (const auto& s : j.value("samples", nlohmann::json::array())) {
            m.samples.push_back({s.at("image").get<std::string>(), s.at("mask").get<std::string>(),
                                 s.value("source", m.name)});
        }
        if (j.contains("remap")) {
            for (const auto& c : classes) {
                if (is_background(c, background)) {
                    throw ContractError("class '" + c + "' is reserved for the unlabeled sentinel");
                }
            }
            m.vocabulary = ClassVocabulary(classes);
            for (const auto& [source, table] : j.at("remap").items()) {
                Remap r;
                for (const auto& [from, to] : table.items()) {
                    const int f = std::stoi(from);
                    const int t = to.get<int>();
                    if (f < 0 || f > 255 || (t != kUnlabeled && (t < 0 || t >= static_cast<int>(classes.size())))) {
                        throw ContractError("remap entry " + from + " -> " + std::to_string(t) + " out of range");
                    }
                    r[static_cast<std::uint8_t>(f)] = static_cast<std::uint8_t>(t);
                }
                m.remaps[source] = std::move(r);
            }
        } else {
            if (classes.size() > kUnlabeled) {
                throw ContractError("raw manifest lists more than 255 classes");
            }
            Remap r;
            for (std::size_t i = 0; i < classes.size(); ++i) {
                r[static_cast<std::uint8_t>(i)] =
                    is_background(classes[i], background) ? kUnlabeled : m.vocabulary.add(classes[i]);
            }
            r[kUnlabeled] = kUnlabeled;
            std::set<std::string> sources;
            for (const auto& s : m.samples) {
                sources.insert(s.source);
            }
            if (sources.empty()) {
                sources.insert(m.name);
            }
            for (const auto& s : sources) {
                m.remaps[s] = r;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed manifest: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw ContractError("malformed manifest: non-numeric remap key");
    }
    for (const auto& s : m.samples) {
        if (!m.remaps.count(s.source)) {
            throw ContractError("sample source '" + s.source + "' has no remap table");
        }
    }
    return m;
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : this->samples) {
        samples.push_back({{"image", s.image}, {"mask", s.mask}, {"source", s.source}});
    }
    nlohmann::json remap = nlohmann::json::object();
    for (const auto& [source, table] : remaps) {
        nlohmann::json t = nlohmann::json::object();
        for (const auto& [from, to] : table) {
            t[std::to_string(from)] = to;
        }
        remap[source] = t;
    }
    return {{"name", name}, {"classes", vocabulary.names()}, {"samples", samples}, {"remap", remap}};
}

DatasetManifest load_manifest(const fs::path& path, const std::vector<std::string>& background) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return DatasetManifest::from_json(j, path.parent_path(), background);
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write manifest: " + path.string());
    }
    out << m.to_json().dump(2) << "\n";
}

DatasetManifest merge_datasets(const std::vector<DatasetManifest>& manifests, const std::string& name,
                               const std::vector<std::string>& background) {
    if (manifests.empty()) {
        throw ContractError("merge_datasets: no manifests given");
    }
    DatasetManifest out;
    out.name = name;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& m : manifests) {
        std::vector<std::uint8_t> to_merged(m.vocabulary.size());
        for (std::size_t i = 0; i < m.vocabulary.size(); ++i) {
            const auto& n = m.vocabulary.names()[i];
            to_merged[i] = is_background(n, background) ? kUnlabeled : out.vocabulary.add(n);
        }
        for (const auto& [source, table] : m.remaps) {
            Remap composed;
            for (const auto& [from, to] : table) {
                composed[from] = to == kUnlabeled ? kUnlabeled : to_merged.at(to);
            }
            auto it = out.remaps.find(source);
            if (it != out.remaps.end() && it->second != composed) {
                throw ContractError("remap collision: source '" + source +
                                    "' maps to different merged classes in two manifests");
            }
            out.remaps[source] = std::move(composed);
        }
        for (const auto& s : m.samples) {
            SampleRecord r{fs::absolute(m.resolve(s.image)).lexically_normal().string(),
                           fs::absolute(m.resolve(s.mask)).lexically_normal().string(), s.source};
            if (seen.insert({r.image, r.mask, r.source}).second) {
                out.samples.push_back(std::move(r));
            }
        }
    }
    return out;
}

SegmentationMask remap_mask(const SegmentationMask& mask, const Remap& remap) {
    std::array<int, 256> table;
    table.fill(-1);
    for (const auto& [from, to] : remap) {
        table[from] = to;
    }
    if (table[kUnlabeled] < 0) {
        table[kUnlabeled] = kUnlabeled;
    }
    SegmentationMask out(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const int t = table[mask.indices[i]];
        if (t < 0) {
            throw ContractError("remap_mask: pixel value " + std::to_string(mask.indices[i]) +
                                " is not covered by the remap table");
        }
        out.indices[i] = static_cast<std::uint8_t>(t);
    }
    return out;
}

std::vector<Segment> connected_components(const SegmentationMask& mask, std::uint8_t class_index) {
    const auto h = mask.height, w = mask.width;
    std::vector<char> visited(mask.size(), 0);
    std::vector<std::int64_t> stack;
    std::vector<Segment> out;
    for (std::int64_t start = 0; start < h * w; ++start) {
        if (visited[static_cast<std::size_t>(start)] || mask.indices[static_cast<std::size_t>(start)] != class_index) {
            continue;
        }
        Segment seg;
        double sr = 0, sc = 0;
        stack.push_back(start);
        visited[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            const auto r = p / w, c = p % w;
            ++seg.pixels;
            sr += (static_cast<double>(r) + 0.5) / static_cast<double>(h);
            sc += (static_cast<double>(c) + 0.5) / static_cast<double>(w);
            const std::int64_t nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& [nr, nc] : nbr) {
                if (nr < 0 || nc < 0 || nr >= h || nc >= w) {
                    continue;
                }
                const auto q = static_cast<std::size_t>(nr * w + nc);
                if (!visited[q] && mask.indices[q] == class_index) {
                    visited[q] = 1;
                    stack.push_back(nr * w + nc);
                }
            }
        }
        seg.centroid_row = sr / static_cast<double>(seg.pixels);
        seg.centroid_col = sc / static_cast<double>(seg.pixels);
        out.push_back(seg);
    }
    return out;
}

std::int64_t size_bucket(std::int64_t pixels) {
    std::int64_t b = 1;
    while (b * 2 <= pixels) {
        b *= 2;
    }
    return b;
}

void accumulate_stats(SegmentStats& stats, const SegmentationMask& mask, const ClassVocabulary& vocab) {
    std::array<std::int64_t, 256> counts{};
    for (auto v : mask.indices) {
        ++counts[v];
    }
    for (std::size_t k = 0; k < 256; ++k) {
        if (k == kUnlabeled || counts[k] == 0) {
            continue;
        }
        if (k >= vocab.size()) {
            throw ContractError("mask value " + std::to_string(k) + " outside the vocabulary");
        }
        const auto& cname = vocab.names()[k];
        stats.class_pixels[cname] += counts[k];
        for (const auto& seg : connected_components(mask, static_cast<std::uint8_t>(k))) {
            ++stats.size_histogram[size_bucket(seg.pixels)];
            stats.centroids.push_back({cname, seg.pixels, seg.centroid_row, seg.centroid_col});
        }
    }
    std::int64_t labeled = 0;
    for (const auto& [n, c] : stats.class_pixels) {
        labeled += c;
    }
    stats.class_fractions.clear();
    for (const auto& [n, c] : stats.class_pixels) {
        stats.class_fractions[n] = static_cast<double>(c) / static_cast<double>(labeled);
    }
    ++stats.samples_read;
}

SegmentStats compute_stats(const DatasetManifest& manifest) {
    SegmentStats stats;
    for (const auto& s : manifest.samples) {
        SegmentationMask mask;
        try {
            mask = remap_mask(read_mask_png(manifest.resolve(s.mask)), manifest.remap_for(s.source));
        } catch (const Error& e) {
            stats.skipped.emplace_back(s.mask, e.what());
            continue;
        }
        accumulate_stats(stats, mask, manifest.vocabulary);
    }
    return stats;
}

nlohmann::json SegmentStats::to_json() const {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [b, c] : size_histogram) {
        hist[std::to_string(b)] = c;
    }
    nlohmann::json cents = nlohmann::json::array();
    for (const auto& c : centroids) {
        cents.push_back({{"class", c.class_name}, {"pixels", c.pixels}, {"row", c.row}, {"col", c.col}});
    }
    nlohmann::json skip = nlohmann::json::array();
    for (const auto& [sample, reason] : skipped) {
        skip.push_back({{"sample", sample}, {"reason", reason}});
    }
    return {{"samples_read", samples_read},
            {"normalized_class_pixel_counts", class_fractions},
            {"class_pixels", class_pixels},
            {"segment_size_histogram", hist},
            {"normalized_centroids", cents},
            {"skipped", skip}};
}

Sample<float> load_sample(const DatasetManifest& manifest, std::size_t index) {
    const auto& rec = manifest.samples.at(index);
    Sample<float> s{read_rgb_png(manifest.resolve(rec.image)),
                    remap_mask(read_mask_png(manifest.resolve(rec.mask)), manifest.remap_for(rec.source))};
    if (s.image.dim(1) != s.mask.height || s.image.dim(2) != s.mask.width) {
        throw ContractError("sample " + rec.image + ": image " + shape_str(s.image.shape()) +
                            " and mask extents differ");
    }
    return s;
}

Sample<float> synth_sample(std::int64_t size, int classes, Rng& rng, int block, double noise) {
    if (classes < 1 || classes > static_cast<int>(overlay_palette().size()) || size % block != 0) {
        throw ContractError("synth_sample: need 1..12 classes and a size divisible by the block");
    }
    Sample<float> s{Tensor<float>({3, size, size}), SegmentationMask(size, size, 0)};
    const std::int64_t cells = size / block;
    const int rects = 2 + 2 * classes;
    for (int i = 0; i < rects; ++i) {
        const auto k = static_cast<std::uint8_t>(rng.below(classes));
        const auto r0 = rng.below(cells), c0 = rng.below(cells);
        const auto rh = 1 + rng.below(cells - r0), cw = 1 + rng.below(cells - c0);
        for (std::int64_t r = r0 * block; r < (r0 + rh) * block; ++r) {
            for (std::int64_t c = c0 * block; c < (c0 + cw) * block; ++c) {
                s.mask.at(r, c) = k;
            }
        }
    }
    const auto& pal = overlay_palette();
    const std::size_t plane = s.mask.size();
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = pal[s.mask.indices[i]][c] / 255.0 + noise * rng.normal();
            s.image[c * plane + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return s;
}

fs::path write_synthetic_corpus(const fs::path& dir, const std::string& name, const std::vector<std::string>& class_names,
                                int count, std::int64_t size, std::uint64_t seed) {
    fs::create_directories(dir);
    Rng rng(seed);
    nlohmann::json samples = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        auto s = synth_sample(size, static_cast<int>(class_names.size()), rng);
        const std::string stem = name + "_" + std::to_string(i);
        write_rgb_png(dir / (stem + ".png"), s.image);
        write_mask_png(dir / (stem + "_mask.png"), s.mask);
        samples.push_back({{"image", stem + ".png"}, {"mask", stem + "_mask.png"}, {"source", name}});
    }
    const auto path = dir / "manifest.json";
    std::ofstream(path) << nlohmann::json{{"name", name}, {"classes", class_names}, {"samples", samples}}.dump(2)
                        << "\n";
    return path;
}

}  // namespace gsnet

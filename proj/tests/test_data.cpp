#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "gsnet/data.hpp"
#include "gsnet/image_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gsnet;
using gsnet::testing::random_mask;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "gsnet_data_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

DatasetManifest raw(const std::string& name, const std::vector<std::string>& classes) {
    return DatasetManifest::from_json({{"name", name}, {"classes", classes}}, ".");
}

std::map<std::int64_t, std::int64_t> union_find_sizes(const SegmentationMask& m, std::uint8_t k) {
    std::map<std::int64_t, std::int64_t> sizes;
    for (const auto& [root, seg] : gsnet::testing::union_find_segments(m, k)) sizes[root] = seg.pixels;
    return sizes;
}

}  // namespace

TEST(Names, Normalization) {
    EXPECT_EQ(normalize_class_name("  Low   Vegetation "), "low vegetation");
    EXPECT_EQ(normalize_class_name("BUILDING"), "building");
    ClassVocabulary v({"Building", "road"});
    EXPECT_EQ(v.find(" building"), std::optional<std::uint8_t>(0));
    EXPECT_THROW(ClassVocabulary({"road", "Road "}), ContractError);
}

TEST(Merge, IdenticalClassesCollapse) {
    auto m = merge_datasets({raw("a", {"building", "road"}), raw("b", {"Building", "tree"})});
    EXPECT_EQ(m.vocabulary.names(), (std::vector<std::string>{"building", "road", "tree"}));
    EXPECT_EQ(m.remaps.at("b").at(0), 0);
    EXPECT_EQ(m.remaps.at("b").at(1), 2);
}

TEST(Merge, BackgroundSynonymsBecomeSentinel) {
    auto m = merge_datasets({raw("a", {"background", "car"}), raw("b", {"car", "unlabeled", "Clutter"})});
    EXPECT_EQ(m.vocabulary.names(), std::vector<std::string>{"car"});
    EXPECT_EQ(m.remaps.at("a").at(0), kUnlabeled);
    EXPECT_EQ(m.remaps.at("b").at(1), kUnlabeled);
    EXPECT_EQ(m.remaps.at("b").at(2), kUnlabeled);
    // The synonym list is extendable.
    auto ext = merge_datasets({raw("c", {"void", "car"})}, "m", {"background", "void"});
    EXPECT_EQ(ext.remaps.at("c").at(0), kUnlabeled);
}

TEST(Merge, SetUnionOracle) {
    Rng rng(1);
    const std::vector<std::string> pool{"building", "road", "tree", "water", "car", "grass", "ship", "bridge"};
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<DatasetManifest> ms;
        std::set<std::string> expected;
        for (int k = 0; k < 3; ++k) {
            std::vector<std::string> cls;
            while (cls.size() < 4) {
                auto c = pool[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(pool.size())))];
                if (std::find(cls.begin(), cls.end(), c) == cls.end()) cls.push_back(c);
            }
            expected.insert(cls.begin(), cls.end());
            ms.push_back(raw("src" + std::to_string(k), cls));
        }
        auto m = merge_datasets(ms);
        std::set<std::string> got(m.vocabulary.names().begin(), m.vocabulary.names().end());
        EXPECT_EQ(got, expected);
        EXPECT_EQ(got.size(), m.vocabulary.size());
        for (const auto& src : ms) {
            const auto& table = m.remaps.at(src.name);
            for (std::size_t i = 0; i < src.vocabulary.size(); ++i)
                EXPECT_EQ(m.vocabulary.names()[table.at(static_cast<std::uint8_t>(i))], src.vocabulary.names()[i]);
        }
    }
}

TEST(Merge, IdempotentAndCollisions) {
    auto m = merge_datasets({raw("a", {"background", "car", "road"}), raw("b", {"tree", "car"})});
    auto twice = merge_datasets({m, m});
    EXPECT_EQ(twice.vocabulary, m.vocabulary);
    EXPECT_EQ(twice.remaps, m.remaps);
    EXPECT_EQ(merge_datasets({m}).to_json(), m.to_json());

    EXPECT_THROW(merge_datasets({}), ContractError);
    EXPECT_THROW(merge_datasets({raw("a", {"car", "road"}), raw("a", {"road", "car"})}), ContractError);
}

TEST(Remap, Oracles) {
    Rng rng(2);
    auto m = random_mask(7, 9, 4, rng);
    Remap id{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    EXPECT_EQ(remap_mask(m, id), m);

    SegmentationMask c(3, 3, 2);
    for (auto v : remap_mask(c, {{2, 5}}).indices) EXPECT_EQ(v, 5);

    Remap r{{0, 3}, {1, kUnlabeled}, {2, 0}, {3, 1}};
    auto out = remap_mask(m, r);
    EXPECT_EQ(out.height, m.height);
    EXPECT_EQ(out.width, m.width);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(out.indices[i], r.at(m.indices[i]));

    m.indices[4] = 9;
    EXPECT_THROW(remap_mask(m, r), ContractError);
    SegmentationMask sentinel(2, 2, kUnlabeled);
    EXPECT_EQ(remap_mask(sentinel, {}), sentinel);
}

TEST(Components, Trivial) {
    SegmentationMask m(6, 8, 0);
    for (int r = 1; r < 4; ++r)
        for (int c = 2; c < 7; ++c) m.at(r, c) = 1;
    auto segs = connected_components(m, 1);
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].pixels, 15);
    EXPECT_DOUBLE_EQ(segs[0].centroid_row, 2.5 / 6);
    EXPECT_DOUBLE_EQ(segs[0].centroid_col, 4.5 / 8);

    SegmentationMask d(2, 2, 0);
    d.at(0, 0) = d.at(1, 1) = 1;
    EXPECT_EQ(connected_components(d, 1).size(), 2u);

    SegmentationMask full(5, 7, 3);
    auto f = connected_components(full, 3);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_NEAR(f[0].centroid_row, 0.5, 1e-12);
    EXPECT_NEAR(f[0].centroid_col, 0.5, 1e-12);
}

TEST(Components, MatchUnionFindOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto m = random_mask(16, 16, 3, rng);
        for (std::uint8_t k = 0; k < 3; ++k) {
            auto segs = connected_components(m, k);
            auto oracle = union_find_sizes(m, k);
            std::multiset<std::int64_t> a, b;
            std::int64_t total = 0;
            for (const auto& s : segs) {
                a.insert(s.pixels);
                total += s.pixels;
                EXPECT_GE(s.centroid_row, 0.0);
                EXPECT_LE(s.centroid_row, 1.0);
            }
            for (const auto& [root, size] : oracle) b.insert(size);
            EXPECT_EQ(a, b);
            EXPECT_EQ(total, std::count(m.indices.begin(), m.indices.end(), k));
        }
    }
}

TEST(Stats, SingleClassAndBuckets) {
    ClassVocabulary v({"water", "land"});
    SegmentStats s;
    SegmentationMask m(4, 4, 1);
    m.at(0, 0) = kUnlabeled;
    accumulate_stats(s, m, v);
    EXPECT_DOUBLE_EQ(s.class_fractions.at("land"), 1.0);
    EXPECT_EQ(s.class_pixels.at("land"), 15);
    EXPECT_EQ(s.size_histogram.at(8), 1);
    EXPECT_EQ(size_bucket(1), 1);
    EXPECT_EQ(size_bucket(7), 4);
    EXPECT_EQ(size_bucket(64), 64);
}

TEST(Stats, CorpusMatchesBruteForce) {
    auto dir = scratch("corpus");
    auto path = write_synthetic_corpus(dir, "syn", {"background", "roof", "lawn"}, 4, 32, 11);
    auto m = load_manifest(path);
    EXPECT_EQ(m.vocabulary.names(), (std::vector<std::string>{"roof", "lawn"}));
    auto stats = compute_stats(m);
    EXPECT_EQ(stats.samples_read, 4);
    EXPECT_TRUE(stats.skipped.empty());

    std::map<std::string, std::int64_t> pixels;
    std::map<std::int64_t, std::int64_t> hist;
    std::int64_t segments = 0;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        auto raw_mask = read_mask_png(m.resolve(m.samples[i].mask));
        auto sample = load_sample(m, i);
        for (std::size_t p = 0; p < raw_mask.size(); ++p) {
            // Raw class 0 is the background synonym.
            if (raw_mask.indices[p] == 0) {
                EXPECT_EQ(sample.mask.indices[p], kUnlabeled);
                continue;
            }
            ++pixels[raw_mask.indices[p] == 1 ? "roof" : "lawn"];
        }
        for (std::uint8_t k = 0; k < 2; ++k)
            for (const auto& [root, size] : union_find_sizes(sample.mask, k)) {
                std::int64_t b = 1;
                while (b * 2 <= size) b *= 2;
                ++hist[b];
                ++segments;
            }
    }
    EXPECT_EQ(stats.class_pixels, pixels);
    EXPECT_EQ(stats.size_histogram, hist);
    EXPECT_EQ(static_cast<std::int64_t>(stats.centroids.size()), segments);
    double sum = 0;
    for (const auto& [n, f] : stats.class_fractions) sum += f;
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Stats, UnreadableSamplesAreSkipped) {
    auto dir = scratch("broken");
    auto path = write_synthetic_corpus(dir, "syn", {"a", "b"}, 3, 16, 1);
    std::ofstream(dir / "syn_1_mask.png") << "garbage";
    auto stats = compute_stats(load_manifest(path));
    EXPECT_EQ(stats.samples_read, 2);
    ASSERT_EQ(stats.skipped.size(), 1u);
    EXPECT_NE(stats.skipped[0].first.find("syn_1_mask"), std::string::npos);
}

TEST(Manifest, RoundTripAndErrors) {
    auto dir = scratch("manifest");
    auto m = merge_datasets({raw("a", {"background", "car"}), raw("b", {"tree"})});
    write_manifest(dir / "m.json", m);
    auto back = load_manifest(dir / "m.json");
    EXPECT_EQ(back.to_json(), m.to_json());
    EXPECT_THROW(load_manifest(dir / "missing.json"), IoError);
    std::ofstream(dir / "bad.json") << "{\"name\": 3}";
    EXPECT_THROW(load_manifest(dir / "bad.json"), ContractError);
}

TEST(ImageIo, RoundTrips) {
    auto dir = scratch("png");
    Rng rng(4);
    Tensor<float> img({3, 5, 7});
    for (auto& v : img.values()) v = static_cast<float>(rng.below(256)) / 255.0f;
    write_rgb_png(dir / "i.png", img);
    auto back = read_rgb_png(dir / "i.png");
    EXPECT_LT(gsnet::testing::max_abs_diff(back, img), 1e-6);

    auto m = random_mask(6, 4, 200, rng);
    m.indices[0] = kUnlabeled;
    write_mask_png(dir / "m.png", m);
    EXPECT_EQ(read_mask_png(dir / "m.png"), m);
    EXPECT_THROW(read_mask_png(dir / "i.png"), IoError);
    std::ofstream(dir / "x.png") << "\x89PNG\r\n\x1a\n truncated";
    EXPECT_THROW(read_rgb_png(dir / "x.png"), IoError);
    EXPECT_THROW(read_rgb_png(dir / "none.png"), IoError);
}

TEST(ImageIo, OverlayKeepsUnlabeledGray) {
    Tensor<float> img = Tensor<float>::full({3, 2, 2}, 0.4f);
    SegmentationMask m(2, 2, kUnlabeled);
    m.at(0, 1) = 0;
    auto o = make_overlay(img, m);
    EXPECT_FLOAT_EQ(o[0], 0.4f);
    EXPECT_FLOAT_EQ(o[4], 0.4f);
    EXPECT_FLOAT_EQ(o[1], 0.5f * 0.4f + 0.5f * overlay_palette()[0][0] / 255.0f);
}

TEST(Synth, DeterministicAndBlockAligned) {
    Rng a(5), b(5);
    auto s = synth_sample(32, 3, a);
    auto t = synth_sample(32, 3, b);
    EXPECT_EQ(s.mask, t.mask);
    EXPECT_EQ(s.image.storage(), t.image.storage());
    for (std::int64_t r = 0; r < 32; ++r)
        for (std::int64_t c = 0; c < 32; ++c) EXPECT_EQ(s.mask.at(r, c), s.mask.at(r / 8 * 8, c / 8 * 8));
}

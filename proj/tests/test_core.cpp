#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gsnet/checkpoint.hpp"
#include "gsnet/config.hpp"
#include "gsnet/ops.hpp"
#include "gsnet/text_embed.hpp"
#include "test_util.hpp"

using namespace gsnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "gsnet_core_tests";
    fs::create_directories(dir);
    return dir / name;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        differs |= x != c.normal();
    }
    EXPECT_TRUE(differs);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const auto k = a.below(5);
        EXPECT_GE(k, 0);
        EXPECT_LT(k, 5);
    }
}

TEST(Params, InitSchemes) {
    Rng rng(1);
    ParameterStore<double> store;
    auto& z = store.create("z", {4}, ParamGroup::Head, Init::Zeros, rng);
    auto& o = store.create("o", {4}, ParamGroup::Head, Init::Ones, rng);
    auto& t = store.create("t", {4000}, ParamGroup::Head, Init::TruncNormal, rng);
    auto& k = store.create("k", {8, 3, 3, 3}, ParamGroup::Head, Init::KaimingUniform, rng, 27);
    for (double v : z.value().values()) EXPECT_EQ(v, 0.0);
    for (double v : o.value().values()) EXPECT_EQ(v, 1.0);
    double ss = 0;
    for (double v : t.value().values()) {
        EXPECT_LE(std::abs(v), 0.04 + 1e-15);
        ss += v * v;
    }
    // Truncation at 2 sigma shrinks the std to about 0.88 sigma.
    EXPECT_NEAR(std::sqrt(ss / 4000), 0.02 * 0.88, 0.002);
    const double bound = std::sqrt(6.0 / 27);
    for (double v : k.value().values()) EXPECT_LE(std::abs(v), bound);
    EXPECT_THROW(store.create("z", {1}, ParamGroup::Head, Init::Zeros, rng), ContractError);
    EXPECT_THROW(store.at("missing"), ContractError);
}

TEST(Params, FreezingDropsGradient) {
    Rng rng(2);
    ParameterStore<double> store;
    auto& p = store.create("p", {3}, ParamGroup::Head, Init::Ones, rng);
    backward(ops::sum(ops::scale(p.var, 2.0)));
    ASSERT_TRUE(p.var.has_grad());
    EXPECT_EQ(p.var.grad().shape(), p.value().shape());
    p.set_trainable(false);
    EXPECT_FALSE(p.var.has_grad());
    auto q = Var<double>::leaf(Tensor<double>({3}, {1, 1, 1}), true);
    backward(ops::sum(ops::mul(p.var, q)));
    EXPECT_FALSE(p.var.has_grad());
    EXPECT_TRUE(store.trainable().empty());
}

TEST(Checkpoint, RoundTripAndLayout) {
    Rng rng(3);
    ParameterStore<float> src;
    src.create("b.weight", {2, 3}, ParamGroup::Head, Init::TruncNormal, rng);
    src.create("a.bias", {3}, ParamGroup::Generalist, Init::TruncNormal, rng);
    const auto path = scratch("roundtrip.ckpt");
    write_checkpoint(path, src, {{"note", "x"}});

    std::ifstream in(path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    EXPECT_EQ(std::string(magic, 8), "GSNETCK1");
    unsigned char len[8];
    in.read(reinterpret_cast<char*>(len), 8);
    std::uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) header_len = header_len << 8 | len[i];
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    auto j = nlohmann::json::parse(header);
    EXPECT_EQ(j["format"], "gsnet-checkpoint");
    EXPECT_EQ(j["tensors"][0]["name"], "a.bias");
    EXPECT_EQ(j["tensors"][1]["offset"], 12);
    EXPECT_EQ(fs::file_size(path), 16 + header_len + 4 * 9);

    auto ck = read_checkpoint(path);
    EXPECT_EQ(ck.metadata["note"], "x");
    ParameterStore<float> dst;
    Rng other(99);
    dst.create("b.weight", {2, 3}, ParamGroup::Head, Init::Zeros, other);
    dst.create("a.bias", {3}, ParamGroup::Head, Init::Zeros, other);
    auto loaded = load_parameters(ck, dst);
    EXPECT_EQ(loaded.size(), 2u);
    EXPECT_EQ(dst.at("b.weight").value().storage(), src.at("b.weight").value().storage());
}

TEST(Checkpoint, PartialLoadAndRejections) {
    Rng rng(4);
    ParameterStore<double> store;
    store.create("enc.w", {2}, ParamGroup::Generalist, Init::Ones, rng);
    store.create("head.w", {2}, ParamGroup::Head, Init::Zeros, rng);

    Checkpoint part;
    part.tensors["enc.w"] = Tensor<double>({2}, {5, 6});
    part.dtypes["enc.w"] = DType::F64;
    const auto path = scratch("partial.ckpt");
    write_checkpoint(path, part);
    auto names = load_parameters(read_checkpoint(path), store);
    EXPECT_EQ(names, std::vector<std::string>{"enc.w"});
    EXPECT_EQ(store.at("enc.w").value()[1], 6.0);
    EXPECT_EQ(store.at("head.w").value()[1], 0.0);

    Checkpoint bad_shape;
    bad_shape.tensors["enc.w"] = Tensor<double>({3});
    EXPECT_THROW(load_parameters(bad_shape, store), CheckpointError);
    Checkpoint unknown;
    unknown.tensors["nope"] = Tensor<double>({2});
    EXPECT_THROW(load_parameters(unknown, store), CheckpointError);

    const auto junk = scratch("junk.ckpt");
    std::ofstream(junk) << "not a checkpoint at all";
    EXPECT_THROW(read_checkpoint(junk), CheckpointError);
    EXPECT_THROW(read_checkpoint(scratch("absent.ckpt")), CheckpointError);
}

TEST(Checkpoint, BytesAreDeterministic) {
    auto write = [](const std::string& name) {
        Rng rng(5);
        ParameterStore<float> s;
        s.create("x", {4, 4}, ParamGroup::Head, Init::TruncNormal, rng);
        const auto p = scratch(name);
        write_checkpoint(p, s, {{"k", 1}});
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(write("d1.ckpt"), write("d2.ckpt"));
}

TEST(Config, Defaults) {
    ModelConfig c;
    EXPECT_EQ(c.generalist.policy, TrainPolicy::AttentionQV);
    EXPECT_EQ(c.specialist.policy, TrainPolicy::Freeze);
    EXPECT_EQ(c.generalist.tap_n1, 4);
    EXPECT_EQ(c.generalist.tap_n2, 8);
    EXPECT_EQ(c.patch_canvas, 640);
    EXPECT_EQ(c.patch_size, 384);
    EXPECT_EQ(c.prompt_template, "A photo of a {class}");
    EXPECT_NO_THROW(c.validate());
    EXPECT_NO_THROW(tiny_config().validate());
}

TEST(Config, JsonRoundTripAndOverrides) {
    auto c = tiny_config();
    c.apply_override("generalist.depth=3");
    c.apply_override("latent_dim=6");
    c.apply_override("specialist.policy=full");
    EXPECT_EQ(c.generalist.depth, 3);
    EXPECT_EQ(c.latent_dim, 6);
    EXPECT_EQ(c.specialist.policy, TrainPolicy::Full);
    auto back = ModelConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_THROW(c.apply_override("no_equals"), ConfigError);
    EXPECT_THROW(c.apply_override("generalist.heads=3"), ConfigError);
    EXPECT_THROW(parse_policy("sometimes"), ConfigError);
}

TEST(Config, RejectsBadValues) {
    auto c = tiny_config();
    c.generalist.tap_n2 = 99;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config();
    c.specialist.patch_stride = 16;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config();
    c.image_size = 40;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TextEmbed, PromptTemplate) {
    EXPECT_EQ(PromptTemplate().apply("car"), "A photo of a car");
    EXPECT_EQ(PromptTemplate("{class} from above").apply("roof"), "roof from above");
    EXPECT_THROW(PromptTemplate("no placeholder"), ContractError);
    EXPECT_THROW(PromptTemplate("{class} and {class}"), ContractError);
}

TEST(TextEmbed, HashEmbeddingIsUnitAndDeterministic) {
    auto a = hash_embedding("A photo of a car", 32, 0);
    EXPECT_EQ(a, hash_embedding("A photo of a car", 32, 0));
    EXPECT_NE(a, hash_embedding("A photo of a car", 32, 1));
    EXPECT_NEAR(std::sqrt(dot(a, a)), 1.0, 1e-6);
    EXPECT_THROW(hash_embedding("x", 4, 0), ContractError);
}

TEST(TextEmbed, RandomPromptsAreNearlyOrthogonal) {
    std::vector<std::vector<double>> vs;
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        std::string p = "class_";
        for (int k = 0; k < 8; ++k) p += static_cast<char>('a' + rng.below(26));
        vs.push_back(hash_embedding(p, 64, 0));
    }
    double worst = 0;
    for (std::size_t i = 0; i < vs.size(); ++i)
        for (std::size_t j = i + 1; j < vs.size(); ++j) worst = std::max(worst, std::abs(dot(vs[i], vs[j])));
    EXPECT_LT(worst, 0.6);
}

TEST(TextEmbed, EmbedQueriesDeterminismAndPermutation) {
    HashProvider hp(3);
    const std::vector<std::string> names{"building", "road", "tree", "water"};
    auto a = embed_queries(names, hp, PromptTemplate(), 16);
    auto b = embed_queries(names, hp, PromptTemplate(), 16);
    EXPECT_EQ(a.embeddings.storage(), b.embeddings.storage());
    EXPECT_EQ(a.provider_id, "hash:3");

    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<std::string> shuffled;
    for (auto i : perm) shuffled.push_back(names[i]);
    auto c = embed_queries(shuffled, hp, PromptTemplate(), 16);
    EXPECT_EQ(c.embeddings.storage(), a.permuted(perm).embeddings.storage());
    EXPECT_EQ(c.names, a.permuted(perm).names);

    EXPECT_THROW(embed_queries({"a", "a"}, hp, PromptTemplate(), 16), ContractError);
    EXPECT_THROW(embed_queries({}, hp, PromptTemplate(), 16), ContractError);
}

TEST(TextEmbed, FileProviderRoundTrip) {
    const auto path = scratch("emb.json");
    nlohmann::json j = {{"dim", 3},
                        {"vectors", {{"car", {1.0, 0.0, 0.0}}, {"tree", {0.0, 2.0, 0.0}}, {"lake", {0.5, 0.5, 3.0}}}}};
    std::ofstream(path) << j.dump();
    FileProvider fp(path);
    auto q = embed_queries({"lake", "car", "tree"}, fp, PromptTemplate(), 3);
    EXPECT_EQ(q.embeddings.storage(), (std::vector<double>{0.5, 0.5, 3.0, 1, 0, 0, 0, 2, 0}));
    EXPECT_THROW(embed_queries({"ship"}, fp, PromptTemplate(), 3), ContractError);
    EXPECT_THROW(embed_queries({"car"}, fp, PromptTemplate(), 4), ContractError);
}

TEST(TextEmbed, QuerySetValidation) {
    QuerySet q{{"a", "b"}, Tensor<double>({2, 2}, {1, 0, 0, 0}), "t"};
    EXPECT_THROW(q.validate(), ContractError);
    q.embeddings = Tensor<double>({2, 2}, {1, 0, NAN, 1});
    EXPECT_THROW(q.validate(), ContractError);
    q.embeddings = Tensor<double>({2, 2}, {1, 0, 0, 1});
    EXPECT_NO_THROW(q.validate());
}

// Runs acceptance criteria 1-10 and prints one PASS/FAIL line per criterion.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "gsnet/data.hpp"
#include "gsnet/eval.hpp"
#include "gsnet/image_io.hpp"
#include "gsnet/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace gsnet;
using namespace gsnet::ops;
using namespace gsnet::testing;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            detail << "failed: " << what << "; ";
        }
        pass = pass && ok;
    }
};

using V = Var<double>;

QuerySet random_queries(std::int64_t n, std::int64_t d, Rng& rng) {
    QuerySet q;
    for (std::int64_t i = 0; i < n; ++i) q.names.push_back("q" + std::to_string(i));
    q.embeddings = random_tensor({n, d}, rng);
    return q;
}

// 1. Finite differences on every op (20 trials, < 1e-4) and the head end to end (< 1e-3).
void gradients(Outcome& o) {
    using Fn = std::function<V(const std::vector<V>&)>;
    struct Case {
        const char* name;
        Fn f;
        std::vector<Shape> shapes;
    };
    const std::vector<Case> cases{
        {"add", [](const auto& v) { return add(v[0], v[1]); }, {{3, 4}, {3, 4}}},
        {"mul", [](const auto& v) { return mul(v[0], v[1]); }, {{3, 4}, {3, 4}}},
        {"scale", [](const auto& v) { return scale(v[0], 1.7); }, {{5}}},
        {"sum", [](const auto& v) { return sum(v[0]); }, {{2, 3}}},
        {"relu", [](const auto& v) { return relu(v[0]); }, {{4, 5}}},
        {"sigmoid", [](const auto& v) { return sigmoid(v[0]); }, {{4, 5}}},
        {"gelu", [](const auto& v) { return gelu(v[0]); }, {{4, 5}}},
        {"clamp", [](const auto& v) { return clamp(scale(v[0], 0.5), -1.0, 1.0); }, {{4, 5}}},
        {"l2_normalize", [](const auto& v) { return l2_normalize(v[0]); }, {{4, 6}}},
        {"softmax", [](const auto& v) { return softmax_lastdim(v[0]); }, {{3, 7}}},
        {"layer_norm", [](const auto& v) { return layer_norm(v[0], v[1], v[2]); }, {{5, 6}, {6}, {6}}},
        {"reshape", [](const auto& v) { return reshape(v[0], {6, 2}); }, {{3, 4}}},
        {"permute", [](const auto& v) { return permute(v[0], {2, 0, 1}); }, {{2, 3, 4}}},
        {"concat", [](const auto& v) { return concat<double>({v[0], v[1]}, 1); }, {{2, 3, 4}, {2, 2, 4}}},
        {"slice", [](const auto& v) { return slice(v[0], 1, 1, 2); }, {{2, 4, 3}}},
        {"repeat_batch", [](const auto& v) { return repeat_batch(v[0], 3); }, {{1, 2, 3}}},
        {"matmul", [](const auto& v) { return matmul(v[0], v[1]); }, {{2, 3, 4}, {2, 4, 2}}},
        {"linear", [](const auto& v) { return linear(v[0], v[1], v[2]); }, {{2, 3, 4}, {4, 5}, {5}}},
        {"conv2d", [](const auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); }, {{2, 3, 5, 5}, {4, 3, 3, 3}, {4}}},
        {"conv2d_7x7", [](const auto& v) { return conv2d(v[0], v[1], v[2], 1, 3); }, {{2, 1, 4, 4}, {3, 1, 7, 7}, {3}}},
        {"conv2d_s2", [](const auto& v) { return conv2d(v[0], v[1], v[2], 2, 0); }, {{1, 2, 6, 6}, {3, 2, 2, 2}, {3}}},
        {"deconv2d", [](const auto& v) { return deconv2d(v[0], v[1], v[2], 2, 2); }, {{2, 3, 3, 3}, {3, 2, 2, 2}, {2}}},
        {"group_norm", [](const auto& v) { return group_norm(v[0], 2, v[1], v[2]); }, {{2, 4, 3, 3}, {4}, {4}}},
        {"bilinear", [](const auto& v) { return bilinear_resize(v[0], 7, 9); }, {{1, 2, 3, 4}}},
        {"cost_volume", [](const auto& v) { return compute_cost_volume(v[0], v[1], Stream::Generalist).values; },
         {{3, 4, 6}, {2, 6}}},
    };
    Rng rng(101);
    double worst = 0;
    std::string worst_name;
    for (const auto& c : cases) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Tensor<double>> in;
            for (const auto& s : c.shapes) in.push_back(random_tensor(s, rng));
            const double e = finite_difference_check(c.f, in, rng).rel_error;
            if (e > worst) {
                worst = e;
                worst_name = c.name;
            }
        }
    }

    GSNet<double> net(tiny_config());
    ParameterStore<double> store;
    auto block = BlockParams<double>::create(store, "blk", 8, 2, ParamGroup::Generalist, rng);
    for (auto* p : store.all()) {
        if (p->name.find("weight") != std::string::npos) p->mutable_value() = random_tensor(p->value().shape(), rng, -0.5, 0.5);
    }
    const auto x = V::constant(random_tensor({4, 8}, rng));
    const double e_block = parameter_gradient_check([&] { return transformer_block(x, block, 2); }, store.all(), rng).rel_error;
    const auto& agr_p = net.decoder().agr_params(1, 0);
    const auto ax = V::constant(random_tensor({2, net.config().decoder_dim, 4, 4}, rng));
    const double e_agr = parameter_gradient_check([&] { return agr(ax, agr_p, net.decoder().groups()); },
                                                  {agr_p.conv_weight, agr_p.conv_bias, agr_p.gn_gamma, agr_p.gn_beta}, rng)
                             .rel_error;
    const double modules = std::max(e_block, e_agr);

    const auto img = V::constant(random_tensor({3, 32, 32}, rng, 0.0, 1.0));
    const auto q = GSNet<double>::query_var(random_queries(2, net.config().embed_dim, rng));
    std::vector<Parameter<double>*> head;
    for (auto* p : net.params().all()) {
        if (p->group == ParamGroup::Head) head.push_back(p);
    }
    const auto e2e = parameter_gradient_check([&] { return net.forward(img, q); }, head, rng, 1e-5, 3);

    o.require(worst < 1e-4, std::string("op ") + worst_name);
    o.require(modules < 1e-4, "attention block / AGR");
    o.require(e2e.rel_error < 1e-3, "end-to-end head");
    o.detail << cases.size() << " ops x 20 trials, worst " << worst << " (" << worst_name << "); blocks " << modules
             << "; head " << e2e.rel_error << " over " << e2e.checked << " coords";
}

// 2. Logit shapes and grid contracts over H, W in {32,48,64}, N in {1,2,5}.
void shapes(Outcome& o) {
    GSNet<float> net{ModelConfig{}};
    Rng rng(102);
    int runs = 0;
    for (int h : {32, 48, 64})
        for (int w : {32, 48, 64}) {
            const auto img = Var<float>::constant(random_tensor<float>({3, h, w}, rng, 0.0, 1.0));
            const auto g = net.encode_generalist(img), s = net.encode_specialist(img);
            o.require(g.final.shape() == Shape({h / 16, w / 16, net.config().embed_dim}), "generalist grid");
            o.require(s.final.shape() == g.final.shape(), "specialist alignment");
            o.require(s.tap(net.config().specialist.tap_n1).dim(0) == h / 8, "specialist native tap grid");
            for (int stage : {1, 2}) {
                const auto t = net.decoder().project_taps(g, s, stage);
                const int f = stage == 1 ? 8 : 4;
                o.require(t.g.dim(2) == h / f && t.g.dim(3) == w / f && t.g.shape() == t.s.shape(), "tap grid");
            }
            for (int n : {1, 2, 5}) {
                const auto qs = random_queries(n, net.config().embed_dim, rng);
                o.require(net.infer(img.value(), qs).shape() == Shape({h, w, n}), "logit shape");
                ++runs;
            }
        }
    o.detail << runs << " forwards at the default config";
}

// 3. Cost volume range, scale invariance and nested-loop oracle.
void cost_volume(Outcome& o) {
    Rng rng(103);
    double worst_oracle = 0, worst_scale = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t h = 1 + rng.below(5), w = 1 + rng.below(5), n = 1 + rng.below(5), d = 2 + rng.below(15);
        const auto f = random_tensor({h, w, d}, rng), q = random_tensor({n, d}, rng);
        const auto m = compute_cost_volume(V::constant(f), V::constant(q), Stream::Generalist).values.value();
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j)
                for (std::int64_t k = 0; k < n; ++k) {
                    double dot = 0, ff = 0, qq = 0;
                    for (std::int64_t c = 0; c < d; ++c) {
                        dot += f.at({i, j, c}) * q.at({k, c});
                        ff += f.at({i, j, c}) * f.at({i, j, c});
                        qq += q.at({k, c}) * q.at({k, c});
                    }
                    const double v = m.at({i, j, k});
                    o.require(v >= -1.0 && v <= 1.0, "range");
                    worst_oracle = std::max(worst_oracle, std::abs(v - dot / std::sqrt(ff * qq)));
                }
        for (double a : {0.1, 1.0, 10.0})
            for (double b : {0.1, 1.0, 10.0}) {
                const auto ms = compute_cost_volume(scale(V::constant(f), a), scale(V::constant(q), b), Stream::Generalist);
                worst_scale = std::max(worst_scale, max_abs_diff(ms.values.value(), m));
            }
    }
    o.require(worst_oracle < 1e-9, "loop oracle");
    o.require(worst_scale < 1e-6, "scale invariance");
    o.detail << "50 cases; oracle err " << worst_oracle << ", scale err " << worst_scale;
}

// 4. 0 < Z^F - Z^G < 1 on 50 random parameterizations.
void residual_bound(Outcome& o) {
    Rng rng(104);
    double lo = 1, hi = 0;
    for (int trial = 0; trial < 50; ++trial) {
        auto cfg = tiny_config();
        cfg.seed = static_cast<std::uint64_t>(trial);
        GSNet<double> net(cfg);
        auto& fusion = net.fusion();
        for (auto* p : {&fusion.fuse_weight(), &fusion.fuse_bias(), &fusion.embed_weight(Stream::Generalist),
                        &fusion.embed_weight(Stream::Specialist)}) {
            p->mutable_value() = random_tensor(p->value().shape(), rng, -1.0, 1.0);
        }
        const std::int64_t h = 2 + rng.below(4), w = 2 + rng.below(4), n = 1 + rng.below(4), d = cfg.embed_dim;
        const auto q = V::constant(random_tensor({n, d}, rng));
        const auto cg = compute_cost_volume(V::constant(random_tensor({h, w, d}, rng)), q, Stream::Generalist);
        const auto cs = compute_cost_volume(V::constant(random_tensor({h, w, d}, rng)), q, Stream::Specialist);
        const auto zg = fusion.embed(cg, Stream::Generalist), zs = fusion.embed(cs, Stream::Specialist);
        const auto zf = fusion.fuse(zg, zs).values.value();
        for (std::size_t i = 0; i < zf.size(); ++i) {
            const double diff = zf[i] - zg.values.value()[i];
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
        }
    }
    o.require(lo > 0.0 && hi < 1.0, "residual bound");
    o.detail << "50 parameterizations; Z^F - Z^G in [" << lo << ", " << hi << "]";
}

// 5. Logits permute with the queries.
void permutation(Outcome& o) {
    GSNet<double> net{ModelConfig{}};
    Rng rng(105);
    const auto img = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    const auto q = random_queries(5, net.config().embed_dim, rng);
    const auto base = net.infer(img, q);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto perm = random_perm(5, rng);
        const auto out = net.infer(img, q.permuted(perm));
        for (std::int64_t i = 0; i < 64 * 64; ++i)
            for (std::int64_t k = 0; k < 5; ++k)
                worst = std::max(worst, std::abs(out[static_cast<std::size_t>(i * 5 + k)] -
                                                 base[static_cast<std::size_t>(i * 5) + perm[static_cast<std::size_t>(k)]]));
    }
    o.require(worst < 1e-6, "equivariance");
    o.detail << "20 permutations, N=5, worst " << worst;
}

// 6. Overfit one synthetic 32x32 3-class image.
void overfit(Outcome& o) {
    Rng rng(106);
    const auto sample = synth_sample(32, 3, rng);
    for (TrainPolicy gp : {TrainPolicy::AttentionQV, TrainPolicy::Freeze}) {
        auto run = [&](std::vector<double>& log) {
            auto cfg = tiny_config();
            cfg.generalist.policy = gp;
            cfg.specialist.policy = TrainPolicy::Freeze;
            GSNet<float> net(cfg);
            TrainConfig tc;
            tc.lr_head = 1e-2;
            const auto q = embed_queries({"field", "building", "water"}, HashProvider(0), PromptTemplate(), cfg.embed_dim);
            AdamW<float> opt(tc);
            for (int step = 0; step < 200; ++step) log.push_back(train_step(net, opt, {&sample}, q));
            const auto pred = predict_labels(net.infer(sample.image, q));
            std::int64_t hit = 0, n = 0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                if (sample.mask.indices[i] == kUnlabeled) continue;
                hit += pred.indices[i] == sample.mask.indices[i];
                ++n;
            }
            return static_cast<double>(hit) / static_cast<double>(n);
        };
        std::vector<double> a, b;
        const double acc = run(a);
        run(b);
        const double reduction = 1.0 - a.back() / a.front();
        o.require(reduction >= 0.9, "BCE reduction (" + policy_name(gp) + ")");
        o.require(acc >= 0.95, "pixel accuracy (" + policy_name(gp) + ")");
        o.require(a == b, "reproducible loss log");
        o.detail << policy_name(gp) << ": loss -" << 100 * reduction << "%, acc " << 100 * acc << "%; ";
    }
}

// 7. Default plan geometry, constant-model identity, coverage-average oracle.
void patches(Outcome& o) {
    const auto plan = make_plan(640, 384);
    o.require(plan.axis_origins() == std::vector<int>({0, 256}) && plan.origins.size() == 4, "default origins");
    o.require(plan.patch - plan.stride == 128 && 0 + plan.patch - plan.origins.back().first == 128, "overlap band 128");

    Rng rng(107);
    const auto toy = make_plan(64, 48);
    const auto img = random_tensor({3, 64, 64}, rng);
    const auto constant = patch_inference<double>(
        img, [](const Tensor<double>&) { return Tensor<double>::full({48, 48, 2}, 0.75); }, toy);
    double worst_const = 0;
    for (double v : constant.values()) worst_const = std::max(worst_const, std::abs(v - 0.75));

    auto predictor = [](const Tensor<double>& p) {
        Tensor<double> out({48, 48, 2});
        for (std::int64_t i = 0; i < 48; ++i)
            for (std::int64_t j = 0; j < 48; ++j) {
                out.at({i, j, 0}) = p.at({0, i, j}) + 0.01 * static_cast<double>(i);
                out.at({i, j, 1}) = p.at({2, i, j}) - 0.03 * static_cast<double>(j);
            }
        return out;
    };
    const auto merged = patch_inference<double>(img, predictor, toy);
    double worst = 0;
    for (std::int64_t y = 0; y < 64; ++y)
        for (std::int64_t x = 0; x < 64; ++x)
            for (std::int64_t k = 0; k < 2; ++k) {
                double s = 0;
                int n = 0;
                for (auto [oy, ox] : toy.origins) {
                    if (y < oy || y >= oy + 48 || x < ox || x >= ox + 48) continue;
                    s += k == 0 ? img.at({0, y, x}) + 0.01 * static_cast<double>(y - oy)
                                : img.at({2, y, x}) - 0.03 * static_cast<double>(x - ox);
                    ++n;
                }
                worst = std::max(worst, std::abs(merged.at({y, x, k}) - s / n));
            }
    o.require(worst_const < 1e-12, "constant identity");
    o.require(worst < 1e-6, "coverage-average oracle");
    o.detail << "origins {0,256}^2, band 128; constant err " << worst_const << ", oracle err " << worst;
}

// 8. mIoU vs enumeration, sentinel inertness, Hausdorff vs all-pairs.
void metrics(Outcome& o) {
    Rng rng(108);
    int exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_mask(16, 16, 4, rng), g = random_mask(16, 16, 4, rng, 0.1);
        ConfusionMatrix cm(4);
        accumulate(p, g, cm);
        exact += miou(cm).miou == miou_oracle(p, g, 4);

        auto p2 = p;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.indices[i] == kUnlabeled) p2.indices[i] = static_cast<std::uint8_t>(rng.below(4));
        ConfusionMatrix c2(4);
        accumulate(p2, g, c2);
        o.require(c2.counts == cm.counts, "sentinel inertness");
    }
    o.require(exact == 100, "mIoU oracle");

    double worst = 0;
    bool zero = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t d = 2 + rng.below(20);
        const auto a = random_tensor({1 + rng.below(6), d}, rng), b = random_tensor({1 + rng.below(6), d}, rng);
        QuerySet qa, qb;
        qa.embeddings = a;
        qb.embeddings = b;
        qa.names.resize(static_cast<std::size_t>(a.dim(0)), "x");
        qb.names.resize(static_cast<std::size_t>(b.dim(0)), "y");
        worst = std::max(worst, std::abs(hausdorff_label_similarity(qa, qb) - hausdorff_oracle(a, b)));
        zero = zero && hausdorff_label_similarity(qa, qa) == 0.0;
    }
    o.require(worst < 1e-9, "Hausdorff oracle");
    o.require(zero, "Hausdorff identity");
    o.detail << exact << "/100 exact mIoU; Hausdorff err " << worst;
}

// 9. Merge three synthetic manifests.
void harmonization(Outcome& o, const fs::path& work) {
    const std::vector<std::vector<std::string>> classes{
        {"Background", "Building", "water"}, {"road", "building ", "Clutter", "Tree"}, {"WATER", "unlabeled", "car", "tree"}};
    std::vector<DatasetManifest> ms;
    std::set<std::string> expected;
    const auto& bg = default_background_synonyms();
    for (std::size_t k = 0; k < classes.size(); ++k) {
        const auto dir = work / ("src" + std::to_string(k));
        fs::remove_all(dir);
        ms.push_back(load_manifest(write_synthetic_corpus(dir, "src" + std::to_string(k), classes[k], 3, 32, 900 + k)));
        for (const auto& c : classes[k]) {
            const auto key = normalize_class_name(c);
            if (std::find(bg.begin(), bg.end(), key) == bg.end()) expected.insert(key);
        }
    }
    const auto merged = merge_datasets(ms);
    std::set<std::string> got;
    for (const auto& n : merged.vocabulary.names()) got.insert(normalize_class_name(n));
    o.require(got == expected && got.size() == merged.vocabulary.size(), "set-union vocabulary");
    o.require(merge_datasets({merged}).to_json() == merged.to_json(), "idempotent");

    // Every raw value lands on the merged index of its name, background on 255.
    bool remap_ok = true;
    for (std::size_t i = 0; i < merged.samples.size(); ++i) {
        const auto& rec = merged.samples[i];
        const auto src = static_cast<std::size_t>(rec.source.back() - '0');
        const auto raw_mask = read_mask_png(merged.resolve(rec.mask));
        const auto mask = load_sample(merged, i).mask;
        for (std::size_t p = 0; p < mask.size(); ++p) {
            const auto key = normalize_class_name(classes[src][raw_mask.indices[p]]);
            if (std::find(bg.begin(), bg.end(), key) != bg.end()) {
                remap_ok = remap_ok && mask.indices[p] == kUnlabeled;
            } else {
                remap_ok = remap_ok && mask.indices[p] != kUnlabeled &&
                           normalize_class_name(merged.vocabulary.names()[mask.indices[p]]) == key;
            }
        }
    }
    o.require(remap_ok, "background sentinel / remap");

    const auto stats = compute_stats(merged);
    std::map<std::string, std::int64_t> pixels;
    std::multiset<std::tuple<std::string, std::int64_t, double, double>> segs;
    std::multiset<std::tuple<std::string, std::int64_t, double, double>> got_segs;
    std::int64_t labeled = 0;
    for (std::size_t i = 0; i < merged.samples.size(); ++i) {
        const auto mask = load_sample(merged, i).mask;
        for (std::size_t k = 0; k < merged.vocabulary.size(); ++k) {
            const auto& name = merged.vocabulary.names()[k];
            for (const auto& [root, s] : union_find_segments(mask, static_cast<std::uint8_t>(k))) {
                pixels[name] += s.pixels;
                labeled += s.pixels;
                const double n = static_cast<double>(s.pixels);
                segs.emplace(name, s.pixels, s.row_sum / n, s.col_sum / n);
            }
        }
    }
    for (const auto& c : stats.centroids) got_segs.emplace(c.class_name, c.pixels, c.row, c.col);
    double centroid_err = 0;
    bool same_segments = segs.size() == got_segs.size();
    for (auto a = segs.begin(), b = got_segs.begin(); same_segments && a != segs.end(); ++a, ++b) {
        same_segments = std::get<0>(*a) == std::get<0>(*b) && std::get<1>(*a) == std::get<1>(*b);
        centroid_err = std::max({centroid_err, std::abs(std::get<2>(*a) - std::get<2>(*b)),
                                 std::abs(std::get<3>(*a) - std::get<3>(*b))});
    }
    bool fractions = true;
    for (const auto& [name, c] : pixels)
        fractions = fractions && std::abs(stats.class_fractions.at(name) - static_cast<double>(c) / labeled) < 1e-12;
    o.require(stats.class_pixels == pixels, "class pixel counts");
    o.require(fractions, "class fractions");
    o.require(same_segments && centroid_err < 1e-12, "segments and centroids");
    o.detail << merged.vocabulary.size() << " classes from 3 sources; " << got_segs.size()
             << " segments match union-find (centroid err " << centroid_err << ")";
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("GSNET_THREADS=1 ") + GSNET_CLI + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 10. Two seeded CLI runs produce identical bytes.
void determinism(Outcome& o, const fs::path& work) {
    const auto corpus = work / "det_corpus";
    fs::remove_all(corpus);
    o.require(run_cli("synth --out " + corpus.string() + " --count 2 --size 32 --seed 7") == 0, "synth");
    const std::string cfg = std::string(GSNET_SOURCE_DIR) + "/configs/toy.json";
    for (const char* run : {"det_a", "det_b"}) {
        const auto out = work / run;
        fs::remove_all(out);
        o.require(run_cli("train --config " + cfg + " --manifest " + (corpus / "manifest.json").string() +
                          " --seed 3 --out " + out.string()) == 0,
                  "train");
        o.require(run_cli("infer --checkpoint " + (out / "checkpoint.gsnet").string() + " --image " +
                          (corpus / "synth_0.png").string() + " --out " + out.string()) == 0,
                  "infer");
    }
    std::size_t files = 0;
    for (const char* f : {"loss.csv", "checkpoint.gsnet", "mask.png", "overlay.png"}) {
        const auto a = slurp(work / "det_a" / f), b = slurp(work / "det_b" / f);
        o.require(!a.empty() && a == b, std::string("identical ") + f);
        ++files;
    }
    o.detail << files << " output files compared byte for byte";
}

}  // namespace

int main() {
    const fs::path work = fs::path(GSNET_TEST_WORKDIR) / "acceptance_work";
    fs::create_directories(work);
    const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
        {"gradient suite", gradients},
        {"shape suite", shapes},
        {"cost volume invariants", cost_volume},
        {"fusion residual bound", residual_bound},
        {"query permutation equivariance", permutation},
        {"overfit smoke test", overfit},
        {"patch inference", patches},
        {"metric oracles", metrics},
        {"dataset harmonization", [&](Outcome& o) { harmonization(o, work); }},
        {"determinism", [&](Outcome& o) { determinism(o, work); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (i == 0) o.require(secs < 120, "runtime under 2 min");
        if (i == 5) o.require(secs < 300, "runtime under 5 min");
        char head[96];
        std::snprintf(head, sizeof head, "%-4s criterion %2zu  %-32s %7.2fs  ", o.pass ? "PASS" : "FAIL", i + 1,
                      criteria[i].first, secs);
        std::cout << head << o.detail.str() << std::endl;
        failed += !o.pass;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
    return failed ? 1 : 0;
}

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gsnet/checkpoint.hpp"
#include "gsnet/data.hpp"
#include "gsnet/eval.hpp"
#include "gsnet/gradcheck.hpp"
#include "gsnet/image_io.hpp"
#include "gsnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gsnet;
using json = nlohmann::json;

namespace {

struct RunConfig {
    std::string config;
    std::vector<std::string> manifests;
    std::string checkpoint;
    std::string classes;
    std::string embeddings;
    std::string image;
    std::string out = "out";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int iters = -1;
    int count = 4;
    int size = 32;
    int trials = 3;
    std::vector<std::string> sim_files;
};

std::vector<std::string> split_classes(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!normalize_class_name(item).empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f << text;
}

// {"model": {...}, "train": {...}}; a file without either key is a bare model config.
std::pair<ModelConfig, TrainConfig> load_configs(const RunConfig& rc) {
    json j = {{"model", ModelConfig{}.to_json()}, {"train", TrainConfig{}.to_json()}};
    if (!rc.config.empty()) {
        std::ifstream in(rc.config);
        json file;
        try {
            in >> file;
        } catch (const json::exception& e) {
            throw ConfigError("cannot parse " + rc.config + ": " + e.what());
        }
        if (file.contains("model") || file.contains("train")) {
            if (file.contains("model")) j["model"] = file["model"];
            if (file.contains("train")) j["train"] = file["train"];
        } else {
            j["model"] = file;
        }
    }
    for (const auto& o : rc.overrides) {
        const auto eq = o.find('=');
        std::string key = o.substr(0, eq);
        if (eq == std::string::npos || key.empty()) {
            throw ConfigError("override must look like key=value: '" + o + "'");
        }
        if (key.rfind("model.", 0) != 0 && key.rfind("train.", 0) != 0) {
            key = "model." + key;
        }
        std::string ptr = "/" + key;
        std::replace(ptr.begin(), ptr.end(), '.', '/');
        const json::json_pointer p(ptr);
        if (!j.contains(p)) {
            throw ConfigError("unknown config key: " + key);
        }
        try {
            j[p] = json::parse(o.substr(eq + 1));
        } catch (const json::exception&) {
            j[p] = o.substr(eq + 1);
        }
    }
    auto model = ModelConfig::from_json(j["model"]);
    auto train = TrainConfig::from_json(j["train"]);
    if (rc.seed_given) {
        model.seed = rc.seed;
        train.seed = rc.seed;
    }
    if (rc.iters >= 0) {
        train.iterations = rc.iters;
    }
    model.validate();
    train.validate();
    return {model, train};
}

QuerySet make_queries(const ModelConfig& cfg, const std::vector<std::string>& names, const std::string& embeddings) {
    const PromptTemplate prompt(cfg.prompt_template);
    if (!embeddings.empty()) {
        return embed_queries(names, FileProvider(embeddings), prompt, cfg.embed_dim);
    }
    return embed_queries(names, HashProvider(cfg.text_seed), prompt, cfg.embed_dim);
}

// Native-size images go straight through; larger ones use the patch plan.
Tensor<float> predict_logits(const GSNet<float>& model, const Tensor<float>& image, const QuerySet& q,
                             std::size_t* patches = nullptr) {
    const auto& cfg = model.config();
    const std::int64_t h = image.dim(1), w = image.dim(2), s = cfg.image_size;
    if (h > s || w > s) {
        const PatchPlan plan = make_plan(cfg.patch_canvas, cfg.patch_size);
        if (patches) *patches = plan.origins.size();
        const PatchPredictor<float> predict = [&](const Tensor<float>& patch) {
            return resize_logits(model.infer(resize_image(patch, s, s), q), plan.patch, plan.patch);
        };
        return patch_inference(image, predict, plan);
    }
    if (patches) *patches = 1;
    if (h == s && w == s) {
        return model.infer(image, q);
    }
    return resize_logits(model.infer(resize_image(image, s, s), q), h, w);
}

std::unique_ptr<GSNet<float>> load_model(const std::string& path, json* meta = nullptr) {
    const Checkpoint ck = read_checkpoint(path);
    if (!ck.metadata.contains("model")) {
        throw CheckpointError("checkpoint has no model config: " + path);
    }
    auto model = std::make_unique<GSNet<float>>(ModelConfig::from_json(ck.metadata["model"]));
    load_parameters(ck, model->params());
    if (meta) *meta = ck.metadata;
    return model;
}

int cmd_train(const RunConfig& rc) {
    if (!rc.seed_given) {
        throw UsageError("train needs --seed");
    }
    if (rc.manifests.size() != 1) {
        throw UsageError("train takes exactly one --manifest");
    }
    auto [mcfg, tcfg] = load_configs(rc);
    const auto manifest = load_manifest(rc.manifests[0]);
    if (manifest.samples.empty()) {
        throw ContractError("manifest has no samples: " + rc.manifests[0]);
    }
    std::vector<Sample<float>> samples;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        auto s = load_sample(manifest, i);
        const std::int64_t n = mcfg.image_size;
        if (s.image.dim(1) != n || s.image.dim(2) != n) {
            s.image = resize_image(s.image, n, n);
            s.mask = resize_mask(s.mask, n, n);
        }
        samples.push_back(std::move(s));
    }
    GSNet<float> model(mcfg);
    const QuerySet q = make_queries(mcfg, manifest.vocabulary.names(), rc.embeddings);
    AdamW<float> opt(tcfg);

    fs::create_directories(rc.out);
    std::ostringstream log;
    log << "step,loss\n";
    double first = 0, last = 0;
    for (int step = 0; step < tcfg.iterations; ++step) {
        std::vector<const Sample<float>*> batch;
        for (int b = 0; b < tcfg.batch_size; ++b) {
            batch.push_back(&samples[static_cast<std::size_t>(step * tcfg.batch_size + b) % samples.size()]);
        }
        last = train_step(model, opt, batch, q);
        if (step == 0) first = last;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%d,%.9g\n", step, last);
        log << buf;
    }
    write_text(fs::path(rc.out) / "loss.csv", log.str());
    const json meta = {{"model", mcfg.to_json()}, {"train", tcfg.to_json()}, {"classes", manifest.vocabulary.names()}};
    write_checkpoint(fs::path(rc.out) / "checkpoint.gsnet", model.params(), meta);
    std::cout << "trained " << tcfg.iterations << " steps on " << samples.size() << " samples: loss " << first
              << " -> " << last << "\n";
    return 0;
}

int cmd_infer(const RunConfig& rc) {
    json meta;
    const auto model = load_model(rc.checkpoint, &meta);
    auto names = split_classes(rc.classes);
    if (names.empty()) {
        names = meta.value("classes", std::vector<std::string>{});
    }
    if (names.empty()) {
        throw UsageError("infer needs --classes");
    }
    const QuerySet q = make_queries(model->config(), names, rc.embeddings);
    const auto image = read_rgb_png(rc.image);
    std::size_t patches = 0;
    const auto mask = predict_labels(predict_logits(*model, image, q, &patches));
    fs::create_directories(rc.out);
    write_mask_png(fs::path(rc.out) / "mask.png", mask);
    write_rgb_png(fs::path(rc.out) / "overlay.png", make_overlay(image, mask));
    std::cout << "segmented " << image.dim(1) << "x" << image.dim(2) << " into " << names.size()
              << " classes using " << patches << (patches == 1 ? " pass\n" : " patches\n");
    return 0;
}

int cmd_eval(const RunConfig& rc) {
    if (rc.manifests.empty()) {
        throw UsageError("eval needs at least one --manifest");
    }
    const auto model = load_model(rc.checkpoint);
    std::vector<std::pair<std::string, double>> results;
    for (const auto& path : rc.manifests) {
        const auto manifest = load_manifest(path);
        const QuerySet q = make_queries(model->config(), manifest.vocabulary.names(), rc.embeddings);
        ConfusionMatrix cm(static_cast<std::int64_t>(manifest.vocabulary.size()));
        for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
            const auto s = load_sample(manifest, i);
            accumulate(predict_labels(predict_logits(*model, s.image, q)), s.mask, cm);
        }
        results.emplace_back(manifest.name, miou(cm).miou);
    }
    fs::create_directories(rc.out);
    const auto text = format_report_text(results);
    write_text(fs::path(rc.out) / "report.txt", text);
    write_text(fs::path(rc.out) / "report.csv", format_report_csv(results));
    std::cout << text;
    return 0;
}

int cmd_stats(const RunConfig& rc) {
    if (rc.manifests.size() != 1) {
        throw UsageError("stats takes exactly one --manifest");
    }
    const auto stats = compute_stats(load_manifest(rc.manifests[0]));
    fs::create_directories(rc.out);
    write_text(fs::path(rc.out) / "stats.json", stats.to_json().dump(2) + "\n");
    std::cout << "read " << stats.samples_read << " samples, skipped " << stats.skipped.size() << "\n";
    return 0;
}

int cmd_merge(const RunConfig& rc) {
    if (rc.manifests.empty()) {
        throw UsageError("merge needs at least one --manifest");
    }
    std::vector<DatasetManifest> in;
    for (const auto& p : rc.manifests) {
        in.push_back(load_manifest(p));
    }
    const auto merged = merge_datasets(in);
    fs::create_directories(rc.out);
    write_manifest(fs::path(rc.out) / "manifest.json", merged);
    std::cout << "merged " << in.size() << " manifests: " << merged.vocabulary.size() << " classes, "
              << merged.samples.size() << " samples\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& rc, bool save) {
    const auto rows = run_gradient_suite(rc.seed, rc.trials);
    const auto table = format_gradcheck_table(rows);
    std::cout << table;
    if (save) {
        fs::create_directories(rc.out);
        write_text(fs::path(rc.out) / "gradcheck.txt", table);
    }
    for (const auto& r : rows) {
        if (!r.pass) return 1;
    }
    return 0;
}

QuerySet read_embedding_set(const std::string& path) {
    std::ifstream in(path);
    json j;
    try {
        in >> j;
        QuerySet q;
        const auto& vecs = j.at("vectors");
        const auto dim = j.at("dim").get<std::int64_t>();
        q.embeddings = Tensor<double>({static_cast<std::int64_t>(vecs.size()), dim});
        std::int64_t r = 0;
        for (const auto& [name, v] : vecs.items()) {
            const auto row = v.get<std::vector<double>>();
            if (static_cast<std::int64_t>(row.size()) != dim) {
                throw ContractError("embedding for '" + name + "' in " + path + " has the wrong length");
            }
            for (std::int64_t k = 0; k < dim; ++k) {
                q.embeddings.at({r, k}) = row[static_cast<std::size_t>(k)];
            }
            q.names.push_back(name);
            ++r;
        }
        return q;
    } catch (const json::exception& e) {
        throw ContractError("malformed embedding file " + path + ": " + e.what());
    }
}

int cmd_simcheck(const RunConfig& rc) {
    const double d = hausdorff_label_similarity(read_embedding_set(rc.sim_files[0]), read_embedding_set(rc.sim_files[1]));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f\n", d);
    std::cout << buf;
    return 0;
}

int cmd_synth(const RunConfig& rc) {
    auto names = split_classes(rc.classes);
    if (names.empty()) {
        names = {"field", "building", "water"};
    }
    const auto path = write_synthetic_corpus(rc.out, "synth", names, rc.count, rc.size, rc.seed);
    std::cout << path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GSNet open-vocabulary segmentation toolkit"};
    app.require_subcommand(1);
    RunConfig rc;

    auto add_out = [&](CLI::App* c) { return c->add_option("--out", rc.out, "Output directory"); };
    auto add_seed = [&](CLI::App* c) {
        c->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t s) { rc.seed = s; rc.seed_given = true; }, "Random seed");
    };
    auto add_model_opts = [&](CLI::App* c) {
        c->add_option("--config", rc.config, "Model/train config JSON")->check(CLI::ExistingFile);
        c->add_option("--override", rc.overrides, "key=value config override (repeatable)");
    };

    auto* train = app.add_subcommand("train", "Train on a manifest");
    add_model_opts(train);
    train->add_option("--manifest", rc.manifests, "Dataset manifest")->required()->check(CLI::ExistingFile);
    train->add_option("--iters", rc.iters, "Iteration count (overrides the config)");
    train->add_option("--embeddings", rc.embeddings, "Class embedding file")->check(CLI::ExistingFile);
    add_seed(train);
    add_out(train);

    auto* infer = app.add_subcommand("infer", "Segment one image");
    infer->add_option("--checkpoint", rc.checkpoint)->required()->check(CLI::ExistingFile);
    infer->add_option("--image", rc.image)->required()->check(CLI::ExistingFile);
    infer->add_option("--classes", rc.classes, "Comma-separated class names");
    infer->add_option("--embeddings", rc.embeddings, "Class embedding file")->check(CLI::ExistingFile);
    add_out(infer);

    auto* eval = app.add_subcommand("eval", "mIoU report over manifests");
    eval->add_option("--checkpoint", rc.checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", rc.manifests)->required()->check(CLI::ExistingFile);
    eval->add_option("--embeddings", rc.embeddings, "Class embedding file")->check(CLI::ExistingFile);
    add_out(eval);

    auto* stats = app.add_subcommand("stats", "Mask statistics for a manifest");
    stats->add_option("--manifest", rc.manifests)->required()->check(CLI::ExistingFile);
    add_out(stats);

    auto* merge = app.add_subcommand("merge", "Harmonize manifests into one vocabulary");
    merge->add_option("--manifest", rc.manifests)->required()->check(CLI::ExistingFile);
    add_out(merge);

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    grad->add_option("--trials", rc.trials, "Random trials per op");
    add_seed(grad);
    auto* grad_out = add_out(grad);

    auto* sim = app.add_subcommand("simcheck", "Hausdorff similarity of two embedding files");
    sim->add_option("files", rc.sim_files)->required()->expected(2)->check(CLI::ExistingFile);

    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
    synth->add_option("--classes", rc.classes, "Comma-separated class names");
    synth->add_option("--count", rc.count, "Number of samples");
    synth->add_option("--size", rc.size, "Image extent");
    add_seed(synth);
    add_out(synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(rc);
        if (*infer) return cmd_infer(rc);
        if (*eval) return cmd_eval(rc);
        if (*stats) return cmd_stats(rc);
        if (*merge) return cmd_merge(rc);
        if (*grad) return cmd_gradcheck(rc, grad_out->count() > 0);
        if (*sim) return cmd_simcheck(rc);
        if (*synth) return cmd_synth(rc);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

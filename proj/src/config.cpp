#include "gsnet/config.hpp"

#include <fstream>

namespace gsnet {

TrainPolicy parse_policy(const std::string& s) {
    if (s == "freeze") {
        return TrainPolicy::Freeze;
    }
    if (s == "attention_qv") {
        return TrainPolicy::AttentionQV;
    }
    if (s == "full") {
        return TrainPolicy::Full;
    }
    throw ConfigError("unknown training policy '" + s + "' (expected freeze, attention_qv or full)");
}

std::string policy_name(TrainPolicy p) {
    switch (p) {
        case TrainPolicy::Freeze:
            return "freeze";
        case TrainPolicy::AttentionQV:
            return "attention_qv";
        case TrainPolicy::Full:
            return "full";
    }
    return "?";
}

void EncoderConfig::validate(const std::string& which) const {
    auto fail = [&](const std::string& msg) { throw ConfigError(which + ": " + msg); };
    if (patch_stride != 8 && patch_stride != 16) {
        fail("patch_stride must be 8 or 16");
    }
    if (depth < 1 || width < 1 || heads < 1 || mlp_ratio < 1) {
        fail("depth, width, heads and mlp_ratio must be positive");
    }
    if (width % heads != 0) {
        fail("width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
    }
    if (tap_n1 < 1 || tap_n2 < 1 || tap_n1 > depth || tap_n2 > depth) {
        fail("tap layers must lie in [1, depth]");
    }
}

void ModelConfig::validate() const {
    generalist.validate("generalist");
    specialist.validate("specialist");
    if (generalist.patch_stride != 16) {
        throw ConfigError("generalist patch_stride must be 16");
    }
    if (specialist.patch_stride != 8) {
        throw ConfigError("specialist patch_stride must be 8");
    }
    if (image_size < 16 || image_size % 16 != 0) {
        throw ConfigError("image_size must be a positive multiple of 16");
    }
    if (embed_dim < 8 || latent_dim < 1 || tap_dim < 1 || decoder_dim < 1) {
        throw ConfigError("embed_dim must be >= 8; latent_dim, tap_dim, decoder_dim positive");
    }
    if (gn_groups < 1 || decoder_dim % gn_groups != 0) {
        throw ConfigError("decoder_dim must be divisible by gn_groups");
    }
    if (patch_size < 16 || patch_size % 16 != 0 || patch_canvas < patch_size) {
        throw ConfigError("patch_size must be a multiple of 16 no larger than patch_canvas");
    }
}

namespace {

nlohmann::json encoder_json(const EncoderConfig& e) {
    return {{"patch_stride", e.patch_stride}, {"depth", e.depth}, {"width", e.width}, {"heads", e.heads},
            {"mlp_ratio", e.mlp_ratio},       {"taps", {e.tap_n1, e.tap_n2}},       {"policy", policy_name(e.policy)}};
}

void encoder_from_json(const nlohmann::json& j, EncoderConfig& e) {
    e.patch_stride = j.value("patch_stride", e.patch_stride);
    e.depth = j.value("depth", e.depth);
    e.width = j.value("width", e.width);
    e.heads = j.value("heads", e.heads);
    e.mlp_ratio = j.value("mlp_ratio", e.mlp_ratio);
    if (j.contains("taps")) {
        const auto taps = j.at("taps").get<std::vector<int>>();
        if (taps.size() != 2) {
            throw ConfigError("taps must list exactly two layers");
        }
        e.tap_n1 = taps[0];
        e.tap_n2 = taps[1];
    }
    if (j.contains("policy")) {
        e.policy = parse_policy(j.at("policy").get<std::string>());
    }
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
    return {{"image_size", image_size},
            {"generalist", encoder_json(generalist)},
            {"specialist", encoder_json(specialist)},
            {"embed_dim", embed_dim},
            {"latent_dim", latent_dim},
            {"tap_dim", tap_dim},
            {"decoder_dim", decoder_dim},
            {"gn_groups", gn_groups},
            {"seed", seed},
            {"text_seed", text_seed},
            {"prompt_template", prompt_template},
            {"patch_canvas", patch_canvas},
            {"patch_size", patch_size}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.image_size = j.value("image_size", c.image_size);
        if (j.contains("generalist")) {
            encoder_from_json(j.at("generalist"), c.generalist);
        }
        if (j.contains("specialist")) {
            encoder_from_json(j.at("specialist"), c.specialist);
        }
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.latent_dim = j.value("latent_dim", c.latent_dim);
        c.tap_dim = j.value("tap_dim", c.tap_dim);
        c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
        c.gn_groups = j.value("gn_groups", c.gn_groups);
        c.seed = j.value("seed", c.seed);
        c.text_seed = j.value("text_seed", c.text_seed);
        c.prompt_template = j.value("prompt_template", c.prompt_template);
        c.patch_canvas = j.value("patch_canvas", c.patch_canvas);
        c.patch_size = j.value("patch_size", c.patch_size);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open model config: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed model config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void ModelConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key=value: '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json j = to_json();
    nlohmann::json::json_pointer ptr("/" + [&] {
        std::string k = key;
        for (auto& ch : k) {
            if (ch == '.') {
                ch = '/';
            }
        }
        return k;
    }());
    if (!j.contains(ptr)) {
        throw ConfigError("unknown config key: " + key);
    }
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // bare strings such as policy names
    }
    j[ptr] = value;
    *this = from_json(j);
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.image_size = 32;
    c.generalist = {16, 2, 8, 2, 2, 1, 2, TrainPolicy::AttentionQV};
    c.specialist = {8, 2, 8, 2, 2, 1, 2, TrainPolicy::Freeze};
    c.embed_dim = 8;
    c.latent_dim = 4;
    c.tap_dim = 4;
    c.decoder_dim = 4;
    c.gn_groups = 2;
    c.patch_canvas = 64;
    c.patch_size = 48;
    return c;
}

}  // namespace gsnet

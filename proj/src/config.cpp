#include "ttad/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ttad {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& why) {
    throw std::invalid_argument("config error: " + where + ": " + why);
}

// Consumes recognized keys from a copied object; leftovers are unknown keys.
class Section {
public:
    Section(const json& j, std::string name) : obj_(j), name_(std::move(name)) {
        if (!obj_.is_object()) fail(name_, "must be an object");
    }

    void get(const char* key, bool& out) {
        if (auto* v = find(key)) {
            if (!v->is_boolean()) fail(name_ + "." + key, "expected a boolean");
            out = v->get<bool>();
            obj_.erase(key);
        }
    }
    void get(const char* key, int& out) {
        if (auto* v = find(key)) {
            if (!v->is_number_integer()) fail(name_ + "." + key, "expected an integer");
            out = v->get<int>();
            obj_.erase(key);
        }
    }
    void get(const char* key, int64_t& out) {
        if (auto* v = find(key)) {
            if (!v->is_number_integer()) fail(name_ + "." + key, "expected an integer");
            out = v->get<int64_t>();
            obj_.erase(key);
        }
    }
    void get(const char* key, uint64_t& out) {
        if (auto* v = find(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && v->get<int64_t>() < 0 && !v->is_number_unsigned()))
                fail(name_ + "." + key, "expected a non-negative integer");
            out = v->get<uint64_t>();
            obj_.erase(key);
        }
    }
    void get(const char* key, double& out) {
        if (auto* v = find(key)) {
            if (!v->is_number()) fail(name_ + "." + key, "expected a number");
            out = v->get<double>();
            obj_.erase(key);
        }
    }
    void get(const char* key, std::string& out) {
        if (auto* v = find(key)) {
            if (!v->is_string()) fail(name_ + "." + key, "expected a string");
            out = v->get<std::string>();
            obj_.erase(key);
        }
    }

    void finish() {
        if (!obj_.empty()) fail(name_, "unknown key \"" + obj_.begin().key() + "\"");
    }

private:
    const json* find(const char* key) const { return obj_.contains(key) ? &obj_.at(key) : nullptr; }
    json obj_;
    std::string name_;
};

void check(bool ok, const std::string& where, const std::string& why) {
    if (!ok) fail(where, why);
}

}  // namespace

void RunConfig::validate() const {
    check(data.train_frac > 0.0 && data.train_frac < 1.0, "data.train_frac", "must lie in (0, 1)");
    data.window.validate();

    check(model.d_model > 0, "model.d_model", "must be positive");
    check(model.heads > 0 && model.d_model % model.heads == 0, "model.heads", "must divide d_model");
    check(model.layers >= 1, "model.layers", "must be at least 1");
    check(model.ffn_mult >= 1, "model.ffn_mult", "must be at least 1");
    check(model.vocab >= 2, "model.vocab", "must be at least 2");
    check(model.max_patches >= data.window.patches_per_window(), "model.max_patches",
          "must cover the patches produced by one window");
    check(model.exo_kmax >= 0, "model.exo_kmax", "must be non-negative");
    check(model.tau > 0.0, "model.tau", "must be positive");

    check(condenser.mu > 0.0 && condenser.mu < 1.0, "condenser.mu", "must lie in (0, 1)");

    check(train.epochs >= 1, "train.epochs", "must be at least 1");
    check(train.batch >= 1, "train.batch", "must be at least 1");
    check(train.train_stride >= 0, "train.train_stride", "must be non-negative");
    check(train.lr > 0.0, "train.lr", "must be positive");
    check(train.beta1 >= 0.0 && train.beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
    check(train.beta2 >= 0.0 && train.beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
    check(train.eps > 0.0, "train.eps", "must be positive");

    check(eval.score_stride >= 1, "eval.score_stride", "must be at least 1");
    check(eval.infer_mask_ratio >= 0.0 && eval.infer_mask_ratio < 1.0, "eval.infer_mask_ratio",
          "must lie in [0, 1)");
    check(eval.threshold_ratio > 0.0 && eval.threshold_ratio <= 1.0, "eval.threshold_ratio",
          "must lie in (0, 1]");
    check(eval.range_alpha >= 0.0 && eval.range_alpha <= 1.0, "eval.range_alpha", "must lie in [0, 1]");
    check(eval.vus_grid_points >= 1, "eval.vus_grid_points", "must be at least 1");
    check(eval.vus_lmax >= 0.0, "eval.vus_lmax", "must be non-negative");
    check(eval.vus_l0 >= 0.0, "eval.vus_l0", "must be non-negative");
}

RunConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        fail("document", e.what());
    }
    if (!root.is_object()) fail("document", "top level must be an object");

    RunConfig cfg;
    json rest = root;

    if (root.contains("data")) {
        Section s(root.at("data"), "data");
        s.get("series", cfg.data.series);
        s.get("text", cfg.data.text);
        s.get("train_frac", cfg.data.train_frac);
        s.get("window", cfg.data.window.window);
        s.get("stride", cfg.data.window.stride);
        s.get("patch", cfg.data.window.patch);
        s.get("patch_stride", cfg.data.window.patch_stride);
        s.get("mask_ratio", cfg.data.window.mask_ratio);
        s.finish();
        rest.erase("data");
    }
    if (root.contains("model")) {
        Section s(root.at("model"), "model");
        s.get("d_model", cfg.model.d_model);
        s.get("layers", cfg.model.layers);
        s.get("heads", cfg.model.heads);
        s.get("ffn_mult", cfg.model.ffn_mult);
        s.get("vocab", cfg.model.vocab);
        s.get("max_patches", cfg.model.max_patches);
        s.get("exo_kmax", cfg.model.exo_kmax);
        s.get("exo_pooled", cfg.model.exo_pooled);
        s.get("tau", cfg.model.tau);
        s.get("symmetric_denominator", cfg.model.symmetric_denominator);
        s.get("use_exo", cfg.model.use_exo);
        s.get("use_endo", cfg.model.use_endo);
        s.get("cross_modal", cfg.model.cross_modal);
        s.get("reversed_order", cfg.model.reversed_order);
        s.get("endo_drop_stats", cfg.model.endo.drop_minmaxmedian);
        s.get("endo_drop_trend", cfg.model.endo.drop_trend);
        s.get("endo_drop_lag", cfg.model.endo.drop_lag);
        s.get("endo_template_variant", cfg.model.endo.template_variant);
        s.finish();
        rest.erase("model");
    }
    if (root.contains("condenser")) {
        Section s(root.at("condenser"), "condenser");
        s.get("mu", cfg.condenser.mu);
        s.get("bypass", cfg.condenser.bypass);
        s.get("variant_time_conditioned", cfg.condenser.variant_time_conditioned);
        s.get("infer_soft", cfg.condenser.infer_soft);
        s.finish();
        rest.erase("condenser");
    }
    if (root.contains("train")) {
        Section s(root.at("train"), "train");
        s.get("epochs", cfg.train.epochs);
        s.get("batch", cfg.train.batch);
        s.get("train_stride", cfg.train.train_stride);
        s.get("lr", cfg.train.lr);
        s.get("beta1", cfg.train.beta1);
        s.get("beta2", cfg.train.beta2);
        s.get("eps", cfg.train.eps);
        s.get("seed", cfg.train.seed);
        s.get("use_align", cfg.train.use_align);
        s.get("use_condenser_loss", cfg.train.use_condenser_loss);
        s.get("use_smooth", cfg.train.use_smooth);
        s.get("use_recon", cfg.train.use_recon);
        s.get("rec_sum", cfg.train.rec_sum);
        s.finish();
        rest.erase("train");
    }
    if (root.contains("eval")) {
        Section s(root.at("eval"), "eval");
        s.get("score_stride", cfg.eval.score_stride);
        s.get("infer_mask_ratio", cfg.eval.infer_mask_ratio);
        s.get("threshold_ratio", cfg.eval.threshold_ratio);
        s.get("range_alpha", cfg.eval.range_alpha);
        s.get("vus_grid_points", cfg.eval.vus_grid_points);
        s.get("vus_lmax", cfg.eval.vus_lmax);
        s.get("vus_l0", cfg.eval.vus_l0);
        s.get("ktt_dump", cfg.eval.ktt_dump);
        s.get("psi_dump", cfg.eval.psi_dump);
        s.finish();
        rest.erase("eval");
    }
    if (!rest.empty()) fail("document", "unknown section \"" + rest.begin().key() + "\"");

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string RunConfig::to_json(int indent) const {
    nlohmann::ordered_json j;
    j["data"] = {{"series", data.series},
                 {"text", data.text},
                 {"train_frac", data.train_frac},
                 {"window", data.window.window},
                 {"stride", data.window.stride},
                 {"patch", data.window.patch},
                 {"patch_stride", data.window.patch_stride},
                 {"mask_ratio", data.window.mask_ratio}};
    j["model"] = {{"d_model", model.d_model},
                  {"layers", model.layers},
                  {"heads", model.heads},
                  {"ffn_mult", model.ffn_mult},
                  {"vocab", model.vocab},
                  {"max_patches", model.max_patches},
                  {"exo_kmax", model.exo_kmax},
                  {"exo_pooled", model.exo_pooled},
                  {"tau", model.tau},
                  {"symmetric_denominator", model.symmetric_denominator},
                  {"use_exo", model.use_exo},
                  {"use_endo", model.use_endo},
                  {"cross_modal", model.cross_modal},
                  {"reversed_order", model.reversed_order},
                  {"endo_drop_stats", model.endo.drop_minmaxmedian},
                  {"endo_drop_trend", model.endo.drop_trend},
                  {"endo_drop_lag", model.endo.drop_lag},
                  {"endo_template_variant", model.endo.template_variant}};
    j["condenser"] = {{"mu", condenser.mu},
                      {"bypass", condenser.bypass},
                      {"variant_time_conditioned", condenser.variant_time_conditioned},
                      {"infer_soft", condenser.infer_soft}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch", train.batch},
                  {"train_stride", train.train_stride},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"eps", train.eps},
                  {"seed", train.seed},
                  {"use_align", train.use_align},
                  {"use_condenser_loss", train.use_condenser_loss},
                  {"use_smooth", train.use_smooth},
                  {"use_recon", train.use_recon},
                  {"rec_sum", train.rec_sum}};
    j["eval"] = {{"score_stride", eval.score_stride},
                 {"infer_mask_ratio", eval.infer_mask_ratio},
                 {"threshold_ratio", eval.threshold_ratio},
                 {"range_alpha", eval.range_alpha},
                 {"vus_grid_points", eval.vus_grid_points},
                 {"vus_lmax", eval.vus_lmax},
                 {"vus_l0", eval.vus_l0},
                 {"ktt_dump", eval.ktt_dump},
                 {"psi_dump", eval.psi_dump}};
    return j.dump(indent);
}

const std::vector<std::string> kAblationNames = {
    "full",      "no-exo", "no-endo",        "no-align",         "no-condenser",
    "no-recon",  "no-lsm", "reversed-order", "condenser-variant"};

void apply_ablation(RunConfig& cfg, const std::string& name) {
    if (name == "full") return;
    if (name == "no-exo") {
        cfg.model.use_exo = false;
    } else if (name == "no-endo") {
        cfg.model.use_endo = false;
    } else if (name == "no-align") {
        cfg.train.use_align = false;
    } else if (name == "no-condenser") {
        cfg.condenser.bypass = true;
        cfg.train.use_condenser_loss = false;
        cfg.train.use_smooth = false;
    } else if (name == "no-recon") {
        cfg.model.cross_modal = false;
    } else if (name == "no-lsm") {
        cfg.train.use_smooth = false;
    } else if (name == "reversed-order") {
        cfg.model.reversed_order = true;
    } else if (name == "condenser-variant") {
        cfg.condenser.variant_time_conditioned = true;
    } else {
        throw std::invalid_argument("unknown ablation: " + name);
    }
}

}  // namespace ttad

// SPDX-License-Identifier: Apache-2.0
#include "fairmib/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fairmib/errors.hpp"

using nlohmann::json;

namespace fairmib {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_compression: return "no_compression";
        case Variant::no_conditioning: return "no_conditioning";
        case Variant::no_consistency: return "no_consistency";
        case Variant::no_feature_view: return "no_feature_view";
        case Variant::no_structure_view: return "no_structure_view";
        case Variant::no_diffusion_view: return "no_diffusion_view";
        case Variant::baseline_gcn: return "baseline_gcn";
    }
    throw StateError("unreachable variant");
}

Variant variant_from_name(const std::string& name) {
    static const std::map<std::string, Variant> table = {
        {"full", Variant::full},
        {"no_compression", Variant::no_compression},
        {"no_conditioning", Variant::no_conditioning},
        {"no_consistency", Variant::no_consistency},
        {"no_feature_view", Variant::no_feature_view},
        {"no_structure_view", Variant::no_structure_view},
        {"no_diffusion_view", Variant::no_diffusion_view},
        {"baseline_gcn", Variant::baseline_gcn},
    };
    auto it = table.find(name);
    if (it == table.end()) throw ValidationError("unknown variant '" + name + "'");
    return it->second;
}

void RunConfig::validate() const {
    split.validate();
    if (dataset.empty()) synth.validate();
    if (alpha <= 0.0 || alpha > 1.0) throw ValidationError("alpha must lie in (0,1]");
    if (hops < 1) throw ValidationError("hops must be >= 1");
    if (hidden <= 0 || latent <= 0 || projector_hidden <= 0)
        throw ValidationError("model widths must be positive");
    if (lambda_kl < 0.0 || lambda_con < 0.0)
        throw ValidationError("loss weights must be non-negative");
    if (tau <= 0.0) throw ValidationError("tau must be positive");
    if (eps_clip <= 0.0 || eps_clip >= 0.5)
        throw ValidationError("eps_clip must lie in (0, 0.5)");
    if (propensity_lr <= 0.0 || propensity_epochs < 1)
        throw ValidationError("propensity fit settings must be positive");
    if (lr <= 0.0) throw ValidationError("lr must be positive");
    if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (seeds.empty()) throw ValidationError("seeds must be nonempty");
}

std::string RunConfig::to_json() const {
    json j;
    j["dataset"] = dataset;
    j["synth"] = {{"cells", synth.cell_sizes},
                  {"p_intra", synth.intra_cell_edge_prob},
                  {"p_cross", synth.cross_cell_edge_prob},
                  {"dim", synth.feature_dim},
                  {"group_shift", synth.group_mean_shift},
                  {"class_shift", synth.class_mean_shift},
                  {"noise", synth.noise_scale},
                  {"seed", synth.seed}};
    j["split"] = {{"train", split.train_fraction},
                  {"val", split.val_fraction},
                  {"test", split.test_fraction},
                  {"seed", split.seed}};
    j["alpha"] = alpha;
    j["hops"] = hops;
    j["hidden"] = hidden;
    j["latent"] = latent;
    j["projector_hidden"] = projector_hidden;
    j["lambda_kl"] = effective_lambda_kl();
    j["lambda_con"] = effective_lambda_con();
    j["tau"] = tau;
    j["eps_clip"] = eps_clip;
    j["propensity_lr"] = propensity_lr;
    j["propensity_epochs"] = propensity_epochs;
    j["lr"] = lr;
    j["max_epochs"] = max_epochs;
    j["patience"] = patience;
    j["seeds"] = seeds;
    j["variant"] = variant_name(variant);
    j["scrub_sensitive"] = scrub_sensitive;
    j["symmetrize_infonce"] = symmetrize_infonce;
    j["inference_s_mode"] = inference_s_mode == InferenceSMode::observed ? "observed" : "neutral";
    return j.dump(2);
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string RunConfig::to_config_text() const {
    std::ostringstream out;
    if (!dataset.empty()) out << "dataset = " << dataset << "\n";
    out << "synth_cells = " << synth.cell_sizes[0] << "," << synth.cell_sizes[1] << ","
        << synth.cell_sizes[2] << "," << synth.cell_sizes[3] << "\n";
    out << "synth_p_intra = " << num(synth.intra_cell_edge_prob) << "\n";
    out << "synth_p_cross = " << num(synth.cross_cell_edge_prob) << "\n";
    out << "synth_dim = " << synth.feature_dim << "\n";
    out << "synth_group_shift = " << num(synth.group_mean_shift) << "\n";
    out << "synth_class_shift = " << num(synth.class_mean_shift) << "\n";
    out << "synth_noise = " << num(synth.noise_scale) << "\n";
    out << "synth_seed = " << synth.seed << "\n";
    out << "split_train = " << num(split.train_fraction) << "\n";
    out << "split_val = " << num(split.val_fraction) << "\n";
    out << "split_test = " << num(split.test_fraction) << "\n";
    out << "split_seed = " << split.seed << "\n";
    out << "alpha = " << num(alpha) << "\n";
    out << "hops = " << hops << "\n";
    out << "hidden = " << hidden << "\n";
    out << "latent = " << latent << "\n";
    out << "projector_hidden = " << projector_hidden << "\n";
    out << "lambda_kl = " << num(lambda_kl) << "\n";
    out << "lambda_con = " << num(lambda_con) << "\n";
    out << "tau = " << num(tau) << "\n";
    out << "eps_clip = " << num(eps_clip) << "\n";
    out << "propensity_lr = " << num(propensity_lr) << "\n";
    out << "propensity_epochs = " << propensity_epochs << "\n";
    out << "lr = " << num(lr) << "\n";
    out << "max_epochs = " << max_epochs << "\n";
    out << "patience = " << patience << "\n";
    out << "seeds = ";
    for (size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
    out << "\n";
    out << "variant = " << variant_name(variant) << "\n";
    out << "scrub_sensitive = " << (scrub_sensitive ? "true" : "false") << "\n";
    out << "symmetrize_infonce = " << (symmetrize_infonce ? "true" : "false") << "\n";
    out << "inference_s_mode = "
        << (inference_s_mode == InferenceSMode::observed ? "observed" : "neutral") << "\n";
    return out.str();
}

namespace {

struct KeyValue {
    std::string value;
    size_t line;
    bool used = false;
};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class ConfigReader {
  public:
    ConfigReader(const std::string& text, const std::string& origin) : origin_(origin) {
        std::istringstream in(text);
        std::string line;
        size_t no = 0;
        while (std::getline(in, line)) {
            ++no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                fail(no, "expected 'key = value', got '" + line + "'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) fail(no, "empty key");
            if (entries_.count(key)) fail(no, "duplicate key '" + key + "'");
            entries_[key] = {value, no, false};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    template <typename F>
    void take(const std::string& key, F&& apply) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return;
        it->second.used = true;
        try {
            apply(it->second.value);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& e) {
            fail(it->second.line, "bad value for '" + key + "': " + e.what());
        }
    }

    void finish() const {
        for (const auto& [key, kv] : entries_)
            if (!kv.used) fail(kv.line, "unknown config key '" + key + "'");
    }

    [[noreturn]] void fail(size_t line, const std::string& msg) const {
        throw ValidationError(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

  private:
    std::string origin_;
    std::map<std::string, KeyValue> entries_;
};

double to_double(const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw ValidationError("trailing characters in number '" + s + "'");
    return v;
}

long long to_int(const std::string& s) {
    size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw ValidationError("trailing characters in integer '" + s + "'");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ValidationError("expected true/false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    ConfigReader r(text, origin);
    RunConfig c;

    r.take("dataset", [&](const std::string& v) { c.dataset = v; });

    r.take("synth_cells", [&](const std::string& v) {
        const auto parts = split_list(v);
        if (parts.size() != 4)
            throw ValidationError("synth_cells needs 4 comma-separated sizes");
        for (int i = 0; i < 4; ++i)
            c.synth.cell_sizes[i] = static_cast<int>(to_int(parts[i]));
    });
    r.take("synth_p_intra",
           [&](const std::string& v) { c.synth.intra_cell_edge_prob = to_double(v); });
    r.take("synth_p_cross",
           [&](const std::string& v) { c.synth.cross_cell_edge_prob = to_double(v); });
    r.take("synth_dim", [&](const std::string& v) {
        c.synth.feature_dim = static_cast<int>(to_int(v));
    });
    r.take("synth_group_shift",
           [&](const std::string& v) { c.synth.group_mean_shift = to_double(v); });
    r.take("synth_class_shift",
           [&](const std::string& v) { c.synth.class_mean_shift = to_double(v); });
    r.take("synth_noise", [&](const std::string& v) { c.synth.noise_scale = to_double(v); });
    r.take("synth_seed", [&](const std::string& v) {
        c.synth.seed = static_cast<uint64_t>(to_int(v));
    });

    r.take("split_train", [&](const std::string& v) { c.split.train_fraction = to_double(v); });
    r.take("split_val", [&](const std::string& v) { c.split.val_fraction = to_double(v); });
    r.take("split_test", [&](const std::string& v) { c.split.test_fraction = to_double(v); });
    r.take("split_seed", [&](const std::string& v) {
        c.split.seed = static_cast<uint64_t>(to_int(v));
    });

    r.take("alpha", [&](const std::string& v) { c.alpha = to_double(v); });
    r.take("hops", [&](const std::string& v) { c.hops = static_cast<int>(to_int(v)); });
    r.take("hidden", [&](const std::string& v) { c.hidden = static_cast<int>(to_int(v)); });
    r.take("latent", [&](const std::string& v) { c.latent = static_cast<int>(to_int(v)); });
    r.take("projector_hidden",
           [&](const std::string& v) { c.projector_hidden = static_cast<int>(to_int(v)); });

    r.take("lambda_kl", [&](const std::string& v) { c.lambda_kl = to_double(v); });
    r.take("lambda_con", [&](const std::string& v) { c.lambda_con = to_double(v); });
    r.take("tau", [&](const std::string& v) { c.tau = to_double(v); });

    r.take("eps_clip", [&](const std::string& v) { c.eps_clip = to_double(v); });
    r.take("propensity_lr", [&](const std::string& v) { c.propensity_lr = to_double(v); });
    r.take("propensity_epochs",
           [&](const std::string& v) { c.propensity_epochs = static_cast<int>(to_int(v)); });

    r.take("lr", [&](const std::string& v) { c.lr = to_double(v); });
    r.take("max_epochs",
           [&](const std::string& v) { c.max_epochs = static_cast<int>(to_int(v)); });
    r.take("patience", [&](const std::string& v) { c.patience = static_cast<int>(to_int(v)); });

    r.take("seeds", [&](const std::string& v) {
        c.seeds.clear();
        for (const auto& tok : split_list(v))
            c.seeds.push_back(static_cast<uint64_t>(to_int(tok)));
    });
    r.take("variant", [&](const std::string& v) { c.variant = variant_from_name(v); });

    r.take("scrub_sensitive", [&](const std::string& v) { c.scrub_sensitive = to_bool(v); });
    r.take("symmetrize_infonce",
           [&](const std::string& v) { c.symmetrize_infonce = to_bool(v); });
    r.take("inference_s_mode", [&](const std::string& v) {
        if (v == "observed")
            c.inference_s_mode = InferenceSMode::observed;
        else if (v == "neutral")
            c.inference_s_mode = InferenceSMode::neutral;
        else
            throw ValidationError("inference_s_mode must be 'observed' or 'neutral'");
    });

    r.finish();
    c.validate();
    return c;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

}  // namespace fairmib

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairmib/graph.hpp"

namespace fairmib {

enum class Variant {
    full,
    no_compression,     // compression weight forced to 0
    no_conditioning,    // decoder input excludes S
    no_consistency,     // consistency weight forced to 0
    no_feature_view,
    no_structure_view,
    no_diffusion_view,
    baseline_gcn,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

enum class InferenceSMode { observed, neutral };

// One experiment description. Parsed from a flat key = value file with a
// strict schema: unknown keys are errors.
struct RunConfig {
    std::string dataset;  // bundle directory; empty -> synthetic generator
    SynthSpec synth;
    SplitSpec split;

    double alpha = 0.1;
    int hops = 3;

    int hidden = 16;
    int latent = 16;
    int projector_hidden = 16;

    double lambda_kl = 1e-3;
    double lambda_con = 1e-3;
    double tau = 0.5;

    double eps_clip = 0.05;
    double propensity_lr = 0.5;
    int propensity_epochs = 500;

    double lr = 1e-3;
    int max_epochs = 1000;
    int patience = 30;

    std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    Variant variant = Variant::full;

    bool scrub_sensitive = true;
    bool symmetrize_infonce = false;
    InferenceSMode inference_s_mode = InferenceSMode::observed;

    void validate() const;

    // Loss weights after applying the variant semantics.
    double effective_lambda_kl() const {
        return variant == Variant::no_compression ? 0.0 : lambda_kl;
    }
    double effective_lambda_con() const {
        return variant == Variant::no_consistency ? 0.0 : lambda_con;
    }
    bool condition_on_s() const { return variant != Variant::no_conditioning; }
    bool use_feature_view() const { return variant != Variant::no_feature_view; }
    bool use_structural_view() const { return variant != Variant::no_structure_view; }
    bool use_diffusion_view() const { return variant != Variant::no_diffusion_view; }

    RunConfig with_variant(Variant v) const {
        RunConfig c = *this;
        c.variant = v;
        return c;
    }

    // Snapshot with effective values (the recorded lambda of an ablation is
    // the forced one).
    std::string to_json() const;

    // Verbatim flat key = value rendering; feeding it back through
    // parse_config_text reproduces this config exactly.
    std::string to_config_text() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");
RunConfig parse_config_file(const std::string& path);

}  // namespace fairmib

// SPDX-License-Identifier: Apache-2.0
//
// fairmib command line: train / eval / ablate / gen-synth / gradcheck /
// dump-views / report. Exit codes: 0 success, 2 validation or usage error,
// 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairmib/errors.hpp"
#include "fairmib/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

void print_aggregate(const fairmib::ExperimentRecord& rec) {
    const auto& m = rec.aggregate.mean;
    const auto& s = rec.aggregate.stddev;
    auto pm = [](double mean, double sd) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean * 100.0, sd * 100.0);
        return std::string(buf);
    };
    std::cout << rec.variant << ": ACC " << pm(m.acc, s.acc) << "  F1 " << pm(m.f1, s.f1)
              << "  AUC " << (m.auc ? pm(*m.auc, s.auc.value_or(0.0)) : "n/a") << "  DP "
              << pm(m.dp_diff, s.dp_diff) << "  EO " << pm(m.eo_diff, s.eo_diff) << "  ("
              << rec.aggregate.count << " seeds, " << static_cast<int>(rec.wall_clock_sec)
              << "s)\n";
}

int run(int argc, char** argv) {
    CLI::App app{"FairMIB: fair multi-view graph representation learning"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Run a multi-seed training experiment");
    std::string train_config, train_out, train_dump;
    long long train_seed = -1;
    train->add_option("--config", train_config, "Run config file")->required();
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--seed", train_seed, "Override the config seed list with one seed");
    train->add_option("--dump-views", train_dump, "Also export the view matrices to DIR");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_out;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Dataset bundle directory (default: from checkpoint)");
    eval->add_option("--out", eval_out, "Write the metrics JSON here instead of stdout");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
    std::string ab_config, ab_out, ab_variants = "full,no_compression,no_conditioning,"
                                                 "no_consistency,baseline_gcn";
    ablate->add_option("--config", ab_config, "Base run config file")->required();
    ablate->add_option("--out", ab_out, "Output directory")->required();
    ablate->add_option("--variants", ab_variants, "Comma-separated variant list");

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset bundle");
    std::string gen_config, gen_out;
    gen->add_option("--config", gen_config, "Config file with the synth_* keys")->required();
    gen->add_option("--out", gen_out, "Bundle directory to create")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    unsigned long long gc_seed = 12345;
    bool gc_verbose = false;
    gc->add_option("--seed", gc_seed, "Instance seed");
    gc->add_flag("--verbose", gc_verbose, "Per-parameter error table");

    // dump-views
    auto* dv = app.add_subcommand("dump-views", "Export the three view matrices as CSV");
    std::string dv_config, dv_out;
    dv->add_option("--config", dv_config, "Run config file")->required();
    dv->add_option("--out", dv_out, "Output directory")->required();

    // report
    auto* rep = app.add_subcommand("report", "Render a comparison table from saved records");
    std::string rep_in, rep_format = "md", rep_out;
    rep->add_option("--in", rep_in, "Directory containing record.json files")->required();
    rep->add_option("--format", rep_format, "csv or md")->check(CLI::IsMember({"csv", "md"}));
    rep->add_option("--out", rep_out, "Write the table here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (train->parsed()) {
        fairmib::RunConfig cfg = fairmib::parse_config_file(train_config);
        if (train_seed >= 0) cfg.seeds = {static_cast<uint64_t>(train_seed)};
        if (!train_dump.empty()) fairmib::dump_views(cfg, train_dump);
        const auto rec = fairmib::run_experiment(cfg, train_out);
        print_aggregate(rec);
        for (const auto& r : rec.runs)
            if (!r.ok) std::cerr << "seed " << r.seed << " failed: " << r.error << "\n";
        return kExitOk;
    }

    if (eval->parsed()) {
        const auto report = fairmib::evaluate_checkpoint(eval_ckpt, eval_data);
        const std::string text = report.to_json();
        if (eval_out.empty()) {
            std::cout << text << "\n";
        } else {
            std::ofstream out(eval_out);
            if (!out) throw fairmib::IoError("cannot write '" + eval_out + "'");
            out << text << "\n";
        }
        return kExitOk;
    }

    if (ablate->parsed()) {
        const fairmib::RunConfig cfg = fairmib::parse_config_file(ab_config);
        std::vector<fairmib::Variant> variants;
        std::string tok;
        for (std::istringstream ss(ab_variants); std::getline(ss, tok, ',');)
            variants.push_back(fairmib::variant_from_name(tok));
        const auto results = fairmib::run_ablation_grid(cfg, variants, ab_out);
        for (const auto& [v, rec] : results) print_aggregate(rec);
        std::cout << "table: " << (std::filesystem::path(ab_out) / "ablation.md").string()
                  << "\n";
        return kExitOk;
    }

    if (gen->parsed()) {
        const fairmib::RunConfig cfg = fairmib::parse_config_file(gen_config);
        fairmib::GraphDataset g = fairmib::gen_synthetic(cfg.synth);
        g = fairmib::make_splits(g, cfg.split);
        fairmib::save_bundle(g, gen_out, cfg.split);
        std::cout << "wrote bundle: n=" << g.n << " m=" << g.m << " d=" << g.features.cols
                  << " -> " << gen_out << "\n";
        return kExitOk;
    }

    if (gc->parsed()) {
        const auto model = fairmib::run_model_gradcheck(gc_seed);
        const auto gcn = fairmib::run_gcn_gradcheck(gc_seed);
        auto show = [&](const char* name, const fairmib::GradcheckReport& r) {
            std::printf("%-10s %-4s  max rel err %.3e over %d entries (worst: %s)\n", name,
                        r.pass ? "ok" : "FAIL", r.max_rel_err, r.entries_checked,
                        r.worst_param.c_str());
            if (gc_verbose)
                for (const auto& e : r.per_param)
                    std::printf("  %-16s %.3e\n", e.param.c_str(), e.max_rel_err);
        };
        show("model", model);
        show("baseline", gcn);
        return model.pass && gcn.pass ? kExitOk : kExitNumeric;
    }

    if (dv->parsed()) {
        fairmib::dump_views(fairmib::parse_config_file(dv_config), dv_out);
        std::cout << "views written to " << dv_out << "\n";
        return kExitOk;
    }

    if (rep->parsed()) {
        const std::string table = fairmib::render_report(rep_in, rep_format == "md");
        if (rep_out.empty()) {
            std::cout << table;
        } else {
            std::ofstream out(rep_out);
            if (!out) throw fairmib::IoError("cannot write '" + rep_out + "'");
            out << table;
        }
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const fairmib::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

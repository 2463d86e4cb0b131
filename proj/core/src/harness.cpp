// SPDX-License-Identifier: Apache-2.0
#include "fairmib/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fairmib/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fairmib {

namespace {

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v * 100.0);
    return buf;
}

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::vector<double> observed_s_column(const GraphDataset& g) {
    std::vector<double> s(g.n);
    for (int i = 0; i < g.n; ++i) s[i] = static_cast<double>(g.sensitive[i]);
    return s;
}

std::vector<double> neutral_s_column(int n) { return std::vector<double>(n, 0.5); }

std::vector<double> sigmoid_column(const Matrix& logits) {
    std::vector<double> p(logits.rows);
    for (int i = 0; i < logits.rows; ++i) {
        const double z = logits(i, 0);
        p[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return p;
}

ModelConfig model_config_from(const RunConfig& cfg, int input_dim) {
    ModelConfig mc;
    mc.input_dim = input_dim;
    mc.hidden = cfg.hidden;
    mc.latent = cfg.latent;
    mc.projector_hidden = cfg.projector_hidden;
    mc.condition_on_s = cfg.condition_on_s();
    mc.use_feature_view = cfg.use_feature_view();
    mc.use_structural_view = cfg.use_structural_view();
    mc.use_diffusion_view = cfg.use_diffusion_view();
    return mc;
}

ViewConfig view_config_from(const RunConfig& cfg) {
    ViewConfig vc;
    vc.alpha = cfg.alpha;
    vc.hops = cfg.hops;
    vc.propensity.learning_rate = cfg.propensity_lr;
    vc.propensity.epochs = cfg.propensity_epochs;
    vc.propensity.clip = cfg.eps_clip;
    vc.scrub_sensitive = cfg.scrub_sensitive;
    return vc;
}

struct StagedLosses {
    TotalLossIds ids;
    LossBreakdown breakdown;
};

// Stages the complete objective for one forward pass: masked task loss, one
// KL per active view, consistency over the active codes.
StagedLosses stage_objective(Tape& tape, const ForwardIds& f, const RunConfig& cfg,
                             const GraphDataset& g, const std::vector<uint8_t>& mask) {
    StagedLosses out;
    out.ids.task = task_loss(tape, f.logits, g.labels, mask);
    std::vector<TensorId> codes;
    for (int slot = 0; slot < 3; ++slot) {
        if (!f.latents[slot]) continue;
        out.ids.kl[slot] = kl_standard_normal(tape, *f.latents[slot]);
        codes.push_back(f.latents[slot]->z);
    }
    out.ids.con = consistency_loss(tape, codes, cfg.tau, cfg.symmetrize_infonce);
    total_loss(tape, out.ids, cfg.effective_lambda_kl(), cfg.effective_lambda_con());
    out.breakdown = read_breakdown(tape, out.ids, cfg.effective_lambda_kl(),
                                   cfg.effective_lambda_con(), cfg.tau);
    return out;
}

std::string checkpoint_meta(const RunConfig& cfg, uint64_t seed, const char* kind,
                            int input_dim) {
    json j;
    j["kind"] = kind;
    j["seed"] = seed;
    j["input_dim"] = input_dim;
    j["config_text"] = cfg.to_config_text();
    return j.dump();
}

void write_curves_csv(const std::string& path, const std::vector<EpochRecord>& curves) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write curves file '" + path + "'");
    out << "epoch,task,kl_feat,kl_struct,kl_diff,con,total,val_loss\n";
    for (const auto& e : curves) {
        out << e.epoch << "," << fmt_g(e.train.task) << "," << fmt_g(e.train.kl_feat) << ","
            << fmt_g(e.train.kl_struct) << "," << fmt_g(e.train.kl_diff) << ","
            << fmt_g(e.train.con) << "," << fmt_g(e.train.total) << "," << fmt_g(e.val_loss)
            << "\n";
    }
}

json metrics_to_json_obj(const MetricsReport& r) { return json::parse(r.to_json()); }

int worker_count(size_t jobs) {
    const char* env = std::getenv("FAIRMIB_THREADS");
    if (env == nullptr) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v <= 1) return 1;
    return static_cast<int>(std::min<long>(v, static_cast<long>(jobs)));
}

}  // namespace

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw ValidationError("patience must be >= 1");
}

bool EarlyStopper::observe(double val_loss) {
    ++epoch_;
    if (best_epoch_ == 0 || val_loss < best_loss_) {
        best_loss_ = val_loss;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
}

GraphDataset prepare_dataset(const RunConfig& cfg) {
    GraphDataset g = cfg.dataset.empty() ? gen_synthetic(cfg.synth) : load_bundle(cfg.dataset);
    if (!g.has_masks()) g = make_splits(g, cfg.split);
    return g;
}

namespace {

TrainResult train_fairmib(const RunConfig& cfg, uint64_t seed, const GraphDataset& g) {
    const ViewBundle views = build_views(g, view_config_from(cfg));
    const ModelConfig mc = model_config_from(cfg, views.feature_view.features.cols);

    Rng rng(seed);
    FairMibNet net(mc, rng);
    AdamState adam(AdamConfig{cfg.lr});
    const std::vector<double> s_train = observed_s_column(g);

    TrainResult result;
    result.input_dim = mc.input_dim;
    EarlyStopper stopper(cfg.patience);
    LossBreakdown last_finite;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const NoiseSet noise = NoiseSet::sample(rng, mc, g.n);
        LossBreakdown train_bd;
        try {
            Tape tape;
            ForwardIds f = net.forward(tape, views, &s_train, &noise);
            StagedLosses losses = stage_objective(tape, f, cfg, g, g.train_mask);
            train_bd = losses.breakdown;
            tape.backward(losses.ids.total);
            adam.step(net.params(), net.collect_grads(tape, f));
        } catch (const NumericError& e) {
            std::ostringstream msg;
            msg << "training diverged at epoch " << epoch << " (" << e.what()
                << "); last finite breakdown: task=" << last_finite.task
                << " kl=" << last_finite.kl_sum() << " con=" << last_finite.con
                << " total=" << last_finite.total;
            throw NumericError(msg.str());
        }
        last_finite = train_bd;

        // Deterministic z = mu pass for the validation objective.
        Tape vt;
        ForwardIds vf = net.forward(vt, views, &s_train, nullptr);
        StagedLosses vlosses = stage_objective(vt, vf, cfg, g, g.val_mask);
        const double val_loss = vlosses.breakdown.total;

        result.curves.push_back({epoch, train_bd, val_loss});
        const bool was_best = stopper.best_epoch() == 0 || val_loss < stopper.best_loss();
        const bool stop = stopper.observe(val_loss);
        if (was_best) result.best_params = net.params();
        if (stop) break;
    }
    result.best_epoch = stopper.best_epoch();
    result.stopped_epoch = stopper.epochs_seen();

    // Test-mask evaluation with the restored best parameters.
    FairMibNet best(mc, result.best_params);
    const std::vector<double> s_eval = cfg.inference_s_mode == InferenceSMode::observed
                                           ? observed_s_column(g)
                                           : neutral_s_column(g.n);
    Tape tt;
    ForwardIds tf = best.forward(tt, views, &s_eval, nullptr);
    result.test_metrics =
        evaluate(sigmoid_column(tt.value(tf.logits)), g.labels, g.sensitive, g.test_mask, seed);
    return result;
}

TrainResult train_gcn(const RunConfig& cfg, uint64_t seed, const GraphDataset& g) {
    const CsrMatrix a_norm = normalize_adjacency(g);
    Rng rng(seed);
    GcnBaseline net(g.features.cols, cfg.hidden, rng);
    AdamState adam(AdamConfig{cfg.lr});

    TrainResult result;
    result.input_dim = g.features.cols;
    EarlyStopper stopper(cfg.patience);
    double last_finite = 0.0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        LossBreakdown bd;
        try {
            Tape tape;
            ForwardIds f = net.forward(tape, a_norm, g.features);
            TensorId loss = task_loss(tape, f.logits, g.labels, g.train_mask);
            bd.task = tape.value(loss)(0, 0);
            bd.total = bd.task;
            tape.backward(loss);
            adam.step(net.params(), net.collect_grads(tape, f));
        } catch (const NumericError& e) {
            std::ostringstream msg;
            msg << "training diverged at epoch " << epoch << " (" << e.what()
                << "); last finite task loss: " << last_finite;
            throw NumericError(msg.str());
        }
        last_finite = bd.task;

        Tape vt;
        ForwardIds vf = net.forward(vt, a_norm, g.features);
        const double val_loss = vt.value(task_loss(vt, vf.logits, g.labels, g.val_mask))(0, 0);

        result.curves.push_back({epoch, bd, val_loss});
        const bool was_best = stopper.best_epoch() == 0 || val_loss < stopper.best_loss();
        const bool stop = stopper.observe(val_loss);
        if (was_best) result.best_params = net.params();
        if (stop) break;
    }
    result.best_epoch = stopper.best_epoch();
    result.stopped_epoch = stopper.epochs_seen();

    GcnBaseline best(g.features.cols, cfg.hidden, result.best_params);
    Tape tt;
    ForwardIds tf = best.forward(tt, a_norm, g.features);
    result.test_metrics =
        evaluate(sigmoid_column(tt.value(tf.logits)), g.labels, g.sensitive, g.test_mask, seed);
    return result;
}

}  // namespace

TrainResult train_one(const RunConfig& cfg, uint64_t seed, const GraphDataset& g) {
    cfg.validate();
    if (cfg.variant == Variant::baseline_gcn) return train_gcn(cfg, seed, g);
    return train_fairmib(cfg, seed, g);
}

TrainResult train_one(const RunConfig& cfg, uint64_t seed) {
    cfg.validate();
    return train_one(cfg, seed, prepare_dataset(cfg));
}

MetricsReport baseline_gcn_train(const RunConfig& cfg, uint64_t seed) {
    RunConfig c = cfg.with_variant(Variant::baseline_gcn);
    return train_one(c, seed).test_metrics;
}

std::vector<MetricsReport> ExperimentRecord::successful_reports() const {
    std::vector<MetricsReport> out;
    for (const auto& r : runs)
        if (r.ok) out.push_back(r.metrics);
    return out;
}

ExperimentRecord run_experiment(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(fs::path(out_dir) / "checkpoints", ec);
        fs::create_directories(fs::path(out_dir) / "curves", ec);
        if (ec) throw IoError("cannot create output directory '" + out_dir + "'");
    }

    ExperimentRecord record;
    record.config_json = cfg.to_json();
    record.variant = variant_name(cfg.variant);
    record.runs.resize(cfg.seeds.size());

    // Dataset problems surface here, before any training starts; the graph is
    // immutable and shared across the seed workers.
    const GraphDataset dataset = prepare_dataset(cfg);

    auto run_seed = [&](size_t idx) {
        SeedOutcome& out = record.runs[idx];
        out.seed = cfg.seeds[idx];
        try {
            TrainResult tr = train_one(cfg, out.seed, dataset);
            out.metrics = tr.test_metrics;
            out.best_epoch = tr.best_epoch;
            out.stopped_epoch = tr.stopped_epoch;
            if (!out_dir.empty()) {
                const std::string ckpt =
                    (fs::path("checkpoints") / ("seed_" + std::to_string(out.seed) + ".bin"))
                        .string();
                const std::string curves =
                    (fs::path("curves") / ("seed_" + std::to_string(out.seed) + ".csv"))
                        .string();
                const char* kind =
                    cfg.variant == Variant::baseline_gcn ? "gcn" : "fairmib";
                save_checkpoint((fs::path(out_dir) / ckpt).string(),
                                {checkpoint_meta(cfg, out.seed, kind, tr.input_dim),
                                 tr.best_params});
                write_curves_csv((fs::path(out_dir) / curves).string(), tr.curves);
                out.checkpoint_path = ckpt;
                out.curves_path = curves;
            }
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    };

    const int workers = worker_count(cfg.seeds.size());
    if (workers <= 1) {
        for (size_t i = 0; i < cfg.seeds.size(); ++i) run_seed(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w]() {
                for (size_t i = static_cast<size_t>(w); i < cfg.seeds.size();
                     i += static_cast<size_t>(workers))
                    run_seed(i);
            });
        for (auto& t : pool) t.join();
    }

    const auto reports = record.successful_reports();
    if (reports.empty()) {
        std::string detail = record.runs.empty() ? "" : record.runs.front().error;
        throw NumericError("experiment failed on every seed; first error: " + detail);
    }
    record.aggregate = aggregate(reports);
    record.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!out_dir.empty()) {
        // metrics.csv: per-seed rows plus mean/std rows, percentage points.
        std::ostringstream csv;
        csv << "seed,acc,f1,auc,dp,eo\n";
        for (const auto& r : record.runs) {
            if (!r.ok) continue;
            csv << r.seed << "," << fmt_pct(r.metrics.acc) << "," << fmt_pct(r.metrics.f1) << ","
                << (r.metrics.auc ? fmt_pct(*r.metrics.auc) : std::string{}) << ","
                << fmt_pct(r.metrics.dp_diff) << "," << fmt_pct(r.metrics.eo_diff) << "\n";
        }
        const auto& mean = record.aggregate.mean;
        const auto& sd = record.aggregate.stddev;
        csv << "mean," << fmt_pct(mean.acc) << "," << fmt_pct(mean.f1) << ","
            << (mean.auc ? fmt_pct(*mean.auc) : std::string{}) << "," << fmt_pct(mean.dp_diff)
            << "," << fmt_pct(mean.eo_diff) << "\n";
        csv << "std," << fmt_pct(sd.acc) << "," << fmt_pct(sd.f1) << ","
            << (sd.auc ? fmt_pct(*sd.auc) : std::string{}) << "," << fmt_pct(sd.dp_diff) << ","
            << fmt_pct(sd.eo_diff) << "\n";
        std::ofstream mf(fs::path(out_dir) / "metrics.csv");
        if (!mf) throw IoError("cannot write metrics.csv under '" + out_dir + "'");
        mf << csv.str();

        json j;
        j["config"] = json::parse(record.config_json);
        j["config_text"] = cfg.to_config_text();
        j["variant"] = record.variant;
        json runs = json::array();
        for (const auto& r : record.runs) {
            json jr;
            jr["seed"] = r.seed;
            jr["ok"] = r.ok;
            if (r.ok) {
                jr["metrics"] = metrics_to_json_obj(r.metrics);
                jr["checkpoint"] = r.checkpoint_path;
                jr["curves"] = r.curves_path;
                jr["best_epoch"] = r.best_epoch;
                jr["stopped_epoch"] = r.stopped_epoch;
            } else {
                jr["error"] = r.error;
            }
            runs.push_back(jr);
        }
        j["runs"] = runs;
        j["aggregate"] = {{"mean", metrics_to_json_obj(record.aggregate.mean)},
                          {"std", metrics_to_json_obj(record.aggregate.stddev)},
                          {"count", record.aggregate.count}};
        j["wall_clock_sec"] = record.wall_clock_sec;
        std::ofstream rf(fs::path(out_dir) / "record.json");
        if (!rf) throw IoError("cannot write record.json under '" + out_dir + "'");
        rf << j.dump(2) << "\n";
    }
    return record;
}

ExperimentRecord load_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open record '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("malformed record '" + path + "': " + e.what());
    }
    ExperimentRecord r;
    r.config_json = j.at("config").dump(2);
    r.variant = j.at("variant").get<std::string>();
    for (const auto& jr : j.at("runs")) {
        SeedOutcome o;
        o.seed = jr.at("seed").get<uint64_t>();
        o.ok = jr.at("ok").get<bool>();
        if (o.ok) {
            o.metrics = MetricsReport::from_json(jr.at("metrics").dump());
            o.checkpoint_path = jr.value("checkpoint", std::string{});
            o.curves_path = jr.value("curves", std::string{});
            o.best_epoch = jr.value("best_epoch", 0);
            o.stopped_epoch = jr.value("stopped_epoch", 0);
        } else {
            o.error = jr.value("error", std::string{});
        }
        r.runs.push_back(std::move(o));
    }
    r.aggregate.mean = MetricsReport::from_json(j.at("aggregate").at("mean").dump());
    r.aggregate.stddev = MetricsReport::from_json(j.at("aggregate").at("std").dump());
    r.aggregate.count = j.at("aggregate").at("count").get<int>();
    r.wall_clock_sec = j.value("wall_clock_sec", 0.0);
    return r;
}

namespace {

std::string pm(double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean * 100.0, sd * 100.0);
    return buf;
}

std::string comparison_table(const std::vector<std::pair<std::string, ExperimentRecord>>& rows,
                             bool markdown) {
    std::ostringstream out;
    if (markdown) {
        out << "| experiment | ACC | F1 | AUC | DP | EO |\n";
        out << "|---|---|---|---|---|---|\n";
        for (const auto& [label, rec] : rows) {
            const auto& m = rec.aggregate.mean;
            const auto& s = rec.aggregate.stddev;
            out << "| " << label << " | " << pm(m.acc, s.acc) << " | " << pm(m.f1, s.f1) << " | "
                << (m.auc ? pm(*m.auc, s.auc.value_or(0.0)) : "n/a") << " | "
                << pm(m.dp_diff, s.dp_diff) << " | " << pm(m.eo_diff, s.eo_diff) << " |\n";
        }
    } else {
        out << "experiment,acc_mean,acc_std,f1_mean,f1_std,auc_mean,auc_std,dp_mean,dp_std,"
               "eo_mean,eo_std\n";
        for (const auto& [label, rec] : rows) {
            const auto& m = rec.aggregate.mean;
            const auto& s = rec.aggregate.stddev;
            out << label << "," << fmt_pct(m.acc) << "," << fmt_pct(s.acc) << ","
                << fmt_pct(m.f1) << "," << fmt_pct(s.f1) << ","
                << (m.auc ? fmt_pct(*m.auc) : std::string{}) << ","
                << (s.auc ? fmt_pct(*s.auc) : std::string{}) << "," << fmt_pct(m.dp_diff) << ","
                << fmt_pct(s.dp_diff) << "," << fmt_pct(m.eo_diff) << "," << fmt_pct(s.eo_diff)
                << "\n";
        }
    }
    return out.str();
}

}  // namespace

std::vector<std::pair<Variant, ExperimentRecord>> run_ablation_grid(
    const RunConfig& base, const std::vector<Variant>& variants, const std::string& out_dir) {
    if (variants.empty()) throw ValidationError("ablation grid needs at least one variant");
    std::vector<std::pair<Variant, ExperimentRecord>> results;
    for (Variant v : variants) {
        const RunConfig cfg = base.with_variant(v);
        const std::string sub =
            out_dir.empty() ? std::string{} : (fs::path(out_dir) / variant_name(v)).string();
        results.emplace_back(v, run_experiment(cfg, sub));
    }
    if (!out_dir.empty()) {
        std::vector<std::pair<std::string, ExperimentRecord>> rows;
        for (const auto& [v, rec] : results) rows.emplace_back(variant_name(v), rec);
        std::ofstream csv(fs::path(out_dir) / "ablation.csv");
        csv << comparison_table(rows, false);
        std::ofstream md(fs::path(out_dir) / "ablation.md");
        md << comparison_table(rows, true);
    }
    return results;
}

std::string render_report(const std::string& dir, bool markdown) {
    if (!fs::exists(dir)) throw IoError("report directory '" + dir + "' does not exist");
    std::vector<std::string> paths;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename() == "record.json")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
        throw ValidationError("no record.json found under '" + dir + "'");

    std::vector<std::pair<std::string, ExperimentRecord>> rows;
    for (const auto& p : paths) {
        ExperimentRecord rec = load_record(p);
        std::string label = fs::path(p).parent_path().lexically_relative(dir).string();
        if (label == ".") label = rec.variant;
        rows.emplace_back(label, std::move(rec));
    }
    return comparison_table(rows, markdown);
}

void dump_views(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const GraphDataset g = prepare_dataset(cfg);
    const ViewBundle views = build_views(g, view_config_from(cfg));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory '" + out_dir + "'");

    auto write_matrix = [&](const std::string& name, const Matrix& m) {
        std::ofstream out(fs::path(out_dir) / name);
        if (!out) throw IoError("cannot write '" + name + "' under '" + out_dir + "'");
        for (int i = 0; i < m.rows; ++i) {
            for (int j = 0; j < m.cols; ++j) out << (j ? "," : "") << fmt_g(m(i, j));
            out << "\n";
        }
    };
    write_matrix("feature_view.csv", views.feature_view.features);
    write_matrix("structural_view.csv", views.structural_view.features);
    write_matrix("diffusion_view.csv", views.diffusion_view.features);

    std::ofstream ipw(fs::path(out_dir) / "ipw.csv");
    ipw << "node,propensity,weight\n";
    for (int i = 0; i < g.n; ++i)
        ipw << i << "," << fmt_g(views.propensity[i]) << "," << fmt_g(views.weights[i]) << "\n";
}

MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                  const std::string& dataset_dir) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    json meta;
    try {
        meta = json::parse(ckpt.meta_json);
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint meta is not valid JSON: " + std::string(e.what()));
    }
    RunConfig cfg = parse_config_text(meta.at("config_text").get<std::string>(),
                                      checkpoint_path + "#config");
    if (!dataset_dir.empty()) cfg.dataset = dataset_dir;
    const uint64_t seed = meta.value("seed", 0ull);
    const GraphDataset g = prepare_dataset(cfg);

    if (meta.at("kind").get<std::string>() == "gcn") {
        GcnBaseline net(g.features.cols, cfg.hidden, ckpt.params);
        const CsrMatrix a_norm = normalize_adjacency(g);
        Tape tape;
        ForwardIds f = net.forward(tape, a_norm, g.features);
        return evaluate(sigmoid_column(tape.value(f.logits)), g.labels, g.sensitive, g.test_mask,
                        seed);
    }
    const ViewBundle views = build_views(g, view_config_from(cfg));
    const int input_dim = views.feature_view.features.cols;
    if (meta.contains("input_dim") && meta.at("input_dim").get<int>() != input_dim)
        throw ValidationError("checkpoint expects input_dim=" + meta.at("input_dim").dump() +
                              " but the dataset yields " + std::to_string(input_dim));
    FairMibNet net(model_config_from(cfg, input_dim), ckpt.params);
    const std::vector<double> s_eval = cfg.inference_s_mode == InferenceSMode::observed
                                           ? observed_s_column(g)
                                           : neutral_s_column(g.n);
    Tape tape;
    ForwardIds f = net.forward(tape, views, &s_eval, nullptr);
    return evaluate(sigmoid_column(tape.value(f.logits)), g.labels, g.sensitive, g.test_mask,
                    seed);
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kFdStep = 1e-4;

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

// Shared driver: compares analytic gradients against central differences of
// `loss_value` for every entry of every parameter.
template <typename LossFn>
GradcheckReport fd_compare(ParamStore& params, const GradStore& analytic, LossFn loss_value) {
    GradcheckReport report;
    for (auto& [name, p] : params) {
        const Matrix& g = analytic.at(name);
        GradcheckEntry entry{name, 0.0};
        for (int64_t i = 0; i < p.size(); ++i) {
            const double keep = p.data[i];
            p.data[i] = keep + kFdStep;
            const double up = loss_value();
            p.data[i] = keep - kFdStep;
            const double down = loss_value();
            p.data[i] = keep;
            const double fd = (up - down) / (2.0 * kFdStep);
            entry.max_rel_err = std::max(entry.max_rel_err, rel_err(g.data[i], fd));
            ++report.entries_checked;
        }
        if (entry.max_rel_err > report.max_rel_err) {
            report.max_rel_err = entry.max_rel_err;
            report.worst_param = name;
        }
        report.per_param.push_back(entry);
    }
    report.pass = report.max_rel_err <= report.tolerance;
    return report;
}

RunConfig gradcheck_config(uint64_t seed) {
    RunConfig cfg;
    cfg.synth.cell_sizes = {2, 1, 2, 1};  // n = 6
    cfg.synth.feature_dim = 3;            // post-scrub width 2
    cfg.synth.intra_cell_edge_prob = 0.6;
    cfg.synth.cross_cell_edge_prob = 0.3;
    cfg.synth.group_mean_shift = 1.0;
    cfg.synth.class_mean_shift = 1.0;
    cfg.synth.noise_scale = 1.0;
    cfg.synth.seed = seed;
    cfg.split.seed = seed + 1;
    cfg.hidden = 4;
    cfg.latent = 2;
    cfg.projector_hidden = 3;
    // Keep every objective term O(1) so the relative comparison is sharp.
    cfg.lambda_kl = 0.5;
    cfg.lambda_con = 0.5;
    cfg.tau = 0.7;
    cfg.propensity_epochs = 50;
    return cfg;
}

}  // namespace

GradcheckReport run_model_gradcheck(uint64_t seed) {
    const RunConfig cfg = gradcheck_config(seed);
    const GraphDataset g = prepare_dataset(cfg);
    const ViewBundle views = build_views(g, view_config_from(cfg));
    const ModelConfig mc = model_config_from(cfg, views.feature_view.features.cols);

    Rng rng(seed);
    FairMibNet net(mc, rng);
    const NoiseSet noise = NoiseSet::sample(rng, mc, g.n);  // fixed for the whole check
    const std::vector<double> s_col = observed_s_column(g);

    Tape tape;
    ForwardIds f = net.forward(tape, views, &s_col, &noise);
    StagedLosses losses = stage_objective(tape, f, cfg, g, g.train_mask);
    tape.backward(losses.ids.total);
    const GradStore analytic = net.collect_grads(tape, f);

    auto loss_value = [&]() {
        Tape t;
        ForwardIds ff = net.forward(t, views, &s_col, &noise);
        StagedLosses ll = stage_objective(t, ff, cfg, g, g.train_mask);
        return t.value(ll.ids.total)(0, 0);
    };
    return fd_compare(net.params(), analytic, loss_value);
}

GradcheckReport run_gcn_gradcheck(uint64_t seed) {
    const RunConfig cfg = gradcheck_config(seed);
    const GraphDataset g = prepare_dataset(cfg);
    const CsrMatrix a_norm = normalize_adjacency(g);

    Rng rng(seed);
    GcnBaseline net(g.features.cols, 4, rng);

    Tape tape;
    ForwardIds f = net.forward(tape, a_norm, g.features);
    TensorId loss = task_loss(tape, f.logits, g.labels, g.train_mask);
    tape.backward(loss);
    const GradStore analytic = net.collect_grads(tape, f);

    auto loss_value = [&]() {
        Tape t;
        ForwardIds ff = net.forward(t, a_norm, g.features);
        return t.value(task_loss(t, ff.logits, g.labels, g.train_mask))(0, 0);
    };
    return fd_compare(net.params(), analytic, loss_value);
}

}  // namespace fairmib

// SPDX-License-Identifier: Apache-2.0
#include "fairmib/model.hpp"

#include <cmath>

#include "fairmib/errors.hpp"

namespace fairmib {

namespace {

// Glorot-uniform init; biases start at zero.
Matrix glorot(Rng& rng, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    return rng.uniform_matrix(fan_in, fan_out, -limit, limit);
}

Matrix mask_mean_weights(const std::vector<uint8_t>& mask) {
    int count = 0;
    for (uint8_t v : mask) count += v ? 1 : 0;
    if (count == 0) throw ValidationError("task_loss: mask selects no nodes");
    Matrix w(static_cast<int>(mask.size()), 1);
    for (size_t i = 0; i < mask.size(); ++i)
        w(static_cast<int>(i), 0) = mask[i] ? 1.0 / count : 0.0;
    return w;
}

}  // namespace

void ModelConfig::validate() const {
    if (input_dim <= 0) throw ValidationError("model input_dim must be positive");
    if (hidden <= 0 || latent <= 0 || projector_hidden <= 0)
        throw ValidationError("model widths must be positive");
    if (active_views() == 0) throw ValidationError("at least one view must be enabled");
}

GaussianLatentIds encode_view(Tape& tape, const View& view, const CsrMatrix& a_norm,
                              const EncoderParamIds& p, const Matrix* eps) {
    TensorId x = tape.leaf(view.features, false);
    TensorId xw = tape.matmul(x, p.w1);
    if (view.op == ViewOperator::normalized_adjacency) xw = tape.spmm(a_norm, xw);
    TensorId h = tape.relu(tape.add_rowvec(xw, p.b1));
    GaussianLatentIds out;
    out.mu = tape.add_rowvec(tape.matmul(h, p.wmu), p.bmu);
    out.logvar = tape.clamp(tape.add_rowvec(tape.matmul(h, p.wlv), p.blv), -kLogvarClamp,
                            kLogvarClamp);
    if (eps != nullptr) {
        out.z = tape.reparameterize(out.mu, out.logvar, *eps);
    } else {
        out.z = out.mu;  // deterministic evaluation pass
    }
    return out;
}

TensorId kl_standard_normal(Tape& tape, const GaussianLatentIds& latent) {
    const int n = tape.value(latent.mu).rows;
    TensorId mu2 = tape.elementwise_mul(latent.mu, latent.mu);
    TensorId var = tape.exp(latent.logvar);
    TensorId neg = tape.add_scalar(tape.scale(latent.logvar, -1.0), -1.0);
    TensorId sum = tape.reduce_sum(tape.add(tape.add(mu2, var), neg));
    return tape.scale(sum, 0.5 / static_cast<double>(n));
}

TensorId fuse_project(Tape& tape, const std::vector<TensorId>& codes,
                      const ProjectorParamIds& p) {
    if (codes.empty()) throw ValidationError("fuse_project: no codes to fuse");
    TensorId fused = codes[0];
    for (size_t i = 1; i < codes.size(); ++i) fused = tape.add(fused, codes[i]);
    TensorId h = tape.relu(tape.add_rowvec(tape.matmul(fused, p.w1), p.b1));
    return tape.add_rowvec(tape.matmul(h, p.w2), p.b2);
}

TensorId decode(Tape& tape, TensorId z_proj, const std::vector<double>* s_column,
                const DecoderParamIds& p) {
    TensorId in = z_proj;
    if (s_column != nullptr) {
        const int n = tape.value(z_proj).rows;
        if (static_cast<int>(s_column->size()) != n)
            throw DimensionError("decode: sensitive column length " +
                                 std::to_string(s_column->size()) + " for " +
                                 std::to_string(n) + " rows");
        in = tape.concat_cols(z_proj, tape.leaf(Matrix::from_column(*s_column), false));
    }
    TensorId h = tape.relu(tape.add_rowvec(tape.matmul(in, p.w1), p.b1));
    return tape.add_rowvec(tape.matmul(h, p.w2), p.b2);  // n x 1 logits
}

TensorId task_loss(Tape& tape, TensorId logits, const std::vector<int>& labels,
                   const std::vector<uint8_t>& mask) {
    const Matrix& lv = tape.value(logits);
    if (lv.cols != 1 || lv.rows != static_cast<int>(labels.size()))
        throw DimensionError("task_loss: logits " + lv.shape_str() + " vs " +
                             std::to_string(labels.size()) + " labels");
    if (mask.size() != labels.size())
        throw DimensionError("task_loss: mask length differs from labels");
    Matrix y(lv.rows, 1);
    for (int i = 0; i < lv.rows; ++i) y(i, 0) = static_cast<double>(labels[i]);
    // BCE(z, y) = softplus(z) - y*z, averaged over the mask.
    TensorId yz = tape.elementwise_mul(tape.leaf(std::move(y), false), logits);
    TensorId per_node = tape.add(tape.softplus(logits), tape.scale(yz, -1.0));
    TensorId weights = tape.leaf(mask_mean_weights(mask), false);
    return tape.reduce_sum(tape.elementwise_mul(per_node, weights));
}

TensorId infonce_pair(Tape& tape, TensorId za, TensorId zb, double tau) {
    if (tau <= 0.0) throw ValidationError("infonce_pair: temperature must be positive");
    if (tape.value(za).rows != tape.value(zb).rows)
        throw DimensionError("infonce_pair: " + tape.value(za).shape_str() + " vs " +
                             tape.value(zb).shape_str());
    TensorId sims = tape.scale(tape.row_cosine_sim_matrix(za, zb), 1.0 / tau);
    TensorId per_anchor = tape.add(tape.logsumexp_rows(sims),
                                   tape.scale(tape.take_diag(sims), -1.0));
    return tape.reduce_mean(per_anchor);
}

TensorId consistency_loss(Tape& tape, const std::vector<TensorId>& codes, double tau,
                          bool symmetrize) {
    std::vector<TensorId> pair_losses;
    for (size_t i = 0; i < codes.size(); ++i)
        for (size_t j = i + 1; j < codes.size(); ++j) {
            TensorId l = infonce_pair(tape, codes[i], codes[j], tau);
            if (symmetrize) {
                TensorId r = infonce_pair(tape, codes[j], codes[i], tau);
                l = tape.scale(tape.add(l, r), 0.5);
            }
            pair_losses.push_back(l);
        }
    if (pair_losses.empty()) return tape.leaf(Matrix(1, 1), false);
    TensorId sum = pair_losses[0];
    for (size_t i = 1; i < pair_losses.size(); ++i) sum = tape.add(sum, pair_losses[i]);
    return tape.scale(sum, 1.0 / static_cast<double>(pair_losses.size()));
}

TensorId total_loss(Tape& tape, TotalLossIds& ids, double lambda_kl, double lambda_con) {
    if (lambda_kl < 0.0 || lambda_con < 0.0)
        throw ValidationError("loss weights must be non-negative");
    TensorId total = ids.task;
    TensorId kl_sum = -1;
    for (TensorId k : ids.kl) {
        if (k < 0) continue;
        kl_sum = kl_sum < 0 ? k : tape.add(kl_sum, k);
    }
    if (kl_sum >= 0) total = tape.add(total, tape.scale(kl_sum, lambda_kl));
    if (ids.con >= 0) total = tape.add(total, tape.scale(ids.con, lambda_con));
    ids.total = total;
    return total;
}

LossBreakdown read_breakdown(const Tape& tape, const TotalLossIds& ids, double lambda_kl,
                             double lambda_con, double tau) {
    LossBreakdown b;
    b.task = tape.value(ids.task)(0, 0);
    if (ids.kl[0] >= 0) b.kl_feat = tape.value(ids.kl[0])(0, 0);
    if (ids.kl[1] >= 0) b.kl_struct = tape.value(ids.kl[1])(0, 0);
    if (ids.kl[2] >= 0) b.kl_diff = tape.value(ids.kl[2])(0, 0);
    if (ids.con >= 0) b.con = tape.value(ids.con)(0, 0);
    b.total = tape.value(ids.total)(0, 0);
    b.lambda_kl = lambda_kl;
    b.lambda_con = lambda_con;
    b.tau = tau;
    return b;
}

NoiseSet NoiseSet::sample(Rng& rng, const ModelConfig& cfg, int n) {
    NoiseSet s;
    if (cfg.use_feature_view) s.feat = rng.normal_matrix(n, cfg.latent);
    if (cfg.use_structural_view) s.structural = rng.normal_matrix(n, cfg.latent);
    if (cfg.use_diffusion_view) s.diff = rng.normal_matrix(n, cfg.latent);
    return s;
}

FairMibNet::FairMibNet(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    init_params(rng);
}

FairMibNet::FairMibNet(const ModelConfig& cfg, ParamStore params) : cfg_(cfg) {
    cfg_.validate();
    // Build the reference shapes, then swap in the restored values after
    // checking each one against the architecture.
    Rng throwaway(0);
    init_params(throwaway);
    for (auto& [name, ref] : params_) {
        auto it = params.find(name);
        if (it == params.end())
            throw ValidationError("restored parameters are missing '" + name + "'");
        if (!it->second.same_shape(ref))
            throw DimensionError("parameter '" + name + "' has shape " +
                                 it->second.shape_str() + " but the architecture needs " +
                                 ref.shape_str());
        ref = std::move(it->second);
    }
    if (params.size() != params_.size())
        for (const auto& [name, unused] : params)
            if (!params_.count(name))
                throw ValidationError("restored parameters contain unknown '" + name + "'");
}

void FairMibNet::init_params(Rng& rng) {
    auto add_encoder = [&](const std::string& prefix) {
        params_[prefix + "_w1"] = glorot(rng, cfg_.input_dim, cfg_.hidden);
        params_[prefix + "_b1"] = Matrix(1, cfg_.hidden);
        params_[prefix + "_wmu"] = glorot(rng, cfg_.hidden, cfg_.latent);
        params_[prefix + "_bmu"] = Matrix(1, cfg_.latent);
        params_[prefix + "_wlv"] = glorot(rng, cfg_.hidden, cfg_.latent);
        params_[prefix + "_blv"] = Matrix(1, cfg_.latent);
    };
    if (cfg_.use_feature_view) add_encoder("enc_feat");
    if (cfg_.use_structural_view) add_encoder("enc_struct");
    if (cfg_.use_diffusion_view) add_encoder("enc_diff");

    params_["proj_w1"] = glorot(rng, cfg_.latent, cfg_.projector_hidden);
    params_["proj_b1"] = Matrix(1, cfg_.projector_hidden);
    params_["proj_w2"] = glorot(rng, cfg_.projector_hidden, cfg_.latent);
    params_["proj_b2"] = Matrix(1, cfg_.latent);

    const int dec_in = cfg_.latent + (cfg_.condition_on_s ? 1 : 0);
    params_["dec_w1"] = glorot(rng, dec_in, cfg_.hidden);
    params_["dec_b1"] = Matrix(1, cfg_.hidden);
    params_["dec_w2"] = glorot(rng, cfg_.hidden, 1);
    params_["dec_b2"] = Matrix(1, 1);
}

EncoderParamIds FairMibNet::stage_encoder(Tape& tape, const std::string& prefix,
                                          std::map<std::string, TensorId>& ids) const {
    auto stage = [&](const std::string& name) {
        TensorId id = tape.leaf(params_.at(name), true);
        ids[name] = id;
        return id;
    };
    EncoderParamIds p;
    p.w1 = stage(prefix + "_w1");
    p.b1 = stage(prefix + "_b1");
    p.wmu = stage(prefix + "_wmu");
    p.bmu = stage(prefix + "_bmu");
    p.wlv = stage(prefix + "_wlv");
    p.blv = stage(prefix + "_blv");
    return p;
}

ForwardIds FairMibNet::forward(Tape& tape, const ViewBundle& views,
                               const std::vector<double>* s_column,
                               const NoiseSet* noise) const {
    if (cfg_.condition_on_s && s_column == nullptr)
        throw StateError("forward: conditioned decoder needs the sensitive column");

    ForwardIds f;
    std::vector<TensorId> codes;
    auto run_view = [&](const View& view, const std::string& prefix,
                        const std::optional<Matrix>& eps, int slot) {
        EncoderParamIds p = stage_encoder(tape, prefix, f.param_ids);
        const Matrix* e = nullptr;
        if (noise != nullptr) {
            if (!eps.has_value())
                throw StateError("forward: noise missing for enabled view " + prefix);
            e = &*eps;
        }
        GaussianLatentIds lat = encode_view(tape, view, views.a_norm, p, e);
        f.latents[slot] = lat;
        codes.push_back(lat.z);
    };

    static const NoiseSet no_noise{};
    const NoiseSet& ns = noise != nullptr ? *noise : no_noise;
    if (cfg_.use_feature_view) run_view(views.feature_view, "enc_feat", ns.feat, 0);
    if (cfg_.use_structural_view) run_view(views.structural_view, "enc_struct", ns.structural, 1);
    if (cfg_.use_diffusion_view) run_view(views.diffusion_view, "enc_diff", ns.diff, 2);

    auto stage = [&](const std::string& name) {
        TensorId id = tape.leaf(params_.at(name), true);
        f.param_ids[name] = id;
        return id;
    };
    ProjectorParamIds proj{stage("proj_w1"), stage("proj_b1"), stage("proj_w2"),
                           stage("proj_b2")};
    f.z_proj = fuse_project(tape, codes, proj);

    DecoderParamIds dec{stage("dec_w1"), stage("dec_b1"), stage("dec_w2"), stage("dec_b2")};
    f.logits = decode(tape, f.z_proj, cfg_.condition_on_s ? s_column : nullptr, dec);
    return f;
}

GradStore FairMibNet::collect_grads(const Tape& tape, const ForwardIds& f) const {
    GradStore grads;
    for (const auto& [name, id] : f.param_ids) {
        const Matrix& g = tape.grad(id);
        const Matrix& p = params_.at(name);
        grads[name] = g.rows > 0 ? g : Matrix(p.rows, p.cols);
    }
    return grads;
}

GcnBaseline::GcnBaseline(int input_dim, int hidden, Rng& rng)
    : input_dim_(input_dim), hidden_(hidden) {
    if (input_dim <= 0 || hidden <= 0) throw ValidationError("gcn widths must be positive");
    params_["gcn_w1"] = glorot(rng, input_dim, hidden);
    params_["gcn_b1"] = Matrix(1, hidden);
    params_["gcn_w2"] = glorot(rng, hidden, 1);
    params_["gcn_b2"] = Matrix(1, 1);
}

GcnBaseline::GcnBaseline(int input_dim, int hidden, ParamStore params)
    : input_dim_(input_dim), hidden_(hidden), params_(std::move(params)) {}

ForwardIds GcnBaseline::forward(Tape& tape, const CsrMatrix& a_norm,
                                const Matrix& features) const {
    ForwardIds f;
    auto stage = [&](const std::string& name) {
        TensorId id = tape.leaf(params_.at(name), true);
        f.param_ids[name] = id;
        return id;
    };
    TensorId x = tape.leaf(features, false);
    TensorId h = tape.relu(
        tape.add_rowvec(tape.spmm(a_norm, tape.matmul(x, stage("gcn_w1"))), stage("gcn_b1")));
    f.logits = tape.add_rowvec(tape.spmm(a_norm, tape.matmul(h, stage("gcn_w2"))),
                               stage("gcn_b2"));
    return f;
}

GradStore GcnBaseline::collect_grads(const Tape& tape, const ForwardIds& f) const {
    GradStore grads;
    for (const auto& [name, id] : f.param_ids) {
        const Matrix& g = tape.grad(id);
        const Matrix& p = params_.at(name);
        grads[name] = g.rows > 0 ? g : Matrix(p.rows, p.cols);
    }
    return grads;
}

}  // namespace fairmib

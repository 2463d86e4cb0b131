// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairmib/adam.hpp"
#include "fairmib/rng.hpp"
#include "fairmib/tape.hpp"
#include "fairmib/views.hpp"

namespace fairmib {

// Tape handles for the parameters of one view encoder:
// H = relu(op . X . W1 + b1), mu = H . Wmu + bmu,
// logvar = clamp(H . Wlv + blv, -10, 10).
struct EncoderParamIds {
    TensorId w1, b1, wmu, bmu, wlv, blv;
};

struct ProjectorParamIds {
    TensorId w1, b1, w2, b2;
};

struct DecoderParamIds {
    TensorId w1, b1, w2, b2;
};

// Variational output of one encoder. z is produced exclusively through the
// reparameterization z = mu + exp(0.5 logvar) (.) eps; a null eps means the
// deterministic z = mu pass used at evaluation time.
struct GaussianLatentIds {
    TensorId mu, logvar, z;
};

struct LossBreakdown {
    double task = 0.0;
    double kl_feat = 0.0, kl_struct = 0.0, kl_diff = 0.0;
    double con = 0.0;
    double total = 0.0;
    double lambda_kl = 0.0, lambda_con = 0.0;
    double gamma = 1.0;  // likelihood weight folded into the task term
    double tau = 0.5;

    double kl_sum() const { return kl_feat + kl_struct + kl_diff; }
};

constexpr double kLogvarClamp = 10.0;

GaussianLatentIds encode_view(Tape& tape, const View& view, const CsrMatrix& a_norm,
                              const EncoderParamIds& p, const Matrix* eps);

// Mean over rows of the per-node KL divergence to the standard normal:
// 0.5 * sum_j (mu^2 + exp(logvar) - 1 - logvar). Non-negative.
TensorId kl_standard_normal(Tape& tape, const GaussianLatentIds& latent);

// Element-wise sum of the codes followed by a relu MLP.
TensorId fuse_project(Tape& tape, const std::vector<TensorId>& codes,
                      const ProjectorParamIds& p);

// MLP logits over [z_proj || s]; pass a null s_column to drop the
// concatenation (the unconditioned ablation).
TensorId decode(Tape& tape, TensorId z_proj, const std::vector<double>* s_column,
                const DecoderParamIds& p);

// Mean binary cross-entropy over masked rows, in stable softplus form.
TensorId task_loss(Tape& tape, TensorId logits, const std::vector<int>& labels,
                   const std::vector<uint8_t>& mask);

// Mean over anchors i of -log softmax_j(sim(a_i, b_j)/tau) at j=i, cosine
// similarity, anchors drawn from `a` only.
TensorId infonce_pair(Tape& tape, TensorId za, TensorId zb, double tau);

// Mean of infonce_pair over all unordered view pairs; with `symmetrize` each
// pair also contributes the reversed anchor direction. One code yields 0.
TensorId consistency_loss(Tape& tape, const std::vector<TensorId>& codes, double tau,
                          bool symmetrize = false);

struct TotalLossIds {
    TensorId task = -1;
    std::array<TensorId, 3> kl = {-1, -1, -1};  // feat, struct, diff (-1 = view absent)
    TensorId con = -1;
    TensorId total = -1;
};

TensorId total_loss(Tape& tape, TotalLossIds& ids, double lambda_kl, double lambda_con);

LossBreakdown read_breakdown(const Tape& tape, const TotalLossIds& ids, double lambda_kl,
                             double lambda_con, double tau);

// ---------------------------------------------------------------------------

struct ModelConfig {
    int input_dim = 0;          // view feature width (post-scrub)
    int hidden = 16;            // encoder hidden width
    int latent = 16;            // code width, shared across views
    int projector_hidden = 16;  // projector MLP hidden width
    bool condition_on_s = true;
    bool use_feature_view = true;
    bool use_structural_view = true;
    bool use_diffusion_view = true;

    int active_views() const {
        return (use_feature_view ? 1 : 0) + (use_structural_view ? 1 : 0) +
               (use_diffusion_view ? 1 : 0);
    }
    void validate() const;
};

// Per-view noise for one stochastic forward pass; entries are n x latent.
struct NoiseSet {
    std::optional<Matrix> feat, structural, diff;
    static NoiseSet sample(Rng& rng, const ModelConfig& cfg, int n);
};

struct ForwardIds {
    std::array<std::optional<GaussianLatentIds>, 3> latents;  // feat, struct, diff
    TensorId z_proj = -1;
    TensorId logits = -1;
    std::map<std::string, TensorId> param_ids;  // leaf id of every parameter
};

// The full network: three variational encoders, additive fusion + projector,
// sensitive-conditioned decoder. Parameters live here; each forward pass
// stages them as leaves on the caller's tape.
class FairMibNet {
  public:
    FairMibNet(const ModelConfig& cfg, Rng& rng);
    FairMibNet(const ModelConfig& cfg, ParamStore params);  // e.g. from a checkpoint

    const ModelConfig& config() const { return cfg_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }

    // Stages encoders -> fusion -> decoder. `noise` selects the stochastic
    // pass; nullptr gives the deterministic z = mu pass. `s_column` may be
    // null only when the decoder is unconditioned.
    ForwardIds forward(Tape& tape, const ViewBundle& views,
                       const std::vector<double>* s_column, const NoiseSet* noise) const;

    // Collects d(total)/d(param) for every staged parameter after backward.
    GradStore collect_grads(const Tape& tape, const ForwardIds& f) const;

  private:
    ModelConfig cfg_;
    ParamStore params_;

    void init_params(Rng& rng);
    EncoderParamIds stage_encoder(Tape& tape, const std::string& prefix,
                                  std::map<std::string, TensorId>& ids) const;
};

// Two-layer graph convolution baseline sharing the same engine:
// logits = A_norm . relu(A_norm . X . W1 + b1) . W2 + b2.
class GcnBaseline {
  public:
    GcnBaseline(int input_dim, int hidden, Rng& rng);
    GcnBaseline(int input_dim, int hidden, ParamStore params);

    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }
    int hidden() const { return hidden_; }

    ForwardIds forward(Tape& tape, const CsrMatrix& a_norm, const Matrix& features) const;
    GradStore collect_grads(const Tape& tape, const ForwardIds& f) const;

  private:
    int input_dim_, hidden_;
    ParamStore params_;
};

}  // namespace fairmib

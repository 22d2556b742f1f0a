#pragma once

// Gaze-regularised global-query attention model.
//
//   E_t  = X_t W_e + b_e                       patch embeddings, X_t is P x patch_px^2
//   mu   = mean of all P * T token embeddings
//   q    = mu W_q + b_q                        one query for the whole sequence
//   K_t  = E_t W_k + b_k,  V_t = E_t W_v + b_v
//   A_t  = softmax(K_t q / sqrt(d_k))          attention over the P patches of frame t
//   c_t  = A_t^T V_t,  cbar = mean_t c_t
//   z    = cbar W_h + b_h                      class logits
//   L    = CE(z, label) + lambda * sum_t KL(A_t || floor(H_t))
//
// Training is plain minibatch gradient descent with a fixed step size.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazereg/bytes.hpp"
#include "gazereg/gaze.hpp"
#include "gazereg/image.hpp"
#include "gazereg/numerics.hpp"
#include "gazereg/synth.hpp"

namespace gazereg {

struct ModelConfig {
  int d_model = 32;
  int d_k = 32;
  int patch_px = 8;
  int channels = 1;
  int n_classes = 4;
  double lambda = 100.0;
  double lr = 0.05;
  int epochs = 60;
  int batch = 10;
  std::uint64_t seed = 0;
  double kl_floor = 1e-8;
  double init_gain = 1.0;

  int patch_dim() const { return patch_px * patch_px * channels; }
  /// Checks invariants; `n_patches` enables the kl_floor < 1/P check.
  void validate(int n_patches = 0) const;
};

void to_json(nlohmann::json &j, const ModelConfig &c);
void from_json(const nlohmann::json &j, ModelConfig &c);

struct ModelParams {
  Tensor patch_embed; ///< patch_dim x d_model
  RowVector embed_bias;
  Tensor w_q;         ///< d_model x d_k
  RowVector b_q;
  Tensor w_k;         ///< d_model x d_k
  RowVector b_k;
  Tensor w_v;         ///< d_model x d_model
  RowVector b_v;
  Tensor head;        ///< d_model x n_classes
  RowVector head_bias;

  static ModelParams zeros(const ModelConfig &cfg);
  /// Gaussian init scaled by 1/sqrt(fan_in); biases zero.
  static ModelParams init(const ModelConfig &cfg, RngState &rng);

  /// Calls f on every parameter tensor in declared order (the checkpoint order).
  template <typename F> void visit(F &&f) { visit_impl(*this, f); }
  template <typename F> void visit(F &&f) const { visit_impl(*this, f); }
  Eigen::Index size() const;
  Vector flatten() const;
  void assign(const Vector &flat);
  bool all_finite() const;

  ModelParams &operator+=(const ModelParams &o);
  ModelParams &operator*=(double s);

private:
  template <typename Self, typename F> static void visit_impl(Self &self, F &f) {
    f(self.patch_embed);
    f(self.embed_bias);
    f(self.w_q);
    f(self.b_q);
    f(self.w_k);
    f(self.b_k);
    f(self.w_v);
    f(self.b_v);
    f(self.head);
    f(self.head_bias);
  }
};

/// One training/evaluation example: the observed frames and one gaze target per frame.
struct Batch {
  std::vector<Frame> frames;
  std::vector<PatchDistribution> targets;
  int label = 0;
  Task task = Task::understand;
  std::string id;
};

using Dataset = std::vector<Batch>;

struct AttentionRecord {
  std::vector<Vector> weights; ///< A_t, length P each
  std::vector<Vector> context; ///< c_t, length d_model each
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double kl_sum = 0.0;
  std::vector<double> kl_per_frame;
  int predicted = -1;
};

/// P x patch_dim matrix of flattened patches, row-major patch order.
Tensor extract_patches(const Frame &frame, int patch_px);

/// Tokens for one frame: extract_patches(frame) * W_e + b_e.
Tensor embed_patches(const Frame &frame, const ModelParams &params, int patch_px);

/// mean over all tokens of all frames, projected by W_q.
RowVector global_query(const std::vector<Tensor> &embeddings, const ModelParams &params);

struct AttentionOutput {
  Vector weights;
  Vector context;
};

AttentionOutput attention_forward(const RowVector &query, const Tensor &embeddings, const ModelParams &params);

/// KL(A || target'), target' = max(target, floor) renormalised; 0 log 0 := 0.
double kl_regularizer(const Vector &attention, const PatchDistribution &target, double kl_floor);

LossBreakdown total_loss(const Batch &batch, const ModelParams &params, const ModelConfig &cfg,
                         AttentionRecord *record = nullptr);

struct Gradient {
  LossBreakdown loss;
  ModelParams grad;
};

/// Exact gradient of total_loss with respect to every parameter.
Gradient backward(const Batch &batch, const ModelParams &params, const ModelConfig &cfg);

/// params -= lr * grad
void sgd_step(ModelParams &params, const ModelParams &grad, double lr);

struct EpochLog {
  int epoch = 0;
  double ce = 0.0;  ///< mean over samples
  double kl = 0.0;  ///< mean over samples of sum_t KL
  double acc = 0.0; ///< training accuracy of the predictions made during the epoch
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

/// Deterministic given cfg.seed. Throws TrainingDiverged on a non-finite loss or parameter.
/// `on_epoch` (optional) observes each finished epoch.
TrainResult train(const Dataset &data, const ModelConfig &cfg,
                  const std::function<void(const EpochLog &)> &on_epoch = {});

/// Validates that every batch matches the model geometry; returns P.
int check_dataset(const Dataset &data, const ModelConfig &cfg);

// --- checkpoint ------------------------------------------------------------------
// "GZRM", u32 version (1), u64 config length, config JSON, then every parameter tensor in
// declared order as float64, all little-endian. The config JSON holds the ModelConfig under
// "model" plus whatever run metadata the caller supplies.

Bytes encode_checkpoint(const ModelParams &params, const nlohmann::json &config);
std::pair<ModelParams, nlohmann::json> decode_checkpoint(const Bytes &bytes);

} // namespace gazereg

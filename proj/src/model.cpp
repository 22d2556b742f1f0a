#include "gazereg/model.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace gazereg {

void ModelConfig::validate(int n_patches) const {
  if (d_model <= 0 || d_k <= 0 || patch_px <= 0 || channels != 1 || n_classes < 1) {
    throw ConfigError("model dims must be positive (channels must be 1 for grayscale frames)");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (epochs < 0 || batch < 1) throw ConfigError("epochs must be >= 0 and batch >= 1");
  if (!(kl_floor > 0.0)) throw ConfigError("kl_floor must be > 0");
  if (n_patches > 0 && !(kl_floor < 1.0 / n_patches)) throw ConfigError("kl_floor must be below 1/P");
  if (!(init_gain > 0.0)) throw ConfigError("init_gain must be > 0");
}

void to_json(nlohmann::json &j, const ModelConfig &c) {
  j = nlohmann::json{{"d_model", c.d_model}, {"d_k", c.d_k},         {"patch_px", c.patch_px},
                     {"channels", c.channels}, {"n_classes", c.n_classes}, {"lambda", c.lambda},
                     {"lr", c.lr},           {"epochs", c.epochs},   {"batch", c.batch},
                     {"seed", c.seed},       {"kl_floor", c.kl_floor}, {"init_gain", c.init_gain}};
}

void from_json(const nlohmann::json &j, ModelConfig &c) {
  static const std::set<std::string> known = {"d_model", "d_k", "patch_px", "channels", "n_classes", "lambda",
                                              "lr",      "epochs", "batch",  "seed",     "kl_floor",  "init_gain"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto &[key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.d_k = j.value("d_k", d.d_k);
  c.patch_px = j.value("patch_px", d.patch_px);
  c.channels = j.value("channels", d.channels);
  c.n_classes = j.value("n_classes", d.n_classes);
  c.lambda = j.value("lambda", d.lambda);
  c.lr = j.value("lr", d.lr);
  c.epochs = j.value("epochs", d.epochs);
  c.batch = j.value("batch", d.batch);
  c.seed = j.value("seed", d.seed);
  c.kl_floor = j.value("kl_floor", d.kl_floor);
  c.init_gain = j.value("init_gain", d.init_gain);
}

// --- parameters ------------------------------------------------------------------

ModelParams ModelParams::zeros(const ModelConfig &cfg) {
  ModelParams p;
  p.patch_embed = Tensor::Zero(cfg.patch_dim(), cfg.d_model);
  p.embed_bias = RowVector::Zero(cfg.d_model);
  p.w_q = Tensor::Zero(cfg.d_model, cfg.d_k);
  p.b_q = RowVector::Zero(cfg.d_k);
  p.w_k = Tensor::Zero(cfg.d_model, cfg.d_k);
  p.b_k = RowVector::Zero(cfg.d_k);
  p.w_v = Tensor::Zero(cfg.d_model, cfg.d_model);
  p.b_v = RowVector::Zero(cfg.d_model);
  p.head = Tensor::Zero(cfg.d_model, cfg.n_classes);
  p.head_bias = RowVector::Zero(cfg.n_classes);
  return p;
}

ModelParams ModelParams::init(const ModelConfig &cfg, RngState &rng) {
  ModelParams p = zeros(cfg);
  auto &s = rng.stream("model/init");
  auto fill = [&](Tensor &w) {
    const double scale = cfg.init_gain / std::sqrt(double(w.rows()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * s.normal();
  };
  fill(p.patch_embed);
  fill(p.w_q);
  fill(p.w_k);
  fill(p.w_v);
  fill(p.head);
  return p;
}

Eigen::Index ModelParams::size() const {
  Eigen::Index n = 0;
  visit([&](const auto &t) { n += t.size(); });
  return n;
}

Vector ModelParams::flatten() const {
  Vector out(size());
  Eigen::Index off = 0;
  visit([&](const auto &t) {
    std::copy_n(t.data(), t.size(), out.data() + off);
    off += t.size();
  });
  return out;
}

void ModelParams::assign(const Vector &flat) {
  if (flat.size() != size()) throw DimensionError("ModelParams::assign: wrong parameter count");
  Eigen::Index off = 0;
  visit([&](auto &t) {
    std::copy_n(flat.data() + off, t.size(), t.data());
    off += t.size();
  });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&](const auto &t) { ok = ok && t.allFinite(); });
  return ok;
}

ModelParams &ModelParams::operator+=(const ModelParams &o) {
  patch_embed += o.patch_embed;
  embed_bias += o.embed_bias;
  w_q += o.w_q;
  b_q += o.b_q;
  w_k += o.w_k;
  b_k += o.b_k;
  w_v += o.w_v;
  b_v += o.b_v;
  head += o.head;
  head_bias += o.head_bias;
  return *this;
}

ModelParams &ModelParams::operator*=(double s) {
  visit([&](auto &t) { t *= s; });
  return *this;
}

// --- forward ---------------------------------------------------------------------

Tensor extract_patches(const Frame &frame, int patch_px) {
  if (patch_px <= 0 || frame.rows() % patch_px != 0 || frame.cols() % patch_px != 0) {
    throw GeometryError("frame " + detail::shape_str(frame.rows(), frame.cols()) + " does not tile by " +
                        std::to_string(patch_px) + " px patches");
  }
  const Eigen::Index nv = frame.rows() / patch_px, nh = frame.cols() / patch_px;
  Tensor x(nv * nh, Eigen::Index(patch_px) * patch_px);
  for (Eigen::Index r = 0; r < nv; ++r) {
    for (Eigen::Index c = 0; c < nh; ++c) {
      const Eigen::Index i = r * nh + c;
      for (int py = 0; py < patch_px; ++py) {
        x.row(i).segment(Eigen::Index(py) * patch_px, patch_px) = frame.row(r * patch_px + py).segment(c * patch_px, patch_px);
      }
    }
  }
  return x;
}

Tensor embed_patches(const Frame &frame, const ModelParams &params, int patch_px) {
  Tensor e = matmul(extract_patches(frame, patch_px), params.patch_embed);
  e.rowwise() += params.embed_bias;
  return e;
}

RowVector global_query(const std::vector<Tensor> &embeddings, const ModelParams &params) {
  if (embeddings.empty()) throw EmptyInputError("global_query: empty sequence");
  RowVector sum = RowVector::Zero(params.w_q.rows());
  Eigen::Index count = 0;
  for (const auto &e : embeddings) {
    if (e.cols() != params.w_q.rows()) throw DimensionError("global_query: embedding width does not match W_q");
    sum += e.colwise().sum();
    count += e.rows();
  }
  if (count == 0) throw EmptyInputError("global_query: no tokens");
  const RowVector mean = sum / double(count);
  return matmul(mean, params.w_q) + params.b_q;
}

AttentionOutput attention_forward(const RowVector &query, const Tensor &embeddings, const ModelParams &params) {
  if (query.size() != params.w_k.cols() || embeddings.cols() != params.w_k.rows() ||
      embeddings.cols() != params.w_v.rows()) {
    throw DimensionError("attention_forward: query/embedding shapes do not match W_k/W_v");
  }
  Tensor k = embeddings * params.w_k;
  k.rowwise() += params.b_k;
  Tensor v = embeddings * params.w_v;
  v.rowwise() += params.b_v;
  const Vector scores = k * query.transpose() / std::sqrt(double(query.size()));
  AttentionOutput out;
  out.weights = softmax(scores);
  out.context = v.transpose() * out.weights;
  return out;
}

double kl_regularizer(const Vector &attention, const PatchDistribution &target, double kl_floor) {
  if (attention.size() != target.size()) {
    throw DimensionError("kl_regularizer: attention has " + std::to_string(attention.size()) + " entries, target " +
                         std::to_string(target.size()));
  }
  const Vector floored = target.cwiseMax(kl_floor);
  const Vector ref = floored / floored.sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < attention.size(); ++i) {
    const double a = attention[i];
    if (a > 0.0) kl += a * (std::log(a) - std::log(ref[i]));
  }
  return std::max(kl, 0.0);
}

namespace {

struct Forward {
  std::vector<Tensor> x, e, k, v;
  RowVector mu, q;
  std::vector<Vector> a, ctx;
  std::vector<Vector> ref; // floored, renormalised targets
  RowVector cbar, logits, probs;
  LossBreakdown loss;
};

void check_batch(const Batch &b, const ModelConfig &cfg) {
  if (b.frames.empty()) throw EmptyInputError("batch has no frames");
  if (b.targets.size() != b.frames.size()) throw DimensionError("batch: targets do not align with frames");
  if (b.label < 0 || b.label >= cfg.n_classes) throw DomainError("batch: label out of range");
}

Forward run_forward(const Batch &b, const ModelParams &p, const ModelConfig &cfg) {
  check_batch(b, cfg);
  Forward f;
  const auto n_frames = b.frames.size();
  f.x.reserve(n_frames);
  f.e.reserve(n_frames);
  for (const auto &frame : b.frames) {
    f.x.push_back(extract_patches(frame, cfg.patch_px));
    Tensor e = f.x.back() * p.patch_embed;
    e.rowwise() += p.embed_bias;
    f.e.push_back(std::move(e));
  }
  const Eigen::Index n_patches = f.x.front().rows();
  RowVector sum = RowVector::Zero(cfg.d_model);
  for (const auto &e : f.e) {
    if (e.rows() != n_patches) throw DimensionError("batch: frames differ in size");
    sum += e.colwise().sum();
  }
  f.mu = sum / double(n_patches * Eigen::Index(n_frames));
  f.q = f.mu * p.w_q + p.b_q;
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(cfg.d_k));

  f.cbar = RowVector::Zero(cfg.d_model);
  f.loss.kl_per_frame.resize(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    if (b.targets[t].size() != n_patches) throw DimensionError("batch: target length differs from patch count");
    Tensor k = f.e[t] * p.w_k;
    k.rowwise() += p.b_k;
    Tensor v = f.e[t] * p.w_v;
    v.rowwise() += p.b_v;
    const Vector scores = (k * f.q.transpose()) * inv_sqrt_dk;
    Vector a = softmax(scores);
    Vector c = v.transpose() * a;
    f.cbar += c.transpose();
    const Vector floored = b.targets[t].cwiseMax(cfg.kl_floor);
    f.ref.push_back(floored / floored.sum());
    f.loss.kl_per_frame[t] = kl_regularizer(a, b.targets[t], cfg.kl_floor);
    f.k.push_back(std::move(k));
    f.v.push_back(std::move(v));
    f.a.push_back(std::move(a));
    f.ctx.push_back(std::move(c));
  }
  f.cbar /= double(n_frames);
  f.logits = f.cbar * p.head + p.head_bias;
  const double m = f.logits.maxCoeff();
  const double lse = m + std::log((f.logits.array() - m).exp().sum());
  f.probs = (f.logits.array() - lse).exp().matrix();
  f.loss.ce = lse - f.logits[b.label];
  f.loss.kl_sum = std::accumulate(f.loss.kl_per_frame.begin(), f.loss.kl_per_frame.end(), 0.0);
  f.loss.total = f.loss.ce + cfg.lambda * f.loss.kl_sum;
  Eigen::Index arg = 0;
  f.logits.maxCoeff(&arg);
  f.loss.predicted = static_cast<int>(arg);
  return f;
}

} // namespace

LossBreakdown total_loss(const Batch &batch, const ModelParams &params, const ModelConfig &cfg,
                         AttentionRecord *record) {
  Forward f = run_forward(batch, params, cfg);
  if (record) {
    record->weights = f.a;
    record->context = f.ctx;
  }
  return f.loss;
}

Gradient backward(const Batch &batch, const ModelParams &params, const ModelConfig &cfg) {
  const Forward f = run_forward(batch, params, cfg);
  Gradient g{f.loss, ModelParams::zeros(cfg)};
  ModelParams &d = g.grad;
  const auto n_frames = f.x.size();
  const Eigen::Index n_patches = f.x.front().rows();
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(cfg.d_k));

  RowVector dz = f.probs;
  dz[batch.label] -= 1.0;
  d.head = f.cbar.transpose() * dz;
  d.head_bias = dz;
  const RowVector dc = (dz * params.head.transpose()) / double(n_frames);

  RowVector dq = RowVector::Zero(cfg.d_k);
  std::vector<Tensor> de(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const Vector &a = f.a[t];
    Vector da = f.v[t] * dc.transpose();
    if (cfg.lambda != 0.0) {
      for (Eigen::Index i = 0; i < n_patches; ++i) {
        if (a[i] > 0.0) da[i] += cfg.lambda * (std::log(a[i]) - std::log(f.ref[t][i]) + 1.0);
      }
    }
    const Vector ds = a.cwiseProduct((da.array() - a.dot(da)).matrix());
    const Tensor dv = a * dc;                                // P x d_model
    const Tensor dk = (ds * f.q) * inv_sqrt_dk;              // P x d_k
    dq += (ds.transpose() * f.k[t]) * inv_sqrt_dk;
    d.w_k.noalias() += f.e[t].transpose() * dk;
    d.b_k += dk.colwise().sum();
    d.w_v.noalias() += f.e[t].transpose() * dv;
    d.b_v += dv.colwise().sum();
    de[t] = dk * params.w_k.transpose() + dv * params.w_v.transpose();
  }
  d.w_q = f.mu.transpose() * dq;
  d.b_q = dq;
  const RowVector dmu = (dq * params.w_q.transpose()) / double(n_patches * Eigen::Index(n_frames));
  for (std::size_t t = 0; t < n_frames; ++t) {
    de[t].rowwise() += dmu;
    d.patch_embed.noalias() += f.x[t].transpose() * de[t];
    d.embed_bias += de[t].colwise().sum();
  }
  return g;
}

void sgd_step(ModelParams &params, const ModelParams &grad, double lr) {
  ModelParams scaled = grad;
  scaled *= -lr;
  params += scaled;
}

int check_dataset(const Dataset &data, const ModelConfig &cfg) {
  if (data.empty()) throw EmptyInputError("dataset is empty");
  int n_patches = -1;
  for (const auto &b : data) {
    check_batch(b, cfg);
    for (const auto &fr : b.frames) {
      if (fr.rows() % cfg.patch_px != 0 || fr.cols() % cfg.patch_px != 0) {
        throw GeometryError("sample " + b.id + ": frame does not tile by patch_px");
      }
      const int p = static_cast<int>((fr.rows() / cfg.patch_px) * (fr.cols() / cfg.patch_px));
      if (n_patches >= 0 && p != n_patches) throw DimensionError("dataset frames differ in size");
      n_patches = p;
    }
    for (const auto &t : b.targets) {
      if (t.size() != n_patches) throw DimensionError("sample " + b.id + ": target length differs from patch count");
    }
  }
  return n_patches;
}

TrainResult train(const Dataset &data, const ModelConfig &cfg, const std::function<void(const EpochLog &)> &on_epoch) {
  const int n_patches = check_dataset(data, cfg);
  cfg.validate(n_patches);
  RngState rng(cfg.seed);
  TrainResult out{ModelParams::init(cfg, rng), {}};
  auto &order_rng = rng.stream("train/shuffle");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, order_rng);
    EpochLog log{epoch, 0.0, 0.0, 0.0};
    int correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      ModelParams acc = ModelParams::zeros(cfg);
      for (std::size_t i = start; i < stop; ++i) {
        Gradient g = backward(data[order[i]], out.params, cfg);
        if (!std::isfinite(g.loss.total)) {
          throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch), epoch - 1);
        }
        acc += g.grad;
        log.ce += g.loss.ce;
        log.kl += g.loss.kl_sum;
        correct += g.loss.predicted == data[order[i]].label;
      }
      acc *= 1.0 / double(stop - start);
      sgd_step(out.params, acc, cfg.lr);
      if (!out.params.all_finite()) {
        throw TrainingDiverged("non-finite parameters in epoch " + std::to_string(epoch), epoch - 1);
      }
    }
    log.ce /= double(data.size());
    log.kl /= double(data.size());
    log.acc = double(correct) / double(data.size());
    out.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return out;
}

// --- checkpoint ------------------------------------------------------------------

Bytes encode_checkpoint(const ModelParams &params, const nlohmann::json &config) {
  if (!config.is_object() || !config.contains("model")) throw FormatError("checkpoint: config block lacks 'model'");
  Bytes out;
  put_raw(out, "GZRM");
  put_u32(out, 1);
  const std::string text = config.dump();
  put_u64(out, text.size());
  put_raw(out, text);
  params.visit([&](const auto &t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) put_f64(out, t.data()[i]);
  });
  return out;
}

std::pair<ModelParams, nlohmann::json> decode_checkpoint(const Bytes &bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4 || in.raw(4) != "GZRM") throw FormatError("checkpoint: bad magic (expected GZRM)");
  const std::uint32_t version = in.u32();
  if (version != 1) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t len = in.u64();
  if (len > in.remaining()) throw LengthError("checkpoint: config block runs past the end");
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(in.raw(static_cast<std::size_t>(len)));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("checkpoint: config is not valid JSON: ") + e.what());
  }
  if (!config.contains("model")) throw FormatError("checkpoint: config block lacks 'model'");
  const ModelConfig mc = config.at("model").get<ModelConfig>();
  ModelParams params = ModelParams::zeros(mc);
  if (in.remaining() != std::size_t(params.size()) * 8) throw LengthError("checkpoint: parameter payload has the wrong length");
  params.visit([&](auto &t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = in.f64();
  });
  if (!params.all_finite()) throw FormatError("checkpoint: non-finite parameter");
  return {std::move(params), std::move(config)};
}

} // namespace gazereg

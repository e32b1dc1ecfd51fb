#include "hcanet/pipeline.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace hcanet::pipeline {

namespace {

constexpr char kMetaConfig[] = "meta.model_config";
constexpr std::size_t kPersonChannels = data::kNumKeypoints + 1 + 3;

bool divisible(std::size_t n, std::size_t f) { return f != 0 && n % f == 0; }

Tensor encode_config(const ModelConfig& c) {
  return Tensor({6}, {static_cast<double>(c.height), static_cast<double>(c.width),
                      static_cast<double>(c.tps_k), static_cast<double>(c.features),
                      static_cast<double>(c.unet_depth), static_cast<double>(c.unet_channels)});
}

ModelConfig decode_config(const nn::ModelParams& params) {
  if (!params.contains(kMetaConfig)) {
    throw ArgumentError("checkpoint has no meta.model_config entry; not a try-on model");
  }
  const Tensor& t = params.at(kMetaConfig).value();
  if (t.shape() != Shape{6}) throw ArgumentError("meta.model_config must have 6 entries");
  auto get = [&](std::size_t i) {
    const double v = t[i];
    if (!(v >= 1.0) || v != std::floor(v)) throw ArgumentError("meta.model_config: bad entry");
    return static_cast<std::size_t>(v);
  };
  return {get(0), get(1), get(2), get(3), get(4), get(5)};
}

}  // namespace

void ModelConfig::validate() const {
  if (tps_k < 2) throw ArgumentError("tps_k must be >= 2");
  if (features == 0 || unet_channels == 0) throw ArgumentError("channel widths must be positive");
  if (unet_depth == 0 || unet_depth > 8) throw ArgumentError("unet_depth must be in 1..8");
  if (!divisible(height, 4) || !divisible(width, 4)) {
    throw ArgumentError("image size must be divisible by 4, got " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  const std::size_t f = std::size_t{1} << unet_depth;
  if (!divisible(height, f) || !divisible(width, f)) {
    throw ArgumentError("image size must be divisible by 2^unet_depth = " + std::to_string(f));
  }
  if (height < 16 || width < 16) throw ArgumentError("image size must be at least 16x16");
}

TrainMode parse_mode(const std::string& name) {
  if (name == "stage1") return TrainMode::kStage1;
  if (name == "stage2") return TrainMode::kStage2;
  if (name == "joint") return TrainMode::kJoint;
  throw ArgumentError("unknown training mode '" + name + "' (expected stage1, stage2 or joint)");
}

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kStage1: return "stage1";
    case TrainMode::kStage2: return "stage2";
    case TrainMode::kJoint: return "joint";
  }
  return "?";
}

void TrainConfig::validate() const {
  weights.validate();
  model.validate();
  if (batch == 0) throw ArgumentError("batch must be positive");
  if (!(decay_start >= 0.0 && decay_start <= 1.0)) throw ArgumentError("decay_start must lie in [0,1]");
  if (!(adam.lr >= 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ArgumentError("invalid Adam hyperparameters");
  }
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  const double steps = static_cast<double>(cfg.steps);
  const double start = cfg.decay_start * steps;
  const double s = static_cast<double>(step);
  if (s < start || steps <= start) return cfg.adam.lr;
  return cfg.adam.lr * std::max(0.0, (steps - s) / (steps - start));
}

// ---------------------------------------------------------------------------

nn::NetSpec TryOnModel::spec(const ModelConfig& c) {
  c.validate();
  nn::NetSpec s;
  auto append = [&s](const nn::NetSpec& part) { s.insert(s.end(), part.begin(), part.end()); };
  const std::size_t f = c.features;
  for (const char* stage : {"stage1", "stage2"}) {
    const std::string p(stage);
    append(nn::extractor_spec(p + ".extractor_p1", data::kNumKeypoints, f));
    append(nn::extractor_spec(p + ".extractor_p2", 1, f));
    append(nn::extractor_spec(p + ".extractor_p3", 3, f));
    append(nn::extractor_spec(p + ".extractor_c", p == "stage1" ? 3 : 4, f));
    append(hca::hca_spec(p + ".hca", f));
  }
  append(nn::regressor_spec("stage1.regressor", {f, c.height / 4, c.width / 4, c.tps_k}));
  append(nn::unet_spec("stage2.unet", {kPersonChannels + 4 + f, c.unet_channels, c.unet_depth}));
  return s;
}

TryOnModel::TryOnModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      params_(nn::init_params(spec(config), seed)),
      basis_(config.tps_k, config.height, config.width) {
  params_.add_buffer(kMetaConfig, encode_config(config_));
}

TryOnModel::TryOnModel(nn::ModelParams params)
    : config_(decode_config(params)),
      params_(std::move(params)),
      basis_(config_.tps_k, config_.height, config_.width) {
  for (const auto& w : spec(config_)) {
    if (!params_.contains(w.name) || params_.at(w.name).shape() != w.shape) {
      throw ArgumentError("checkpoint is missing a " + to_string(w.shape) + " tensor named " + w.name);
    }
  }
}

nn::UnetShape TryOnModel::unet_shape() const {
  return {kPersonChannels + 4 + config_.features, config_.unet_channels, config_.unet_depth};
}

void TryOnModel::save(const std::string& path) const { nn::save_checkpoint(path, params_); }

TryOnModel TryOnModel::load(const std::string& path) {
  return TryOnModel(nn::load_checkpoint(path));
}

// ---------------------------------------------------------------------------

namespace {

void check_sample(const ModelConfig& c, const Sample& s) {
  if (s.clothing.rank() != 3 || s.height() != c.height || s.width() != c.width) {
    throw ShapeError("sample is " + to_string(s.clothing.shape()) + " but the model expects " +
                     std::to_string(c.height) + "x" + std::to_string(c.width));
  }
}

hca::PersonFeatures person_features(const nn::ModelParams& params, const std::string& stage,
                                    const Sample& s) {
  return {nn::extractor_forward(params, stage + ".extractor_p1", ad::constant(s.person.pose)),
          nn::extractor_forward(params, stage + ".extractor_p2", ad::constant(s.person.body)),
          nn::extractor_forward(params, stage + ".extractor_p3", ad::constant(s.person.reserved))};
}

}  // namespace

Stage1Output stage1_forward(const TryOnModel& model, const Sample& sample,
                            hca::AttentionTrace* trace) {
  check_sample(model.config(), sample);
  const auto& params = model.params();
  const hca::PersonFeatures p = person_features(params, "stage1", sample);
  const Var x_c = nn::extractor_forward(params, "stage1.extractor_c", ad::constant(sample.clothing));
  const Var x_i = hca::hca_forward(p, x_c, params, "stage1.hca", trace);
  Stage1Output out;
  out.theta = nn::regressor_forward(params, "stage1.regressor", x_i);
  out.grid = tps::tps_grid(out.theta, model.basis());
  out.warped_c = tps::warp(ad::constant(sample.clothing), out.grid);
  out.warped_cm = tps::warp(ad::constant(sample.clothing_mask), out.grid);
  return out;
}

Stage2Output stage2_forward(const TryOnModel& model, const Sample& sample, const Var& warped_c,
                            const Var& warped_cm, hca::AttentionTrace* trace) {
  check_sample(model.config(), sample);
  const auto& params = model.params();
  const hca::PersonFeatures p = person_features(params, "stage2", sample);
  const Var cloth = ad::concat_channels({warped_c, warped_cm});
  const Var x_c = nn::extractor_forward(params, "stage2.extractor_c", cloth);
  const Var x_ii = ad::upsample_nearest(hca::hca_forward(p, x_c, params, "stage2.hca", trace), 4);
  const Var input = ad::concat_channels({ad::constant(sample.person.pose),
                                         ad::constant(sample.person.body),
                                         ad::constant(sample.person.reserved), warped_c, warped_cm,
                                         x_ii});
  const Var y = nn::unet_forward(params, "stage2.unet", model.unet_shape(), input);
  Stage2Output out;
  out.i_r = ad::slice_channels(y, 0, 3);
  out.m_o = ad::slice_channels(y, 3, 1);
  out.i_o = losses::compose_output(out.m_o, warped_c, out.i_r);
  return out;
}

// ---------------------------------------------------------------------------

void adam_step(std::span<const Var> params, AdamState& state, std::size_t t, double lr,
               const AdamConfig& cfg) {
  if (t == 0) throw ArgumentError("adam_step: t must be >= 1");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), Tensor());
    state.v.assign(params.size(), Tensor());
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var p = params[i];
    const Tensor& g = p.node()->grad;
    if (g.empty()) continue;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (m.empty()) {
      m = Tensor(g.shape());
      v = Tensor(g.shape());
    }
    Tensor& w = p.mutable_value();
    for (std::size_t j = 0; j < w.numel(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

std::string history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss_total,loss_l1,loss_reg,loss_vgg,loss_mask\n";
  for (const auto& r : history) {
    out << r.step << ',' << r.total << ',' << r.l1 << ',' << r.reg << ',' << r.vgg << ','
        << r.mask << '\n';
  }
  return out.str();
}

namespace {

double scalar(const Var& v) { return v.defined() ? v.value().item() : 0.0; }

}  // namespace

std::vector<LossRecord> train(TryOnModel& model, const std::vector<Sample>& dataset,
                              const TrainConfig& cfg, TrainMode mode, const StepCallback& on_step) {
  if (dataset.empty()) throw ArgumentError("train: dataset is empty");
  cfg.validate();
  if (!(cfg.model == model.config())) {
    throw ArgumentError("train: configuration architecture differs from the model's");
  }
  for (const auto& s : dataset) check_sample(model.config(), s);

  std::optional<losses::PerceptualNet> net;
  if (mode != TrainMode::kStage1) {
    net = cfg.perceptual_weights.empty() ? losses::PerceptualNet(cfg.perceptual_seed)
                                         : losses::PerceptualNet::from_checkpoint(cfg.perceptual_weights);
  }

  const std::string prefix = mode == TrainMode::kStage1 ? "stage1." : mode == TrainMode::kStage2 ? "stage2." : "";
  const std::vector<Var> trained = model.params().parameters(prefix);
  AdamState state;
  std::vector<LossRecord> history;
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    model.params().zero_grad();
    LossRecord rec;
    rec.step = step;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Sample& s = dataset[(step * cfg.batch + b) % dataset.size()];
      Var total;
      if (mode == TrainMode::kStage2) {
        Var warped_c, warped_cm;
        {
          ad::NoGradGuard frozen;
          const Stage1Output s1 = stage1_forward(model, s);
          warped_c = ad::constant(s1.warped_c.value());
          warped_cm = ad::constant(s1.warped_cm.value());
        }
        const Stage2Output s2 = stage2_forward(model, s, warped_c, warped_cm);
        const auto t = losses::tryon_loss(s2.i_o, ad::constant(s.gt_image), s2.m_o,
                                          ad::constant(s.gt_onbody_mask), *net, cfg.weights);
        total = t.total;
        rec.l1 += scalar(t.l1) * inv_batch;
        rec.vgg += scalar(t.vgg) * inv_batch;
        rec.mask += scalar(t.mask) * inv_batch;
      } else {
        const Stage1Output s1 = stage1_forward(model, s);
        const auto m = losses::matching_loss(s1.warped_c, ad::constant(s.gt_warped), s1.grid,
                                             s1.warped_cm, ad::constant(s.gt_onbody_mask),
                                             cfg.weights, cfg.use_mask_term, cfg.reg_gx_only);
        total = m.total;
        rec.l1 += scalar(m.l1) * inv_batch;
        rec.reg += scalar(m.reg) * inv_batch;
        rec.mask += scalar(m.mask) * inv_batch;
        if (mode == TrainMode::kJoint) {
          const Stage2Output s2 = stage2_forward(model, s, s1.warped_c, s1.warped_cm);
          const auto t = losses::tryon_loss(s2.i_o, ad::constant(s.gt_image), s2.m_o,
                                            ad::constant(s.gt_onbody_mask), *net, cfg.weights);
          total = ad::add(total, t.total);
          rec.l1 += scalar(t.l1) * inv_batch;
          rec.vgg += scalar(t.vgg) * inv_batch;
          rec.mask += scalar(t.mask) * inv_batch;
        }
      }
      const double value = total.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (batch element " +
                           std::to_string(b) + ")");
      }
      rec.total += value * inv_batch;
      ad::backward(ad::scale(total, inv_batch));
    }
    adam_step(trained, state, step + 1, learning_rate(cfg, step), cfg.adam);
    history.push_back(rec);
    if (on_step) on_step(rec);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
        (step + 1) % cfg.checkpoint_every == 0) {
      model.save(cfg.checkpoint_prefix + ".step" + std::to_string(step + 1) + ".hcac");
    }
  }
  return history;
}

}  // namespace hcanet::pipeline

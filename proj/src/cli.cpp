#include "hcanet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <ostream>

#include "CLI11.hpp"
#include "hcanet/config.hpp"
#include "hcanet/gradcheck_suite.hpp"
#include "hcanet/metrics.hpp"
#include "hcanet/pipeline.hpp"

namespace hcanet::cli {

namespace {

namespace fs = std::filesystem;
using pipeline::TryOnModel;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    h = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    w = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw UsageError("--size must look like HxW, got '" + s + "'");
  }
  if (h < 8 || w < 8) throw UsageError("--size must be at least 8x8");
  return {h, w};
}

// out.png → out<suffix>.png next to it.
std::string sibling(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// ---- subcommands --------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  std::string size = "256x192";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto [h, w] = parse_size(a.size);
  data::write_dataset(a.out, a.count, a.seed, h, w);
  out << "wrote " << a.count << " samples (" << h << "x" << w << ") to " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string mode = "stage1";
  std::string config;
  std::string out;
  std::string init;
  std::string history;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  pipeline::TrainMode mode;
  try {
    mode = pipeline::parse_mode(a.mode);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  pipeline::TrainConfig cfg = a.config.empty() ? pipeline::TrainConfig{} : config::load_train_config(a.config);
  const std::vector<data::Sample> dataset = data::load_dataset(a.data);
  if (dataset.empty()) throw std::runtime_error("no samples found in '" + a.data + "'");
  std::optional<TryOnModel> model;
  if (!a.init.empty()) {
    model.emplace(TryOnModel::load(a.init));
    cfg.model = model->config();
  } else {
    model.emplace(cfg.model, cfg.seed);
  }
  std::ofstream history;
  if (!a.history.empty()) {
    ensure_parent(a.history);
    history.open(a.history);
    if (!history) throw std::runtime_error("cannot open '" + a.history + "' for writing");
    history << pipeline::history_csv({});
    history.precision(17);
  }
  const std::size_t report_every = std::max<std::size_t>(1, cfg.steps / 10);
  pipeline::train(*model, dataset, cfg, mode, [&](const pipeline::LossRecord& r) {
    if (history.is_open()) {
      history << r.step << ',' << r.total << ',' << r.l1 << ',' << r.reg << ',' << r.vgg << ','
              << r.mask << '\n';
    }
    if (r.step % report_every == 0 || r.step + 1 == cfg.steps) {
      out << "step " << r.step << " loss " << r.total << '\n';
    }
  });
  ensure_parent(a.out);
  model->save(a.out);
  out << "saved " << a.out << '\n';
  return kExitOk;
}

struct InferArgs {
  std::string ckpt;
  std::string sample;
  std::string out;
};

int cmd_warp(const InferArgs& a, std::ostream& out) {
  const TryOnModel model = TryOnModel::load(a.ckpt);
  const data::Sample s = data::load_sample(a.sample);
  ad::NoGradGuard no_grad;
  const auto o = pipeline::stage1_forward(model, s);
  ensure_parent(a.out);
  data::save_image(a.out, clamp01(o.warped_c.value()));
  data::save_image(sibling(a.out, "_mask"), clamp01(o.warped_cm.value()));
  out << "wrote " << a.out << " and " << sibling(a.out, "_mask") << '\n';
  return kExitOk;
}

int cmd_tryon(const InferArgs& a, std::ostream& out) {
  const TryOnModel model = TryOnModel::load(a.ckpt);
  const data::Sample s = data::load_sample(a.sample);
  ad::NoGradGuard no_grad;
  const auto o1 = pipeline::stage1_forward(model, s);
  const auto o2 = pipeline::stage2_forward(model, s, o1.warped_c, o1.warped_cm);
  ensure_parent(a.out);
  data::save_image(a.out, clamp01(o2.i_o.value()));
  data::save_image(sibling(a.out, "_mask"), clamp01(o2.m_o.value()));
  data::save_image(sibling(a.out, "_rendered"), clamp01(o2.i_r.value()));
  data::save_image(sibling(a.out, "_warped"), clamp01(o1.warped_c.value()));
  data::save_image(sibling(a.out, "_warped_mask"), clamp01(o1.warped_cm.value()));
  out << "wrote " << a.out << " (+ _mask, _rendered, _warped, _warped_mask)\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const TryOnModel model = TryOnModel::load(a.ckpt);
  const auto dirs = data::list_samples(a.data);
  if (dirs.empty()) throw std::runtime_error("no samples found in '" + a.data + "'");
  std::ostringstream csv;
  csv << std::setprecision(10) << "id,iou,ssim\n";
  double iou_sum = 0.0, ssim_sum = 0.0;
  for (const auto& dir : dirs) {
    const data::Sample s = data::load_sample(dir);
    ad::NoGradGuard no_grad;
    const auto o1 = pipeline::stage1_forward(model, s);
    const auto o2 = pipeline::stage2_forward(model, s, o1.warped_c, o1.warped_cm);
    const double iou = metrics::iou(o1.warped_cm.value(), s.gt_onbody_mask);
    const double ssim = metrics::ssim(o2.i_o.value(), s.gt_image);
    iou_sum += iou;
    ssim_sum += ssim;
    csv << fs::path(dir).filename().string() << ',' << iou << ',' << ssim << '\n';
  }
  const double n = static_cast<double>(dirs.size());
  csv << "mean," << iou_sum / n << ',' << ssim_sum / n << '\n';
  ensure_parent(a.out);
  std::ofstream file(a.out);
  if (!file) throw std::runtime_error("cannot open '" + a.out + "' for writing");
  file << csv.str();
  out << "mean IoU " << iou_sum / n << ", mean SSIM " << ssim_sum / n << " over " << dirs.size()
      << " samples\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& module, std::ostream& out) {
  const auto known = gradcheck::modules();
  if (!module.empty() && std::find(known.begin(), known.end(), module) == known.end()) {
    throw UsageError("unknown --module '" + module + "'");
  }
  const auto rows = gradcheck::run(module);
  bool ok = true;
  out << std::left << std::setw(12) << "module" << std::setw(30) << "check" << std::setw(14)
      << "max_rel_err" << std::setw(10) << "tol" << "result\n";
  for (const auto& r : rows) {
    ok = ok && r.passed();
    out << std::left << std::setw(12) << r.module << std::setw(30) << r.name << std::setw(14)
        << std::scientific << std::setprecision(3) << r.max_rel_err << std::setw(10) << r.tolerance
        << std::defaultfloat << (r.passed() ? "ok" : "FAIL") << '\n';
  }
  out << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage virtual try-on with hierarchical cross-attention", "hcanet"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of samples")->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Seed of the first sample");
  s->add_option("--size", synth.size, "Image size HxW")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--mode", train.mode, "stage1, stage2 or joint")->capture_default_str();
  t->add_option("--config", train.config, "key = value configuration file");
  t->add_option("--out", train.out, "Output checkpoint")->required();
  t->add_option("--init", train.init, "Start from this checkpoint instead of a fresh model");
  t->add_option("--history", train.history, "Write the per-step loss history CSV here");

  InferArgs warp;
  auto* w = app.add_subcommand("warp", "Run stage I and write the warped clothing and mask");
  w->add_option("--ckpt", warp.ckpt, "Checkpoint")->required();
  w->add_option("--sample", warp.sample, "Sample directory")->required();
  w->add_option("--out", warp.out, "Output PNG")->required();

  InferArgs tryon;
  auto* y = app.add_subcommand("tryon", "Run both stages and write the try-on result");
  y->add_option("--ckpt", tryon.ckpt, "Checkpoint")->required();
  y->add_option("--sample", tryon.sample, "Sample directory")->required();
  y->add_option("--out", tryon.out, "Output PNG")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Compute IoU and SSIM over a dataset");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
  e->add_option("--data", eval.data, "Dataset directory")->required();
  e->add_option("--out", eval.out, "Output CSV")->required();

  std::string module;
  auto* g = app.add_subcommand("gradcheck", "Run the finite-difference gradient suites");
  g->add_option("--module", module, "Only this module");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train, out);
    if (*w) return cmd_warp(warp, out);
    if (*y) return cmd_tryon(tryon, out);
    if (*e) return cmd_eval(eval, out);
    if (*g) return cmd_gradcheck(module, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace hcanet::cli

#include "hcanet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hcanet/tps.hpp"
#include "json.hpp"

namespace hcanet::data {

namespace fs = std::filesystem;

namespace {

// Uniform doubles from the top 53 bits of mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct Vec2 {
  double x, y;
};

// Normalized [-1,1] coordinate of a pixel centre.
inline double norm_coord(std::size_t i, std::size_t n) {
  return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

bool in_ellipse(Vec2 p, Vec2 c, double rx, double ry) {
  const double dx = (p.x - c.x) / rx, dy = (p.y - c.y) / ry;
  return dx * dx + dy * dy <= 1.0;
}

bool in_capsule(Vec2 p, Vec2 a, Vec2 b, double radius_x, double radius_y) {
  // Distance in a frame scaled so the capsule radius is 1 along both axes.
  const Vec2 pa{(p.x - a.x) / radius_x, (p.y - a.y) / radius_y};
  const Vec2 ba{(b.x - a.x) / radius_x, (b.y - a.y) / radius_y};
  const double len2 = ba.x * ba.x + ba.y * ba.y;
  const double t = len2 > 0.0 ? std::clamp((pa.x * ba.x + pa.y * ba.y) / len2, 0.0, 1.0) : 0.0;
  const double dx = pa.x - t * ba.x, dy = pa.y - t * ba.y;
  return dx * dx + dy * dy <= 1.0;
}

Keypoint to_keypoint(Vec2 p) {
  Keypoint k{(p.x + 1.0) / 2.0, (p.y + 1.0) / 2.0, true};
  k.visible = k.x >= 0.0 && k.x <= 1.0 && k.y >= 0.0 && k.y <= 1.0;
  if (!k.visible) k.x = k.y = 0.0;
  return k;
}

// Canonical flat clothing: a shirt body with a neckline notch, centred in the frame.
constexpr double kClothHalfW = 0.5;
constexpr double kClothHalfH = 0.55;

bool in_flat_clothing(Vec2 p) {
  if (std::abs(p.x) > kClothHalfW || std::abs(p.y) > kClothHalfH) return false;
  return !in_ellipse(p, {0.0, -kClothHalfH}, 0.16, 0.12);
}

struct BodyLayout {
  Vec2 head, neck, shoulder_r, shoulder_l, elbow_r, elbow_l, wrist_r, wrist_l;
  Vec2 hip_r, hip_l, knee_r, knee_l, ankle_r, ankle_l;
  Vec2 nose, eye_r, eye_l, ear_r, ear_l;
};

BodyLayout layout(const SynthSpec& s) {
  BodyLayout b{};
  const double cx = s.torso_cx, cy = s.torso_cy, ax = s.torso_ax, ay = s.torso_ay;
  b.head = {cx, cy - ay - s.head_ry - 0.02};
  b.neck = {cx, cy - ay * 0.95};
  b.shoulder_r = {cx - ax * 0.9, cy - ay * 0.75};
  b.shoulder_l = {cx + ax * 0.9, cy - ay * 0.75};
  b.elbow_r = {b.shoulder_r.x - 0.12, b.shoulder_r.y + 0.4};
  b.elbow_l = {b.shoulder_l.x + 0.12, b.shoulder_l.y + 0.4};
  b.wrist_r = {b.elbow_r.x - 0.02, b.elbow_r.y + 0.35};
  b.wrist_l = {b.elbow_l.x + 0.02, b.elbow_l.y + 0.35};
  b.hip_r = {cx - ax * 0.5, cy + ay * 0.9};
  b.hip_l = {cx + ax * 0.5, cy + ay * 0.9};
  b.knee_r = {b.hip_r.x, b.hip_r.y + 0.5};
  b.knee_l = {b.hip_l.x, b.hip_l.y + 0.5};
  b.ankle_r = {b.knee_r.x, b.knee_r.y + 0.5};
  b.ankle_l = {b.knee_l.x, b.knee_l.y + 0.5};
  b.nose = {b.head.x, b.head.y + 0.04};
  b.eye_r = {b.head.x - 0.06, b.head.y - 0.03};
  b.eye_l = {b.head.x + 0.06, b.head.y - 0.03};
  b.ear_r = {b.head.x - s.head_rx, b.head.y};
  b.ear_l = {b.head.x + s.head_rx, b.head.y};
  return b;
}

Pose pose_from_layout(const BodyLayout& b) {
  // OpenPose COCO-18 order.
  const Vec2 pts[kNumKeypoints] = {b.nose,    b.neck,    b.shoulder_r, b.elbow_r, b.wrist_r,
                                   b.shoulder_l, b.elbow_l, b.wrist_l, b.hip_r,   b.knee_r,
                                   b.ankle_r, b.hip_l,   b.knee_l,     b.ankle_l, b.eye_r,
                                   b.eye_l,   b.ear_r,   b.ear_l};
  Pose pose{};
  for (std::size_t i = 0; i < kNumKeypoints; ++i) pose[i] = to_keypoint(pts[i]);
  return pose;
}

// Displacements taking the flat clothing onto the torso: output pixel p samples the clothing at
// ((p - c) ⊙ scale), plus a small smooth bend.
std::vector<double> torso_theta(const SynthSpec& s, Rng& rng) {
  const std::size_t k = s.grid_side, n = k * k;
  const double centre_x = s.torso_cx, centre_y = s.torso_cy + 0.02;
  const double scale_x = kClothHalfW / (s.torso_ax * 1.05);
  const double scale_y = kClothHalfH / (s.torso_ay * 1.1);
  std::vector<double> theta(2 * n);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const double sx = norm_coord(c, k), sy = norm_coord(r, k);
      const double tx = (sx - centre_x) * scale_x + rng.uniform(-0.03, 0.03);
      const double ty = (sy - centre_y) * scale_y + rng.uniform(-0.03, 0.03);
      theta[r * k + c] = std::clamp(tx - sx, -0.9, 0.9);
      theta[n + r * k + c] = std::clamp(ty - sy, -0.9, 0.9);
    }
  }
  return theta;
}

std::array<double, 3> random_color(Rng& rng) {
  return {rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95)};
}

void check_range(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError(std::string(what) + ": values must lie in [0,1]");
  }
}

void check_plane(const Tensor& t, std::size_t channels, std::size_t h, std::size_t w,
                 const char* what) {
  if (t.shape() != Shape{channels, h, w}) {
    throw ShapeError(std::string(what) + ": expected " + to_string(Shape{channels, h, w}) +
                     ", got " + to_string(t.shape()));
  }
}

}  // namespace

void validate_sample(const Sample& s) {
  const std::size_t h = s.clothing.dim(1), w = s.clothing.dim(2);
  check_plane(s.person.pose, kNumKeypoints, h, w, "pose heatmaps");
  check_plane(s.person.body, 1, h, w, "body shape");
  check_plane(s.person.reserved, 3, h, w, "reserved regions");
  check_plane(s.clothing, 3, h, w, "clothing");
  check_plane(s.clothing_mask, 1, h, w, "clothing mask");
  check_plane(s.gt_warped, 3, h, w, "warped clothing ground truth");
  check_plane(s.gt_onbody_mask, 1, h, w, "on-body mask");
  check_plane(s.gt_image, 3, h, w, "ground-truth image");
  check_range(s.person.pose, "pose heatmaps");
  check_range(s.person.body, "body shape");
  check_range(s.person.reserved, "reserved regions");
  check_range(s.clothing, "clothing");
  check_range(s.clothing_mask, "clothing mask");
  check_range(s.gt_warped, "warped clothing ground truth");
  check_range(s.gt_onbody_mask, "on-body mask");
  check_range(s.gt_image, "ground-truth image");
}

SynthSpec random_spec(std::uint64_t seed, std::size_t height, std::size_t width,
                      std::size_t grid_side, Texture texture) {
  if (height < 8 || width < 8) throw ArgumentError("synth: image must be at least 8×8");
  Rng rng(seed);
  SynthSpec s;
  s.seed = seed;
  s.height = height;
  s.width = width;
  s.grid_side = grid_side;
  s.torso_cx = rng.uniform(-0.12, 0.12);
  s.torso_cy = rng.uniform(0.0, 0.15);
  s.torso_ax = rng.uniform(0.32, 0.45);
  s.torso_ay = rng.uniform(0.36, 0.44);
  s.head_rx = rng.uniform(0.14, 0.18);
  s.head_ry = rng.uniform(0.17, 0.21);
  s.arm_width = rng.uniform(0.08, 0.12);
  s.leg_width = rng.uniform(0.15, 0.2);
  s.texture = texture;
  s.color = random_color(rng);
  s.color2 = random_color(rng);
  s.texture_period = rng.uniform(0.18, 0.3);
  s.skin = {rng.uniform(0.6, 0.95), rng.uniform(0.45, 0.75), rng.uniform(0.35, 0.6)};
  s.hair = {rng.uniform(0.05, 0.4), rng.uniform(0.03, 0.3), rng.uniform(0.02, 0.2)};
  s.pants = {rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4), rng.uniform(0.2, 0.6)};
  s.theta_star = torso_theta(s, rng);
  s.keypoints = pose_from_layout(layout(s));
  return s;
}

double default_heatmap_sigma(std::size_t height) {
  return std::max(1.0, 3.0 * static_cast<double>(height) / 256.0);
}

Tensor pose_heatmaps(std::span<const Keypoint> keypoints, std::size_t height, std::size_t width,
                     double sigma) {
  if (keypoints.size() != kNumKeypoints) {
    throw ArgumentError("pose_heatmaps: expected 18 keypoints, got " +
                        std::to_string(keypoints.size()));
  }
  if (!(sigma > 0.0)) throw ArgumentError("pose_heatmaps: sigma must be positive");
  Tensor maps({kNumKeypoints, height, width});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    const Keypoint& kp = keypoints[k];
    if (!kp.visible) continue;
    const double px = std::round(kp.x * static_cast<double>(width - 1));
    const double py = std::round(kp.y * static_cast<double>(height - 1));
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = static_cast<double>(x) - px, dy = static_cast<double>(y) - py;
        maps.at(k, y, x) = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  return maps;
}

Tensor box_blur(const Tensor& image, std::size_t size) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const long r = static_cast<long>(size / 2);
  Tensor out(image.shape());
  const double norm = 1.0 / static_cast<double>(size * size);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (long y = 0; y < static_cast<long>(h); ++y) {
      for (long x = 0; x < static_cast<long>(w); ++x) {
        double s = 0.0;
        for (long dy = -r; dy <= r; ++dy) {
          for (long dx = -r; dx <= r; ++dx) {
            const long yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
            s += image.at(ch, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          }
        }
        out.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = s * norm;
      }
    }
  }
  return out;
}

Sample synth_sample(const SynthSpec& spec) {
  const std::size_t h = spec.height, w = spec.width, k = spec.grid_side;
  if (h < 8 || w < 8) throw ArgumentError("synth: image must be at least 8×8");
  if (spec.torso_ax <= 0.0 || spec.torso_ay <= 0.0 || spec.head_rx <= 0.0 || spec.head_ry <= 0.0 ||
      spec.arm_width <= 0.0 || spec.leg_width <= 0.0) {
    throw ArgumentError("synth: degenerate body geometry");
  }
  if (spec.theta_star.size() != 2 * k * k) {
    throw ArgumentError("synth: theta_star must have 2k² entries");
  }
  const BodyLayout b = layout(spec);

  Tensor body_mask({1, h, w});
  Tensor torso_region({1, h, w});
  Tensor leg_region({1, h, w});
  Tensor head_region({1, h, w});
  Tensor clothing({3, h, w});
  Tensor clothing_mask({1, h, w});
  Tensor reserved({3, h, w});
  Tensor person({3, h, w});

  const double aw = spec.arm_width, lw = spec.leg_width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Vec2 p{norm_coord(x, w), norm_coord(y, h)};
      const bool head = in_ellipse(p, b.head, spec.head_rx, spec.head_ry);
      const bool torso = in_ellipse(p, {spec.torso_cx, spec.torso_cy}, spec.torso_ax, spec.torso_ay * 1.05);
      const bool neck = in_capsule(p, b.neck, {b.head.x, b.head.y + spec.head_ry * 0.5}, 0.06, 0.06);
      const bool arms = in_capsule(p, b.shoulder_r, b.elbow_r, aw, aw) ||
                        in_capsule(p, b.elbow_r, b.wrist_r, aw * 0.85, aw * 0.85) ||
                        in_capsule(p, b.shoulder_l, b.elbow_l, aw, aw) ||
                        in_capsule(p, b.elbow_l, b.wrist_l, aw * 0.85, aw * 0.85);
      const bool legs = in_capsule(p, b.hip_r, b.knee_r, lw, lw) ||
                        in_capsule(p, b.hip_l, b.knee_l, lw, lw) ||
                        in_capsule(p, b.knee_r, b.ankle_r, lw * 0.8, lw * 0.8) ||
                        in_capsule(p, b.knee_l, b.ankle_l, lw * 0.8, lw * 0.8);
      if (head || torso || neck || arms || legs) body_mask.at(0, y, x) = 1.0;
      if (torso) torso_region.at(0, y, x) = 1.0;
      if (legs && !torso) leg_region.at(0, y, x) = 1.0;
      if (head) head_region.at(0, y, x) = 1.0;

      // Person rendering without the garment: background, skin, pants, head.
      std::array<double, 3> px{0.92, 0.92, 0.9};
      if (head || torso || neck || arms || legs) px = spec.skin;
      if (legs && !torso) px = spec.pants;
      if (head) {
        const bool hair = p.y < b.head.y - spec.head_ry * 0.2;
        px = hair ? spec.hair : spec.skin;
        for (std::size_t ch = 0; ch < 3; ++ch) reserved.at(ch, y, x) = px[ch];
      }
      for (std::size_t ch = 0; ch < 3; ++ch) person.at(ch, y, x) = px[ch];

      if (in_flat_clothing(p)) {
        clothing_mask.at(0, y, x) = 1.0;
        bool alt = false;
        const double period = spec.texture_period;
        if (spec.texture == Texture::kStripes) {
          alt = static_cast<long>(std::floor((p.y + 1.0) / period)) % 2 != 0;
        } else if (spec.texture == Texture::kChecker) {
          alt = (static_cast<long>(std::floor((p.x + 1.0) / period)) +
                 static_cast<long>(std::floor((p.y + 1.0) / period))) % 2 != 0;
        }
        const auto& col = alt ? spec.color2 : spec.color;
        for (std::size_t ch = 0; ch < 3; ++ch) clothing.at(ch, y, x) = col[ch];
      }
    }
  }

  // Ground-truth warp with the known θ*.
  const tps::TpsBasis basis(k, h, w);
  const std::size_t n = k * k;
  Tensor dx({n, 1}), dy({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] = spec.theta_star[i];
    dy[i] = spec.theta_star[n + i];
  }
  const Tensor gx = add(basis.identity_x(), reshape(matmul(basis.matrix(), dx), {h, w}));
  const Tensor gy = add(basis.identity_y(), reshape(matmul(basis.matrix(), dy), {h, w}));

  Sample s;
  s.keypoints = spec.keypoints;
  s.person.pose = pose_heatmaps(spec.keypoints, h, w, default_heatmap_sigma(h));
  s.person.body = box_blur(body_mask, 5);
  s.person.reserved = reserved;
  s.clothing = clothing;
  s.clothing_mask = clothing_mask;
  s.gt_warped = grid_sample(clothing, gx, gy);
  s.gt_onbody_mask = grid_sample(clothing_mask, gx, gy);
  // Alpha-composite the premultiplied warped garment over the bare person.
  Tensor gt({3, h, w});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const double m = s.gt_onbody_mask[i];
      gt[ch * h * w + i] = std::clamp(s.gt_warped[ch * h * w + i] + (1.0 - m) * person[ch * h * w + i], 0.0, 1.0);
    }
  }
  s.gt_image = std::move(gt);
  for (auto* t : {&s.gt_warped, &s.gt_onbody_mask}) {
    for (auto& v : t->values()) v = std::clamp(v, 0.0, 1.0);
  }
  return s;
}

// ---------------------------------------------------------------------------

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_hcat(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::size_t offset = 0;
  return read_hcat(in, offset);
}

void save_sample(const std::string& dir, const Sample& s) {
  fs::create_directories(dir);
  nlohmann::json pose = nlohmann::json::array();
  for (const auto& kp : s.keypoints) pose.push_back({kp.x, kp.y, kp.visible ? 1 : 0});
  {
    std::ofstream out(fs::path(dir) / "pose.json");
    if (!out) throw std::runtime_error("cannot write pose.json in '" + dir + "'");
    out << pose.dump() << '\n';
  }
  const fs::path d(dir);
  save_image((d / "body.png").string(), s.person.body);
  save_image((d / "reserved.png").string(), s.person.reserved);
  save_image((d / "cloth.png").string(), s.clothing);
  save_image((d / "cloth_mask.png").string(), s.clothing_mask);
  save_image((d / "gt_warped.png").string(), s.gt_warped);
  save_image((d / "gt_onbody_mask.png").string(), s.gt_onbody_mask);
  save_image((d / "gt.png").string(), s.gt_image);
}

Sample load_sample(const std::string& dir) {
  const fs::path d(dir);
  Sample s;
  {
    std::ifstream in(d / "pose.json");
    if (!in) throw std::runtime_error("missing pose.json in '" + dir + "'");
    nlohmann::json pose;
    try {
      pose = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("pose.json: ") + e.what(), e.byte);
    }
    if (!pose.is_array() || pose.size() != kNumKeypoints) {
      throw FormatError("pose.json must be an array of 18 [x, y, v] triples", 0);
    }
    for (std::size_t i = 0; i < kNumKeypoints; ++i) {
      const auto& e = pose[i];
      if (!e.is_array() || e.size() != 3) throw FormatError("pose.json: malformed keypoint", 0);
      s.keypoints[i] = {e[0].get<double>(), e[1].get<double>(), e[2].get<double>() > 0.0};
    }
  }
  s.person.body = load_image((d / "body.png").string());
  s.person.reserved = load_image((d / "reserved.png").string());
  s.clothing = load_image((d / "cloth.png").string());
  s.clothing_mask = load_image((d / "cloth_mask.png").string());
  s.gt_warped = load_image((d / "gt_warped.png").string());
  s.gt_onbody_mask = load_image((d / "gt_onbody_mask.png").string());
  s.gt_image = load_image((d / "gt.png").string());
  const std::size_t h = s.clothing.dim(1), w = s.clothing.dim(2);
  s.person.pose = pose_heatmaps(s.keypoints, h, w, default_heatmap_sigma(h));
  validate_sample(s);
  return s;
}

void write_dataset(const std::string& dir, std::size_t count, std::uint64_t seed,
                   std::size_t height, std::size_t width) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < count; ++i) {
    std::string name = std::to_string(i);
    name.insert(0, name.size() < 5 ? 5 - name.size() : 0, '0');
    save_sample((fs::path(dir) / name).string(), synth_sample(random_spec(seed + i, height, width)));
  }
}

std::vector<std::string> list_samples(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "pose.json")) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Sample> load_dataset(const std::string& dir) {
  std::vector<Sample> samples;
  for (const auto& p : list_samples(dir)) samples.push_back(load_sample(p));
  return samples;
}

}  // namespace hcanet::data

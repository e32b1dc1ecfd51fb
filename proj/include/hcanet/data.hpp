#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hcanet/tensor.hpp"

namespace hcanet::data {

inline constexpr std::size_t kNumKeypoints = 18;

/// Normalized image position: (0,0) is the top-left pixel centre, (1,1) the bottom-right.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;
};
using Pose = std::array<Keypoint, kNumKeypoints>;

/// Person representation: pose heatmaps (18×H×W), blurred body-shape mask (1×H×W) and the
/// identity-preserving reserved regions (3×H×W).
struct PersonInput {
  Tensor pose;
  Tensor body;
  Tensor reserved;
};

struct Sample {
  PersonInput person;
  Tensor clothing;        // I_c, 3×H×W
  Tensor clothing_mask;   // I_cm, 1×H×W
  Tensor gt_warped;       // I_ct, clothing on the person
  Tensor gt_onbody_mask;  // I_tm
  Tensor gt_image;        // I_GT
  Pose keypoints{};

  std::size_t height() const { return clothing.dim(1); }
  std::size_t width() const { return clothing.dim(2); }
};

/// Throws ArgumentError/ShapeError if shapes disagree or values leave [0,1].
void validate_sample(const Sample& s);

// ---- synthetic generator ---------------------------------------------------------------

enum class Texture { kSolid, kStripes, kChecker };

/// Everything needed to render one sample; geometry is in normalized [-1,1] coordinates.
struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t height = 256;
  std::size_t width = 192;
  std::size_t grid_side = 5;

  double torso_cx = 0.0, torso_cy = 0.1;  // torso ellipse centre
  double torso_ax = 0.4, torso_ay = 0.4;  // torso half-axes
  double head_rx = 0.16, head_ry = 0.2;
  double arm_width = 0.1;
  double leg_width = 0.18;

  Texture texture = Texture::kSolid;
  std::array<double, 3> color{0.8, 0.2, 0.2};
  std::array<double, 3> color2{0.2, 0.2, 0.8};
  double texture_period = 0.25;
  std::array<double, 3> skin{0.9, 0.72, 0.6};
  std::array<double, 3> hair{0.2, 0.12, 0.08};
  std::array<double, 3> pants{0.15, 0.2, 0.35};

  /// Ground-truth TPS displacements (2k²) mapping the flat clothing onto the torso.
  std::vector<double> theta_star;
  Pose keypoints{};
};

/// Draws a plausible spec from `seed`, including a known θ* derived from the torso geometry.
SynthSpec random_spec(std::uint64_t seed, std::size_t height, std::size_t width,
                      std::size_t grid_side = 5, Texture texture = Texture::kSolid);

/// Renders the spec. Fully deterministic.
Sample synth_sample(const SynthSpec& spec);

/// Channel k holds a unit-peak Gaussian of std `sigma` pixels centred on the pixel nearest to
/// keypoint k; invisible keypoints give all-zero channels.
Tensor pose_heatmaps(std::span<const Keypoint> keypoints, std::size_t height, std::size_t width,
                     double sigma = 3.0);
/// 3 px at 256 rows, scaled with image height, never below 1 px.
double default_heatmap_sigma(std::size_t height);

/// Mean over a size×size window with zero extension outside the image.
Tensor box_blur(const Tensor& image, std::size_t size);

// ---- persistence -----------------------------------------------------------------------

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// 8-bit PNG, grayscale for 1×H×W and RGB for 3×H×W. Values must lie in [0,1].
void save_image(const std::string& path, const Tensor& t);
/// Loads an 8-bit grayscale or RGB PNG into C×H×W with values k/255.
Tensor load_image(const std::string& path);

/// Dataset sample directory: pose.json, body.png, reserved.png, cloth.png, cloth_mask.png,
/// gt_warped.png, gt_onbody_mask.png, gt.png.
void save_sample(const std::string& dir, const Sample& s);
Sample load_sample(const std::string& dir);

/// Writes `count` samples generated from seeds seed..seed+count-1 into DIR/00000, DIR/00001, ...
void write_dataset(const std::string& dir, std::size_t count, std::uint64_t seed,
                   std::size_t height, std::size_t width);
/// Sample directories under `dir` in lexicographic order.
std::vector<std::string> list_samples(const std::string& dir);
std::vector<Sample> load_dataset(const std::string& dir);

}  // namespace hcanet::data

#include "hcanet/nn.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace hcanet::nn {

Var& ModelParams::insert(std::string name, Var v) {
  if (index_.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(v));
  return entries_.back().second;
}

Var& ModelParams::add_parameter(std::string name, Tensor value) {
  return insert(std::move(name), ad::parameter(std::move(value)));
}

Var& ModelParams::add_buffer(std::string name, Tensor value) {
  return insert(std::move(name), ad::constant(std::move(value)));
}

bool ModelParams::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const Var& ModelParams::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ArgumentError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Var& ModelParams::at(std::string_view name) {
  return const_cast<Var&>(static_cast<const ModelParams&>(*this).at(name));
}

std::vector<Var> ModelParams::parameters(std::string_view prefix) const {
  std::vector<Var> out;
  for (const auto& [name, v] : entries_) {
    if (v.trainable() && name.starts_with(prefix)) out.push_back(v);
  }
  return out;
}

std::size_t ModelParams::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& v : parameters(prefix)) n += v.value().numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  for (const auto& [name, v] : entries_) {
    if (v.trainable()) {
      copy.add_parameter(name, v.value());
    } else {
      copy.add_buffer(name, v.value());
    }
  }
  return copy;
}

void init_into(ModelParams& params, const NetSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& w : spec) {
    Tensor t(w.shape);
    if (w.init == Init::kKaimingUniform) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.fan_in));
      for (auto& v : t.values()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = (2.0 * u - 1.0) * bound;
      }
    }
    params.add_parameter(w.name, std::move(t));
  }
}

ModelParams init_params(const NetSpec& spec, std::uint64_t seed) {
  ModelParams params;
  init_into(params, spec, seed);
  return params;
}

void append_conv(NetSpec& spec, const std::string& name, const ConvSpec& conv, Init init) {
  spec.push_back({name + ".weight",
                  {conv.out_ch, conv.in_ch, conv.kernel, conv.kernel},
                  conv.in_ch * conv.kernel * conv.kernel,
                  init});
  spec.push_back({name + ".bias", {conv.out_ch}, 0, Init::kZero});
}

void append_linear(NetSpec& spec, const std::string& name, std::size_t in, std::size_t out,
                   Init init) {
  spec.push_back({name + ".weight", {out, in}, in, init});
  spec.push_back({name + ".bias", {out}, 0, Init::kZero});
}

NetSpec layers_spec(const std::string& prefix, const std::vector<LayerSpec>& layers) {
  NetSpec spec;
  std::size_t conv_index = 0;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::kConv) {
      append_conv(spec, prefix + ".conv" + std::to_string(conv_index++), l.conv);
    }
  }
  return spec;
}

Var apply_conv(const ModelParams& params, const std::string& name, const Var& x, int stride,
               int padding) {
  return ad::conv2d(x, params.at(name + ".weight"), params.at(name + ".bias"), stride, padding);
}

Var apply_linear(const ModelParams& params, const std::string& name, const Var& x) {
  const Var& w = params.at(name + ".weight");
  const std::size_t in = w.shape()[1], out = w.shape()[0];
  if (x.value().numel() != in) {
    throw ShapeError("linear '" + name + "': expected " + std::to_string(in) +
                     " inputs, got tensor " + to_string(x.shape()));
  }
  Var y = ad::matmul(w, ad::reshape(x, {in, 1}));
  return ad::add(ad::reshape(y, {out}), params.at(name + ".bias"));
}

Var apply_layers(const ModelParams& params, const std::string& prefix,
                 const std::vector<LayerSpec>& layers, Var x) {
  std::size_t conv_index = 0;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv:
        x = apply_conv(params, prefix + ".conv" + std::to_string(conv_index++), x, l.conv.stride,
                       l.conv.padding);
        break;
      case LayerKind::kRelu:
        x = ad::relu(x);
        break;
      case LayerKind::kLeakyRelu:
        x = ad::leaky_relu(x, 0.2);
        break;
      case LayerKind::kTanh:
        x = ad::tanh(x);
        break;
      case LayerKind::kSigmoid:
        x = ad::sigmoid(x);
        break;
      case LayerKind::kUpsampleNearest:
        x = ad::upsample_nearest(x, 2);
        break;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------

std::vector<LayerSpec> extractor_layers(std::size_t in_ch, std::size_t features) {
  const LayerSpec act{LayerKind::kLeakyRelu};
  return {
      {LayerKind::kConv, {in_ch, features, 3, 2, 1}},    act,
      {LayerKind::kConv, {features, features, 3, 2, 1}}, act,
      {LayerKind::kConv, {features, features, 3, 1, 1}}, act,
      {LayerKind::kConv, {features, features, 3, 1, 1}}, act,
  };
}

NetSpec extractor_spec(const std::string& prefix, std::size_t in_ch, std::size_t features) {
  return layers_spec(prefix, extractor_layers(in_ch, features));
}

Var extractor_forward(const ModelParams& params, const std::string& prefix, const Var& x) {
  if (x.shape().size() != 3 || x.shape()[1] % 4 != 0 || x.shape()[2] % 4 != 0) {
    throw ShapeError("extractor: input must be C×H×W with H, W divisible by 4, got " +
                     to_string(x.shape()));
  }
  const auto& w0 = params.at(prefix + ".conv0.weight");
  const std::size_t features = w0.shape()[0];
  return apply_layers(params, prefix, extractor_layers(x.shape()[0], features), x);
}

// ---------------------------------------------------------------------------

namespace {

std::size_t halved(std::size_t n) { return (n + 1) / 2; }  // stride-2, k3, p1

}  // namespace

NetSpec regressor_spec(const std::string& prefix, const RegressorShape& shape, Init head_init) {
  if (shape.height < 4 || shape.width < 4) {
    throw ShapeError("regressor: input feature map must be at least 4×4, got " +
                     std::to_string(shape.height) + "×" + std::to_string(shape.width));
  }
  NetSpec spec;
  append_conv(spec, prefix + ".conv0", {shape.features, shape.features, 3, 2, 1});
  append_conv(spec, prefix + ".conv1", {shape.features, shape.features, 3, 2, 1});
  const std::size_t flat = shape.features * halved(halved(shape.height)) * halved(halved(shape.width));
  append_linear(spec, prefix + ".head", flat, 2 * shape.grid_side * shape.grid_side, head_init);
  return spec;
}

Var regressor_forward(const ModelParams& params, const std::string& prefix, const Var& x) {
  if (x.shape().size() != 3 || x.shape()[1] < 4 || x.shape()[2] < 4) {
    throw ShapeError("regressor: input must be F×h×w with h, w >= 4, got " + to_string(x.shape()));
  }
  Var h = ad::leaky_relu(apply_conv(params, prefix + ".conv0", x, 2, 1));
  h = ad::leaky_relu(apply_conv(params, prefix + ".conv1", h, 2, 1));
  return ad::tanh(apply_linear(params, prefix + ".head", h));
}

// ---------------------------------------------------------------------------

namespace {

std::size_t unet_width(const UnetShape& s, std::size_t level) {
  return s.base << std::min<std::size_t>(level, 3);
}

}  // namespace

NetSpec unet_spec(const std::string& prefix, const UnetShape& s) {
  if (s.depth < 1) throw ArgumentError("unet: depth must be >= 1");
  NetSpec spec;
  append_conv(spec, prefix + ".enc0", {s.in_ch, unet_width(s, 0), 3, 1, 1});
  for (std::size_t i = 1; i <= s.depth; ++i) {
    append_conv(spec, prefix + ".down" + std::to_string(i),
                {unet_width(s, i - 1), unet_width(s, i), 3, 2, 1});
  }
  append_conv(spec, prefix + ".bottleneck", {unet_width(s, s.depth), unet_width(s, s.depth), 3, 1, 1});
  for (std::size_t i = s.depth; i >= 1; --i) {
    const std::size_t c = unet_width(s, i - 1);
    append_conv(spec, prefix + ".up" + std::to_string(i), {unet_width(s, i), c, 3, 1, 1});
    append_conv(spec, prefix + ".fuse" + std::to_string(i), {2 * c, c, 1, 1, 0});
  }
  append_conv(spec, prefix + ".head", {unet_width(s, 0), 4, 3, 1, 1});
  return spec;
}

Var unet_forward(const ModelParams& params, const std::string& prefix, const UnetShape& s,
                 const Var& x, double skip_scale) {
  const std::size_t factor = std::size_t{1} << s.depth;
  if (x.shape().size() != 3 || x.shape()[1] % factor != 0 || x.shape()[2] % factor != 0) {
    throw ShapeError("unet: input must be C×H×W with H, W divisible by " + std::to_string(factor) +
                     ", got " + to_string(x.shape()));
  }
  std::vector<Var> skips;
  Var h = ad::leaky_relu(apply_conv(params, prefix + ".enc0", x, 1, 1));
  skips.push_back(h);
  for (std::size_t i = 1; i <= s.depth; ++i) {
    h = ad::leaky_relu(apply_conv(params, prefix + ".down" + std::to_string(i), h, 2, 1));
    if (i < s.depth) skips.push_back(h);
  }
  h = ad::leaky_relu(apply_conv(params, prefix + ".bottleneck", h, 1, 1));
  for (std::size_t i = s.depth; i >= 1; --i) {
    h = ad::upsample_nearest(h, 2);
    h = ad::leaky_relu(apply_conv(params, prefix + ".up" + std::to_string(i), h, 1, 1));
    Var skip = skip_scale == 1.0 ? skips[i - 1] : ad::scale(skips[i - 1], skip_scale);
    h = ad::concat_channels({h, skip});
    h = ad::leaky_relu(apply_conv(params, prefix + ".fuse" + std::to_string(i), h, 1, 0));
  }
  Var out = apply_conv(params, prefix + ".head", h, 1, 1);
  Var rendered = ad::scale(ad::add_scalar(ad::tanh(ad::slice_channels(out, 0, 3)), 1.0), 0.5);
  Var mask = ad::sigmoid(ad::slice_channels(out, 3, 1));
  return ad::concat_channels({rendered, mask});
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'H', 'C', 'A', 'C'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_uint(std::istream& in, std::size_t& offset, int bytes, const char* what) {
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (in.gcount() != bytes) throw FormatError(std::string("HCAC: truncated ") + what, offset);
  offset += static_cast<std::size_t>(bytes);
  std::uint32_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kCheckpointMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, v] : params) {
    if (name.size() > 0xFFFF) throw ArgumentError("parameter name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_hcat(out, v.value());
  }
  if (!out) throw std::runtime_error("HCAC: write failed");
}

ModelParams read_checkpoint(std::istream& in) {
  std::size_t offset = 0;
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw FormatError("HCAC: bad magic", 0);
  }
  offset = 4;
  const std::uint32_t count = get_uint(in, offset, 4, "entry count");
  ModelParams params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_uint(in, offset, 2, "name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) {
      throw FormatError("HCAC: truncated name", offset);
    }
    offset += len;
    Tensor t = read_hcat(in, offset);
    if (name.starts_with("meta.")) {
      params.add_buffer(std::move(name), std::move(t));
    } else {
      params.add_parameter(std::move(name), std::move(t));
    }
  }
  return params;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace hcanet::nn

#include "hcanet/hca.hpp"

#include <filesystem>
#include <fstream>

namespace hcanet::hca {

namespace {

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b || a.size() != 3) {
    throw ShapeError(std::string(what) + ": feature maps must share one F×h×w shape, got " +
                     to_string(a) + " and " + to_string(b));
  }
}

Var project(const nn::ModelParams& params, const std::string& name, const Var& x) {
  return nn::apply_conv(params, name, x, 1, 0);
}

// query, key, value: C×h×w maps. Returns the C×h×w map whose position j is
// Σ_i softmax_i(q_j · k_i) v_i.
Var attend(const Var& query, const Var& key, const Var& value, AttentionTrace* trace) {
  const Shape& s = query.shape();
  const std::size_t c = s[0], n = s[1] * s[2];
  Var q = ad::permute(ad::reshape(query, {c, n}), {1, 0});  // n×c
  Var k = ad::reshape(key, {c, n});                          // c×n
  Var corr = ad::softmax_rows(ad::matmul(q, k));             // n×n, row = output position
  if (trace) trace->matrices.push_back(corr.value());
  Var v = ad::reshape(value, {value.shape()[0], n});
  Var out = ad::matmul(v, ad::permute(corr, {1, 0}));       // C×n
  return ad::reshape(out, value.shape());
}

}  // namespace

nn::NetSpec hca_spec(const std::string& prefix, std::size_t features) {
  nn::NetSpec spec;
  const nn::ConvSpec proj{features, features, 1, 1, 0};
  for (const char* name : {"proj1", "proj2", "proj3"}) {
    nn::append_conv(spec, prefix + ".person." + name, proj);
  }
  nn::append_conv(spec, prefix + ".person.fuse", {4 * features, features, 1, 1, 0});
  for (const char* name : {"p1", "p2", "p3", "c1", "c2", "c3"}) {
    nn::append_conv(spec, prefix + ".cross." + name, proj);
  }
  return spec;
}

Var person_cross_attention(const PersonFeatures& p, const nn::ModelParams& params,
                           const std::string& prefix, AttentionTrace* trace) {
  require_same(p.x_p1.shape(), p.x_p2.shape(), "person_cross_attention");
  require_same(p.x_p1.shape(), p.x_p3.shape(), "person_cross_attention");
  const std::string base = prefix + ".person.";
  Var v = project(params, base + "proj1", p.x_p1);
  Var q = project(params, base + "proj2", p.x_p2);
  Var k = project(params, base + "proj3", p.x_p3);
  Var attended = attend(q, k, v, trace);
  Var stacked = ad::concat_channels({attended, p.x_p1, p.x_p2, p.x_p3});
  return project(params, base + "fuse", stacked);
}

Var cross_attention_pc(const Var& p_hat, const Var& c, const nn::ModelParams& params,
                       const std::string& prefix, AttentionTrace* trace) {
  require_same(p_hat.shape(), c.shape(), "cross_attention_pc");
  const std::string base = prefix + ".cross.";
  Var p1 = project(params, base + "p1", p_hat);
  Var p2 = project(params, base + "p2", p_hat);
  Var p3 = project(params, base + "p3", p_hat);
  Var c1 = project(params, base + "c1", c);
  Var c2 = project(params, base + "c2", c);
  Var c3 = project(params, base + "c3", c);
  Var clothing_guided = attend(p2, c3, p1, trace);
  Var person_guided = attend(c2, p3, c1, trace);
  return ad::add(clothing_guided, person_guided);
}

Var hca_forward(const PersonFeatures& p, const Var& c, const nn::ModelParams& params,
                const std::string& prefix, AttentionTrace* trace) {
  Var p_hat = person_cross_attention(p, params, prefix, trace);
  return cross_attention_pc(p_hat, c, params, prefix, trace);
}

void dump_trace(const AttentionTrace& trace, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < trace.matrices.size(); ++i) {
    const auto path = std::filesystem::path(dir) / ("attention_" + std::to_string(i) + ".hcat");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_hcat(out, trace.matrices[i]);
  }
}

}  // namespace hcanet::hca

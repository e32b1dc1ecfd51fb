#pragma once

#include <string>
#include <vector>

namespace hcanet::gradcheck {

struct Row {
  std::string module;
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_err < tolerance; }
};

inline constexpr double kPrimitiveTolerance = 1e-5;
inline constexpr double kCompositeTolerance = 1e-4;

/// primitives, nn, hca, tps, losses, pipeline
std::vector<std::string> modules();

/// Runs the finite-difference suites of one module (or all when `module` is empty) on small
/// deterministic inputs. Throws ArgumentError for an unknown module name.
std::vector<Row> run(const std::string& module = {});

}  // namespace hcanet::gradcheck

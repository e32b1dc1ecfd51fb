#pragma once

#include <iosfwd>
#include <string>

#include "hcanet/pipeline.hpp"

namespace hcanet::config {

/// Parses the flat `key = value` training configuration. Blank lines and text after `#` are
/// ignored. Unknown, duplicate or malformed keys raise ArgumentError naming the line.
/// Missing keys keep their TrainConfig defaults.
pipeline::TrainConfig parse_train_config(std::istream& in, const std::string& source = "<config>");
pipeline::TrainConfig load_train_config(const std::string& path);

/// Writes every key; parse_train_config(format_train_config(c)) reproduces c exactly.
std::string format_train_config(const pipeline::TrainConfig& cfg);

}  // namespace hcanet::config

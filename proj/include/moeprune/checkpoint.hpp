#pragma once

#include <string>

#include "moeprune/model.hpp"

namespace moeprune {

// Binary checkpoint: magic "MOEPRUNE1", ModelConfig fields, then a manifest
// of (name, rows, cols, offset) entries followed by the flat parameter data.
void save_checkpoint(const std::string& path, const MoEModel& model);
MoEModel load_checkpoint(const std::string& path);

}  // namespace moeprune

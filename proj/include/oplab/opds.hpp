#pragma once

#include <string>

#include "oplab/dataset.hpp"
#include "oplab/model.hpp"

namespace oplab {

// OPDS container: 8-byte magic "OPDSET01", a little-endian u64 header length,
// a UTF-8 header of key=value lines, then raw 64-bit little-endian arrays.
// Datasets store the sensor grid followed by per-sample u, y, s, tag arrays;
// checkpoints store normalization vectors followed by layer weights and biases
// in order (branch first, then decoder).

void write_dataset(const OperatorDataset& ds, const std::string& path);
OperatorDataset read_dataset(const std::string& path);

void write_checkpoint(const OperatorModel& model, const std::string& path);
OperatorModel read_checkpoint(const std::string& path);

}  // namespace oplab

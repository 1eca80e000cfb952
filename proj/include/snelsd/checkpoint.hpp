// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "snelsd/model.hpp"

// Versioned binary checkpoint container: magic + version, a JSON header
// (config snapshot, epoch, metrics history, optimizer kind and step), the
// vocabulary as length-prefixed raw strings, then named tensors with shape
// and raw 64-bit little-endian floats. Parameter values round-trip
// bit-identically.

namespace snelsd {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double dev_acc = 0.0;
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

struct Checkpoint {
  RunConfig config;
  std::vector<std::string> vocab_tokens;
  int epoch = 0;
  std::vector<EpochRecord> history;
  long opt_step = 0;  // adam step counter; 0 for adadelta
  // Model parameters in model order, then optimizer arrays under "opt." names.
  std::vector<NamedTensor> tensors;
};

// Snapshot of the model plus whichever optimizer state drives the run (pass
// the other as nullptr; both null is valid for an untrained snapshot).
Checkpoint make_checkpoint(TaskModel& model, const AdamState* adam, const AdadeltaState* adadelta,
                           int epoch, std::vector<EpochRecord> history);

// Writes atomically enough for single-writer use: errors throw DataError and
// leave no partial file behind.
void save_checkpoint(const std::string& path, const Checkpoint& ck);

// Throws DataError on missing files, bad magic, unsupported versions, or
// truncation.
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model from the config snapshot and copies every parameter
// tensor back by position, checking names and shapes. Throws DataError when
// the checkpoint does not line up with the rebuilt model.
TaskModel restore_model(const Checkpoint& ck);

// Copy optimizer hyperparameters and accumulators back out. Throws
// CapabilityError when the checkpoint was trained with the other optimizer.
void fill_adam(const Checkpoint& ck, AdamState& state);
void fill_adadelta(const Checkpoint& ck, AdadeltaState& state);

}  // namespace snelsd

#pragma once

// Versioned text checkpoint of a trained L2dModel plus the training setup.
//
//   eal2d-checkpoint 1
//   method ea_l2d
//   num_classes 10
//   train_config <lr> <batch> <epochs> <weight_decay> <seed> <patience>
//   context_subsample <n|none>
//   net classifier <layers>
//   layer <out> <in> <relu|identity>
//   <out*in weights, row-major> <out biases>       (one line each)
//   ...
//   net rejector <layers>
//   ...
//   end
//
// Reals are written as C99 hex floats so a round trip is bit-exact.

#include <iosfwd>
#include <optional>
#include <string>

#include "eal2d/deferral.hpp"
#include "eal2d/nn.hpp"

namespace eal2d::defer {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  L2dModel model;
  nn::TrainConfig config;
  std::optional<int> context_subsample;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace eal2d::defer

#ifndef FDT_MODEL_CHECKPOINT_HPP_
#define FDT_MODEL_CHECKPOINT_HPP_

#include <string>

#include "fdt/model/params.hpp"

namespace fdt::model {

// Versioned container: config + variant + provenance, followed by named
// float32 tensors in visit order.
struct CheckpointMeta {
  ModelConfig config;
  VariantSpec variant;
  std::string level;
  std::uint64_t provider_hash = 0;
  double gamma = 0.99;
};

void save_checkpoint(const Params<float>& params, const CheckpointMeta& meta,
                     const std::string& path);

struct LoadedCheckpoint {
  Params<float> params;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace fdt::model

#endif  // FDT_MODEL_CHECKPOINT_HPP_

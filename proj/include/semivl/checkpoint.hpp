#pragma once

#include <filesystem>
#include <optional>

#include "semivl/config.hpp"
#include "semivl/model.hpp"
#include "semivl/optimizer.hpp"

namespace semivl {

/// Saved training state. Files: `<prefix>.manifest` (key=value), `<prefix>.bin` (parameters as
/// little-endian float64 in ModelParams::flat() order) and, when present, `<prefix>.adam.bin`.
struct Checkpoint {
  RunConfig config;
  ModelParams params;
  int epoch = 0;  // completed epochs
  std::optional<AdamState> adam;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& prefix, const Checkpoint& ckpt);

/// Rebuilds the architecture from the manifest and reads the blobs; a byte count that does not
/// match the architecture throws CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path& prefix);

}  // namespace semivl

#pragma once

#include <string>

#include "cupi/dimb.hpp"
#include "cupi/model_bundle.hpp"

namespace cupi {

// Single-file container: magic "CUPK", little-endian u32 version, u64 header
// length, a JSON header (config, provenance, array directory), then the
// payload as named little-endian float32 arrays. Array names are stable:
//   backbone.block{l}.conv.{weight|bias}
//   bottleneck.{weight|bias}, classifier.{weight|bias}
//   gen.l{l}.{mu|sigma}.{weight|bias}
// Bank snapshots use the same container with names
//   dimb.l{l}.{mu|sigma}.{samples|centers}, dimb.d.{samples|centers}.

constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

void save_dimb_snapshot(const std::string& path, const DIMBState& state, const BackboneConfig& cfg);
DIMBState load_dimb_snapshot(const std::string& path);

}  // namespace cupi

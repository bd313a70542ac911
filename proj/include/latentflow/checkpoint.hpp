#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentflow/flow.hpp"
#include "latentflow/nn.hpp"
#include "latentflow/tensor.hpp"
#include "latentflow/vae.hpp"

namespace latentflow {

// Binary checkpoint layout (all integers little-endian):
//   magic    8 bytes  "LFMCKPT\0"
//   version  u32      currently 1
//   kind     u32 length + bytes ("vae" | "flow")
//   echo     u32 length + bytes (JSON: model hyperparameters + config echo)
//   seed     u64
//   count    u32
//   per parameter: name (u32 length + bytes), rank (u32), dims (u64 each),
//                  data (f64 little-endian, row-major)
// Loading a checkpoint of the wrong kind, version, or shape set fails
// without constructing a partial model.

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct RawCheckpoint {
  std::string kind;
  std::string echo;
  std::uint64_t seed = 0;
  std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<NamedParam>& params, const std::string& echo,
                     std::uint64_t seed);

RawCheckpoint load_checkpoint(const std::string& path);
RawCheckpoint load_checkpoint(const std::string& path, const std::string& expected_kind);

// Model-level wrappers. experiment_echo is carried verbatim inside the echo
// JSON next to the model hyperparameters, so save -> load -> save is
// byte-identical.
void save_vae_checkpoint(const std::string& path, VaeModel& model,
                         const std::string& experiment_echo, std::uint64_t seed);
VaeModel load_vae_checkpoint(const std::string& path, std::string* experiment_echo = nullptr,
                             std::uint64_t* seed = nullptr);

void save_flow_checkpoint(const std::string& path, FlowModel& model,
                          const std::string& experiment_echo, std::uint64_t seed);
FlowModel load_flow_checkpoint(const std::string& path, std::string* experiment_echo = nullptr,
                               std::uint64_t* seed = nullptr);

}  // namespace latentflow

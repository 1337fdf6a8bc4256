#pragma once

#include <string>
#include <vector>

#include "dawgen/model.hpp"
#include "dawgen/tensor.hpp"

namespace dawgen {

/// Binary container: magic "DWGN", u32 format version, length-prefixed
/// vocab table, model dims, then named raw-f64 tensors. All integers and
/// doubles little-endian. Roundtrips are bit-exact.
struct Checkpoint {
  std::vector<std::string> vocab;
  ModelDims dims;
  std::vector<std::pair<std::string, std::vector<int>>> shapes;
  std::vector<std::vector<double>> payloads;  // parallel to shapes
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// Model serialization; the vocabulary surface forms ride along so a
/// checkpoint is self-describing.
void save_model(const std::string& path, const Model& m,
                const std::vector<std::string>& vocab);
Model load_model(const std::string& path,
                 std::vector<std::string>* vocab_out = nullptr);

/// Soft prompt (n x d_model) serialization; dims record which backbone
/// the prompt was tuned against.
void save_prompt(const std::string& path, const Tensor& prompt,
                 const ModelDims& dims);
Tensor load_prompt(const std::string& path, const ModelDims& expected);

}  // namespace dawgen

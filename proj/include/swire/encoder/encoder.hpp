#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swire/imaging/image.hpp"
#include "swire/numerics/tensor.hpp"

namespace swire {

inline constexpr std::size_t kEmbeddingDim = 64;
using Embedding = std::array<float, kEmbeddingDim>;

namespace encoder {

// Five conv blocks (one 3x3 conv in blocks 1-2, two in blocks 3-5, each
// block closed by a 2x2 max-pool) then three fully connected layers. ReLU
// follows every layer except the last.
struct EncoderConfig {
  std::string profile = "desk";
  int input_size = 64;
  int input_channels = 1;
  std::array<int, 5> block_filters{8, 16, 32, 64, 64};
  std::array<int, 3> fc_sizes{256, 256, 64};
  // Unit-normalise the output embedding. Off by default: distances are
  // plain Euclidean on raw outputs.
  bool l2_normalize = false;

  static EncoderConfig desk();
  static EncoderConfig full();
  // "desk" or "full"; throws InvalidArgument otherwise.
  static EncoderConfig from_profile(const std::string& name);

  void validate() const;
  int flatten_size() const;
  bool operator==(const EncoderConfig&) const = default;
};

inline int convs_in_block(int block) { return block < 2 ? 1 : 2; }

enum class Branch : std::uint8_t { sketch = 0, screenshot = 1 };
const char* branch_name(Branch b);

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

// Every learnable tensor of one branch, in forward order.
std::vector<ParamSpec> parameter_specs(const EncoderConfig& config);
std::size_t parameter_count(const EncoderConfig& config);

struct EncoderWeights {
  Branch branch = Branch::sketch;
  EncoderConfig config;
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor& get(const std::string& name) const;
  std::vector<Tensor> tensors() const;
  // Independent storage with identical values.
  EncoderWeights clone() const;
};

struct EncoderPair {
  EncoderWeights sketch;
  EncoderWeights screenshot;

  const EncoderWeights& branch(Branch b) const { return b == Branch::sketch ? sketch : screenshot; }
  EncoderPair clone() const { return {sketch.clone(), screenshot.clone()}; }
};

enum class Init { he, glorot };

// Uniform random weights scaled per `init` and zero biases; the two
// branches draw from independent streams derived from `seed`.
EncoderPair build(const EncoderConfig& config, std::uint64_t seed, Init init = Init::glorot);

// (C, H, W) -> (64) or (N, C, H, W) -> (N, 64).
Tensor forward(const EncoderWeights& weights, const Tensor& input, Tape* tape = nullptr);

Embedding encode(const EncoderWeights& weights, const Tensor& image);
std::vector<Embedding> encode_batch(const EncoderWeights& weights, std::span<const Tensor> images,
                                    std::size_t batch_size = 32);

// Resize to the configured square input and map to [-1, 1]; gray input is
// replicated across channels when the profile expects more than one.
Tensor preprocess(const GrayImage& img, const EncoderConfig& config);
Tensor preprocess(const RgbImage& img, const EncoderConfig& config);

// Both branches to one "SWENC1" file.
void save(const EncoderPair& weights, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize(const EncoderPair& weights);
EncoderPair load(const std::filesystem::path& path);
// Also requires the file's configuration to equal `expected`.
EncoderPair load(const std::filesystem::path& path, const EncoderConfig& expected);

// CRC32 of the serialised weights, as 8 hex digits.
std::string fingerprint(const EncoderPair& weights);

}  // namespace encoder
}  // namespace swire

#include "swire/encoder/encoder.hpp"

#include <algorithm>

#include "swire/imaging/imaging.hpp"
#include "swire/numerics/ops.hpp"
#include "swire/util/binio.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

namespace swire::encoder {

using numerics::conv2d;
using numerics::dense;
using numerics::maxpool2;
using numerics::relu;
using numerics::reshape;

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::full() {
  EncoderConfig c;
  c.profile = "full";
  c.input_size = 224;
  c.input_channels = 3;
  c.block_filters = {64, 128, 256, 512, 512};
  c.fc_sizes = {4096, 4096, 64};
  return c;
}

EncoderConfig EncoderConfig::from_profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw InvalidArgument("unknown encoder profile '" + name + "' (expected desk or full)");
}

void EncoderConfig::validate() const {
  if (input_size < 32 || input_size % 32 != 0) {
    throw InvalidArgument("encoder: input size must be a positive multiple of 32, got " +
                          std::to_string(input_size));
  }
  if (input_channels < 1) throw InvalidArgument("encoder: input channels must be >= 1");
  for (const int f : block_filters) {
    if (f < 1) throw InvalidArgument("encoder: block filter counts must be >= 1");
  }
  for (const int f : fc_sizes) {
    if (f < 1) throw InvalidArgument("encoder: fully connected sizes must be >= 1");
  }
  if (fc_sizes[2] != static_cast<int>(kEmbeddingDim)) {
    throw InvalidArgument("encoder: final fully connected layer must have 64 units, got " +
                          std::to_string(fc_sizes[2]));
  }
}

int EncoderConfig::flatten_size() const {
  const int side = input_size / 32;
  return block_filters[4] * side * side;
}

const char* branch_name(Branch b) { return b == Branch::sketch ? "sketch" : "screenshot"; }

std::vector<ParamSpec> parameter_specs(const EncoderConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs;
  std::size_t in = static_cast<std::size_t>(config.input_channels);
  for (int b = 0; b < 5; ++b) {
    const std::size_t out = static_cast<std::size_t>(config.block_filters[b]);
    for (int c = 0; c < convs_in_block(b); ++c) {
      const std::string prefix = "block" + std::to_string(b + 1) + ".conv" + std::to_string(c + 1);
      specs.push_back({prefix + ".weight", {out, in, 3, 3}, in * 9, out * 9});
      specs.push_back({prefix + ".bias", {out}, in * 9, out * 9});
      in = out;
    }
  }
  std::size_t n = static_cast<std::size_t>(config.flatten_size());
  for (int f = 0; f < 3; ++f) {
    const std::size_t m = static_cast<std::size_t>(config.fc_sizes[f]);
    const std::string prefix = "fc" + std::to_string(f + 1);
    specs.push_back({prefix + ".weight", {m, n}, n, m});
    specs.push_back({prefix + ".bias", {m}, n, m});
    n = m;
  }
  return specs;
}

std::size_t parameter_count(const EncoderConfig& config) {
  std::size_t total = 0;
  for (const auto& s : parameter_specs(config)) total += shape_size(s.shape);
  return total;
}

const Tensor& EncoderWeights::get(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw InvalidArgument("encoder weights have no tensor named " + name);
}

std::vector<Tensor> EncoderWeights::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.second);
  return out;
}

EncoderWeights EncoderWeights::clone() const {
  EncoderWeights w{branch, config, {}};
  for (const auto& [n, t] : params) w.params.emplace_back(n, t.clone());
  return w;
}

namespace {

EncoderWeights build_branch(const EncoderConfig& config, Branch branch, std::uint64_t seed, Init init) {
  EncoderWeights w{branch, config, {}};
  Rng rng(seed);
  for (const auto& spec : parameter_specs(config)) {
    Tensor t(spec.shape, true);
    if (spec.shape.size() > 1) {
      if (init == Init::he) {
        numerics::init_he_uniform(t, spec.fan_in, rng);
      } else {
        numerics::init_glorot_uniform(t, spec.fan_in, spec.fan_out, rng);
      }
    }
    w.params.emplace_back(spec.name, t);
  }
  return w;
}

}  // namespace

EncoderPair build(const EncoderConfig& config, std::uint64_t seed, Init init) {
  config.validate();
  return {build_branch(config, Branch::sketch, derive_seed(seed, 0), init),
          build_branch(config, Branch::screenshot, derive_seed(seed, 1), init)};
}

Tensor forward(const EncoderWeights& weights, const Tensor& input, Tape* tape) {
  const auto& cfg = weights.config;
  const bool batched = input.rank() == 4;
  if (!(input.rank() == 3 || batched)) {
    throw ShapeError("encoder: input must be (C, H, W) or (N, C, H, W), got " + shape_string(input.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const auto c = static_cast<std::size_t>(cfg.input_channels);
  const auto s = static_cast<std::size_t>(cfg.input_size);
  if (input.dim(off) != c || input.dim(off + 1) != s || input.dim(off + 2) != s) {
    throw ShapeError("encoder: input " + shape_string(input.shape()) + " does not match configured (" +
                     std::to_string(c) + ", " + std::to_string(s) + ", " + std::to_string(s) + ")");
  }
  const std::size_t n = batched ? input.dim(0) : 1;
  Tensor x = batched ? input : reshape(input, {1, c, s, s}, tape);

  std::size_t p = 0;
  auto next = [&]() -> const Tensor& { return weights.params.at(p++).second; };
  for (int b = 0; b < 5; ++b) {
    for (int k = 0; k < convs_in_block(b); ++k) {
      const Tensor& w = next();
      const Tensor& bias = next();
      x = relu(conv2d(x, w, bias, tape), tape);
    }
    x = maxpool2(x, tape);
  }
  x = reshape(x, {n, static_cast<std::size_t>(cfg.flatten_size())}, tape);
  for (int f = 0; f < 3; ++f) {
    const Tensor& w = next();
    const Tensor& bias = next();
    x = dense(x, w, bias, tape);
    if (f < 2) x = relu(x, tape);
  }
  if (cfg.l2_normalize) x = numerics::normalize_rows(x, tape);
  if (!batched) x = reshape(x, {kEmbeddingDim}, tape);
  return x;
}

Embedding encode(const EncoderWeights& weights, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("encode: expected a single (C, H, W) image");
  const Tensor out = forward(weights, image, nullptr);
  if (out.size() != kEmbeddingDim) throw ShapeError("encode: output is not 64-dimensional");
  Embedding e;
  std::copy(out.values().begin(), out.values().end(), e.begin());
  return e;
}

std::vector<Embedding> encode_batch(const EncoderWeights& weights, std::span<const Tensor> images,
                                    std::size_t batch_size) {
  std::vector<Embedding> out;
  out.reserve(images.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, images.size() - start);
    const Shape& one = images[start].shape();
    if (one.size() != 3) throw ShapeError("encode_batch: expected (C, H, W) images");
    Tensor batch({count, one[0], one[1], one[2]});
    const std::size_t stride = shape_size(one);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& img = images[start + i];
      if (img.shape() != one) throw ShapeError("encode_batch: images differ in shape");
      std::copy(img.values().begin(), img.values().end(), batch.values().begin() + i * stride);
    }
    const Tensor emb = forward(weights, batch, nullptr);
    for (std::size_t i = 0; i < count; ++i) {
      Embedding e;
      std::copy_n(emb.values().begin() + i * kEmbeddingDim, kEmbeddingDim, e.begin());
      out.push_back(e);
    }
  }
  return out;
}

Tensor preprocess(const GrayImage& img, const EncoderConfig& config) {
  const Tensor one = imaging::normalize_signed(imaging::resize(img, config.input_size, config.input_size));
  if (config.input_channels == 1) return one;
  const auto c = static_cast<std::size_t>(config.input_channels);
  const auto s = static_cast<std::size_t>(config.input_size);
  Tensor out({c, s, s});
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::copy(one.values().begin(), one.values().end(), out.values().begin() + ch * s * s);
  }
  return out;
}

Tensor preprocess(const RgbImage& img, const EncoderConfig& config) {
  if (config.input_channels != 3) return preprocess(imaging::to_gray(img), config);
  const auto s = static_cast<std::size_t>(config.input_size);
  Tensor out({3, s, s});
  for (int ch = 0; ch < 3; ++ch) {
    GrayImage plane(img.width, img.height);
    for (std::size_t i = 0; i < plane.data.size(); ++i) plane.data[i] = img.data[i * 3 + ch];
    const auto small = imaging::resize(plane, config.input_size, config.input_size);
    for (std::size_t i = 0; i < s * s; ++i) out.values()[ch * s * s + i] = 2.0f * small.data[i] - 1.0f;
  }
  return out;
}

namespace {

constexpr std::string_view kMagic = "SWENC1";

void write_config(binio::Writer& w, const EncoderConfig& c) {
  w.u32(static_cast<std::uint32_t>(c.input_size));
  w.u32(static_cast<std::uint32_t>(c.input_channels));
  for (const int f : c.block_filters) w.u32(static_cast<std::uint32_t>(f));
  for (const int f : c.fc_sizes) w.u32(static_cast<std::uint32_t>(f));
  w.u32(c.l2_normalize ? 1u : 0u);
  w.str(c.profile);
}

EncoderConfig read_config(binio::Reader& r) {
  EncoderConfig c;
  c.input_size = static_cast<int>(r.u32());
  c.input_channels = static_cast<int>(r.u32());
  for (auto& f : c.block_filters) f = static_cast<int>(r.u32());
  for (auto& f : c.fc_sizes) f = static_cast<int>(r.u32());
  c.l2_normalize = (r.u32() & 1u) != 0;
  c.profile = r.str();
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize(const EncoderPair& weights) {
  binio::Writer w;
  w.bytes(kMagic);
  write_config(w, weights.sketch.config);
  w.u32(static_cast<std::uint32_t>(weights.sketch.params.size() + weights.screenshot.params.size()));
  for (const auto* branch : {&weights.sketch, &weights.screenshot}) {
    for (const auto& [name, t] : branch->params) {
      w.str(std::string(branch_name(branch->branch)) + "/" + name);
      w.u32(static_cast<std::uint32_t>(t.rank()));
      for (const auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
      w.f32s(t.values());
    }
  }
  w.seal();
  return w.buffer();
}

void save(const EncoderPair& weights, const std::filesystem::path& path) {
  if (!(weights.sketch.config == weights.screenshot.config)) {
    throw InvalidArgument("encoder save: branches have different configurations");
  }
  binio::write_file(path, serialize(weights));
}

EncoderPair load(const std::filesystem::path& path) {
  const std::string what = "weights " + path.string();
  auto r = binio::Reader::from_file(path);
  r.verify_seal(what);
  r.expect_magic(kMagic, what);
  const EncoderConfig config = read_config(r);
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
  const auto specs = parameter_specs(config);
  const std::uint32_t count = r.u32();
  if (count != 2 * specs.size()) {
    throw ShapeError(what + ": holds " + std::to_string(count) + " tensors, configuration needs " +
                     std::to_string(2 * specs.size()));
  }
  EncoderPair pair{{Branch::sketch, config, {}}, {Branch::screenshot, config, {}}};
  for (auto* branch : {&pair.sketch, &pair.screenshot}) {
    for (const auto& spec : specs) {
      const std::string name = r.str();
      const std::string expected = std::string(branch_name(branch->branch)) + "/" + spec.name;
      if (name != expected) throw ShapeError(what + ": expected tensor " + expected + ", found " + name);
      Shape shape(r.u32());
      for (auto& d : shape) d = r.u32();
      if (shape != spec.shape) {
        throw ShapeError(what + ": tensor " + name + " has shape " + shape_string(shape) + ", expected " +
                         shape_string(spec.shape));
      }
      Tensor t(shape, true);
      r.f32s(t.values());
      branch->params.emplace_back(spec.name, t);
    }
  }
  if (!r.at_end()) throw FormatError(what + ": trailing data after tensors");
  return pair;
}

EncoderPair load(const std::filesystem::path& path, const EncoderConfig& expected) {
  EncoderPair pair = load(path);
  if (!(pair.sketch.config == expected)) {
    throw ShapeError("weights " + path.string() + ": file configuration (profile " + pair.sketch.config.profile +
                     ", input " + std::to_string(pair.sketch.config.input_size) +
                     ") does not match the requested encoder configuration (profile " + expected.profile +
                     ", input " + std::to_string(expected.input_size) + ")");
  }
  return pair;
}

std::string fingerprint(const EncoderPair& weights) {
  return binio::seal_hex(serialize(weights));
}

}  // namespace swire::encoder

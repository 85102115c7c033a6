#include "dsanet/checkpoint.hpp"

#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "dsanet/error.hpp"
#include "dsanet/random.hpp"

namespace dsanet::model {
namespace {

constexpr std::uint32_t kVersion = 1;

std::uint32_t u32_field(std::size_t v, const char* name) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError(std::string(name) + " too large for the checkpoint format");
  }
  return static_cast<std::uint32_t>(v);
}

void write_config(detail::ByteWriter& out, const ModelConfig& c) {
  out.u32(u32_field(c.endmembers, "P"));
  out.u32(u32_field(c.window, "k"));
  out.u32(u32_field(c.hidden, "D"));
  out.f64(c.dropout);
  out.f64(c.lambda1);
  out.f64(c.lambda2);
  out.f64(c.learning_rate);
  out.u32(u32_field(c.batch_size, "batch size"));
  out.u32(u32_field(c.epochs, "epochs"));
  out.u64(c.seed);
  const auto& part = c.partition;
  out.u32(u32_field(part.clusters, "M"));
  out.u32(u32_field(part.band_count(), "L"));
  out.u32(u32_field(part.views.size(), "N"));
  for (const auto& view : part.views) {
    out.u32(u32_field(view.size(), "view size"));
    for (std::size_t b : view) out.u32(u32_field(b, "band"));
  }
  out.u32(u32_field(part.cluster_of.size(), "label count"));
  for (std::size_t label : part.cluster_of) out.u32(u32_field(label, "label"));
}

// Bounds a count read from the file by the bytes left, so a corrupt header
// cannot trigger a huge allocation.
std::size_t read_count(detail::ByteReader& in, std::size_t bytes_each, const char* what) {
  const std::size_t at = in.offset();
  const std::uint32_t n = in.u32();
  if (static_cast<std::uint64_t>(n) * bytes_each > in.remaining()) {
    throw ParseError(std::string(what) + " count " + std::to_string(n) + " exceeds file size", at);
  }
  return n;
}

ModelConfig read_config(detail::ByteReader& in) {
  ModelConfig c;
  c.endmembers = in.u32();
  c.window = in.u32();
  c.hidden = in.u32();
  c.dropout = in.f64();
  c.lambda1 = in.f64();
  c.lambda2 = in.f64();
  c.learning_rate = in.f64();
  c.batch_size = in.u32();
  c.epochs = in.u32();
  c.seed = in.u64();
  auto& part = c.partition;
  part.clusters = in.u32();
  const std::size_t bands_at = in.offset();
  const std::size_t bands = in.u32();
  const std::size_t views = read_count(in, 4, "view");
  for (std::size_t v = 0; v < views; ++v) {
    const std::size_t n = read_count(in, 4, "band");
    std::vector<std::size_t> view(n);
    for (auto& b : view) b = in.u32();
    part.views.push_back(std::move(view));
  }
  const std::size_t labels = read_count(in, 4, "label");
  part.cluster_of.resize(labels);
  for (auto& l : part.cluster_of) l = in.u32();
  if (part.band_count() != bands) {
    throw ParseError("partition views cover " + std::to_string(part.band_count()) +
                         " bands, header says " + std::to_string(bands),
                     bands_at);
  }
  return c;
}

}  // namespace

std::vector<unsigned char> encode_config(const ModelConfig& config) {
  detail::ByteWriter out;
  write_config(out, config);
  return out.take();
}

std::uint64_t config_hash(const ModelConfig& config) {
  return fnv1a64(encode_config(config));
}

std::vector<unsigned char> encode_checkpoint(const DSANetModel& model) {
  detail::ByteWriter out;
  out.magic("DSAN");
  out.u32(kVersion);
  out.u64(model.provenance);
  out.u8(model.mode == ad::Mode::kInfer ? 1 : 0);
  write_config(out, model.config);
  const auto arrays = model.state();
  out.u32(u32_field(arrays.size(), "array count"));
  for (const auto& a : arrays) {
    const auto& shape = a.value.shape();
    out.u32(u32_field(shape.size(), "rank"));
    for (std::size_t d : shape) out.u32(u32_field(d, "dimension"));
    for (double v : a.value.values()) out.f64(v);
  }
  return out.take();
}

DSANetModel decode_checkpoint(std::span<const unsigned char> bytes) {
  detail::ByteReader in(bytes);
  in.expect_magic("DSAN", "DSAN checkpoint");
  {
    const std::size_t at = in.offset();
    const std::uint32_t version = in.u32();
    if (version != kVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(version), at);
    }
  }
  const std::uint64_t provenance = in.u64();
  const std::size_t mode_at = in.offset();
  const std::uint8_t mode = in.u8();
  if (mode > 1) throw ParseError("bad mode flag " + std::to_string(mode), mode_at);

  const std::size_t config_at = in.offset();
  ModelConfig config = read_config(in);
  DSANetModel model;
  try {
    model = allocate_model(config);
  } catch (const Error& e) {
    throw ParseError(std::string("invalid model configuration: ") + e.what(), config_at);
  }
  model.provenance = provenance;
  model.mode = mode == 1 ? ad::Mode::kInfer : ad::Mode::kTrain;

  auto arrays = model.state();
  {
    const std::size_t at = in.offset();
    const std::uint32_t count = in.u32();
    if (count != arrays.size()) {
      throw ParseError("checkpoint holds " + std::to_string(count) + " arrays, configuration needs " +
                           std::to_string(arrays.size()),
                       at);
    }
  }
  for (auto& a : arrays) {
    const std::size_t at = in.offset();
    const std::size_t rank = read_count(in, 4, "rank");
    ad::Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    if (shape != a.value.shape()) {
      throw ParseError("array '" + a.name + "' has shape " + ad::to_string(shape) +
                           ", configuration needs " + ad::to_string(a.value.shape()),
                       at);
    }
    for (double& v : a.value.values()) {
      const std::size_t value_at = in.offset();
      v = in.f64();
      if (!std::isfinite(v)) throw ParseError("non-finite value in '" + a.name + "'", value_at);
    }
  }
  if (in.remaining() != 0) {
    throw ParseError(std::to_string(in.remaining()) + " trailing bytes after the last array",
                     in.offset());
  }
  return model;
}

void save_checkpoint(const DSANetModel& model, const std::filesystem::path& path) {
  hsi::write_file(path, encode_checkpoint(model));
}

DSANetModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(hsi::read_file(path));
}

}  // namespace dsanet::model

#include "dsanet/hsi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "dsanet/error.hpp"
#include "dsanet/random.hpp"

namespace dsanet::hsi {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kCubeHeaderBytes = 4 + 4 * 4;
constexpr std::size_t kTruthHeaderBytes = 4 + 5 * 4;

std::uint32_t narrow_dim(std::size_t v, const char* name) {
  if (v == 0 || v > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError(std::string(name) + " does not fit the file format: " + std::to_string(v));
  }
  return static_cast<std::uint32_t>(v);
}

void check_version(detail::ByteReader& in) {
  const std::size_t at = in.offset();
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw ParseError("unsupported format version " + std::to_string(version), at);
  }
}

std::uint32_t read_dim(detail::ByteReader& in, const char* name) {
  const std::size_t at = in.offset();
  const std::uint32_t v = in.u32();
  if (v == 0) throw ParseError(std::string("dimension ") + name + " is zero", at);
  return v;
}

// Product of dims as a float32 payload byte count, rejecting overflow.
std::uint64_t payload_bytes(std::initializer_list<std::uint64_t> dims, std::size_t dims_offset) {
  std::uint64_t n = 4;
  for (std::uint64_t d : dims) {
    if (n > std::numeric_limits<std::uint64_t>::max() / d) {
      throw ParseError("dimension overflow: payload size exceeds 64 bits", dims_offset);
    }
    n *= d;
  }
  return n;
}

void check_payload(const detail::ByteReader& in, std::uint64_t expected) {
  const std::uint64_t found = in.remaining();
  if (found != expected) {
    throw ParseError("payload size mismatch: expected " + std::to_string(expected) +
                         " bytes, found " + std::to_string(found),
                     in.offset() + std::min(found, expected));
  }
}

double read_value(detail::ByteReader& in, bool nonnegative) {
  const std::size_t at = in.offset();
  const float v = in.f32();
  if (!std::isfinite(v)) throw ParseError("non-finite value", at);
  if (nonnegative && v < 0.0f) throw ParseError("negative reflectance " + std::to_string(v), at);
  return static_cast<double>(v);
}

}  // namespace

void validate(const Cube& cube) {
  if (cube.height == 0 || cube.width == 0 || cube.bands == 0) {
    throw ConfigError("cube dimensions must be positive");
  }
  if (cube.values.size() != cube.height * cube.width * cube.bands) {
    throw DimensionError("cube holds " + std::to_string(cube.values.size()) +
                         " values, expected H*W*L = " +
                         std::to_string(cube.height * cube.width * cube.bands));
  }
  for (double v : cube.values) {
    if (!std::isfinite(v) || v < 0.0) throw DomainError("cube values must be finite and >= 0");
  }
}

void validate(const GroundTruth& truth) {
  const std::size_t pixels = truth.height * truth.width;
  if (truth.materials == 0 || truth.bands == 0 || pixels == 0) {
    throw ConfigError("ground-truth dimensions must be positive");
  }
  if (truth.endmembers.size() != truth.materials * truth.bands ||
      truth.abundances.size() != pixels * truth.materials) {
    throw DimensionError("ground-truth arrays do not match their dimensions");
  }
  for (std::size_t p = 0; p < truth.materials; ++p) {
    auto e = truth.endmember(p);
    if (std::all_of(e.begin(), e.end(), [](double v) { return v == 0.0; })) {
      throw DegenerateError("endmember " + std::to_string(p) + " is all zeros");
    }
  }
  for (std::size_t i = 0; i < pixels; ++i) {
    double total = 0.0;
    for (double a : truth.abundance(i)) {
      if (!(a >= 0.0)) throw DomainError("negative abundance at pixel " + std::to_string(i));
      total += a;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw DomainError("abundances of pixel " + std::to_string(i) + " sum to " +
                        std::to_string(total));
    }
  }
}

std::vector<unsigned char> encode_cube(const Cube& cube) {
  validate(cube);
  detail::ByteWriter out;
  out.magic("HSIB");
  out.u32(kFormatVersion);
  out.u32(narrow_dim(cube.height, "height"));
  out.u32(narrow_dim(cube.width, "width"));
  out.u32(narrow_dim(cube.bands, "bands"));
  for (double v : cube.values) out.f32(static_cast<float>(v));
  return out.take();
}

Cube decode_cube(std::span<const unsigned char> bytes) {
  detail::ByteReader in(bytes);
  in.expect_magic("HSIB", "HSIB cube");
  check_version(in);
  Cube cube;
  cube.height = read_dim(in, "H");
  cube.width = read_dim(in, "W");
  cube.bands = read_dim(in, "L");
  check_payload(in, payload_bytes({cube.height, cube.width, cube.bands}, 8));
  cube.values.resize(cube.height * cube.width * cube.bands);
  for (double& v : cube.values) v = read_value(in, true);
  return cube;
}

std::vector<unsigned char> encode_truth(const GroundTruth& truth) {
  validate(truth);
  detail::ByteWriter out;
  out.magic("HSGT");
  out.u32(kFormatVersion);
  out.u32(narrow_dim(truth.materials, "materials"));
  out.u32(narrow_dim(truth.bands, "bands"));
  out.u32(narrow_dim(truth.height, "height"));
  out.u32(narrow_dim(truth.width, "width"));
  for (double v : truth.endmembers) out.f32(static_cast<float>(v));
  for (double v : truth.abundances) out.f32(static_cast<float>(v));
  return out.take();
}

GroundTruth decode_truth(std::span<const unsigned char> bytes) {
  detail::ByteReader in(bytes);
  in.expect_magic("HSGT", "HSGT ground-truth");
  check_version(in);
  GroundTruth truth;
  truth.materials = read_dim(in, "P");
  truth.bands = read_dim(in, "L");
  truth.height = read_dim(in, "H");
  truth.width = read_dim(in, "W");
  const std::uint64_t em_bytes = payload_bytes({truth.materials, truth.bands}, 8);
  const std::uint64_t ab_bytes = payload_bytes({truth.height, truth.width, truth.materials}, 8);
  if (em_bytes > std::numeric_limits<std::uint64_t>::max() - ab_bytes) {
    throw ParseError("dimension overflow: payload size exceeds 64 bits", 8);
  }
  check_payload(in, em_bytes + ab_bytes);
  truth.endmembers.resize(truth.materials * truth.bands);
  for (double& v : truth.endmembers) v = read_value(in, false);
  const std::size_t abundance_start = in.offset();
  truth.abundances.resize(truth.height * truth.width * truth.materials);
  for (double& v : truth.abundances) v = read_value(in, false);
  try {
    validate(truth);
  } catch (const Error& e) {
    throw ParseError(std::string("invalid ground truth: ") + e.what(), abundance_start);
  }
  return truth;
}

std::filesystem::path truth_path_for(const std::filesystem::path& cube_path) {
  std::filesystem::path p = cube_path;
  if (p.extension() == ".hsib") p.replace_extension();
  p += ".gt.hsib";
  return p;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

LoadedCube load_cube(const std::filesystem::path& path) {
  LoadedCube loaded{decode_cube(read_file(path)), std::nullopt};
  const auto sidecar = truth_path_for(path);
  if (std::filesystem::exists(sidecar)) {
    GroundTruth truth = load_truth(sidecar);
    if (truth.bands != loaded.cube.bands || truth.height != loaded.cube.height ||
        truth.width != loaded.cube.width) {
      throw ParseError("ground-truth sidecar " + sidecar.string() +
                           " does not match the cube dimensions",
                       8);
    }
    loaded.truth = std::move(truth);
  }
  return loaded;
}

void save_cube(const Cube& cube, const std::filesystem::path& path) {
  write_file(path, encode_cube(cube));
}

GroundTruth load_truth(const std::filesystem::path& path) {
  return decode_truth(read_file(path));
}

void save_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  write_file(path, encode_truth(truth));
}

void save_endmembers_csv(std::span<const double> endmembers, std::size_t materials,
                         std::size_t bands, const std::filesystem::path& path) {
  if (endmembers.size() != materials * bands) {
    throw DimensionError("endmember matrix does not match P x L");
  }
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t p = 0; p < materials; ++p) {
    for (std::size_t l = 0; l < bands; ++l) {
      if (l) out << ',';
      out << endmembers[p * bands + l];
    }
    out << '\n';
  }
  const std::string text = out.str();
  write_file(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

SyntheticScene generate_synthetic(const SyntheticOptions& o) {
  if (o.height == 0 || o.width == 0 || o.bands == 0 || o.materials == 0) {
    throw ConfigError("synthetic scene dimensions must be positive");
  }
  if (o.materials > o.bands) throw ConfigError("need P <= L for a synthetic scene");
  if (o.materials > o.height * o.width) throw ConfigError("need P <= H*W for a synthetic scene");
  if (!(o.snr_db > 0.0)) throw ConfigError("SNR must be positive (in dB)");
  if (!(o.alpha > 0.0) || !std::isfinite(o.alpha)) {
    throw ConfigError("Dirichlet concentration must be positive");
  }

  const std::size_t H = o.height, W = o.width, L = o.bands, P = o.materials;
  const std::size_t pixels = H * W;
  Rng rng(o.seed);
  SyntheticScene scene;
  GroundTruth& truth = scene.truth;
  truth.materials = P;
  truth.bands = L;
  truth.height = H;
  truth.width = W;

  // Endmembers: a low floor plus 2-4 Gaussian bumps, scaled to peak at 1.
  // The first bump of material p sits in its own 1/P stratum of the band
  // axis, so no two materials share a dominant feature.
  truth.endmembers.assign(P * L, 0.0);
  const double band_span = static_cast<double>(L);
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t bumps = 2 + static_cast<std::size_t>(rng.below(3));
    std::vector<double> spectrum(L, 0.1);
    for (std::size_t b = 0; b < bumps; ++b) {
      const double center = b == 0 ? (static_cast<double>(p) + rng.uniform()) / P * band_span
                                   : rng.uniform() * band_span;
      const double width = band_span * rng.uniform(1.0 / 16.0, 1.0 / 6.0);
      const double height = rng.uniform(0.3, 1.0);
      for (std::size_t l = 0; l < L; ++l) {
        const double z = (static_cast<double>(l) - center) / width;
        spectrum[l] += height * std::exp(-0.5 * z * z);
      }
    }
    const double peak = *std::max_element(spectrum.begin(), spectrum.end());
    for (std::size_t l = 0; l < L; ++l) truth.endmembers[p * L + l] = spectrum[l] / peak;
  }

  // Abundances: per-pixel Dirichlet(alpha) draws, kept as log-gamma samples
  // and box-summed over the 3x3 neighbourhood in the log domain (the
  // renormalized product of the neighbouring draws), then mapped back onto
  // the simplex. Small alpha keeps regions pure instead of averaging
  // neighbouring pure pixels into mixtures.
  std::vector<double> log_draws(pixels * P);
  for (double& v : log_draws) v = rng.log_gamma(o.alpha);
  truth.abundances.assign(pixels * P, 0.0);
  std::vector<double> smoothed(P);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      std::fill(smoothed.begin(), smoothed.end(), 0.0);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + dr;
          const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(H) ||
              cc >= static_cast<std::ptrdiff_t>(W)) {
            continue;
          }
          const std::size_t n = static_cast<std::size_t>(rr) * W + static_cast<std::size_t>(cc);
          for (std::size_t p = 0; p < P; ++p) smoothed[p] += log_draws[n * P + p];
        }
      }
      double peak = -std::numeric_limits<double>::infinity();
      for (double s : smoothed) peak = std::max(peak, s);
      double total = 0.0;
      double* a = &truth.abundances[(r * W + c) * P];
      for (std::size_t p = 0; p < P; ++p) {
        a[p] = std::exp(smoothed[p] - peak);
        total += a[p];
      }
      for (std::size_t p = 0; p < P; ++p) a[p] /= total;
    }
  }

  Cube& cube = scene.cube;
  cube.height = H;
  cube.width = W;
  cube.bands = L;
  cube.values.assign(pixels * L, 0.0);
  double signal_power = 0.0;
  for (std::size_t i = 0; i < pixels; ++i) {
    const double* a = &truth.abundances[i * P];
    double* x = &cube.values[i * L];
    for (std::size_t p = 0; p < P; ++p) {
      const double* e = &truth.endmembers[p * L];
      for (std::size_t l = 0; l < L; ++l) x[l] += a[p] * e[l];
    }
    for (std::size_t l = 0; l < L; ++l) signal_power += x[l] * x[l];
  }
  signal_power /= static_cast<double>(cube.values.size());
  if (std::isfinite(o.snr_db)) {
    const double sigma = std::sqrt(signal_power / std::pow(10.0, o.snr_db / 10.0));
    for (double& v : cube.values) v = std::max(0.0, v + sigma * rng.normal());
  }
  return scene;
}

std::size_t reflect_index(std::ptrdiff_t index, std::size_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (static_cast<std::ptrdiff_t>(n) - 1);
  std::ptrdiff_t i = index % period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

Patch extract_patch(const Cube& cube, std::size_t row, std::size_t col, std::size_t side) {
  if (side == 0 || side % 2 == 0) {
    throw ConfigError("window side must be a positive odd number, got " + std::to_string(side));
  }
  if (row >= cube.height || col >= cube.width) {
    throw ConfigError("window center (" + std::to_string(row) + ", " + std::to_string(col) +
                      ") lies outside the " + std::to_string(cube.height) + "x" +
                      std::to_string(cube.width) + " image");
  }
  Patch patch{row, col, side, cube.bands, {}};
  patch.pixels.reserve(side * side * cube.bands);
  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(side / 2);
  for (std::ptrdiff_t dr = -radius; dr <= radius; ++dr) {
    const std::size_t r = reflect_index(static_cast<std::ptrdiff_t>(row) + dr, cube.height);
    for (std::ptrdiff_t dc = -radius; dc <= radius; ++dc) {
      const std::size_t c = reflect_index(static_cast<std::ptrdiff_t>(col) + dc, cube.width);
      auto px = cube.pixel(r, c);
      patch.pixels.insert(patch.pixels.end(), px.begin(), px.end());
    }
  }
  return patch;
}

Cube normalize_cube(const Cube& cube) {
  validate(cube);
  const double peak = *std::max_element(cube.values.begin(), cube.values.end());
  if (!(peak > 0.0)) throw DegenerateError("cannot normalize an all-zero cube");
  Cube out = cube;
  for (double& v : out.values) v /= peak;
  return out;
}

}  // namespace dsanet::hsi

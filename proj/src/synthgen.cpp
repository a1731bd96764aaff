#include "muasv/synthgen.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "muasv/io.hpp"
#include "muasv/rng.hpp"

namespace muasv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// RNG stream ids per generation stage, so one scene seed drives independent
// deterministic streams.
constexpr std::uint64_t kStreamAbundances = 1;
constexpr std::uint64_t kStreamScaling = 2;
constexpr std::uint64_t kStreamFieldNoise = 3;
constexpr std::uint64_t kStreamObservation = 4;
constexpr std::uint64_t kStreamLibrary = 5;

Index reflect(Index i, Index n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Separable Gaussian blur with symmetric boundary handling.
Matrix gaussian_blur(const Matrix& img, double sigma) {
  if (sigma <= 0.0) return img;
  const Index radius = static_cast<Index>(std::ceil(3.0 * sigma));
  Vector kernel(2 * radius + 1);
  for (Index j = -radius; j <= radius; ++j)
    kernel(j + radius) = std::exp(-0.5 * static_cast<double>(j * j) / (sigma * sigma));
  kernel /= kernel.sum();

  const Index rows = img.rows();
  const Index cols = img.cols();
  Matrix tmp(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (Index j = -radius; j <= radius; ++j)
        acc += kernel(j + radius) * img(r, reflect(c + j, cols));
      tmp(r, c) = acc;
    }
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (Index j = -radius; j <= radius; ++j)
        acc += kernel(j + radius) * tmp(reflect(r + j, rows), c);
      out(r, c) = acc;
    }
  return out;
}

Matrix white_noise_grid(Index rows, Index cols, Rng& rng) {
  Matrix img(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) img(r, c) = rng.normal();
  return img;
}

// Grid image flattened to the row-major pixel vector used everywhere else.
Vector flatten(const Matrix& img) {
  Vector v(img.size());
  for (Index r = 0; r < img.rows(); ++r)
    for (Index c = 0; c < img.cols(); ++c) v(r * img.cols() + c) = img(r, c);
  return v;
}

Matrix mixed_image(const EndmemberField& field, const Matrix& abundances) {
  Matrix out(field.band_count(), field.pixel_count());
  for (Index px = 0; px < field.pixel_count(); ++px)
    out.col(px) = field.pixels[static_cast<std::size_t>(px)] * abundances.col(px);
  return out;
}

void require_three_materials(const EndmemberSet& library, const char* protocol) {
  library.validate();
  if (library.endmember_count() != 3)
    throw validation_error(std::string(protocol) +
                           ": library must have exactly three endmember columns");
}

}  // namespace

Matrix SyntheticScene::clean_mixture() const {
  return mixed_image(truth_field, truth_abundances.data);
}

double SyntheticScene::empirical_snr_db() const {
  const Matrix clean = clean_mixture();
  const double noise = (cube.data - clean).squaredNorm();
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean.squaredNorm() / noise);
}

AbundanceMatrix gaussian_random_field_abundances(Index rows, Index cols, Index p,
                                                 double correlation_length,
                                                 std::uint64_t seed) {
  if (rows < 1 || cols < 1 || p < 1)
    throw validation_error("random field abundances: empty shape");
  Rng rng(seed, kStreamAbundances);
  const Index n = rows * cols;
  Matrix fields(p, n);
  for (Index k = 0; k < p; ++k) {
    const Matrix smooth =
        gaussian_blur(white_noise_grid(rows, cols, rng), correlation_length);
    fields.row(k) = flatten(smooth).transpose();
    fields.row(k).array() -= fields.row(k).minCoeff();
  }
  AbundanceMatrix out;
  out.domain = AbundanceDomain::original;
  out.data.resize(p, n);
  for (Index i = 0; i < n; ++i) {
    const double total = fields.col(i).sum();
    if (total > 0.0)
      out.data.col(i) = fields.col(i) / total;
    else
      out.data.col(i).setConstant(1.0 / static_cast<double>(p));
  }
  return out;
}

HsiCube add_noise(const HsiCube& cube, double snr_db, std::uint64_t seed) {
  cube.validate();
  if (std::isinf(snr_db)) return cube;
  Rng rng(seed, kStreamObservation);
  const double signal_power =
      cube.data.squaredNorm() / static_cast<double>(cube.data.size());
  const double sigma = std::sqrt(signal_power * std::pow(10.0, -snr_db / 10.0));
  HsiCube out = cube;
  for (Index i = 0; i < out.data.cols(); ++i)
    for (Index b = 0; b < out.data.rows(); ++b)
      out.data(b, i) += sigma * rng.normal();
  return out;
}

EndmemberSet synthetic_library(Index bands, Index p, std::uint64_t seed) {
  if (bands < 2 || p < 1) throw validation_error("library: bad shape");
  Rng rng(seed, kStreamLibrary);
  EndmemberSet out;
  out.data.resize(bands, p);
  for (Index k = 0; k < p; ++k) {
    Vector spectrum = Vector::Constant(bands, 0.1);
    for (int bump = 0; bump < 6; ++bump) {
      const double amp = rng.uniform(0.2, 0.9);
      const double center = rng.uniform(0.0, static_cast<double>(bands - 1));
      const double width = rng.uniform(static_cast<double>(bands) / 30.0,
                                       static_cast<double>(bands) / 8.0);
      for (Index b = 0; b < bands; ++b) {
        const double d = (static_cast<double>(b) - center) / width;
        spectrum(b) += amp * std::exp(-0.5 * d * d);
      }
    }
    out.data.col(k) = spectrum.cwiseMin(1.0).cwiseMax(0.02);
  }
  out.validate();
  return out;
}

SyntheticScene generate_dc1(const EndmemberSet& library, std::uint64_t seed,
                            double snr_db) {
  require_three_materials(library, "dc1");
  constexpr Index kRows = 50;
  constexpr Index kCols = 50;
  constexpr double kAbundanceCorrelation = 12.0;
  constexpr double kScalingCorrelation = 8.0;
  constexpr double kScaleSpread = 0.35;
  constexpr double kEndmemberSnrDb = 25.0;
  const Index n = kRows * kCols;
  const Index bands = library.band_count();
  const Index p = library.endmember_count();

  SyntheticScene scene;
  scene.protocol = "dc1";
  scene.seed = seed;
  scene.snr_db = snr_db;
  scene.truth_abundances =
      gaussian_random_field_abundances(kRows, kCols, p, kAbundanceCorrelation, seed);

  // Smooth per-endmember scaling fields clipped to [0.75, 1.25].
  Rng scale_rng(seed, kStreamScaling);
  ScalingField psi;
  psi.data.resize(p, n);
  for (Index k = 0; k < p; ++k) {
    Matrix field =
        gaussian_blur(white_noise_grid(kRows, kCols, scale_rng), kScalingCorrelation);
    Vector flat = flatten(field);
    flat.array() -= flat.mean();
    const double sd = std::sqrt(flat.squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) flat /= sd;
    psi.data.row(k) =
        (1.0 + kScaleSpread * flat.array()).cwiseMax(0.75).cwiseMin(1.25).transpose();
  }
  scene.truth_scaling = psi;

  // Per-pixel endmembers: scaled reference plus a fresh 25 dB perturbation.
  Rng field_rng(seed, kStreamFieldNoise);
  scene.truth_field.pixels.resize(static_cast<std::size_t>(n));
  for (Index px = 0; px < n; ++px) {
    Matrix scaled = library.data * psi.data.col(px).asDiagonal();
    const double power = scaled.squaredNorm() / static_cast<double>(scaled.size());
    const double sigma =
        std::sqrt(power * std::pow(10.0, -kEndmemberSnrDb / 10.0));
    for (Index c = 0; c < p; ++c)
      for (Index b = 0; b < bands; ++b) scaled(b, c) += sigma * field_rng.normal();
    scene.truth_field.pixels[static_cast<std::size_t>(px)] = scaled.cwiseMax(0.0);
  }

  HsiCube clean;
  clean.rows = kRows;
  clean.cols = kCols;
  clean.data = mixed_image(scene.truth_field, scene.truth_abundances.data);
  scene.cube = add_noise(clean, snr_db, seed);
  return scene;
}

SyntheticScene generate_dc2(const EndmemberSet& library, std::uint64_t seed,
                            double snr_db) {
  require_three_materials(library, "dc2");
  constexpr Index kRows = 70;
  constexpr Index kCols = 70;
  constexpr Index kSquare = 4;          // square side in pixels
  constexpr Index kSquaresPerRow = 5;
  constexpr int kBreakpoints = 5;
  const Index n = kRows * kCols;
  const Index bands = library.band_count();
  const Index p = library.endmember_count();

  SyntheticScene scene;
  scene.protocol = "dc2";
  scene.seed = seed;
  scene.snr_db = snr_db;

  // Background abundances; the published values sum to 0.9999, renormalized
  // here so columns lie exactly on the simplex.
  Vector background(3);
  background << 0.2744, 0.1055, 0.62;
  background /= background.sum();

  scene.truth_abundances.domain = AbundanceDomain::original;
  scene.truth_abundances.data = background.replicate(1, n);

  const Index row_starts[3] = {9, 33, 57};
  const Index col_starts[kSquaresPerRow] = {5, 18, 31, 44, 57};
  const auto paint = [&](Index r0, Index c0, const Vector& value) {
    for (Index r = r0; r < r0 + kSquare; ++r)
      for (Index c = c0; c < c0 + kSquare; ++c)
        scene.truth_abundances.data.col(r * kCols + c) = value;
  };
  for (Index sqi = 0; sqi < kSquaresPerRow; ++sqi) {
    // Row 1: pure squares cycling through the materials.
    Vector pure = Vector::Zero(3);
    pure(sqi % 3) = 1.0;
    paint(row_starts[0], col_starts[sqi], pure);
    // Row 2: 0.5/0.5 two-material mixtures cycling through the pairs.
    const Index pair_a[5] = {0, 0, 1, 0, 0};
    const Index pair_b[5] = {1, 2, 2, 1, 2};
    Vector duo = Vector::Zero(3);
    duo(pair_a[sqi]) = 0.5;
    duo(pair_b[sqi]) = 0.5;
    paint(row_starts[1], col_starts[sqi], duo);
    // Row 3: uniform three-material mixtures.
    paint(row_starts[2], col_starts[sqi], Vector::Constant(3, 1.0 / 3.0));
  }

  // Per-pixel, per-endmember piecewise-linear band scaling in [0.8, 1.2].
  Rng rng(seed, kStreamScaling);
  scene.truth_field.pixels.resize(static_cast<std::size_t>(n));
  std::vector<double> knots(kBreakpoints);
  for (Index px = 0; px < n; ++px) {
    Matrix m(bands, p);
    for (Index k = 0; k < p; ++k) {
      for (int j = 0; j < kBreakpoints; ++j) knots[static_cast<std::size_t>(j)] = rng.uniform(0.8, 1.2);
      for (Index b = 0; b < bands; ++b) {
        const double pos = static_cast<double>(b) /
                           static_cast<double>(bands - 1) *
                           static_cast<double>(kBreakpoints - 1);
        const int seg = std::min(kBreakpoints - 2, static_cast<int>(pos));
        const double frac = pos - static_cast<double>(seg);
        const double scale = knots[static_cast<std::size_t>(seg)] * (1.0 - frac) +
                             knots[static_cast<std::size_t>(seg + 1)] * frac;
        m(b, k) = library.data(b, k) * scale;
      }
    }
    scene.truth_field.pixels[static_cast<std::size_t>(px)] = m;
  }

  HsiCube clean;
  clean.rows = kRows;
  clean.cols = kCols;
  clean.data = mixed_image(scene.truth_field, scene.truth_abundances.data);
  scene.cube = add_noise(clean, snr_db, seed);
  return scene;
}

void save_scene(const SyntheticScene& scene, const fs::path& dir,
                const std::string& library_name) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string());

  write_cube(scene.cube, dir / "cube");

  HsiCube ab;
  ab.rows = scene.cube.rows;
  ab.cols = scene.cube.cols;
  ab.data = scene.truth_abundances.data;
  write_cube(ab, dir / "truth_abundances");

  write_field(scene.truth_field, scene.cube.rows, scene.cube.cols, dir / "truth_field");
  if (scene.truth_scaling)
    write_scaling_csv(*scene.truth_scaling, dir / "truth_scaling.csv");

  json manifest;
  manifest["protocol"] = scene.protocol;
  manifest["seed"] = scene.seed;
  if (std::isfinite(scene.snr_db))
    manifest["snr_db"] = scene.snr_db;
  else
    manifest["snr_db"] = nullptr;
  manifest["rows"] = scene.cube.rows;
  manifest["cols"] = scene.cube.cols;
  manifest["bands"] = scene.cube.band_count();
  manifest["library"] = library_name;
  if (scene.protocol == "dc2") {
    // Square geometry and mixture ratios are conventions, recorded here.
    manifest["square_size"] = 4;
    manifest["squares_per_row"] = 5;
    manifest["two_material_ratio"] = {0.5, 0.5};
    manifest["three_material_ratio"] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw io_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

SyntheticScene load_scene(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw io_error("missing manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw io_error("invalid manifest in " + dir.string() + ": " + e.what());
  }

  SyntheticScene scene;
  scene.protocol = manifest.value("protocol", "unknown");
  scene.seed = manifest.value("seed", std::uint64_t{0});
  scene.snr_db = manifest.contains("snr_db") && manifest["snr_db"].is_number()
                     ? manifest["snr_db"].get<double>()
                     : std::numeric_limits<double>::infinity();
  scene.cube = read_cube(dir / "cube");

  const HsiCube ab = read_cube(dir / "truth_abundances");
  scene.truth_abundances.domain = AbundanceDomain::original;
  scene.truth_abundances.data = ab.data;

  scene.truth_field = read_field(dir / "truth_field").field;
  if (fs::exists(dir / "truth_scaling.csv"))
    scene.truth_scaling = read_scaling_csv(dir / "truth_scaling.csv");
  return scene;
}

}  // namespace muasv

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "muasv/types.hpp"

namespace muasv {

// A generated benchmark scene with full ground truth. The observed cube is
// mixed from the per-pixel endmember field and the true abundances, then
// contaminated with white Gaussian noise at snr_db (infinity = noiseless).
struct SyntheticScene {
  std::string protocol;
  HsiCube cube;
  AbundanceMatrix truth_abundances;
  EndmemberField truth_field;
  std::optional<ScalingField> truth_scaling;
  double snr_db = 0.0;
  std::uint64_t seed = 0;

  // Clean mixture and empirical SNR recomputed from the stored truth.
  Matrix clean_mixture() const;
  double empirical_snr_db() const;
};

// Piecewise-smooth simplex-valued maps: white noise fields convolved with an
// isotropic Gaussian kernel (sigma = correlation_length), shifted to min 0
// and column-normalized.
AbundanceMatrix gaussian_random_field_abundances(Index rows, Index cols, Index p,
                                                 double correlation_length,
                                                 std::uint64_t seed);

// 50x50, three materials; per-endmember smooth scaling fields in
// [0.75, 1.25] plus 25 dB perturbation of the scaled spectra.
SyntheticScene generate_dc1(const EndmemberSet& library, std::uint64_t seed,
                            double snr_db);

// 70x70, three materials; pure / two-mixture / three-mixture squares over a
// constant background, per-band piecewise-linear scaling in [0.8, 1.2].
SyntheticScene generate_dc2(const EndmemberSet& library, std::uint64_t seed,
                            double snr_db);

// Adds white Gaussian noise with variance set from the total signal energy.
HsiCube add_noise(const HsiCube& cube, double snr_db, std::uint64_t seed);

// Smooth positive spectra (sums of Gaussian bumps) usable as a stand-in
// endmember library when no measured signatures are available.
EndmemberSet synthetic_library(Index bands, Index p, std::uint64_t seed);

// Scene directory layout: cube.{json,raw}, truth_abundances.{json,raw},
// truth_field.{json,raw}, truth_scaling.csv (when present), manifest.json.
void save_scene(const SyntheticScene& scene, const std::filesystem::path& dir,
                const std::string& library_name);
SyntheticScene load_scene(const std::filesystem::path& dir);

}  // namespace muasv

#pragma once

#include <string>
#include <string_view>

#include "medrdf/random.hpp"
#include "medrdf/tensor.hpp"

namespace medrdf {

enum class NoiseKind { Gaussian, SaltAndPepper, Poisson };

// Isotropic per-element noise. The meaning of sigma depends on the kind:
//   Gaussian       standard deviation of the additive noise
//   SaltAndPepper  per-element corruption probability (corrupted -> 0 or 1)
//   Poisson        sigma == 0 disables the noise; otherwise counts are drawn
//                  at a fixed scale of kPoissonCountScale per unit intensity
struct NoiseModel {
  NoiseKind kind = NoiseKind::SaltAndPepper;
  double sigma = 0.1;

  void validate() const;
};

inline constexpr double kPoissonCountScale = 255.0;

enum class DenoiserKind { None, GaussianSmoothing, MedianFilter };

struct Denoiser {
  DenoiserKind kind = DenoiserKind::MedianFilter;
  int window = 3;
  double smoothing_sigma = 1.0;

  void validate() const;
};

// clamp01(x + eta). Every element draws independently from `stream`.
ImageTensor perturb(const ImageTensor& x, const NoiseModel& model, SeededStream& stream);

ImageTensor denoise(const ImageTensor& x, const Denoiser& d);

// Normalized 1-D Gaussian taps of length `window`, used separably.
std::vector<double> gaussian_kernel(int window, double sigma);

NoiseKind parse_noise_kind(std::string_view name);
DenoiserKind parse_denoiser_kind(std::string_view name);
std::string to_string(NoiseKind kind);
std::string to_string(DenoiserKind kind);
// Short labels used in report tables ("gaussian", "s.p.", "poisson" / "None", "GS", "MF").
std::string short_label(NoiseKind kind);
std::string short_label(DenoiserKind kind);

}  // namespace medrdf

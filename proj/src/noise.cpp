#include "medrdf/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "medrdf/error.hpp"

namespace medrdf {

void NoiseModel::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidConfig("noise sigma must be a finite non-negative number");
  }
  if (kind == NoiseKind::SaltAndPepper && sigma > 1.0) {
    throw InvalidConfig("salt-and-pepper sigma is a probability and must be <= 1");
  }
}

void Denoiser::validate() const {
  if (kind == DenoiserKind::None) return;
  if (window < 1 || window % 2 == 0) {
    throw InvalidConfig("denoiser window must be odd and >= 1, got " + std::to_string(window));
  }
  if (kind == DenoiserKind::GaussianSmoothing && !(smoothing_sigma > 0.0)) {
    throw InvalidConfig("gaussian smoothing sigma must be positive");
  }
}

ImageTensor perturb(const ImageTensor& x, const NoiseModel& model, SeededStream& stream) {
  ImageTensor out = x;
  auto v = out.data();
  switch (model.kind) {
    case NoiseKind::Gaussian:
      if (model.sigma == 0.0) return out;
      for (double& p : v) p = std::clamp(p + model.sigma * stream.normal(), 0.0, 1.0);
      break;
    case NoiseKind::SaltAndPepper:
      if (model.sigma == 0.0) return out;
      // one draw per element: the top 53 bits decide corruption, bit 0 salt vs pepper
      for (double& p : v) {
        const std::uint64_t r = stream();
        if (static_cast<double>(r >> 11) * 0x1.0p-53 < model.sigma) p = (r & 1u) ? 1.0 : 0.0;
      }
      break;
    case NoiseKind::Poisson:
      if (model.sigma == 0.0) return out;
      for (double& p : v) {
        const double rate = std::max(p, 0.0) * kPoissonCountScale;
        if (rate <= 0.0) {
          p = 0.0;
          continue;
        }
        std::poisson_distribution<long> counts(rate);
        p = std::clamp(static_cast<double>(counts(stream)) / kPoissonCountScale, 0.0, 1.0);
      }
      break;
  }
  return out;
}

std::vector<double> gaussian_kernel(int window, double sigma) {
  const int half = window / 2;
  std::vector<double> taps(static_cast<std::size_t>(window));
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    taps[static_cast<std::size_t>(i + half)] = w;
    total += w;
  }
  for (double& w : taps) w /= total;
  return taps;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::size_t replicate(long i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

ImageTensor gaussian_smooth(const ImageTensor& x, int window, double sigma) {
  const auto taps = gaussian_kernel(window, sigma);
  const long half = window / 2;
  const std::size_t H = x.height(), W = x.width();
  ImageTensor tmp(x.shape());
  ImageTensor out(x.shape());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        // weighted differences from the centre keep constant regions exact
        const double centre = x.at(c, y, xx);
        double acc = 0.0;
        for (long k = -half; k <= half; ++k) {
          acc += taps[static_cast<std::size_t>(k + half)] *
                 (x.at(c, y, replicate(static_cast<long>(xx) + k, W)) - centre);
        }
        tmp.at(c, y, xx) = centre + acc;
      }
    }
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        const double centre = tmp.at(c, y, xx);
        double acc = 0.0;
        for (long k = -half; k <= half; ++k) {
          acc += taps[static_cast<std::size_t>(k + half)] *
                 (tmp.at(c, replicate(static_cast<long>(y) + k, H), xx) - centre);
        }
        out.at(c, y, xx) = centre + acc;
      }
    }
  }
  return out;
}

// Median of nine with the classic 19 compare-exchange network, applied to a
// whole row at once. min/max keep it branch-free so the loop vectorizes.
void median9_row(const double* top, std::size_t stride, std::size_t count, double* out) {
  for (std::size_t i = 0; i < count; ++i) {
    const double* c = top + i;
    double p0 = c[0], p1 = c[1], p2 = c[2];
    double p3 = c[stride], p4 = c[stride + 1], p5 = c[stride + 2];
    double p6 = c[2 * stride], p7 = c[2 * stride + 1], p8 = c[2 * stride + 2];
#define MEDRDF_SORT2(a, b)            \
  {                                   \
    const double lo = std::min(a, b); \
    b = std::max(a, b);               \
    a = lo;                           \
  }
    MEDRDF_SORT2(p1, p2); MEDRDF_SORT2(p4, p5); MEDRDF_SORT2(p7, p8);
    MEDRDF_SORT2(p0, p1); MEDRDF_SORT2(p3, p4); MEDRDF_SORT2(p6, p7);
    MEDRDF_SORT2(p1, p2); MEDRDF_SORT2(p4, p5); MEDRDF_SORT2(p7, p8);
    MEDRDF_SORT2(p0, p3); MEDRDF_SORT2(p5, p8); MEDRDF_SORT2(p4, p7);
    MEDRDF_SORT2(p3, p6); MEDRDF_SORT2(p1, p4); MEDRDF_SORT2(p2, p5);
    MEDRDF_SORT2(p4, p7); MEDRDF_SORT2(p4, p2); MEDRDF_SORT2(p6, p4);
    MEDRDF_SORT2(p4, p2);
#undef MEDRDF_SORT2
    out[i] = p4;
  }
}

ImageTensor median_filter(const ImageTensor& x, int window) {
  if (window == 1) return x;
  const std::size_t half = static_cast<std::size_t>(window / 2);
  const std::size_t H = x.height(), W = x.width();
  const std::size_t PW = W + 2 * half;
  const std::size_t win = static_cast<std::size_t>(window);
  ImageTensor out(x.shape());
  std::vector<double> padded((H + 2 * half) * PW);
  std::vector<double> buf(win * win);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    // edge-replicated copy of channel c
    for (std::size_t py = 0; py < H + 2 * half; ++py) {
      const std::size_t sy = replicate(static_cast<long>(py) - static_cast<long>(half), H);
      for (std::size_t px = 0; px < PW; ++px) {
        padded[py * PW + px] = x.at(c, sy, replicate(static_cast<long>(px) - static_cast<long>(half), W));
      }
    }
    if (win == 3) {
      for (std::size_t y = 0; y < H; ++y) {
        median9_row(padded.data() + y * PW, PW, W, &out.at(c, y, 0));
      }
      continue;
    }
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        const double* corner = padded.data() + y * PW + xx;
        std::size_t k = 0;
        for (std::size_t dy = 0; dy < win; ++dy) {
          for (std::size_t dx = 0; dx < win; ++dx) buf[k++] = corner[dy * PW + dx];
        }
        const auto mid = buf.begin() + static_cast<long>(buf.size() / 2);
        std::nth_element(buf.begin(), mid, buf.end());
        out.at(c, y, xx) = *mid;
      }
    }
  }
  return out;
}

}  // namespace

ImageTensor denoise(const ImageTensor& x, const Denoiser& d) {
  switch (d.kind) {
    case DenoiserKind::None: return x;
    case DenoiserKind::GaussianSmoothing: return gaussian_smooth(x, d.window, d.smoothing_sigma);
    case DenoiserKind::MedianFilter: return median_filter(x, d.window);
  }
  return x;
}

NoiseKind parse_noise_kind(std::string_view text) {
  const auto name = lower(text);
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "salt_pepper" || name == "salt_and_pepper" || name == "saltpepper" || name == "sp") return NoiseKind::SaltAndPepper;
  if (name == "poisson") return NoiseKind::Poisson;
  throw InvalidConfig("unknown noise kind '" + std::string(text) + "'");
}

DenoiserKind parse_denoiser_kind(std::string_view text) {
  const auto name = lower(text);
  if (name == "none") return DenoiserKind::None;
  if (name == "gaussian_smoothing" || name == "gaussian" || name == "gs") return DenoiserKind::GaussianSmoothing;
  if (name == "median" || name == "median_filter" || name == "mf") return DenoiserKind::MedianFilter;
  throw InvalidConfig("unknown denoiser kind '" + std::string(text) + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::SaltAndPepper: return "salt_pepper";
    case NoiseKind::Poisson: return "poisson";
  }
  return "?";
}

std::string to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::None: return "none";
    case DenoiserKind::GaussianSmoothing: return "gaussian_smoothing";
    case DenoiserKind::MedianFilter: return "median";
  }
  return "?";
}

std::string short_label(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::SaltAndPepper: return "s.p.";
    case NoiseKind::Poisson: return "poisson";
  }
  return "?";
}

std::string short_label(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::None: return "None";
    case DenoiserKind::GaussianSmoothing: return "GS";
    case DenoiserKind::MedianFilter: return "MF";
  }
  return "?";
}

}  // namespace medrdf

#include "medrdf/small_net.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "medrdf/error.hpp"
#include "medrdf/random.hpp"

namespace medrdf {
namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kStride = 2;

std::size_t conv_out(std::size_t n) { return (n - kKernel) / kStride + 1; }

using detail::ConvGeometry;

// Patch element p = (ky * 3 + kx) * C + c for both layouts.
ConvGeometry geometry_chw(Shape in, std::size_t out_channels) {
  ConvGeometry g;
  g.out_h = conv_out(in.height);
  g.out_w = conv_out(in.width);
  g.row_step = kStride * in.width;
  g.col_step = kStride;
  for (std::size_t ky = 0; ky < kKernel; ++ky)
    for (std::size_t kx = 0; kx < kKernel; ++kx)
      for (std::size_t c = 0; c < in.channels; ++c)
        g.offsets.push_back(c * in.height * in.width + ky * in.width + kx);
  g.out_channels = out_channels;
  return g;
}

ConvGeometry geometry_hwc(Shape in, std::size_t out_channels) {
  ConvGeometry g;
  g.out_h = conv_out(in.height);
  g.out_w = conv_out(in.width);
  g.row_step = kStride * in.width * in.channels;
  g.col_step = kStride * in.channels;
  for (std::size_t ky = 0; ky < kKernel; ++ky)
    for (std::size_t kx = 0; kx < kKernel; ++kx)
      for (std::size_t c = 0; c < in.channels; ++c)
        g.offsets.push_back((ky * in.width + kx) * in.channels + c);
  g.out_channels = out_channels;
  return g;
}

void conv_forward(const ConvGeometry& g, const double* in, const double* w, const double* b,
                  double* out) {
  const std::size_t oc = g.out_channels;
  for (std::size_t y = 0; y < g.out_h; ++y) {
    for (std::size_t x = 0; x < g.out_w; ++x) {
      const double* src = in + y * g.row_step + x * g.col_step;
      double* dst = out + (y * g.out_w + x) * oc;
      std::copy(b, b + oc, dst);
      for (std::size_t p = 0; p < g.offsets.size(); ++p) {
        const double v = src[g.offsets[p]];
        const double* wp = w + p * oc;
        for (std::size_t o = 0; o < oc; ++o) dst[o] += wp[o] * v;
      }
    }
  }
}

// Given d(out), accumulates d(w), d(b) (when dw != nullptr) and d(in) (when din != nullptr).
void conv_backward(const ConvGeometry& g, const double* in, const double* w, const double* dout,
                   double* dw, double* db, double* din) {
  const std::size_t oc = g.out_channels;
  for (std::size_t y = 0; y < g.out_h; ++y) {
    for (std::size_t x = 0; x < g.out_w; ++x) {
      const double* gout = dout + (y * g.out_w + x) * oc;
      if (std::all_of(gout, gout + oc, [](double v) { return v == 0.0; })) continue;
      const std::size_t base = y * g.row_step + x * g.col_step;
      if (db != nullptr) {
        for (std::size_t o = 0; o < oc; ++o) db[o] += gout[o];
      }
      for (std::size_t p = 0; p < g.offsets.size(); ++p) {
        const std::size_t at = base + g.offsets[p];
        const double* wp = w + p * oc;
        if (dw != nullptr) {
          const double v = in[at];
          if (v != 0.0) {
            double* dwp = dw + p * oc;
            for (std::size_t o = 0; o < oc; ++o) dwp[o] += v * gout[o];
          }
        }
        if (din != nullptr) {
          double acc = 0.0;
          for (std::size_t o = 0; o < oc; ++o) acc += wp[o] * gout[o];
          din[at] += acc;
        }
      }
    }
  }
}

void relu(const std::vector<double>& pre, std::vector<double>& act) {
  act.resize(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

void relu_backward(const std::vector<double>& pre, std::vector<double>& grad) {
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v), static_cast<char>(v >> 8),
                              static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b.data(), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError("checkpoint truncated at byte offset " + std::to_string(offset_) +
                       " while reading " + what);
    }
    offset_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b{};
    bytes(reinterpret_cast<char*>(b.data()), 4, what);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

constexpr std::array<char, 8> kMagic{'M', 'E', 'D', 'R', 'D', 'F', 'N', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void SmallNetArch::validate() const {
  if (input.channels < 1 || input.height < 7 || input.width < 7) {
    throw InvalidConfig("SmallNet input must be at least 1x7x7, got " + to_string(input));
  }
  if (conv1_channels < 1 || conv2_channels < 1 || hidden < 1) {
    throw InvalidConfig("SmallNet layer widths must be positive");
  }
  if (num_classes < 2) throw InvalidConfig("SmallNet needs at least 2 classes");
}

Shape SmallNetArch::conv1_output() const {
  return {static_cast<std::size_t>(conv1_channels), conv_out(input.height), conv_out(input.width)};
}

Shape SmallNetArch::conv2_output() const {
  const Shape c1 = conv1_output();
  return {static_cast<std::size_t>(conv2_channels), conv_out(c1.height), conv_out(c1.width)};
}

std::size_t SmallNetArch::parameter_count() const {
  const std::size_t c1 = static_cast<std::size_t>(conv1_channels);
  const std::size_t c2 = static_cast<std::size_t>(conv2_channels);
  const std::size_t h = static_cast<std::size_t>(hidden);
  const std::size_t k = static_cast<std::size_t>(num_classes);
  return c1 * input.channels * 9 + c1 + c2 * c1 * 9 + c2 + h * conv2_output().size() + h + k * h + k;
}

SmallNet::Layout SmallNet::layout_for(const SmallNetArch& arch) {
  const std::size_t c1 = static_cast<std::size_t>(arch.conv1_channels);
  const std::size_t c2 = static_cast<std::size_t>(arch.conv2_channels);
  const std::size_t h = static_cast<std::size_t>(arch.hidden);
  const std::size_t k = static_cast<std::size_t>(arch.num_classes);
  Layout l{};
  l.w1 = 0;
  l.b1 = l.w1 + c1 * arch.input.channels * 9;
  l.w2 = l.b1 + c1;
  l.b2 = l.w2 + c2 * c1 * 9;
  l.w3 = l.b2 + c2;
  l.b3 = l.w3 + h * arch.conv2_output().size();
  l.w4 = l.b3 + h;
  l.b4 = l.w4 + k * h;
  l.total = l.b4 + k;
  return l;
}

SmallNet::SmallNet(SmallNetArch arch) : arch_(arch) {
  arch_.validate();
  layout_ = layout_for(arch_);
  conv1_ = geometry_chw(arch_.input, static_cast<std::size_t>(arch_.conv1_channels));
  conv2_ = geometry_hwc(arch_.conv1_output(), static_cast<std::size_t>(arch_.conv2_channels));
  params_.assign(layout_.total, 0.0);
}

SmallNet SmallNet::initialized(SmallNetArch arch, std::uint64_t seed) {
  SmallNet net(arch);
  SeededStream stream(seed, 0);
  const auto& l = net.layout_;
  auto fill = [&](std::size_t begin, std::size_t end, std::size_t fan_in, double gain) {
    const double bound = std::sqrt(gain / static_cast<double>(fan_in));
    for (std::size_t i = begin; i < end; ++i) net.params_[i] = stream.uniform(-bound, bound);
  };
  fill(l.w1, l.b1, arch.input.channels * 9, 6.0);
  fill(l.w2, l.b2, static_cast<std::size_t>(arch.conv1_channels) * 9, 6.0);
  fill(l.w3, l.b3, arch.conv2_output().size(), 6.0);
  fill(l.w4, l.b4, static_cast<std::size_t>(arch.hidden), 3.0);
  return net;
}

// Activations kept for the backward pass.
struct SmallNet::Trace {
  std::vector<double> input;  // normalized input
  std::vector<double> pre1, act1;
  std::vector<double> pre2, act2;
  std::vector<double> pre3, act3;
  std::vector<double> logits;
};

void SmallNet::forward(const ImageTensor& x, Trace& t) const {
  const auto& l = layout_;
  const double* p = params_.data();
  const auto xv = x.data();
  t.input.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) t.input[i] = 2.0 * xv[i] - 1.0;

  t.pre1.resize(arch_.conv1_output().size());
  conv_forward(conv1_, t.input.data(), p + l.w1, p + l.b1, t.pre1.data());
  relu(t.pre1, t.act1);
  t.pre2.resize(arch_.conv2_output().size());
  conv_forward(conv2_, t.act1.data(), p + l.w2, p + l.b2, t.pre2.data());
  relu(t.pre2, t.act2);

  const std::size_t F = t.act2.size();
  const std::size_t H = static_cast<std::size_t>(arch_.hidden);
  const std::size_t K = static_cast<std::size_t>(arch_.num_classes);
  t.pre3.assign(p + l.b3, p + l.b3 + H);
  for (std::size_t f = 0; f < F; ++f) {
    const double v = t.act2[f];
    if (v == 0.0) continue;
    const double* row = p + l.w3 + f * H;
    for (std::size_t j = 0; j < H; ++j) t.pre3[j] += row[j] * v;
  }
  relu(t.pre3, t.act3);
  t.logits.assign(p + l.b4, p + l.b4 + K);
  for (std::size_t j = 0; j < H; ++j) {
    const double v = t.act3[j];
    if (v == 0.0) continue;
    const double* row = p + l.w4 + j * K;
    for (std::size_t k = 0; k < K; ++k) t.logits[k] += row[k] * v;
  }
}

std::vector<double> SmallNet::logits(const ImageTensor& x) const {
  if (x.shape() != arch_.input) {
    throw InvalidInput("SmallNet expects " + to_string(arch_.input) + ", got " + to_string(x.shape()));
  }
  Trace t;
  forward(x, t);
  return t.logits;
}

ProbabilityMatrix SmallNet::do_predict_proba(std::span<const ImageTensor> batch) const {
  ProbabilityMatrix out(batch.size(), static_cast<std::size_t>(arch_.num_classes));
  Trace t;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    forward(batch[r], t);
    auto row = out.row(r);
    std::copy(t.logits.begin(), t.logits.end(), row.begin());
    softmax_inplace(row);
  }
  return out;
}

SmallNet::Backward SmallNet::backward(const ImageTensor& x, const LossSpec& loss,
                                      std::span<double> parameter_gradient) const {
  if (x.shape() != arch_.input) {
    throw InvalidInput("SmallNet expects " + to_string(arch_.input) + ", got " + to_string(x.shape()));
  }
  if (loss.label < 0 || loss.label >= arch_.num_classes) {
    throw InvalidInput("loss label " + std::to_string(loss.label) + " out of range");
  }
  const bool want_params = !parameter_gradient.empty();
  if (want_params && parameter_gradient.size() != params_.size()) {
    throw InvalidInput("parameter gradient buffer has wrong size");
  }

  const auto& l = layout_;
  Trace t;
  forward(x, t);

  const std::size_t K = static_cast<std::size_t>(arch_.num_classes);
  const std::size_t H = static_cast<std::size_t>(arch_.hidden);
  const Shape s1 = arch_.conv1_output();
  const std::size_t F = arch_.conv2_output().size();
  const std::size_t y = static_cast<std::size_t>(loss.label);

  Backward result;
  result.logits = t.logits;
  std::vector<double> dz(K, 0.0);
  if (loss.kind == LossSpec::Kind::CrossEntropy) {
    std::vector<double> probs(t.logits);
    softmax_inplace(probs);
    // log-sum-exp form keeps the loss finite for confident predictions
    const double top = *std::max_element(t.logits.begin(), t.logits.end());
    double total = 0.0;
    for (double z : t.logits) total += std::exp(z - top);
    result.loss = top + std::log(total) - t.logits[y];
    for (std::size_t k = 0; k < K; ++k) dz[k] = probs[k];
    dz[y] -= 1.0;
  } else {
    const int other = argmax_excluding(t.logits, loss.label);
    const double m = t.logits[y] - t.logits[static_cast<std::size_t>(other)];
    result.loss = std::max(m, -loss.kappa);
    if (m > -loss.kappa) {
      dz[y] = 1.0;
      dz[static_cast<std::size_t>(other)] = -1.0;
    }
  }

  double* g = want_params ? parameter_gradient.data() : nullptr;
  const double* p = params_.data();

  std::vector<double> d3(H, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    const double* row = p + l.w4 + j * K;
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += row[k] * dz[k];
    d3[j] = acc;
    if (g != nullptr && t.act3[j] != 0.0) {
      for (std::size_t k = 0; k < K; ++k) g[l.w4 + j * K + k] += t.act3[j] * dz[k];
    }
  }
  if (g != nullptr) {
    for (std::size_t k = 0; k < K; ++k) g[l.b4 + k] += dz[k];
  }
  relu_backward(t.pre3, d3);

  std::vector<double> d2(F, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double* row = p + l.w3 + f * H;
    double acc = 0.0;
    for (std::size_t j = 0; j < H; ++j) acc += row[j] * d3[j];
    d2[f] = acc;
    if (g != nullptr && t.act2[f] != 0.0) {
      double* gw = g + l.w3 + f * H;
      const double v = t.act2[f];
      for (std::size_t j = 0; j < H; ++j) gw[j] += v * d3[j];
    }
  }
  if (g != nullptr) {
    for (std::size_t j = 0; j < H; ++j) g[l.b3 + j] += d3[j];
  }
  relu_backward(t.pre2, d2);

  std::vector<double> d1(s1.size(), 0.0);
  conv_backward(conv2_, t.act1.data(), p + l.w2, d2.data(), g != nullptr ? g + l.w2 : nullptr,
                g != nullptr ? g + l.b2 : nullptr, d1.data());
  relu_backward(t.pre1, d1);

  std::vector<double> d0(t.input.size(), 0.0);
  conv_backward(conv1_, t.input.data(), p + l.w1, d1.data(), g != nullptr ? g + l.w1 : nullptr,
                g != nullptr ? g + l.b1 : nullptr, d0.data());

  // chain rule through the [0,1] -> [-1,1] input map
  for (double& v : d0) v *= 2.0;
  result.input_gradient = ImageTensor(arch_.input, std::move(d0));
  return result;
}

ImageTensor SmallNet::do_input_gradient(const ImageTensor& x, const LossSpec& loss) const {
  return backward(x, loss).input_gradient;
}

void write_checkpoint(const SmallNet& net, std::ostream& out) {
  const auto& a = net.arch();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(a.input.channels));
  put_u32(out, static_cast<std::uint32_t>(a.input.height));
  put_u32(out, static_cast<std::uint32_t>(a.input.width));
  put_u32(out, 4);
  put_u32(out, static_cast<std::uint32_t>(a.conv1_channels));
  put_u32(out, static_cast<std::uint32_t>(a.conv2_channels));
  put_u32(out, static_cast<std::uint32_t>(a.hidden));
  put_u32(out, static_cast<std::uint32_t>(a.num_classes));
  put_u32(out, static_cast<std::uint32_t>(a.num_classes));
  const auto params = net.parameters();
  put_u64(out, params.size());
  for (double v : params) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("failed writing checkpoint");
}

SmallNet read_checkpoint(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw ParseError("checkpoint has bad magic at byte offset 0");
  const std::size_t version_offset = r.offset();
  const std::uint32_t version = r.u32("format version");
  if (version != kFormatVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version) +
                     " at byte offset " + std::to_string(version_offset));
  }
  SmallNetArch arch;
  arch.input.channels = r.u32("channels");
  arch.input.height = r.u32("height");
  arch.input.width = r.u32("width");
  const std::size_t widths_offset = r.offset();
  if (r.u32("layer count") != 4) {
    throw ParseError("checkpoint layer count must be 4 (byte offset " +
                     std::to_string(widths_offset) + ")");
  }
  arch.conv1_channels = static_cast<int>(r.u32("conv1 width"));
  arch.conv2_channels = static_cast<int>(r.u32("conv2 width"));
  arch.hidden = static_cast<int>(r.u32("hidden width"));
  arch.num_classes = static_cast<int>(r.u32("output width"));
  const std::size_t k_offset = r.offset();
  if (static_cast<int>(r.u32("class count")) != arch.num_classes) {
    throw ParseError("checkpoint class count disagrees with output width at byte offset " +
                     std::to_string(k_offset));
  }
  try {
    arch.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint header describes an invalid network: ") + e.what());
  }
  SmallNet net(arch);
  const std::size_t count_offset = r.offset();
  const std::uint64_t count = r.u64("parameter count");
  if (count != net.parameters().size()) {
    throw ParseError("checkpoint parameter count " + std::to_string(count) + " at byte offset " +
                     std::to_string(count_offset) + " does not match architecture (" +
                     std::to_string(net.parameters().size()) + ")");
  }
  for (double& v : net.parameters()) v = std::bit_cast<float>(r.u32("parameters"));
  return net;
}

void save_checkpoint(const SmallNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(net, out);
}

SmallNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace medrdf

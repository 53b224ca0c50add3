#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "medrdf/classifier.hpp"

namespace medrdf {

namespace detail {

// Strided 3x3 convolution geometry. Outputs are channel-last, out[pos][o],
// and weights patch-major, w[p][o], so inner loops run over contiguous
// output channels.
struct ConvGeometry {
  std::size_t out_h = 0, out_w = 0;
  std::size_t row_step = 0, col_step = 0;  // input offset per output row / column
  std::vector<std::size_t> offsets;        // input offset of each patch element
  std::size_t out_channels = 0;
};

}  // namespace detail

// conv3x3/s2 -> ReLU -> conv3x3/s2 -> ReLU -> dense -> ReLU -> dense(K)
// Inputs are mapped from [0,1] to [-1,1] before the first convolution.
struct SmallNetArch {
  Shape input{1, 28, 28};
  int conv1_channels = 8;
  int conv2_channels = 16;
  int hidden = 32;
  int num_classes = 3;

  void validate() const;
  Shape conv1_output() const;
  Shape conv2_output() const;
  std::size_t parameter_count() const;
  bool operator==(const SmallNetArch&) const = default;
};

class SmallNet final : public Classifier {
 public:
  // All parameters zero.
  explicit SmallNet(SmallNetArch arch);
  // Uniform fan-in scaled weights drawn from the seeded stream, zero biases.
  static SmallNet initialized(SmallNetArch arch, std::uint64_t seed);

  int num_classes() const override { return arch_.num_classes; }
  std::size_t max_batch() const override { return 4096; }
  std::optional<Shape> input_shape() const override { return arch_.input; }
  bool supports_gradients() const override { return true; }

  const SmallNetArch& arch() const noexcept { return arch_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  std::vector<double> logits(const ImageTensor& x) const;

  struct Backward {
    double loss = 0.0;
    std::vector<double> logits;
    ImageTensor input_gradient;
  };

  // Forward + backward pass for a single sample. When `parameter_gradient`
  // is non-empty the parameter gradient is *added* into it.
  Backward backward(const ImageTensor& x, const LossSpec& loss,
                    std::span<double> parameter_gradient = {}) const;

 protected:
  ProbabilityMatrix do_predict_proba(std::span<const ImageTensor> batch) const override;
  ImageTensor do_input_gradient(const ImageTensor& x, const LossSpec& loss) const override;

 private:
  struct Layout {
    std::size_t w1, b1, w2, b2, w3, b3, w4, b4, total;
  };
  static Layout layout_for(const SmallNetArch& arch);

  struct Trace;
  void forward(const ImageTensor& x, Trace& t) const;

  SmallNetArch arch_;
  Layout layout_;
  detail::ConvGeometry conv1_, conv2_;
  std::vector<double> params_;
};

// Checkpoint layout (all integers little-endian):
//   char[8]  magic "MEDRDFNT"
//   u32      format version (1)
//   u32 x3   input channels, height, width
//   u32      number of layer widths (4)
//   u32 x4   conv1 channels, conv2 channels, hidden width, K
//   u32      K
//   u64      parameter count
//   f32 x N  parameters, row-major, in layer order:
//            conv1 W[3][3][C][c1], b[c1], conv2 W[3][3][c1][c2], b[c2],
//            fc1 W[h2*w2*c2][hidden], b[hidden], fc2 W[hidden][K], b[K]
//            (kernel row, kernel column, input channel, output channel;
//            fc1 inputs are the conv2 activations in row, column, channel order)
void write_checkpoint(const SmallNet& net, std::ostream& out);
SmallNet read_checkpoint(std::istream& in);
void save_checkpoint(const SmallNet& net, const std::filesystem::path& path);
SmallNet load_checkpoint(const std::filesystem::path& path);

}  // namespace medrdf

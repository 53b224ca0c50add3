#include "medrdf/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "medrdf/error.hpp"
#include "medrdf/random.hpp"

namespace medrdf {
namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

void Dataset::validate() const {
  if (images.size() != labels.size()) {
    throw InvalidInput("dataset '" + name + "': " + std::to_string(images.size()) + " images but " +
                       std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InvalidInput("dataset '" + name + "': label " + std::to_string(labels[i]) +
                         " of sample " + std::to_string(i) + " outside [0, " +
                         std::to_string(num_classes) + ")");
    }
  }
  for (const auto& img : images) {
    if (img.shape() != images.front().shape()) {
      throw InvalidInput("dataset '" + name + "': images have mixed shapes");
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw InvalidConfig("synthetic dataset needs >= 2 classes");
  if (shape.size() == 0) throw InvalidConfig("synthetic dataset shape must be positive");
  if (train == 0 && val == 0 && test == 0) throw InvalidConfig("synthetic dataset is empty");
  if (blob_radius <= 0.0) throw InvalidConfig("synthetic blob_radius must be positive");
  if (!(texture_density > 0.0 && texture_density <= 1.0)) {
    throw InvalidConfig("synthetic texture_density must lie in (0, 1]");
  }
}

namespace {

constexpr std::uint64_t kTextureStream = 0xC1A55ull << 40;

std::uint64_t split_offset(Split split) {
  switch (split) {
    case Split::Train: return 0;
    case Split::Val: return 1ull << 32;
    case Split::Test: return 2ull << 32;
  }
  return 0;
}

Dataset make_split(const SyntheticSpec& spec, Split split, std::size_t count,
                   const std::vector<std::vector<double>>& textures) {
  Dataset data;
  data.name = "synthetic";
  data.split = split;
  data.num_classes = spec.num_classes;
  data.images.reserve(count);
  data.labels.reserve(count);

  const double cy = (static_cast<double>(spec.shape.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(spec.shape.width) - 1.0) / 2.0;
  for (std::size_t s = 0; s < count; ++s) {
    const int label = static_cast<int>(s % static_cast<std::size_t>(spec.num_classes));
    SeededStream rng(spec.seed, split_offset(split) + s);

    const double angle = 2.0 * std::numbers::pi * label / spec.num_classes;
    const double by = cy + spec.ring_radius * std::sin(angle) + rng.uniform(-1.0, 1.0) * spec.position_jitter;
    const double bx = cx + spec.ring_radius * std::cos(angle) + rng.uniform(-1.0, 1.0) * spec.position_jitter;
    const double fy = rng.uniform(0.5, 1.5) / static_cast<double>(spec.shape.height);
    const double fx = rng.uniform(0.5, 1.5) / static_cast<double>(spec.shape.width);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double level = spec.background + rng.uniform(-0.5, 0.5) * spec.background_variation;

    ImageTensor img(spec.shape);
    const auto& texture = textures[static_cast<std::size_t>(label)];
    std::size_t i = 0;
    for (std::size_t c = 0; c < spec.shape.channels; ++c) {
      const double gain = 1.0 - 0.15 * static_cast<double>(c % 3);
      for (std::size_t y = 0; y < spec.shape.height; ++y) {
        for (std::size_t x = 0; x < spec.shape.width; ++x, ++i) {
          const double dy = static_cast<double>(y) - by;
          const double dx = static_cast<double>(x) - bx;
          const double blob = spec.blob_amplitude *
                              std::exp(-(dy * dy + dx * dx) / (2.0 * spec.blob_radius * spec.blob_radius));
          const double wave = spec.background_variation *
                              std::sin(2.0 * std::numbers::pi * (fy * y + fx * x) + phase);
          const double v = gain * (level + wave + blob) + texture[i] + spec.pixel_noise * rng.normal();
          img[i] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) | (b[off + 1] << 16) | (b[off + 2] << 8) | b[off + 3];
}

void finish_labels(Dataset& data, int num_classes) {
  if (num_classes <= 0) {
    int top = -1;
    for (int y : data.labels) top = std::max(top, y);
    num_classes = std::max(2, top + 1);
  }
  data.num_classes = num_classes;
  data.validate();
}

}  // namespace

DatasetSplits make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::vector<double>> textures;
  for (int k = 0; k < spec.num_classes; ++k) {
    SeededStream rng(spec.seed, kTextureStream + static_cast<std::uint64_t>(k));
    std::vector<double> t(spec.shape.size());
    for (double& v : t) {
      if (spec.texture_density >= 1.0) {
        v = spec.texture_amplitude * rng.rademacher();
      } else {
        v = rng.uniform() < spec.texture_density ? spec.texture_amplitude : 0.0;
      }
    }
    textures.push_back(std::move(t));
  }
  return {make_split(spec, Split::Train, spec.train, textures),
          make_split(spec, Split::Val, spec.val, textures),
          make_split(spec, Split::Test, spec.test, textures)};
}

Dataset load_idx(const fs::path& images, const fs::path& labels, int num_classes, Split split) {
  const auto ib = read_file(images);
  if (ib.size() < 4) throw ParseError(images.string() + ": truncated IDX header at byte offset " + std::to_string(ib.size()));
  if (ib[0] != 0 || ib[1] != 0 || ib[2] != 0x08) {
    throw ParseError(images.string() + ": bad IDX magic at byte offset 0 (expected unsigned-byte data)");
  }
  const std::size_t dims = ib[3];
  if (dims != 3 && dims != 4) {
    throw ParseError(images.string() + ": IDX image file must have 3 or 4 dimensions (byte offset 3)");
  }
  if (ib.size() < 4 + 4 * dims) {
    throw ParseError(images.string() + ": truncated IDX header at byte offset " + std::to_string(ib.size()));
  }
  std::vector<std::size_t> d(dims);
  for (std::size_t k = 0; k < dims; ++k) d[k] = be32(ib, 4 + 4 * k);
  const std::size_t count = d[0];
  // 4-D files are N x H x W x C (interleaved channels)
  const Shape shape = dims == 3 ? Shape{1, d[1], d[2]} : Shape{d[3], d[1], d[2]};
  if (shape.size() == 0) throw ParseError(images.string() + ": IDX image dimensions are zero (byte offset 8)");
  const std::size_t header = 4 + 4 * dims;
  const std::size_t needed = header + count * shape.size();
  if (ib.size() < needed) {
    throw ParseError(images.string() + ": IDX pixel data truncated at byte offset " +
                     std::to_string(ib.size()) + " (expected " + std::to_string(needed) + " bytes)");
  }

  const auto lb = read_file(labels);
  if (lb.size() < 8) throw ParseError(labels.string() + ": truncated IDX header at byte offset " + std::to_string(lb.size()));
  if (be32(lb, 0) != 0x00000801u) throw ParseError(labels.string() + ": bad IDX label magic at byte offset 0");
  const std::size_t label_count = be32(lb, 4);
  if (label_count != count) {
    throw ParseError(labels.string() + ": label count " + std::to_string(label_count) +
                     " at byte offset 4 does not match image count " + std::to_string(count));
  }
  if (lb.size() < 8 + count) {
    throw ParseError(labels.string() + ": IDX label data truncated at byte offset " + std::to_string(lb.size()));
  }

  Dataset data;
  data.name = images.stem().string();
  data.split = split;
  data.images.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    ImageTensor img(shape);
    const unsigned char* src = ib.data() + header + n * shape.size();
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          img.at(c, y, x) = src[(y * shape.width + x) * shape.channels + c] / 255.0;
        }
      }
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(lb[8 + n]);
  }
  finish_labels(data, num_classes);
  return data;
}

void write_idx(const Dataset& data, const fs::path& images, const fs::path& labels) {
  if (data.images.empty()) throw InvalidInput("write_idx: empty dataset");
  const Shape s = data.images.front().shape();
  auto put32 = [](std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
  };
  std::ofstream img(images, std::ios::binary);
  if (!img) throw IoError("cannot open '" + images.string() + "' for writing");
  put32(img, s.channels == 1 ? 0x00000803u : 0x00000804u);
  put32(img, static_cast<std::uint32_t>(data.size()));
  put32(img, static_cast<std::uint32_t>(s.height));
  put32(img, static_cast<std::uint32_t>(s.width));
  if (s.channels != 1) put32(img, static_cast<std::uint32_t>(s.channels));
  for (const auto& t : data.images) {
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        for (std::size_t c = 0; c < s.channels; ++c) {
          img.put(static_cast<char>(std::lround(std::clamp(t.at(c, y, x), 0.0, 1.0) * 255.0)));
        }
      }
    }
  }
  std::ofstream lab(labels, std::ios::binary);
  if (!lab) throw IoError("cannot open '" + labels.string() + "' for writing");
  put32(lab, 0x00000801u);
  put32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(y));
  if (!img || !lab) throw IoError("failed writing IDX files");
}

Dataset load_csv(const fs::path& path, Shape shape, int num_classes, Split split) {
  const auto bytes = read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  Dataset data;
  data.name = path.stem().string();
  data.split = split;

  std::size_t pos = 0;
  auto next_line = [&](std::size_t& line_start) -> std::optional<std::string_view> {
    while (pos < text.size()) {
      line_start = pos;
      const std::size_t end = text.find('\n', pos);
      const std::size_t stop = end == std::string_view::npos ? text.size() : end;
      pos = end == std::string_view::npos ? text.size() : end + 1;
      std::string_view line = text.substr(line_start, stop - line_start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) return line;
    }
    return std::nullopt;
  };

  std::size_t line_start = 0;
  const auto header = next_line(line_start);
  if (!header) throw InvalidInput(path.string() + ": empty dataset");
  if (header->substr(0, 5) != "label") {
    throw ParseError(path.string() + ": header must start with 'label' (byte offset 0)");
  }

  while (const auto line = next_line(line_start)) {
    std::vector<double> values;
    values.reserve(shape.size() + 1);
    std::size_t field = 0;
    while (field <= line->size()) {
      std::size_t comma = line->find(',', field);
      if (comma == std::string_view::npos) comma = line->size();
      std::string_view token = line->substr(field, comma - field);
      while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front()))) token.remove_prefix(1);
      while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
        throw ParseError(path.string() + ": malformed number '" + std::string(token) +
                         "' at byte offset " + std::to_string(line_start + field));
      }
      values.push_back(v);
      field = comma + 1;
    }
    if (values.size() != shape.size() + 1) {
      throw ParseError(path.string() + ": row at byte offset " + std::to_string(line_start) + " has " +
                       std::to_string(values.size()) + " fields, expected " +
                       std::to_string(shape.size() + 1));
    }
    const double label = values.front();
    if (label != std::floor(label)) {
      throw ParseError(path.string() + ": non-integer label at byte offset " + std::to_string(line_start));
    }
    std::vector<double> pixels(values.begin() + 1, values.end());
    for (double& p : pixels) p = std::clamp(p / 255.0, 0.0, 1.0);
    data.images.emplace_back(shape, std::move(pixels));
    data.labels.push_back(static_cast<int>(label));
  }
  if (data.images.empty()) throw InvalidInput(path.string() + ": empty dataset");
  finish_labels(data, num_classes);
  return data;
}

namespace {

// Reads one whitespace/comment-delimited header token of a PNM file.
std::string pnm_token(const std::vector<unsigned char>& b, std::size_t& pos, const fs::path& path) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') ++pos;
  if (start == pos) throw ParseError(path.string() + ": truncated PGM header at byte offset " + std::to_string(pos));
  return std::string(b.begin() + static_cast<long>(start), b.begin() + static_cast<long>(pos));
}

std::size_t pnm_number(const std::vector<unsigned char>& b, std::size_t& pos, const fs::path& path) {
  const std::size_t at = pos;
  const std::string tok = pnm_token(b, pos, path);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(path.string() + ": malformed PGM number near byte offset " + std::to_string(at));
  }
  return v;
}

}  // namespace

ImageTensor read_pgm(const fs::path& path) {
  const auto b = read_file(path);
  std::size_t pos = 0;
  const std::string magic = pnm_token(b, pos, path);
  if (magic != "P5" && magic != "P2") throw ParseError(path.string() + ": not a PGM file (byte offset 0)");
  const std::size_t width = pnm_number(b, pos, path);
  const std::size_t height = pnm_number(b, pos, path);
  const std::size_t maxval = pnm_number(b, pos, path);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw ParseError(path.string() + ": invalid PGM header values");
  }
  ImageTensor img(Shape{1, height, width});
  const double scale = static_cast<double>(maxval);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    if (b.size() < pos + img.size() * bytes_per) {
      throw ParseError(path.string() + ": PGM pixel data truncated at byte offset " + std::to_string(b.size()));
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::size_t o = pos + i * bytes_per;
      const unsigned v = bytes_per == 2 ? (b[o] << 8) | b[o + 1] : b[o];
      img[i] = std::min(1.0, v / scale);
    }
  } else {
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::min(1.0, pnm_number(b, pos, path) / scale);
  }
  return img;
}

void write_pgm(const ImageTensor& image, const fs::path& path) {
  if (image.channels() != 1) throw InvalidInput("write_pgm needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  for (double v : image.data()) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ImageTensor read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ParseError(path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ParseError(path.string() + ": " + msg);
  }
  const std::size_t channels = color ? 3 : 1;
  ImageTensor img(Shape{channels, png.height, png.width});
  for (std::size_t y = 0; y < png.height; ++y) {
    for (std::size_t x = 0; x < png.width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        img.at(c, y, x) = buffer[(y * png.width + x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

Dataset load_image_directory(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw IoError("'" + root.string() + "' is not a directory");
  std::vector<fs::path> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path());
  }
  std::sort(classes.begin(), classes.end());

  Dataset data;
  data.name = root.filename().string();
  data.split = split;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(classes[label])) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::string ext = f.extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      data.images.push_back(ext == ".pgm" ? read_pgm(f) : read_png(f));
      data.labels.push_back(static_cast<int>(label));
    }
  }
  if (data.images.empty()) throw InvalidInput("'" + root.string() + "': empty dataset (no class images)");
  data.num_classes = std::max<int>(2, static_cast<int>(classes.size()));
  data.validate();
  return data;
}

}  // namespace medrdf

#include <png.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "medrdf/dataset.hpp"
#include "medrdf/error.hpp"

using namespace medrdf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() / ("medrdf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// pixel values are multiples of 1/255 so 8-bit formats round-trip exactly
Dataset byte_dataset(std::size_t count, Shape shape, int k, std::uint64_t seed) {
  SeededStream rng(seed, 0);
  Dataset d;
  d.name = "bytes";
  d.num_classes = k;
  for (std::size_t i = 0; i < count; ++i) {
    ImageTensor x(shape);
    for (double& v : x.data()) v = static_cast<double>(rng() % 256) / 255.0;
    d.images.push_back(std::move(x));
    d.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(k)));
  }
  return d;
}

void write_png_gray(const ImageTensor& x, const fs::path& p) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(x.width());
  img.height = static_cast<png_uint_32>(x.height());
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = static_cast<png_byte>(std::lround(x[i] * 255.0));
  REQUIRE(png_image_write_to_file(&img, p.c_str(), 0, buf.data(), 0, nullptr) != 0);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("IDX round trip") {
  TempDir dir;
  const auto d = byte_dataset(10, Shape{1, 28, 28}, 3, 1);
  write_idx(d, dir / "img.idx", dir / "lab.idx");
  const auto bytes = read_bytes(dir / "img.idx");
  REQUIRE(bytes.size() == 16 + 10 * 28 * 28);
  CHECK(static_cast<unsigned char>(bytes[2]) == 0x08);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x03);
  const auto back = load_idx(dir / "img.idx", dir / "lab.idx");
  CHECK(back.size() == 10);
  CHECK(back.num_classes == 3);
  CHECK(back.labels == d.labels);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.images[i].shape() == Shape{1, 28, 28});
    CHECK(test::same_values(back.images[i].data(), d.images[i].data()));
  }
}

TEST_CASE("IDX errors report byte offsets") {
  TempDir dir;
  const auto d = byte_dataset(4, Shape{1, 5, 5}, 2, 2);
  write_idx(d, dir / "img.idx", dir / "lab.idx");
  auto bytes = read_bytes(dir / "img.idx");

  write_bytes(dir / "short.idx", bytes.substr(0, bytes.size() - 3));
  try {
    load_idx(dir / "short.idx", dir / "lab.idx");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte offset " + std::to_string(bytes.size() - 3)) != std::string::npos);
  }
  auto bad = bytes;
  bad[2] = 0x0D;
  write_bytes(dir / "magic.idx", bad);
  CHECK_THROWS_AS(load_idx(dir / "magic.idx", dir / "lab.idx"), ParseError);
  write_bytes(dir / "tiny.idx", std::string(2, '\0'));
  CHECK_THROWS_AS(load_idx(dir / "tiny.idx", dir / "lab.idx"), ParseError);
  CHECK_THROWS_AS(load_idx(dir / "missing.idx", dir / "lab.idx"), IoError);
  // label count disagrees with image count
  auto labels = read_bytes(dir / "lab.idx");
  labels[7] = 3;
  write_bytes(dir / "lab3.idx", labels.substr(0, labels.size() - 1));
  CHECK_THROWS_AS(load_idx(dir / "img.idx", dir / "lab3.idx"), ParseError);
  // a label beyond the declared class count
  CHECK_THROWS_AS(load_idx(dir / "img.idx", dir / "lab.idx", 1), InvalidInput);
}

TEST_CASE("CSV loading") {
  TempDir dir;
  write_bytes(dir / "a.csv", "label,p0,p1,p2,p3\n1,0,255,51,102\n0,255,255,0,0\n");
  const auto d = load_csv(dir / "a.csv", Shape{1, 2, 2});
  REQUIRE(d.size() == 2);
  CHECK(d.labels == std::vector<int>{1, 0});
  CHECK(d.num_classes == 2);
  CHECK(d.images[0].at(0, 0, 1) == 1.0);
  CHECK(d.images[0].at(0, 1, 0) == doctest::Approx(0.2));

  write_bytes(dir / "cols.csv", "label,p0,p1,p2,p3\n1,0,255,51\n");
  try {
    load_csv(dir / "cols.csv", Shape{1, 2, 2});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte offset 18") != std::string::npos);
  }
  write_bytes(dir / "num.csv", "label,p0,p1,p2,p3\n1,0,x,51,1\n");
  CHECK_THROWS_AS(load_csv(dir / "num.csv", Shape{1, 2, 2}), ParseError);
  write_bytes(dir / "head.csv", "p0,p1\n");
  CHECK_THROWS_AS(load_csv(dir / "head.csv", Shape{1, 1, 2}), ParseError);
  write_bytes(dir / "empty.csv", "label,p0\n");
  CHECK_THROWS_AS(load_csv(dir / "empty.csv", Shape{1, 1, 1}), InvalidInput);
}

TEST_CASE("image directory with PGM and PNG files") {
  TempDir dir;
  const auto d = byte_dataset(6, Shape{1, 6, 5}, 2, 3);
  fs::create_directories(dir / "benign");
  fs::create_directories(dir / "malignant");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto cls = dir / (d.labels[i] == 0 ? "benign" : "malignant");
    const auto stem = "img" + std::to_string(i);
    if (i % 2 == 0) write_pgm(d.images[i], cls / (stem + ".pgm"));
    else write_png_gray(d.images[i], cls / (stem + ".png"));
  }
  write_bytes(dir / "benign" / "notes.txt", "ignored");
  const auto back = load_image_directory(dir.path);
  REQUIRE(back.size() == 6);
  CHECK(back.num_classes == 2);
  // class 0 holds images 0, 2, 4 in name order
  CHECK(back.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
  CHECK(test::same_values(back.images[0].data(), d.images[0].data()));
  CHECK(test::same_values(back.images[1].data(), d.images[2].data()));
  CHECK(test::same_values(back.images[3].data(), d.images[1].data()));
  CHECK(test::same_values(back.images[5].data(), d.images[5].data()));

  TempDir empty;
  fs::create_directories(empty / "a");
  CHECK_THROWS_AS(load_image_directory(empty.path), InvalidInput);
  CHECK_THROWS_AS(load_image_directory(empty / "nope"), IoError);
}

TEST_CASE("PGM variants and errors") {
  TempDir dir;
  write_bytes(dir / "ascii.pgm", "P2\n# comment\n2 1\n255\n0 255\n");
  const auto a = read_pgm(dir / "ascii.pgm");
  CHECK(a.shape() == Shape{1, 1, 2});
  CHECK(a[1] == 1.0);
  write_bytes(dir / "wide.pgm", std::string("P5 1 1 65535\n") + '\xFF' + '\xFF');
  CHECK(read_pgm(dir / "wide.pgm")[0] == 1.0);
  write_bytes(dir / "cut.pgm", "P5 4 4 255\nabc");
  CHECK_THROWS_AS(read_pgm(dir / "cut.pgm"), ParseError);
  write_bytes(dir / "bad.pgm", "P6 1 1 255\nabc");
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), ParseError);
  write_bytes(dir / "bad.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "bad.png"), ParseError);
  CHECK_THROWS_AS(write_pgm(ImageTensor(Shape{3, 2, 2}), dir / "rgb.pgm"), InvalidInput);
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  const auto a = make_synthetic(spec);
  const auto b = make_synthetic(spec);
  CHECK(a.train.size() == 600);
  CHECK(a.val.size() == 100);
  CHECK(a.test.size() == 100);
  CHECK(a.test.num_classes == 3);
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(test::same_values(a.test.images[i].data(), b.test.images[i].data()));
  for (const auto& x : a.test.images) {
    for (double v : x.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  std::vector<int> per_class(3, 0);
  for (int y : a.train.labels) ++per_class[static_cast<std::size_t>(y)];
  for (int c : per_class) CHECK(c == 200);
  spec.seed = 8;
  CHECK_FALSE(test::same_values(make_synthetic(spec).test.images[0].data(), a.test.images[0].data()));
  spec.texture_density = 0.0;
  CHECK_THROWS_AS(make_synthetic(spec), InvalidConfig);
}

TEST_CASE("synthetic classes are separable by a nearest-centroid rule") {
  const auto d = make_synthetic(SyntheticSpec{});
  const std::size_t P = d.train.images[0].size();
  std::vector<std::vector<double>> centroid(3, std::vector<double>(P, 0.0));
  std::vector<int> count(3, 0);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto y = static_cast<std::size_t>(d.train.labels[i]);
    ++count[y];
    for (std::size_t p = 0; p < P; ++p) centroid[y][p] += d.train.images[i][p];
  }
  for (std::size_t c = 0; c < 3; ++c) {
    for (double& v : centroid[c]) v /= count[c];
  }
  int right = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 3; ++c) {
      double dist = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        const double diff = d.test.images[i][p] - centroid[static_cast<std::size_t>(c)][p];
        dist += diff * diff;
      }
      if (dist < best_d) best_d = dist, best = c;
    }
    right += best == d.test.labels[i];
  }
  CHECK(right >= 90);
}

TEST_CASE("dataset validation") {
  auto d = byte_dataset(3, Shape{1, 2, 2}, 2, 4);
  d.validate();
  d.labels.push_back(0);
  CHECK_THROWS_AS(d.validate(), InvalidInput);
  d.labels.pop_back();
  d.labels[0] = 2;
  CHECK_THROWS_AS(d.validate(), InvalidInput);
  d.labels[0] = 0;
  d.images[1] = ImageTensor(Shape{1, 3, 2});
  CHECK_THROWS_AS(d.validate(), InvalidInput);
}

}  // TEST_SUITE

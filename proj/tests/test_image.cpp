#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tmevo;

namespace {

long brute_l0(const Image& a, const Image& b) {
  long n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      bool differs = false;
      for (int c = 0; c < a.channels(); ++c) differs = differs || a(x, y, c) != b(x, y, c);
      n += differs;
    }
  }
  return n;
}

double brute_l2(const Image& a, const Image& b) {
  double s = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c) s += (a(x, y, c) - b(x, y, c)) * (a(x, y, c) - b(x, y, c));
  return std::sqrt(s);
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "tmevo_test_image";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("diff mask and norms on trivial inputs") {
  std::mt19937_64 rng(1);
  const Image a = test::random_image(8, 8, 3, rng);
  CHECK(diff_mask(a, a).none());
  CHECK(l0_norm(a, a) == 0);
  CHECK(l2_norm(a, a) == 0.0);

  Eigen::Array<double, 1, Eigen::Dynamic> px = a.pixels().row(a.index(3, 2));
  px(1) = px(1) > 0.5 ? 0.0 : 1.0;
  const Image one = a.with_pixel(3, 2, px);
  CHECK(diff_mask(a, one).count() == 1);
  CHECK(diff_mask(a, one).at(3, 2));

  px(2) = px(2) > 0.5 ? 0.0 : 1.0;
  CHECK(l0_norm(a, a.with_pixel(3, 2, px)) == 1);  // pixels, not channels

  const Image gray(4, 4, 3, 0.5);
  Eigen::Array<double, 1, Eigen::Dynamic> g = gray.pixels().row(0);
  g(0) = 1.0;
  CHECK(l2_norm(gray, gray.with_pixel(0, 0, g)) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("norms match brute force on random pairs") {
  std::mt19937_64 rng(42);
  std::bernoulli_distribution keep(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    const Image a = test::random_image(8, 8, 3, rng);
    Image b = test::random_image(8, 8, 3, rng);
    // keep some pixels identical so l0 is not trivially 64
    PixelArray<double> raw = b.pixels();
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      if (keep(rng)) raw.row(i) = a.pixels().row(i);
    b = Image(8, 8, raw);

    CHECK(l0_norm(a, b) == brute_l0(a, b));
    CHECK(l0_norm(a, b) == l0_norm(b, a));
    const double ref = brute_l2(a, b);
    CHECK(std::abs(l2_norm(a, b) - ref) <= 1e-9 * std::max(ref, 1e-300));
    const PixelMask m = diff_mask(a, b);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        bool differs = false;
        for (int c = 0; c < 3; ++c) differs = differs || a(x, y, c) != b(x, y, c);
        CHECK(m.at(x, y) == differs);
      }
  }
}

TEST_CASE("shape mismatch is a caller error") {
  const Image a(4, 4, 3), b(4, 5, 3), c(4, 4, 1);
  CHECK_THROWS_AS(diff_mask(a, b), DimensionMismatch);
  CHECK_THROWS_AS(l0_norm(a, c), DimensionMismatch);
  CHECK_THROWS_AS(l2_norm(a, b), DimensionMismatch);
}

TEST_CASE("clamp_image") {
  PixelArray<double> raw(1, 3);
  raw << 1.3, -0.2, 0.47;
  const Image img = clamp_image(1, 1, raw);
  CHECK(img(0, 0, 0) == 1.0);
  CHECK(img(0, 0, 1) == 0.0);
  CHECK(img(0, 0, 2) == 0.47);
  CHECK(clamp_image(1, 1, img.pixels()) == img);
}

TEST_CASE("8-bit conversion") {
  const std::vector<std::uint8_t> bytes{255, 128, 0};
  const Image img = from_bytes(1, 1, 3, bytes);
  CHECK(img(0, 0, 0) == 1.0);
  CHECK(img(0, 0, 1) == 128.0 / 255.0);
  CHECK(img(0, 0, 2) == 0.0);
  CHECK(to_bytes(img) == bytes);
}

TEST_CASE("PNG and PPM round trips are lossless") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<std::uint8_t> bytes(9 * 7 * 3);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(byte(rng));
  const Image img = from_bytes(9, 7, 3, bytes);
  const auto dir = temp_dir();

  for (const char* name : {"rt.png", "rt.ppm"}) {
    save_image(img, dir / name);
    const Image back = load_image(dir / name);
    CHECK(back == img);
    CHECK(to_bytes(back) == bytes);
  }

  // file bytes are stable across a save/load/save cycle
  save_image(load_image(dir / "rt.png"), dir / "rt2.png");
  std::ifstream f1(dir / "rt.png", std::ios::binary), f2(dir / "rt2.png", std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  CHECK(decode_png(encode_png(img)) == img);
}

TEST_CASE("grayscale PNG loads") {
  const Image g = from_bytes(2, 2, 1, std::vector<std::uint8_t>{0, 64, 128, 255});
  const auto path = temp_dir() / "gray.png";
  save_image(g, path);
  CHECK(load_image(path) == g);
}

TEST_CASE("unreadable inputs raise ImageIoError") {
  const auto dir = temp_dir();
  CHECK_THROWS_AS(load_image(dir / "missing.png"), ImageIoError);
  std::ofstream(dir / "junk.png") << "not a png";
  CHECK_THROWS_AS(load_image(dir / "junk.png"), ImageIoError);
  CHECK_THROWS_AS(save_image(Image(2, 2, 3), dir / "out.jpg"), ImageIoError);
}

TEST_CASE("boxes and masks") {
  const BoundingBox a{0, 0, 4, 4}, b{2, 0, 6, 4};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, b) == doctest::Approx(8.0 / 24.0));
  CHECK(iou(a, BoundingBox{10, 10, 12, 12}) == 0.0);

  const std::vector<BoundingBox> boxes{a, b};
  const PixelMask m = box_union_mask(8, 8, boxes);
  CHECK(m.count() == 24);
  const std::vector<BoundingBox> same{a, a};
  CHECK(box_union_mask(8, 8, same).count() == 16);
}

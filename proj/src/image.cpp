#include "tmevo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace tmevo {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

PixelMask box_union_mask(int height, int width, std::span<const BoundingBox> boxes) {
  PixelMask mask(height, width);
  for (const auto& box : boxes) {
    const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)));
    const int y1 = std::min(height, static_cast<int>(std::ceil(box.y_max)));
    const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(box.x_max)));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        if (box.covers(x, y)) mask.set(Eigen::Index(y) * width + x);
      }
    }
  }
  return mask;
}

double mean_abs_diff(const Image& a, const Image& b, const BoundingBox& box) {
  require_same_shape(a, b);
  double sum = 0;
  Eigen::Index values = 0;
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)));
  const int y1 = std::min(a.height(), static_cast<int>(std::ceil(box.y_max)));
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)));
  const int x1 = std::min(a.width(), static_cast<int>(std::ceil(box.x_max)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (!box.covers(x, y)) continue;
      const auto i = a.index(x, y);
      sum += (a.pixels().row(i) - b.pixels().row(i)).abs().sum();
      values += a.channels();
    }
  }
  return values > 0 ? sum / static_cast<double>(values) : 0.0;
}

std::vector<std::uint8_t> to_bytes(const Image& image) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.pixels().size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < image.channels(); ++c) {
      out[k++] = static_cast<std::uint8_t>(std::lround(image.pixels()(i, c) * 255.0));
    }
  }
  return out;
}

Image from_bytes(int height, int width, int channels, std::span<const std::uint8_t> bytes) {
  if (bytes.size() != std::size_t(height) * width * channels) throw DimensionMismatch("byte buffer size does not match dimensions");
  PixelArray<double> raw(Eigen::Index(height) * width, channels);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (int c = 0; c < channels; ++c) raw(i, c) = bytes[k++] / 255.0;
  }
  return Image(height, width, std::move(raw));
}

namespace {

struct PngReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

void png_error_throw(png_structp, png_const_charp msg) { throw ImageIoError(std::string("png: ") + msg); }
void png_warning_ignore(png_structp, png_const_charp) {}

void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
  auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + len > cursor->data.size()) png_error(png, "unexpected end of data");
  std::memcpy(out, cursor->data.data() + cursor->offset, len);
  cursor->offset += len;
}

void png_write_to_vector(png_structp png, png_bytep in, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + len);
}

void png_flush_noop(png_structp) {}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError("write failed for " + path.string());
}

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    std::string tok;
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  if (next_token() != "P6") throw ImageIoError("unsupported PPM variant (only P6)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ImageIoError("malformed PPM header");
  }
  if (maxval != 255) throw ImageIoError("only 8-bit PPM supported");
  ++pos;  // single whitespace after maxval
  const std::size_t need = std::size_t(width) * height * 3;
  if (width <= 0 || height <= 0 || pos + need > bytes.size()) throw ImageIoError("truncated PPM data");
  return from_bytes(height, width, 3, bytes.subspan(pos, need));
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw ImageIoError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw ImageIoError("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  PngReadCursor cursor{bytes, 0};
  png_set_read_fn(png, &cursor, png_read_from_span);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> data(stride * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  if (stride != std::size_t(width) * channels) throw ImageIoError("unexpected PNG row layout");
  return from_bytes(height, width, channels, data);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  int color_type = 0;
  switch (image.channels()) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    default: throw ImageIoError("PNG output supports 1 or 3 channels");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw ImageIoError("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  std::vector<std::uint8_t> out;
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, image.width(), image.height(), 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> bytes = to_bytes(image);
  const std::size_t stride = std::size_t(image.width()) * image.channels();
  for (int y = 0; y < image.height(); ++y) png_write_row(png, bytes.data() + y * stride);
  png_write_end(png, nullptr);
  return out;
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw ImageIoError("unsupported image format: " + path.string());
}

void save_image(const Image& image, const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    write_file(path, encode_png(image));
  } else if (ext == ".ppm") {
    if (image.channels() != 3) throw ImageIoError("PPM output requires 3 channels");
    std::ostringstream header;
    header << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
    const std::string h = header.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    const auto body = to_bytes(image);
    out.insert(out.end(), body.begin(), body.end());
    write_file(path, out);
  } else {
    throw ImageIoError("unsupported output format: " + path.string());
  }
}

}  // namespace tmevo

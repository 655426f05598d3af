#include "ssit/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ssit {

namespace {

[[noreturn]] void parse_fail(const std::string& msg) {
  throw std::runtime_error("ppm parse error: " + msg);
}

struct ByteCursor {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  int comments_seen = 0;

  bool eof() const { return pos >= bytes.size(); }
  uint8_t peek() const { return bytes[pos]; }

  void skip_space_and_comments() {
    bool progressed = true;
    while (progressed && !eof()) {
      progressed = false;
      while (!eof() && std::isspace(peek())) {
        ++pos;
        progressed = true;
      }
      if (!eof() && peek() == '#') {
        if (++comments_seen > 1) parse_fail("more than one comment line in header");
        while (!eof() && peek() != '\n') ++pos;
        progressed = true;
      }
    }
  }

  int64_t read_int(const char* what) {
    skip_space_and_comments();
    if (eof() || !std::isdigit(peek())) parse_fail(std::string("expected ") + what);
    int64_t v = 0;
    while (!eof() && std::isdigit(peek())) {
      v = v * 10 + (peek() - '0');
      if (v > (int64_t(1) << 30)) parse_fail(std::string(what) + " out of range");
      ++pos;
    }
    return v;
  }
};

}  // namespace

ImageFile decode_ppm(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    parse_fail("missing P6 magic");
  ByteCursor cur{bytes, 2};
  const int64_t w = cur.read_int("width");
  const int64_t h = cur.read_int("height");
  const int64_t maxval = cur.read_int("maxval");
  if (w < 1 || h < 1) parse_fail("non-positive dimensions");
  if (maxval != 255)
    parse_fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (cur.eof() || !std::isspace(cur.peek()))
    parse_fail("missing whitespace before payload");
  ++cur.pos;  // exactly one whitespace byte separates header and payload
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (bytes.size() - cur.pos < need)
    parse_fail("truncated payload: need " + std::to_string(need) + " bytes, have " +
               std::to_string(bytes.size() - cur.pos));
  ImageFile img;
  img.width = w;
  img.height = h;
  img.pixels.assign(bytes.begin() + cur.pos, bytes.begin() + cur.pos + need);
  return img;
}

ImageFile read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image file: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_ppm(const ImageFile& img, const std::filesystem::path& path,
               const std::string& comment) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write image file: " + path.string());
  f << "P6\n";
  if (!comment.empty()) f << "# " << comment << "\n";
  f << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw std::runtime_error("short write to " + path.string());
}

ImageFile resize_bilinear(const ImageFile& img, int64_t out_w, int64_t out_h) {
  if (img.width == out_w && img.height == out_h) return img;
  ImageFile out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.resize(out_w * out_h * 3);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int64_t y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(img.height - 1));
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int64_t x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(img.width - 1));
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double p00 = img.pixels[(y0 * img.width + x0) * 3 + c];
        const double p01 = img.pixels[(y0 * img.width + x1) * 3 + c];
        const double p10 = img.pixels[(y1 * img.width + x0) * 3 + c];
        const double p11 = img.pixels[(y1 * img.width + x1) * 3 + c];
        const double top = p00 + (p01 - p00) * wx;
        const double bot = p10 + (p11 - p10) * wx;
        const double v = top + (bot - top) * wy;
        out.pixels[(y * out_w + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(std::min(std::max(v, 0.0), 255.0)));
      }
    }
  }
  return out;
}

Tensor tensor_from_image(Graph& g, const ImageFile& img) {
  const int64_t n = img.width * img.height;
  std::vector<float> data(3 * n);
  for (int64_t p = 0; p < n; ++p)
    for (int c = 0; c < 3; ++c)
      data[c * n + p] = static_cast<float>(img.pixels[p * 3 + c] / 127.5 - 1.0);
  return g.leaf({1, 3, img.height, img.width}, std::move(data), false);
}

ImageFile image_from_tensor(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 3)
    throw std::invalid_argument("save_image: expected a 1 x 3 x H x W tensor, got " +
                                shape_str(s));
  ImageFile img;
  img.height = s[2];
  img.width = s[3];
  const int64_t n = img.width * img.height;
  img.pixels.resize(3 * n);
  auto v = t.values();
  for (int64_t p = 0; p < n; ++p)
    for (int c = 0; c < 3; ++c) {
      float x = v[c * n + p];
      x = std::min(1.0f, std::max(-1.0f, x));
      img.pixels[p * 3 + c] =
          static_cast<uint8_t>(std::lround((x + 1.0f) * 127.5));
    }
  return img;
}

Tensor load_image(Graph& g, const std::filesystem::path& path, int target_size) {
  ImageFile img = read_ppm(path);
  if (target_size == 0) {
    if (img.width != img.height)
      throw std::runtime_error(path.string() + ": non-square image " +
                               std::to_string(img.width) + "x" +
                               std::to_string(img.height) +
                               " requires an explicit target size");
  } else {
    img = resize_bilinear(img, target_size, target_size);
  }
  return tensor_from_image(g, img);
}

void save_image(const Tensor& image, const std::filesystem::path& path,
                const std::string& comment) {
  write_ppm(image_from_tensor(image), path, comment);
}

}  // namespace ssit

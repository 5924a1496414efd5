#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "imgproc.hpp"

namespace zerospeed {

namespace detail {

inline void skip_pgm_whitespace(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pgm_int(std::istream& in, const std::filesystem::path& path) {
  skip_pgm_whitespace(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw InputError("malformed PGM header: " + path.string());
  return v;
}

}  // namespace detail

// Binary PGM (P5), maxval 255.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open frame: " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw InputError("not a binary PGM (P5): " + path.string());
  const int w = detail::read_pgm_int(in, path);
  const int h = detail::read_pgm_int(in, path);
  const int maxval = detail::read_pgm_int(in, path);
  if (maxval != 255) throw InputError("PGM maxval must be 255: " + path.string());
  if (w < 1 || h < 1) throw InputError("PGM has zero size: " + path.string());
  in.get();  // single whitespace before the raster
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw InputError("truncated PGM raster: " + path.string());
  }
  return GrayImage(w, h, std::move(data));
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write: " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

// 8-bit PNG. Colour images are converted with to_grayscale so PNG and PGM
// inputs share one luma definition.
inline GrayImage read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw InputError("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int w = static_cast<int>(png.width);
  const int h = static_cast<int>(png.height);
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw InputError("cannot decode PNG " + path.string() + ": " + msg);
  }
  if (color) return to_grayscale(RgbImage(w, h, std::move(buf)));
  return GrayImage(w, h, std::move(buf));
}

template <int Channels>
void write_png(const std::filesystem::path& path, const Image<std::uint8_t, Channels>& img) {
  static_assert(Channels == 1 || Channels == 3);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = Channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.data(), 0, nullptr)) {
    throw InputError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

inline GrayImage read_frame(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".png") return read_png(path);
  throw InputError("unsupported frame format: " + path.string());
}

}  // namespace zerospeed

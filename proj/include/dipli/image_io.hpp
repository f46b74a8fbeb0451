#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "dipli/error.hpp"
#include "dipli/image.hpp"

namespace dipli {

enum class ImageFormat { Auto, Pgm, Pgm16, Pfm, Png, Png16 };

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), n);
  require(f.good(), ErrorCode::IoFailure, "cannot read " + path);
  return bytes;
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
}

// Cursor over a PNM/PFM header; errors carry the byte offset they refer to.
struct ByteCursor {
  const std::vector<unsigned char>& bytes;
  size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }
  unsigned char peek() const { return bytes[pos]; }

  void skip_pnm_space() {
    while (!eof()) {
      const unsigned char c = bytes[pos];
      if (c == '#') {
        while (!eof() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  // Unsigned decimal token.
  long parse_uint(const char* what) {
    skip_pnm_space();
    require(!eof(), ErrorCode::CorruptHeader,
            std::string("missing ") + what + " at byte offset " +
                std::to_string(pos));
    require(bytes[pos] >= '0' && bytes[pos] <= '9', ErrorCode::CorruptHeader,
            std::string("bad ") + what + " at byte offset " +
                std::to_string(pos));
    long v = 0;
    while (!eof() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      require(v <= (1L << 40), ErrorCode::CorruptHeader,
              std::string("overflow in ") + what + " at byte offset " +
                  std::to_string(pos));
      ++pos;
    }
    return v;
  }

  double parse_double(const char* what) {
    skip_pnm_space();
    require(!eof(), ErrorCode::CorruptHeader,
            std::string("missing ") + what + " at byte offset " +
                std::to_string(pos));
    const char* begin = reinterpret_cast<const char*>(bytes.data()) + pos;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    require(end != begin, ErrorCode::CorruptHeader,
            std::string("bad ") + what + " at byte offset " +
                std::to_string(pos));
    pos += static_cast<size_t>(end - begin);
    return v;
  }
};

inline Image read_pgm(const std::vector<unsigned char>& bytes,
                      const std::string& path) {
  ByteCursor cur{bytes, 2};  // past "P5"
  const long w = cur.parse_uint("width");
  const long h = cur.parse_uint("height");
  const long maxval = cur.parse_uint("maxval");
  require(w >= 1 && h >= 1, ErrorCode::CorruptHeader,
          "non-positive dimensions in " + path + " at byte offset " +
              std::to_string(cur.pos));
  require(maxval >= 1 && maxval <= 65535, ErrorCode::CorruptHeader,
          "maxval out of range in " + path + " at byte offset " +
              std::to_string(cur.pos));
  // Exactly one whitespace byte separates the header from the raster.
  require(!cur.eof(), ErrorCode::TruncatedData,
          "no raster data in " + path + " at byte offset " +
              std::to_string(cur.pos));
  ++cur.pos;

  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  const size_t need = static_cast<size_t>(w) * h * bytes_per_sample;
  require(bytes.size() - cur.pos >= need, ErrorCode::TruncatedData,
          path + " ends at byte offset " + std::to_string(bytes.size()) +
              ", expected " + std::to_string(cur.pos + need) + " bytes");

  Image img(1, static_cast<int>(h), static_cast<int>(w));
  const double scale = 1.0 / static_cast<double>(maxval);
  const unsigned char* p = bytes.data() + cur.pos;
  if (bytes_per_sample == 1) {
    for (size_t i = 0; i < img.size(); ++i) img.data[i] = p[i] * scale;
  } else {
    for (size_t i = 0; i < img.size(); ++i) {
      const unsigned v = (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
      img.data[i] = v * scale;
    }
  }
  return img;
}

inline float swap_float_endianness(float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  u = __builtin_bswap32(u);
  std::memcpy(&v, &u, 4);
  return v;
}

inline Image read_pfm(const std::vector<unsigned char>& bytes,
                      const std::string& path) {
  const bool color = bytes[1] == 'F';
  ByteCursor cur{bytes, 2};
  const long w = cur.parse_uint("width");
  const long h = cur.parse_uint("height");
  const double scale = cur.parse_double("scale");
  require(w >= 1 && h >= 1, ErrorCode::CorruptHeader,
          "non-positive dimensions in " + path + " at byte offset " +
              std::to_string(cur.pos));
  require(scale != 0.0, ErrorCode::CorruptHeader,
          "zero scale in " + path + " at byte offset " +
              std::to_string(cur.pos));
  require(!cur.eof(), ErrorCode::TruncatedData,
          "no raster data in " + path + " at byte offset " +
              std::to_string(cur.pos));
  ++cur.pos;  // single whitespace after the scale line

  const int channels = color ? 3 : 1;
  const size_t need = static_cast<size_t>(w) * h * channels * 4;
  require(bytes.size() - cur.pos >= need, ErrorCode::TruncatedData,
          path + " ends at byte offset " + std::to_string(bytes.size()) +
              ", expected " + std::to_string(cur.pos + need) + " bytes");

  const bool file_little = scale < 0.0;
  const bool host_little = std::endian::native == std::endian::little;
  const bool swap = file_little != host_little;

  Image img(channels, static_cast<int>(h), static_cast<int>(w));
  const unsigned char* p = bytes.data() + cur.pos;
  // PFM stores rows bottom-to-top, samples interleaved for color.
  for (long row = 0; row < h; ++row) {
    const long y = h - 1 - row;
    for (long x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, p, 4);
        p += 4;
        if (swap) v = swap_float_endianness(v);
        img.at(c, static_cast<int>(y), static_cast<int>(x)) = v;
      }
    }
  }
  return img;
}

struct PngReadCtx {
  const unsigned char* data;
  size_t size;
  size_t pos;
};

inline void png_read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + n > ctx->size) {
    png_error(png, "truncated");
  }
  std::memcpy(out, ctx->data + ctx->pos, n);
  ctx->pos += n;
}

inline Image read_png(const std::vector<unsigned char>& bytes,
                      const std::string& path) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoFailure, "png_create_read_struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::IoFailure, "png_create_info_struct");
  }
  PngReadCtx ctx{bytes.data(), bytes.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    const size_t at = ctx.pos;
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::TruncatedData,
         "png decode failed in " + path + " near byte offset " +
             std::to_string(at));
  }
  png_set_read_fn(png, &ctx, png_read_fn);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // wire format is big-endian
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  require(channels == 1 || channels == 3, ErrorCode::UnknownFormat,
          "unsupported png channel count in " + path);

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raster(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(channels, static_cast<int>(h), static_cast<int>(w));
  const double scale = bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (png_uint_32 y = 0; y < h; ++y) {
    const unsigned char* row = raster.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        double v;
        if (bit_depth == 16) {
          const uint16_t* row16 = reinterpret_cast<const uint16_t*>(row);
          v = row16[x * channels + c] * scale;
        } else {
          v = row[x * channels + c] * scale;
        }
        img.at(c, static_cast<int>(y), static_cast<int>(x)) = v;
      }
    }
  }
  return img;
}

}  // namespace detail

inline Image read_image(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  static const unsigned char png_sig[4] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
    return detail::read_pgm(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' &&
      (bytes[1] == 'f' || bytes[1] == 'F'))
    return detail::read_pfm(bytes, path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), png_sig, 4) == 0)
    return detail::read_png(bytes, path);
  fail(ErrorCode::UnknownFormat,
       "unrecognized magic in " + path + " at byte offset 0");
}

namespace detail {

inline long quantize(double v, long maxval) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return std::lround(clamped * static_cast<double>(maxval));
}

inline void write_pgm(const Image& img, const std::string& path, long maxval) {
  Image gray = luminance(img);
  std::string header = "P5\n" + std::to_string(gray.width) + " " +
                       std::to_string(gray.height) + "\n" +
                       std::to_string(maxval) + "\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  if (maxval <= 255) {
    for (double v : gray.data)
      bytes.push_back(static_cast<unsigned char>(quantize(v, maxval)));
  } else {
    for (double v : gray.data) {
      const long q = quantize(v, maxval);
      bytes.push_back(static_cast<unsigned char>(q >> 8));
      bytes.push_back(static_cast<unsigned char>(q & 0xff));
    }
  }
  write_file_bytes(path, bytes);
}

inline void write_pfm(const Image& img, const std::string& path) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::IoFailure,
          "pfm supports 1 or 3 channels");
  const bool host_little = std::endian::native == std::endian::little;
  std::string header = std::string(img.channels == 3 ? "PF" : "Pf") + "\n" +
                       std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n" +
                       (host_little ? "-1.0" : "1.0") + "\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.size() * 4);
  for (int row = 0; row < img.height; ++row) {
    const int y = img.height - 1 - row;
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float v = static_cast<float>(img.at(c, y, x));
        unsigned char buf[4];
        std::memcpy(buf, &v, 4);
        bytes.insert(bytes.end(), buf, buf + 4);
      }
    }
  }
  write_file_bytes(path, bytes);
}

struct PngWriteCtx {
  std::vector<unsigned char>* out;
};

inline void png_write_fn(png_structp png, png_bytep data, png_size_t n) {
  auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
  ctx->out->insert(ctx->out->end(), data, data + n);
}

inline void png_flush_fn(png_structp) {}

inline void write_png(const Image& img, const std::string& path,
                      int bit_depth) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::IoFailure,
          "png supports 1 or 3 channels");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoFailure, "png_create_write_struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::IoFailure, "png_create_info_struct");
  }
  std::vector<unsigned char> out;
  PngWriteCtx ctx{&out};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoFailure, "png encode failed for " + path);
  }
  png_set_write_fn(png, &ctx, png_write_fn, png_flush_fn);
  png_set_IHDR(png, info, img.width, img.height, bit_depth,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const long maxval = bit_depth == 16 ? 65535 : 255;
  const size_t sample_bytes = bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> row(img.width * img.channels * sample_bytes);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const long q = quantize(img.at(c, y, x), maxval);
        const size_t i = (static_cast<size_t>(x) * img.channels + c);
        if (bit_depth == 16) {
          reinterpret_cast<uint16_t*>(row.data())[i] =
              static_cast<uint16_t>(q);
        } else {
          row[i] = static_cast<unsigned char>(q);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  write_file_bytes(path, out);
}

inline ImageFormat format_from_extension(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".pgm") return ImageFormat::Pgm;
  if (ext == ".pfm") return ImageFormat::Pfm;
  if (ext == ".png") return ImageFormat::Png;
  fail(ErrorCode::IoFailure, "cannot infer format from extension of " + path);
}

}  // namespace detail

inline void write_image(const Image& img, const std::string& path,
                        ImageFormat format = ImageFormat::Auto) {
  if (format == ImageFormat::Auto) format = detail::format_from_extension(path);
  switch (format) {
    case ImageFormat::Pgm: detail::write_pgm(img, path, 255); break;
    case ImageFormat::Pgm16: detail::write_pgm(img, path, 65535); break;
    case ImageFormat::Pfm: detail::write_pfm(img, path); break;
    case ImageFormat::Png: detail::write_png(img, path, 8); break;
    case ImageFormat::Png16: detail::write_png(img, path, 16); break;
    case ImageFormat::Auto: break;
  }
}

}  // namespace dipli

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/image.hpp"

namespace msreg {

/// Decoded raster with one GrayImage per band, raw sample values.
struct Raster {
  std::vector<GrayImage> bands;

  int band_count() const noexcept { return static_cast<int>(bands.size()); }
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());
  return bytes;
}

// ---------------------------------------------------------------- PGM

inline Raster decode_pgm(std::span<const std::uint8_t> bytes, const std::string& name) {
  std::size_t pos = 2;
  const bool ascii = bytes[1] == '2';

  auto skip_ws_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> long {
    skip_ws_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw Error(ErrorCode::UnsupportedFormat, "malformed PGM header in " + name);
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };

  const long w = read_uint();
  const long h = read_uint();
  const long maxval = read_uint();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw Error(ErrorCode::UnsupportedFormat, "bad PGM dimensions or maxval in " + name);
  }
  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  auto dst = img.data();
  if (ascii) {
    for (auto& v : dst) v = static_cast<double>(read_uint());
  } else {
    ++pos;  // single whitespace after maxval
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (pos + dst.size() * bps > bytes.size()) {
      throw Error(ErrorCode::IoFailure, "truncated PGM raster in " + name);
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = bps == 1 ? bytes[pos + i]
                        : static_cast<double>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    }
  }
  Raster r;
  r.bands.push_back(std::move(img));
  return r;
}

// ---------------------------------------------------------------- PNG

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

inline void png_read_from_span(png_structp png, png_bytep out, png_size_t count) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + count > st->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, st->bytes.data() + st->pos, count);
  st->pos += count;
}

inline Raster decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error(ErrorCode::IoFailure, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::IoFailure, "libpng init failed");
  }

  PngReadState state{bytes, 0};
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int depth = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoFailure, "PNG decode failed for " + name);
  }
  png_set_read_fn(png, &state, png_read_from_span);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);

  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Raster r;
  for (int c = 0; c < channels; ++c) {
    r.bands.emplace_back(static_cast<int>(width), static_cast<int>(height));
  }
  for (png_uint_32 y = 0; y < height; ++y) {
    const std::uint8_t* row = rows[y];
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t s = static_cast<std::size_t>(x) * channels + c;
        double v;
        if (depth == 16) {
          std::uint16_t u;
          std::memcpy(&u, row + 2 * s, 2);
          v = u;
        } else {
          v = row[s];
        }
        r.bands[static_cast<std::size_t>(c)].at(static_cast<int>(x), static_cast<int>(y)) = v;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------- TIFF

class TiffReader {
 public:
  TiffReader(std::span<const std::uint8_t> bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)), little_(bytes[0] == 'I') {}

  Raster decode() {
    const std::uint32_t ifd = u32(4);
    const std::uint16_t n = u16(ifd);
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t spp = 1;
    std::uint32_t compression = 1;
    std::uint32_t planar = 1;
    std::uint32_t rows_per_strip = 0xffffffffu;
    std::vector<std::uint32_t> bits{1};
    std::vector<std::uint32_t> formats{1};
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> counts;
    bool tiled = false;

    for (std::uint16_t i = 0; i < n; ++i) {
      const std::size_t e = ifd + 2 + 12u * i;
      const std::uint16_t tag = u16(e);
      switch (tag) {
        case 256: width = values(e)[0]; break;
        case 257: height = values(e)[0]; break;
        case 258: bits = values(e); break;
        case 259: compression = values(e)[0]; break;
        case 273: offsets = values(e); break;
        case 277: spp = values(e)[0]; break;
        case 278: rows_per_strip = values(e)[0]; break;
        case 279: counts = values(e); break;
        case 284: planar = values(e)[0]; break;
        case 322: tiled = true; break;
        case 339: formats = values(e); break;
        default: break;
      }
    }
    if (tiled) fail_format("tiled TIFF layout is not supported");
    if (compression != 1) fail_format("only uncompressed TIFF is supported");
    if (width == 0 || height == 0 || offsets.empty()) fail_format("missing required TIFF tags");
    const std::uint32_t bps = bits[0];
    const std::uint32_t fmt = formats[0];
    if (!(bps == 8 || bps == 16 || bps == 32 || (bps == 64 && fmt == 3))) {
      fail_format("unsupported TIFF bits per sample " + std::to_string(bps));
    }
    rows_per_strip = std::min(rows_per_strip, height);
    const std::size_t bytes_per_sample = bps / 8;
    const std::size_t strips_per_plane = (height + rows_per_strip - 1) / rows_per_strip;

    Raster r;
    for (std::uint32_t c = 0; c < spp; ++c) {
      r.bands.emplace_back(static_cast<int>(width), static_cast<int>(height));
    }
    const std::size_t planes = planar == 2 ? spp : 1;
    const std::size_t samples_per_px = planar == 2 ? 1 : spp;
    for (std::size_t plane = 0; plane < planes; ++plane) {
      for (std::size_t s = 0; s < strips_per_plane; ++s) {
        const std::size_t strip = plane * strips_per_plane + s;
        if (strip >= offsets.size()) fail_io("missing TIFF strip offsets");
        std::size_t at = offsets[strip];
        const std::uint32_t y0 = static_cast<std::uint32_t>(s * rows_per_strip);
        const std::uint32_t y1 = std::min(height, y0 + rows_per_strip);
        for (std::uint32_t y = y0; y < y1; ++y) {
          for (std::uint32_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < samples_per_px; ++c) {
              const std::size_t band = planar == 2 ? plane : c;
              r.bands[band].at(static_cast<int>(x), static_cast<int>(y)) =
                  sample(at, bps, fmt);
              at += bytes_per_sample;
            }
          }
        }
      }
    }
    return r;
  }

 private:
  [[noreturn]] void fail_format(const std::string& why) const {
    throw Error(ErrorCode::UnsupportedFormat, why + " (" + name_ + ")");
  }
  [[noreturn]] void fail_io(const std::string& why) const {
    throw Error(ErrorCode::IoFailure, why + " (" + name_ + ")");
  }

  void need(std::size_t at, std::size_t len) const {
    if (at + len > bytes_.size()) fail_io("truncated TIFF");
  }

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return little_ ? static_cast<std::uint16_t>(bytes_[at] | (bytes_[at + 1] << 8))
                   : static_cast<std::uint16_t>((bytes_[at] << 8) | bytes_[at + 1]);
  }
  std::uint32_t u32(std::size_t at) const {
    need(at, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t b = bytes_[at + (little_ ? i : 3 - i)];
      v |= b << (8 * i);
    }
    return v;
  }
  std::uint64_t u64(std::size_t at) const {
    const std::uint64_t a = u32(at);
    const std::uint64_t b = u32(at + 4);
    return little_ ? (b << 32) | a : (a << 32) | b;
  }

  std::vector<std::uint32_t> values(std::size_t entry) const {
    const std::uint16_t type = u16(entry + 2);
    const std::uint32_t count = u32(entry + 4);
    const std::size_t width = type == 3 ? 2 : type == 4 ? 4 : type == 1 ? 1 : 0;
    if (width == 0) fail_format("unsupported TIFF field type " + std::to_string(type));
    const std::size_t at = count * width <= 4 ? entry + 8 : u32(entry + 8);
    std::vector<std::uint32_t> out(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t p = at + i * width;
      if (width == 1) {
        need(p, 1);
        out[i] = bytes_[p];
      } else {
        out[i] = width == 2 ? u16(p) : u32(p);
      }
    }
    if (out.empty()) fail_format("empty TIFF field");
    return out;
  }

  double sample(std::size_t at, std::uint32_t bps, std::uint32_t fmt) const {
    switch (bps) {
      case 8:
        need(at, 1);
        return fmt == 2 ? static_cast<double>(static_cast<std::int8_t>(bytes_[at]))
                        : bytes_[at];
      case 16: {
        const std::uint16_t v = u16(at);
        return fmt == 2 ? static_cast<double>(static_cast<std::int16_t>(v)) : v;
      }
      case 32: {
        const std::uint32_t v = u32(at);
        if (fmt == 3) {
          float f;
          std::memcpy(&f, &v, 4);
          return f;
        }
        return fmt == 2 ? static_cast<double>(static_cast<std::int32_t>(v)) : v;
      }
      default: {
        const std::uint64_t v = u64(at);
        double d;
        std::memcpy(&d, &v, 8);
        return d;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string name_;
  bool little_;
};

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline std::uint16_t quantize(double v, int bits) {
  const double maxv = bits == 16 ? 65535.0 : 255.0;
  return static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, static_cast<long>(maxv)));
}

}  // namespace detail

/// Decode every band of a PGM, PNG or uncompressed TIFF file.
inline Raster load_raster(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string name = path.string();
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) {
    return detail::decode_pgm(bytes, name);
  }
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    return detail::decode_png(bytes, name);
  }
  if (bytes.size() >= 8 && ((bytes[0] == 'I' && bytes[1] == 'I' && bytes[2] == 42) ||
                            (bytes[0] == 'M' && bytes[1] == 'M' && bytes[3] == 42))) {
    return detail::TiffReader(bytes, name).decode();
  }
  throw Error(ErrorCode::UnsupportedFormat, "unrecognized raster format: " + name);
}

/// One band of a raster file as raw (un-normalized) real intensities.
inline GrayImage load_image(const std::filesystem::path& path, int band_index = 0) {
  Raster r = load_raster(path);
  if (band_index < 0 || band_index >= r.band_count()) {
    throw Error(ErrorCode::BandOutOfRange, "band " + std::to_string(band_index) + " of " +
                                               std::to_string(r.band_count()) + " in " +
                                               path.string());
  }
  return std::move(r.bands[static_cast<std::size_t>(band_index)]);
}

/// Binary PGM; values are rounded and clamped to [0, maxval].
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img, int bits = 8) {
  const int maxval = bits == 16 ? 65535 : 255;
  std::ostringstream header;
  header << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (double v : img.data()) {
    const std::uint16_t q = detail::quantize(v, bits);
    if (bits == 16) out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  detail::write_bytes(path, out);
}

/// PNG with 1-4 interleaved bands, 8 or 16 bits per sample.
inline void write_png(const std::filesystem::path& path, std::span<const GrayImage> bands,
                      int bits = 8) {
  if (bands.empty() || bands.size() > 4) {
    throw Error(ErrorCode::UnsupportedFormat, "PNG supports 1 to 4 bands");
  }
  const int w = bands[0].width();
  const int h = bands[0].height();
  for (const auto& b : bands) {
    if (!b.same_shape(bands[0])) throw Error(ErrorCode::DimensionMismatch, "band shapes differ");
  }
  static constexpr int kColorTypes[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA,
                                        PNG_COLOR_TYPE_RGB, PNG_COLOR_TYPE_RGB_ALPHA};
  const int channels = static_cast<int>(bands.size());
  const std::size_t bps = bits == 16 ? 2 : 1;

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(fp, &std::fclose);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::IoFailure, "libpng init failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels * bps);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "PNG encode failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bits,
               kColorTypes[channels - 1], PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    std::size_t k = 0;
    for (int x = 0; x < w; ++x) {
      for (const auto& b : bands) {
        const std::uint16_t q = detail::quantize(b.at(x, y), bits);
        if (bps == 2) row[k++] = static_cast<std::uint8_t>(q >> 8);  // PNG is big-endian
        row[k++] = static_cast<std::uint8_t>(q & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img, int bits = 8) {
  write_png(path, std::span<const GrayImage>(&img, 1), bits);
}

/// Uncompressed little-endian TIFF, chunky layout, single strip.
inline void write_tiff(const std::filesystem::path& path, std::span<const GrayImage> bands,
                       int bits = 8) {
  if (bands.empty()) throw Error(ErrorCode::UnsupportedFormat, "TIFF needs at least one band");
  const auto w = static_cast<std::uint32_t>(bands[0].width());
  const auto h = static_cast<std::uint32_t>(bands[0].height());
  const auto spp = static_cast<std::uint16_t>(bands.size());
  const std::uint32_t bps = bits == 16 ? 2 : 1;

  std::vector<std::uint8_t> out;
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };

  const std::uint32_t pixel_bytes = w * h * spp * bps;
  const std::uint16_t n_entries = 10;
  const std::uint32_t ifd_at = 8 + pixel_bytes + (pixel_bytes & 1u);
  const std::uint32_t bits_at = ifd_at + 2 + 12u * n_entries + 4;

  out.insert(out.end(), {'I', 'I'});
  put16(42);
  put32(ifd_at);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      for (const auto& b : bands) {
        const std::uint16_t q =
            detail::quantize(b.at(static_cast<int>(x), static_cast<int>(y)), bits);
        if (bps == 2) {
          put16(q);
        } else {
          out.push_back(static_cast<std::uint8_t>(q));
        }
      }
    }
  }
  if (pixel_bytes & 1u) out.push_back(0);

  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t v) {
    put16(tag);
    put16(type);
    put32(count);
    if (type == 3 && count == 1) {
      put16(static_cast<std::uint16_t>(v));
      put16(0);
    } else {
      put32(v);
    }
  };
  put16(n_entries);
  entry(256, 4, 1, w);
  entry(257, 4, 1, h);
  if (spp == 1) {
    entry(258, 3, 1, bits);
  } else if (spp == 2) {
    put16(258);
    put16(3);
    put32(2);
    put16(static_cast<std::uint16_t>(bits));
    put16(static_cast<std::uint16_t>(bits));
  } else {
    entry(258, 3, spp, bits_at);
  }
  entry(259, 3, 1, 1);
  entry(262, 3, 1, spp >= 3 ? 2 : 1);
  entry(273, 4, 1, 8);
  entry(277, 3, 1, spp);
  entry(278, 4, 1, h);
  entry(279, 4, 1, pixel_bytes);
  entry(284, 3, 1, 1);
  put32(0);
  if (spp > 2) {
    for (std::uint16_t i = 0; i < spp; ++i) put16(static_cast<std::uint16_t>(bits));
  }
  detail::write_bytes(path, out);
}

/// Map a [0,1] image to 8-bit range for viewing.
inline GrayImage to_display(const GrayImage& img) {
  GrayImage out(img.width(), img.height());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i], 0.0, 1.0) * 255.0;
  return out;
}

}  // namespace msreg

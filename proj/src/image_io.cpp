#include "mer/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace mer {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("image I/O error [" + path + "]: " + what);
}

TensorF from_bytes(const std::vector<unsigned char>& bytes, int h, int w, int ch) {
  TensorF out(h, w, 3);
  const float inv = 1.0f / 255.0f;
  float* dst = out.data();
  const unsigned char* src = bytes.data();
  size_t n = static_cast<size_t>(h) * w;
  if (ch == 1) {
    for (size_t i = 0; i < n; ++i) {
      float v = src[i] * inv;
      dst[3 * i + 0] = v;
      dst[3 * i + 1] = v;
      dst[3 * i + 2] = v;
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      dst[3 * i + 0] = src[ch * i + 0] * inv;
      dst[3 * i + 1] = src[ch * i + 1] * inv;
      dst[3 * i + 2] = src[ch * i + 2] * inv;
    }
  }
  return out;
}

TensorF load_png(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) io_fail(path, "libpng init failed");
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(path, "corrupt PNG");
  }
  png_init_io(png, f);
  png_read_info(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(path, "unsupported bit depth (16-bit PNG)");
  }
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  int ch = png_get_channels(png, info);
  // gray+alpha becomes 2 channels; strip to gray by reading and ignoring alpha
  size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  if (ch == 2) {  // gray+alpha: repack to gray
    std::vector<unsigned char> gray(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < gray.size(); ++i) gray[i] = pixels[2 * i];
    return from_bytes(gray, h, w, 1);
  }
  return from_bytes(pixels, h, w, ch);
}

TensorF load_jpeg(FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jerr.error_exit = [](j_common_ptr ci) {
    char buf[JMSG_LENGTH_MAX];
    (*ci->err->format_message)(ci, buf);
    throw std::runtime_error(std::string("libjpeg: ") + buf);
  };
  jpeg_create_decompress(&cinfo);
  try {
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    int w = cinfo.output_width, h = cinfo.output_height, ch = cinfo.output_components;
    std::vector<unsigned char> pixels(static_cast<size_t>(w) * h * ch);
    while (cinfo.output_scanline < cinfo.output_height) {
      unsigned char* row = pixels.data() + static_cast<size_t>(cinfo.output_scanline) * w * ch;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_bytes(pixels, h, w, ch);
  } catch (const std::exception& e) {
    jpeg_destroy_decompress(&cinfo);
    io_fail(path, e.what());
  }
}

uint32_t rd_u32le(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

// Minimal BMP reader: uncompressed 8-bit palette/gray, 24-bit, and 32-bit files.
TensorF load_bmp(FILE* f, const std::string& path) {
  std::fseek(f, 0, SEEK_END);
  long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (len < 54) io_fail(path, "truncated BMP");
  std::vector<unsigned char> buf(static_cast<size_t>(len));
  if (std::fread(buf.data(), 1, buf.size(), f) != buf.size()) io_fail(path, "short read");

  uint32_t data_off = rd_u32le(&buf[10]);
  uint32_t hdr_size = rd_u32le(&buf[14]);
  if (hdr_size < 40) io_fail(path, "unsupported BMP header");
  int32_t w = static_cast<int32_t>(rd_u32le(&buf[18]));
  int32_t h_raw = static_cast<int32_t>(rd_u32le(&buf[22]));
  uint16_t bpp = static_cast<uint16_t>(buf[28] | buf[29] << 8);
  uint32_t compression = rd_u32le(&buf[30]);
  if (compression != 0) io_fail(path, "compressed BMP not supported");
  if (bpp != 8 && bpp != 24 && bpp != 32) io_fail(path, "unsupported bit depth (BMP " + std::to_string(bpp) + " bpp)");
  bool flipped = h_raw > 0;  // positive height = bottom-up row order
  int h = std::abs(h_raw);
  if (w <= 0 || h <= 0) io_fail(path, "bad BMP dimensions");

  const unsigned char* palette = buf.data() + 14 + hdr_size;
  size_t row_bytes = (static_cast<size_t>(w) * bpp / 8 + 3) & ~size_t(3);
  if (data_off + row_bytes * h > buf.size()) io_fail(path, "truncated BMP pixel data");

  TensorF out(h, w, 3);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < h; ++y) {
    const unsigned char* row = buf.data() + data_off + row_bytes * (flipped ? h - 1 - y : y);
    for (int x = 0; x < w; ++x) {
      unsigned char r, g, b;
      if (bpp == 8) {
        const unsigned char* entry = palette + 4 * row[x];
        b = entry[0], g = entry[1], r = entry[2];
      } else {
        const unsigned char* px = row + x * (bpp / 8);
        b = px[0], g = px[1], r = px[2];
      }
      out.at(y, x, 0) = r * inv;
      out.at(y, x, 1) = g * inv;
      out.at(y, x, 2) = b * inv;
    }
  }
  return out;
}

}  // namespace

TensorF load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) io_fail(path, "cannot open file");
  unsigned char magic[8] = {};
  size_t got = std::fread(magic, 1, sizeof magic, f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  if (got >= 8 && !std::memcmp(magic, "\x89PNG\r\n\x1a\n", 8)) return load_png(f.get(), path);
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg(f.get(), path);
  if (got >= 2 && magic[0] == 'B' && magic[1] == 'M') return load_bmp(f.get(), path);
  io_fail(path, "unrecognized format (want PNG/JPEG/BMP)");
}

void save_image(const TensorF& img, const std::string& path) {
  require(!img.empty(), "save_image: empty image");
  int c = img.channels();
  require(c == 1 || c == 3 || c == 4, "save_image: channels must be 1, 3 or 4");

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) io_fail(path, "cannot open file for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) io_fail(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "PNG write failed");
  }
  png_init_io(png, f.get());
  int color = c == 1 ? PNG_COLOR_TYPE_GRAY : c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, img.width(), img.height(), 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(img.width()) * c);
  for (int y = 0; y < img.height(); ++y) {
    const float* src = img.row(y);
    for (size_t i = 0; i < row.size(); ++i) {
      float v = std::min(1.0f, std::max(0.0f, src[i]));
      row[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mer

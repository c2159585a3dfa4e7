#include "cdvz/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

constexpr int kMinSide = 8;

int read_pnm_token(std::istream& in, const char* what) {
  // Skips whitespace and '#' comments, then reads one non-negative integer.
  for (;;) {
    const int c = in.peek();
    if (c == EOF) throw DataError(std::string("truncated header while reading ") + what);
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value) || value < 0) throw DataError(std::string("invalid header field: ") + what);
  return value;
}

}  // namespace

GrayImage make_image(int width, int height, double fill) {
  GrayImage img;
  img.pix = ImageArray::Constant(height, width, fill);
  return img;
}

void validate(const GrayImage& img) {
  if (img.width() < kMinSide || img.height() < kMinSide)
    throw DataError("image smaller than " + std::to_string(kMinSide) + " px per side");
  if (!img.pix.isFinite().all() || (img.pix < 0.0).any() || (img.pix > 1.0).any())
    throw DataError("image values must be finite and in [0, 1]");
}

GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file: " + path.string());

  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw DataError("unsupported image format (expected binary PGM/PPM): " + path.string());
  const bool color = (m1 == '6');

  const int width = read_pnm_token(in, "width");
  const int height = read_pnm_token(in, "height");
  const int maxval = read_pnm_token(in, "maxval");
  if (maxval != 255) throw DataError("only maxval 255 is supported: " + path.string());
  if (width < kMinSide || height < kMinSide)
    throw DataError("image smaller than 8 px per side: " + path.string());
  in.get();  // single whitespace before the raster

  const std::size_t channels = color ? 3 : 1;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw DataError("truncated raster data: " + path.string());

  GrayImage img = make_image(width, height);
  const double inv = 1.0 / 255.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels;
      if (color) {
        img.pix(y, x) = (0.299 * raw[i] + 0.587 * raw[i + 1] + 0.114 * raw[i + 2]) * inv;
      } else {
        img.pix(y, x) = raw[i] * inv;
      }
    }
  }
  validate(img);
  return img;
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image file: " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.width()) * img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      raw[static_cast<std::size_t>(y) * img.width() + x] =
          static_cast<std::uint8_t>(std::lround(img.pix(y, x) * 255.0));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

GrayImage rescale_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw DataError("rescale target must be positive");
  const double sx = static_cast<double>(img.width()) / out_w;
  const double sy = static_cast<double>(img.height()) / out_h;
  GrayImage out = make_image(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    double src_y = (y + 0.5) * sy - 0.5;
    src_y = std::min(std::max(src_y, 0.0), static_cast<double>(img.height() - 1));
    const int y0 = static_cast<int>(src_y);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = src_y - y0;
    for (int x = 0; x < out_w; ++x) {
      double src_x = (x + 0.5) * sx - 0.5;
      src_x = std::min(std::max(src_x, 0.0), static_cast<double>(img.width() - 1));
      const int x0 = static_cast<int>(src_x);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = src_x - x0;
      out.pix(y, x) = (1.0 - fy) * ((1.0 - fx) * img.pix(y0, x0) + fx * img.pix(y0, x1)) +
                      fy * ((1.0 - fx) * img.pix(y1, x0) + fx * img.pix(y1, x1));
    }
  }
  return out;
}

GrayImage resize_max_side(const GrayImage& img, int limit) {
  if (limit < kMinSide) throw DataError("max-side limit must be at least 8");
  const int longer = std::max(img.width(), img.height());
  if (longer <= limit) return img;
  const double scale = static_cast<double>(limit) / longer;
  int out_w, out_h;
  if (img.width() >= img.height()) {
    out_w = limit;
    out_h = std::max(kMinSide, static_cast<int>(std::lround(img.height() * scale)));
  } else {
    out_h = limit;
    out_w = std::max(kMinSide, static_cast<int>(std::lround(img.width() * scale)));
  }
  return rescale_bilinear(img, out_w, out_h);
}

ImageArray downsample_half(const ImageArray& img) {
  if (img.cols() < 16 || img.rows() < 16) throw DataError("image too small to downsample");
  const int out_w = static_cast<int>(img.cols()) / 2;
  const int out_h = static_cast<int>(img.rows()) / 2;
  ImageArray out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) out(y, x) = img(2 * y, 2 * x);
  return out;
}

GrayImage downsample_half(const GrayImage& img) {
  GrayImage out;
  out.pix = downsample_half(img.pix);
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw DataError("gaussian sigma must be positive");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int j = -r; j <= r; ++j) {
    const double v = std::exp(-(static_cast<double>(j) * j) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(j + r)] = v;
    sum += v;
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

ImageArray gaussian_blur(const ImageArray& img, double sigma, const Engine& eng) {
  const auto taps = gaussian_kernel(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());

  ImageArray tmp(h, w);
  const TileGrid grid = make_tile_grid(w, h, eng.tile_size, r);
  tile_for(grid, [&](const Tile& t) {
    TileView view(img, t, grid.halo);
    for (int y = t.y0; y < t.y0 + t.h; ++y) {
      for (int x = t.x0; x < t.x0 + t.w; ++x) {
        double acc = 0.0;
        for (int j = -r; j <= r; ++j)
          acc += taps[static_cast<std::size_t>(j + r)] *
                 view(y, static_cast<int>(mirror_index(x + j, w)));
        tmp(y, x) = acc;
      }
    }
  }, eng);

  ImageArray out(h, w);
  tile_for(grid, [&](const Tile& t) {
    TileView view(tmp, t, grid.halo);
    for (int y = t.y0; y < t.y0 + t.h; ++y) {
      for (int x = t.x0; x < t.x0 + t.w; ++x) {
        double acc = 0.0;
        for (int j = -r; j <= r; ++j)
          acc += taps[static_cast<std::size_t>(j + r)] *
                 view(static_cast<int>(mirror_index(y + j, h)), x);
        out(y, x) = acc;
      }
    }
  }, eng);
  return out;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma, const Engine& eng) {
  GrayImage out;
  out.pix = gaussian_blur(img.pix, sigma, eng);
  return out;
}

ImageArray laplacian_3x3(const ImageArray& img, const Engine& eng) {
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());
  ImageArray out(h, w);
  const TileGrid grid = make_tile_grid(w, h, eng.tile_size, 1);
  tile_for(grid, [&](const Tile& t) {
    TileView view(img, t, grid.halo);
    for (int y = t.y0; y < t.y0 + t.h; ++y) {
      const int ym = static_cast<int>(mirror_index(y - 1, h));
      const int yp = static_cast<int>(mirror_index(y + 1, h));
      for (int x = t.x0; x < t.x0 + t.w; ++x) {
        const int xm = static_cast<int>(mirror_index(x - 1, w));
        const int xp = static_cast<int>(mirror_index(x + 1, w));
        out(y, x) = view(ym, x) + view(yp, x) + view(y, xm) + view(y, xp) - 4.0 * view(y, x);
      }
    }
  }, eng);
  return out;
}

}  // namespace cdvz

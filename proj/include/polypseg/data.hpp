#pragma once
// Synthetic polyp-like samples, PNM image I/O, resizing, augmentation and
// dataset splitting.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "polypseg/conv.hpp"
#include "polypseg/layers.hpp"

namespace polypseg {

/// Planar float image, values nominally in [0, 1].
struct Image {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const noexcept { return height * width; }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

struct Sample {
  Image image;  // (3, H, W) in [0, 1]
  Image mask;   // (1, H, W) in {0, 1}
  std::string id;
  std::uint64_t seed = 0;
  std::vector<std::string> augmentation_trail;
};

struct SynthConfig {
  std::size_t size = 64;
  std::size_t min_blobs = 1, max_blobs = 3;
  // Ellipse radius as a fraction of the image size, before the 1/sqrt(k)
  // shrink applied when k blobs share the image.
  double min_radius = 0.10, max_radius = 0.35;
  double noise_amplitude = 0.05;
  double polyp_offset = 0.30;
};

// ---------------------------------------------------------------------------
// Synthesis

namespace detail {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;

  // Normalized radius: 1 on the boundary.
  double rho(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * cos_t + dy * sin_t, v = -dx * sin_t + dy * cos_t;
    return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
  }
};

// Cosine ramp from 1 (inside) to 0 (outside), centred on the boundary.
inline double boundary_ramp(double rho, double half_width = 0.15) {
  if (rho <= 1.0 - half_width) return 1.0;
  if (rho >= 1.0 + half_width) return 0.0;
  return 0.5 * (1.0 + std::cos(M_PI * (rho - (1.0 - half_width)) / (2.0 * half_width)));
}

}  // namespace detail

/// Smooth gradient background with uniform noise plus 1..3 brighter
/// ellipses; the mask is the union of ellipse interiors.
inline Sample generate_sample(std::uint64_t seed, const SynthConfig& cfg = {}) {
  if (cfg.size < 8) throw ConfigError("synth: size must be >= 8");
  if (cfg.min_blobs < 1 || cfg.max_blobs < cfg.min_blobs) throw ConfigError("synth: invalid blob count range");
  if (!(cfg.min_radius > 0 && cfg.max_radius >= cfg.min_radius && cfg.max_radius < 0.5))
    throw ConfigError("synth: invalid radius range");
  Rng rng(seed);
  const std::size_t S = cfg.size;
  const double Sd = static_cast<double>(S);

  const std::array<double, 3> base{rng.uniform(0.35, 0.55), rng.uniform(0.20, 0.35), rng.uniform(0.15, 0.30)};
  const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  const std::array<double, 3> tint{1.0, 0.55, 0.45};

  const auto k = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.min_blobs), static_cast<std::int64_t>(cfg.max_blobs)));
  const double shrink = 1.0 / std::sqrt(static_cast<double>(k));
  std::vector<detail::Ellipse> blobs;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = rng.uniform(cfg.min_radius, cfg.max_radius) * Sd * shrink;
    const double e = rng.uniform(0.0, 0.3);
    const double a = r * (1.0 + e), b = r / (1.0 + e);
    const double theta = rng.uniform(0.0, M_PI);
    const double margin = std::min(a + 1.0, Sd / 2.0);
    const double cx = rng.uniform(margin, Sd - 1.0 - margin);
    const double cy = rng.uniform(margin, Sd - 1.0 - margin);
    blobs.push_back({cx, cy, a, b, std::cos(theta), std::sin(theta)});
  }

  Sample s;
  s.seed = seed;
  s.image = Image(3, S, S);
  s.mask = Image(1, S, S);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      double weight = 0.0;
      bool inside = false;
      for (const auto& b : blobs) {
        const double rho = b.rho(px, py);
        inside = inside || rho <= 1.0;
        weight = std::max(weight, detail::boundary_ramp(rho));
      }
      s.mask.at(0, y, x) = inside ? 1.0f : 0.0f;
      const double shade = gx * (px / Sd - 0.5) + gy * (py / Sd - 0.5);
      for (std::size_t c = 0; c < 3; ++c) {
        const double noise = rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude);
        const double v = base[c] + shade + noise + cfg.polyp_offset * tint[c] * weight;
        s.image.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return s;
}

inline std::string sample_id(std::size_t index) {
  std::ostringstream os;
  os << "synth_" << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

/// n samples with seeds base_seed + i.
inline std::vector<Sample> generate_dataset(std::size_t n, std::uint64_t base_seed, const SynthConfig& cfg = {}) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(generate_sample(base_seed + i, cfg));
    out.back().id = sample_id(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNM I/O (binary P5 / P6, maxval 255)

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class PnmHeaderParser {
 public:
  PnmHeaderParser(const std::string& bytes, const std::string& name) : b_(bytes), name_(name) {}

  void fail(const std::string& what) const {
    throw FormatError(name_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a decimal number");
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  const std::string& b_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Reads a P6 (3 channels) or P5 (1 channel) file; values become v / 255.
inline Image read_image(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  detail::PnmHeaderParser parser(bytes, path.string());
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    parser.fail("bad magic (expected P5 or P6)");
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  parser.pos() = 2;
  const std::size_t width = parser.number();
  const std::size_t height = parser.number();
  const std::size_t maxval = parser.number();
  if (width == 0 || height == 0) parser.fail("zero image dimension");
  if (maxval != 255) parser.fail("unsupported maxval " + std::to_string(maxval));
  auto& pos = parser.pos();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    parser.fail("missing whitespace before pixel data");
  ++pos;
  const std::size_t needed = width * height * channels;
  if (bytes.size() - pos < needed)
    parser.fail("truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " + std::to_string(needed) +
                " bytes)");
  Image img(channels, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = static_cast<unsigned char>(bytes[pos + (y * width + x) * channels + c]) / 255.0f;
  return img;
}

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Writes 3-channel images as P6 and 1-channel images as P5.
inline void write_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ConfigError("write_image: expected 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot create " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(img.data.size(), '\0');
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        bytes[(y * img.width + x) * img.channels + c] = static_cast<char>(quantize(img.at(c, y, x)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

/// Reads a P5 mask whose pixels are all 0 or 255.
inline Image read_mask(const std::filesystem::path& path) {
  Image m = read_image(path);
  if (m.channels != 1) throw FormatError(path.string() + ": mask must be a single-channel P5 file");
  for (float v : m.data)
    if (v != 0.0f && v != 1.0f) throw FormatError(path.string() + ": mask pixels must be 0 or 255");
  return m;
}

// ---------------------------------------------------------------------------
// Resizing

inline Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ConfigError("resize: empty output");
  auto ty = bilinear_taps(img.height, out_h);
  auto tx = bilinear_taps(img.width, out_w);
  Image out(img.channels, out_h, out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const float wy1 = static_cast<float>(a.w1), wy0 = 1.0f - wy1;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const float wx1 = static_cast<float>(b.w1), wx0 = 1.0f - wx1;
        out.at(c, oy, ox) = wy0 * (wx0 * img.at(c, a.i0, b.i0) + wx1 * img.at(c, a.i0, b.i1)) +
                            wy1 * (wx0 * img.at(c, a.i1, b.i0) + wx1 * img.at(c, a.i1, b.i1));
      }
    }
  return out;
}

inline Image resize_nearest(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ConfigError("resize: empty output");
  Image out(img.channels, out_h, out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = std::min(img.height - 1, (2 * y + 1) * img.height / (2 * out_h));
      for (std::size_t x = 0; x < out_w; ++x) {
        const std::size_t sx = std::min(img.width - 1, (2 * x + 1) * img.width / (2 * out_w));
        out.at(c, y, x) = img.at(c, sy, sx);
      }
    }
  return out;
}

/// Bilinear resize to target×target, then values divided by `value_range`
/// (1 for images already in [0, 1], 255 for raw 8-bit levels) and clamped to [0, 1].
inline Image resize_normalize(const Image& img, std::size_t target, float value_range = 1.0f) {
  if (target == 0 || target % 16 != 0)
    throw ConfigError("resize_normalize: target must be a positive multiple of 16, got " + std::to_string(target));
  if (!(value_range > 0)) throw ConfigError("resize_normalize: value range must be positive");
  Image out = (img.height == target && img.width == target) ? img : resize_bilinear(img, target, target);
  for (auto& v : out.data) v = std::clamp(v / value_range, 0.0f, 1.0f);
  return out;
}

/// Image bilinear, mask nearest, both to target×target.
inline Sample resize_sample(const Sample& s, std::size_t target) {
  Sample out = s;
  out.image = resize_normalize(s.image, target);
  out.mask = (s.mask.height == target && s.mask.width == target) ? s.mask : resize_nearest(s.mask, target, target);
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

enum class AugmentOp { hflip, vflip, rot90, shift_scale_rotate, grid_distortion, elastic };

inline constexpr std::array<AugmentOp, 6> kAllAugmentOps{AugmentOp::hflip,           AugmentOp::vflip,
                                                          AugmentOp::rot90,           AugmentOp::shift_scale_rotate,
                                                          AugmentOp::grid_distortion, AugmentOp::elastic};

inline std::string to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::hflip: return "hflip";
    case AugmentOp::vflip: return "vflip";
    case AugmentOp::rot90: return "rot90";
    case AugmentOp::shift_scale_rotate: return "shift_scale_rotate";
    case AugmentOp::grid_distortion: return "grid_distortion";
    case AugmentOp::elastic: return "elastic";
  }
  return "?";
}

inline AugmentOp parse_augment_op(std::string_view name) {
  for (auto op : kAllAugmentOps)
    if (to_string(op) == name) return op;
  throw ConfigError("unknown augmentation '" + std::string(name) + "'");
}

struct AugmentParams {
  double max_shift = 0.10;  // fraction of the image size
  double min_scale = 0.9, max_scale = 1.1;
  double max_rotation_deg = 30.0;
  std::size_t grid_cells = 4;
  double grid_jitter = 0.10;  // fraction of the cell size
  double elastic_sigma = 4.0;
  double elastic_magnitude = 8.0;  // max displacement in pixels
};

namespace detail {

// Samples the image bilinearly and the mask by nearest neighbour at the given
// source coordinates (one pair per destination pixel), clamping at borders.
inline Sample remap(const Sample& s, const std::vector<double>& src_x, const std::vector<double>& src_y) {
  const std::size_t H = s.image.height, W = s.image.width;
  Sample out = s;
  auto clampd = [](double v, std::size_t n) { return std::clamp(v, 0.0, static_cast<double>(n - 1)); };
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      const double sx = clampd(src_x[i], W), sy = clampd(src_y[i], H);
      const auto x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
      const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const float fx = static_cast<float>(sx - static_cast<double>(x0));
      const float fy = static_cast<float>(sy - static_cast<double>(y0));
      for (std::size_t c = 0; c < s.image.channels; ++c) {
        const float v = (1.0f - fy) * ((1.0f - fx) * s.image.at(c, y0, x0) + fx * s.image.at(c, y0, x1)) +
                        fy * ((1.0f - fx) * s.image.at(c, y1, x0) + fx * s.image.at(c, y1, x1));
        out.image.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
      const auto nx = static_cast<std::size_t>(std::lround(sx)), ny = static_cast<std::size_t>(std::lround(sy));
      out.mask.at(0, y, x) = s.mask.at(0, ny, nx);
    }
  return out;
}

// Index permutation shared by image and mask.
template <class F>
Image permute(const Image& img, std::size_t out_h, std::size_t out_w, F source) {
  Image out(img.channels, out_h, out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto [sy, sx] = source(y, x);
        out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

inline std::vector<double> gaussian_blur(const std::vector<double>& field, std::size_t H, std::size_t W,
                                         double sigma) {
  if (sigma <= 0) return field;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : kernel) v /= total;
  auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  std::vector<double> tmp(field.size()), out(field.size());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               field[y * W + clampi(static_cast<std::ptrdiff_t>(x) + k, W)];
      tmp[y * W + x] = acc;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp[clampi(static_cast<std::ptrdiff_t>(y) + k, H) * W + x];
      out[y * W + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Applies one augmentation identically to image and mask; the mask stays
/// binary (nearest-neighbour sampling) and the image stays within [0, 1].
inline Sample augment(const Sample& s, AugmentOp op, Rng& rng, const AugmentParams& p = {}) {
  const std::size_t H = s.image.height, W = s.image.width;
  if (s.mask.height != H || s.mask.width != W) throw DimensionError("augment: image and mask sizes differ");
  Sample out;
  switch (op) {
    case AugmentOp::hflip: {
      auto src = [&](std::size_t y, std::size_t x) { return std::pair{y, W - 1 - x}; };
      out = s;
      out.image = detail::permute(s.image, H, W, src);
      out.mask = detail::permute(s.mask, H, W, src);
      break;
    }
    case AugmentOp::vflip: {
      auto src = [&](std::size_t y, std::size_t x) { return std::pair{H - 1 - y, x}; };
      out = s;
      out.image = detail::permute(s.image, H, W, src);
      out.mask = detail::permute(s.mask, H, W, src);
      break;
    }
    case AugmentOp::rot90: {
      // Counter-clockwise quarter turn; output is W×H.
      auto src = [&](std::size_t y, std::size_t x) { return std::pair{x, W - 1 - y}; };
      out = s;
      out.image = detail::permute(s.image, W, H, src);
      out.mask = detail::permute(s.mask, W, H, src);
      break;
    }
    case AugmentOp::shift_scale_rotate: {
      const double tx = rng.uniform(-p.max_shift, p.max_shift) * static_cast<double>(W);
      const double ty = rng.uniform(-p.max_shift, p.max_shift) * static_cast<double>(H);
      const double scale = rng.uniform(p.min_scale, p.max_scale);
      const double theta = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg) * M_PI / 180.0;
      const double cx = (static_cast<double>(W) - 1) / 2, cy = (static_cast<double>(H) - 1) / 2;
      const double c = std::cos(theta), sn = std::sin(theta);
      std::vector<double> sx(H * W), sy(H * W);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          // Inverse of dst = s·R(θ)(src − c) + c + t.
          const double dx = static_cast<double>(x) - cx - tx, dy = static_cast<double>(y) - cy - ty;
          sx[y * W + x] = (c * dx + sn * dy) / scale + cx;
          sy[y * W + x] = (-sn * dx + c * dy) / scale + cy;
        }
      out = detail::remap(s, sx, sy);
      break;
    }
    case AugmentOp::grid_distortion: {
      const std::size_t cells = std::max<std::size_t>(1, p.grid_cells), pts = cells + 1;
      const double cell_w = static_cast<double>(W) / static_cast<double>(cells);
      const double cell_h = static_cast<double>(H) / static_cast<double>(cells);
      std::vector<double> jx(pts * pts), jy(pts * pts);
      for (std::size_t i = 0; i < pts * pts; ++i) {
        jx[i] = rng.uniform(-p.grid_jitter, p.grid_jitter) * cell_w;
        jy[i] = rng.uniform(-p.grid_jitter, p.grid_jitter) * cell_h;
      }
      std::vector<double> sx(H * W), sy(H * W);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double gx = static_cast<double>(x) / cell_w, gy = static_cast<double>(y) / cell_h;
          const std::size_t i0 = std::min(cells - 1, static_cast<std::size_t>(gx));
          const std::size_t j0 = std::min(cells - 1, static_cast<std::size_t>(gy));
          const double fx = gx - static_cast<double>(i0), fy = gy - static_cast<double>(j0);
          auto lerp = [&](const std::vector<double>& f) {
            return (1 - fy) * ((1 - fx) * f[j0 * pts + i0] + fx * f[j0 * pts + i0 + 1]) +
                   fy * ((1 - fx) * f[(j0 + 1) * pts + i0] + fx * f[(j0 + 1) * pts + i0 + 1]);
          };
          sx[y * W + x] = static_cast<double>(x) + lerp(jx);
          sy[y * W + x] = static_cast<double>(y) + lerp(jy);
        }
      out = detail::remap(s, sx, sy);
      break;
    }
    case AugmentOp::elastic: {
      std::vector<double> fx(H * W), fy(H * W);
      for (std::size_t i = 0; i < H * W; ++i) {
        fx[i] = rng.uniform(-1.0, 1.0);
        fy[i] = rng.uniform(-1.0, 1.0);
      }
      fx = detail::gaussian_blur(fx, H, W, p.elastic_sigma);
      fy = detail::gaussian_blur(fy, H, W, p.elastic_sigma);
      double peak = 0;
      for (std::size_t i = 0; i < H * W; ++i) peak = std::max(peak, std::hypot(fx[i], fy[i]));
      const double gain = peak > 0 ? p.elastic_magnitude / peak : 0.0;
      std::vector<double> sx(H * W), sy(H * W);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          sx[y * W + x] = static_cast<double>(x) + gain * fx[y * W + x];
          sy[y * W + x] = static_cast<double>(y) + gain * fy[y * W + x];
        }
      out = detail::remap(s, sx, sy);
      break;
    }
  }
  out.augmentation_trail.push_back(to_string(op));
  return out;
}

inline Sample augment(const Sample& s, std::string_view op, Rng& rng, const AugmentParams& p = {}) {
  return augment(s, parse_augment_op(op), rng, p);
}

/// Originals followed by `factor` augmented copies of each, one random op per copy.
inline std::vector<Sample> expand_with_augmentations(const std::vector<Sample>& samples, std::size_t factor,
                                                     std::uint64_t seed, const AugmentParams& p = {}) {
  std::vector<Sample> out = samples;
  Rng rng(seed);
  for (std::size_t k = 0; k < factor; ++k)
    for (const auto& s : samples) {
      const auto op = kAllAugmentOps[static_cast<std::size_t>(rng.uniform_int(0, kAllAugmentOps.size() - 1))];
      Sample a = augment(s, op, rng, p);
      a.id = s.id + "_aug" + std::to_string(k);
      out.push_back(std::move(a));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle, then floor(n/10) validation, floor(n/10) test, rest train.
inline SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
  if (n < 3) throw ConfigError("split_dataset: need at least 3 samples, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const std::size_t n_val = n / 10, n_test = n / 10;
  SplitIndices s;
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val + n_test));
  s.val.assign(order.end() - static_cast<std::ptrdiff_t>(n_val + n_test), order.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

struct DatasetSplits {
  std::vector<Sample> train, val, test;
};

inline DatasetSplits split_dataset(const std::vector<Sample>& samples, std::uint64_t seed) {
  const auto idx = split_indices(samples.size(), seed);
  DatasetSplits d;
  for (auto i : idx.train) d.train.push_back(samples[i]);
  for (auto i : idx.val) d.val.push_back(samples[i]);
  for (auto i : idx.test) d.test.push_back(samples[i]);
  return d;
}

// ---------------------------------------------------------------------------
// Dataset directories: images/<id>.ppm, masks/<id>.pgm, manifest.tsv

inline void write_dataset(const std::filesystem::path& root, const DatasetSplits& splits) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ofstream manifest(root / "manifest.tsv", std::ios::binary);
  if (!manifest) throw FormatError("cannot create " + (root / "manifest.tsv").string());
  manifest << "id\tseed\tsplit\n";
  auto emit = [&](const std::vector<Sample>& part, const char* name) {
    for (const auto& s : part) {
      write_image(root / "images" / (s.id + ".ppm"), s.image);
      write_image(root / "masks" / (s.id + ".pgm"), s.mask);
      manifest << s.id << '\t' << s.seed << '\t' << name << '\n';
    }
  };
  emit(splits.train, "train");
  emit(splits.val, "val");
  emit(splits.test, "test");
}

inline DatasetSplits read_dataset(const std::filesystem::path& root) {
  std::ifstream manifest(root / "manifest.tsv");
  if (!manifest) throw FormatError("missing " + (root / "manifest.tsv").string());
  std::string line;
  if (!std::getline(manifest, line) || line != "id\tseed\tsplit")
    throw FormatError((root / "manifest.tsv").string() + ": bad header");
  DatasetSplits d;
  std::size_t lineno = 1;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, seed, split;
    if (!std::getline(row, id, '\t') || !std::getline(row, seed, '\t') || !std::getline(row, split))
      throw FormatError("manifest.tsv line " + std::to_string(lineno) + ": expected 3 columns");
    Sample s;
    s.id = id;
    try {
      s.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw FormatError("manifest.tsv line " + std::to_string(lineno) + ": bad seed");
    }
    s.image = read_image(root / "images" / (id + ".ppm"));
    s.mask = read_mask(root / "masks" / (id + ".pgm"));
    if (s.image.channels != 3) throw FormatError(id + ": image must be RGB (P6)");
    if (s.image.height != s.mask.height || s.image.width != s.mask.width)
      throw FormatError(id + ": image and mask sizes differ");
    if (split == "train")
      d.train.push_back(std::move(s));
    else if (split == "val")
      d.val.push_back(std::move(s));
    else if (split == "test")
      d.test.push_back(std::move(s));
    else
      throw FormatError("manifest.tsv line " + std::to_string(lineno) + ": unknown split '" + split + "'");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Batching

template <Real T>
struct Batch {
  Tensor<T> images;  // (B, 3, H, W)
  Tensor<T> masks;   // (B, 1, H, W)
};

template <Real T>
Batch<T> make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("make_batch: empty batch");
  const auto& first = samples.at(indices[0]);
  const std::size_t H = first.image.height, W = first.image.width, B = indices.size();
  std::vector<T> img, msk;
  img.reserve(B * 3 * H * W);
  msk.reserve(B * H * W);
  for (auto i : indices) {
    const auto& s = samples.at(i);
    if (s.image.height != H || s.image.width != W || s.image.channels != 3)
      throw DimensionError("make_batch: sample " + s.id + " has a different size");
    img.insert(img.end(), s.image.data.begin(), s.image.data.end());
    msk.insert(msk.end(), s.mask.data.begin(), s.mask.data.end());
  }
  return {Tensor<T>::from(Shape{B, 3, H, W}, std::move(img)), Tensor<T>::from(Shape{B, 1, H, W}, std::move(msk))};
}

}  // namespace polypseg

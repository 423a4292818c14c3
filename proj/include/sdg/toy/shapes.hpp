#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/core/parallel.hpp"
#include "sdg/core/rng.hpp"
#include "sdg/core/tensor.hpp"
#include "sdg/io/image_io.hpp"
#include "sdg/prompt/tokenizer.hpp"

// Flat-coloured shapes on a gray background. With two objects, the first one
// named in the caption occupies the left half and the second the right half.

namespace sdg::toy {

struct NamedColor {
  std::string name;
  float r = 0, g = 0, b = 0;
};

enum class ShapeKind { Square, Circle, Triangle };

inline std::string_view to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

inline std::vector<NamedColor> default_colors() {
  return {{"red", 1, 0, 0},   {"green", 0, 1, 0}, {"blue", 0, 0, 1},
          {"yellow", 1, 1, 0}, {"white", 1, 1, 1}, {"black", 0, 0, 0}};
}

struct ShapesConfig {
  std::size_t image_size = 64;
  float background = 0.5f;
  std::vector<NamedColor> colors = default_colors();
  std::vector<ShapeKind> shapes{ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle};
  double two_object_fraction = 0.8;  // the rest have a single object
  bool distinct_colors = true;       // two-object captions never repeat a colour
  double radius_min = 9.0, radius_max = 12.0;
  std::size_t size = 4000;
  std::vector<std::pair<std::string, std::string>> heldout;  // (colour, shape) never generated
  std::uint64_t seed = 0;

  void validate() const {
    require(image_size >= 16 && image_size % 4 == 0, ErrorCode::InvalidConfig, "image size must be a multiple of 4");
    require(!colors.empty() && !shapes.empty(), ErrorCode::InvalidConfig, "need colours and shapes");
    require(radius_min > 0 && radius_min <= radius_max && 4 * radius_max <= static_cast<double>(image_size),
            ErrorCode::InvalidConfig, "object radius does not fit a half image");
    require(two_object_fraction >= 0 && two_object_fraction <= 1, ErrorCode::InvalidConfig,
            "two_object_fraction outside [0, 1]");
    require(!distinct_colors || colors.size() >= 2 || two_object_fraction == 0, ErrorCode::InvalidConfig,
            "distinct colours need at least two colours");
    for (std::size_t i = 0; i < colors.size(); ++i) {
      require(distance_to_background(colors[i]) > 0.5, ErrorCode::InvalidConfig,
              "colour " + colors[i].name + " is too close to the background");
      for (std::size_t j = 0; j < i; ++j)
        require(distance(colors[i], colors[j]) > 0.5, ErrorCode::InvalidConfig,
                "colours " + colors[i].name + " and " + colors[j].name + " are not distinguishable");
    }
  }

  static double distance(const NamedColor& a, const NamedColor& b) {
    return std::sqrt(double(a.r - b.r) * (a.r - b.r) + double(a.g - b.g) * (a.g - b.g) +
                     double(a.b - b.b) * (a.b - b.b));
  }
  double distance_to_background(const NamedColor& c) const {
    return distance(c, NamedColor{"", background, background, background});
  }

  std::size_t color_index(std::string_view name) const {
    for (std::size_t i = 0; i < colors.size(); ++i)
      if (colors[i].name == name) return i;
    return npos;
  }
  std::size_t shape_index(std::string_view name) const {
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (to_string(shapes[i]) == name) return i;
    return npos;
  }
  bool is_heldout(std::size_t color, std::size_t shape) const {
    for (const auto& [c, s] : heldout)
      if (c == colors[color].name && s == to_string(shapes[shape])) return true;
    return false;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct ObjectSpec {
  std::size_t color = 0;
  std::size_t shape = 0;
  double cx = 0, cy = 0, radius = 0;
};

struct Sample {
  std::string caption;
  std::vector<ObjectSpec> objects;  // caption order, left to right
};

inline std::string caption_for(const ShapesConfig& cfg, const std::vector<ObjectSpec>& objects) {
  std::string out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i) out += " and ";
    out += "a " + cfg.colors[objects[i].color].name + " " + std::string(to_string(cfg.shapes[objects[i].shape]));
  }
  return out;
}

inline bool covers(ShapeKind kind, const ObjectSpec& o, double px, double py) {
  const double dx = px - o.cx, dy = py - o.cy, r = o.radius;
  switch (kind) {
    case ShapeKind::Square: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case ShapeKind::Circle: return dx * dx + dy * dy <= r * r;
    case ShapeKind::Triangle: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0;
  }
  return false;
}

/// (3, size, size) image in [0, 1].
inline Tensor<float> render(const ShapesConfig& cfg, const std::vector<ObjectSpec>& objects) {
  const std::size_t n = cfg.image_size;
  Tensor<float> img({3, n, n}, cfg.background);
  for (const auto& o : objects) {
    const auto& c = cfg.colors[o.color];
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        if (covers(cfg.shapes[o.shape], o, x + 0.5, y + 0.5)) {
          img.at(0, y, x) = c.r;
          img.at(1, y, x) = c.g;
          img.at(2, y, x) = c.b;
        }
  }
  return img;
}

/// Label mask: 0 background, i + 1 for the i-th object.
inline std::vector<std::uint8_t> render_mask(const ShapesConfig& cfg, const std::vector<ObjectSpec>& objects) {
  const std::size_t n = cfg.image_size;
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        if (covers(cfg.shapes[objects[i].shape], objects[i], x + 0.5, y + 0.5))
          mask[y * n + x] = static_cast<std::uint8_t>(i + 1);
  return mask;
}

/// Places an object uniformly inside [x0, x1) x [0, size).
inline ObjectSpec place(const ShapesConfig& cfg, Rng& rng, std::size_t color, std::size_t shape, double x0,
                        double x1) {
  ObjectSpec o{color, shape, 0, 0, rng.uniform(cfg.radius_min, cfg.radius_max)};
  const double n = static_cast<double>(cfg.image_size);
  o.cx = rng.uniform(x0 + o.radius, x1 - o.radius);
  o.cy = rng.uniform(o.radius, n - o.radius);
  return o;
}

inline Sample make_sample(const ShapesConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const bool two = rng.bernoulli(cfg.two_object_fraction);
  auto pick = [&](std::size_t avoid_color) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const std::size_t c = rng.below(cfg.colors.size());
      const std::size_t s = rng.below(cfg.shapes.size());
      if (c == avoid_color || cfg.is_heldout(c, s)) continue;
      return std::pair{c, s};
    }
    fail(ErrorCode::InvalidConfig, "heldout pairs exclude every colour/shape combination");
  };
  const double n = static_cast<double>(cfg.image_size);
  Sample s;
  if (!two) {
    const auto [c, sh] = pick(ShapesConfig::npos);
    s.objects.push_back(place(cfg, rng, c, sh, 0, n));
  } else {
    const auto [c0, s0] = pick(ShapesConfig::npos);
    const auto [c1, s1] = pick(cfg.distinct_colors ? c0 : ShapesConfig::npos);
    s.objects.push_back(place(cfg, rng, c0, s0, 0, n / 2));
    s.objects.push_back(place(cfg, rng, c1, s1, n / 2, n));
  }
  s.caption = caption_for(cfg, s.objects);
  return s;
}

struct Dataset {
  ShapesConfig config;
  std::vector<Sample> samples;
};

/// Sample i depends only on (seed, i), so generation order is irrelevant.
inline Dataset make_dataset(const ShapesConfig& cfg) {
  cfg.validate();
  Dataset d{cfg, std::vector<Sample>(cfg.size)};
  parallel_for(cfg.size, [&](std::size_t i) { d.samples[i] = make_sample(cfg, derive_seed(cfg.seed, 1000 + i)); });
  return d;
}

/// (colour, shape) words named in a caption, in order: each colour word
/// immediately followed by a shape word. Indices refer to the config lexicon.
inline std::vector<std::pair<std::size_t, std::size_t>> caption_objects(const ShapesConfig& cfg,
                                                                        std::string_view caption) {
  const auto words = prompt::normalize_words(caption);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    const std::size_t c = cfg.color_index(words[i]), s = cfg.shape_index(words[i + 1]);
    if (c != ShapesConfig::npos && s != ShapesConfig::npos) out.emplace_back(c, s);
  }
  return out;
}

/// Writes images/<id>.ppm, masks/<id>.pgm and manifest.tsv
/// (`id<TAB>caption<TAB>mask-file`) under `dir`.
inline void write_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  auto id_of = [](std::size_t i) {
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << i;
    return os.str();
  };
  const std::size_t n = d.config.image_size;
  parallel_for(d.samples.size(), [&](std::size_t i) {
    const auto id = id_of(i);
    io::write_ppm((fs::path(dir) / "images" / (id + ".ppm")).string(), render(d.config, d.samples[i].objects));
    io::write_pgm((fs::path(dir) / "masks" / (id + ".pgm")).string(), n, n, render_mask(d.config, d.samples[i].objects));
  });
  std::ofstream m(fs::path(dir) / "manifest.tsv");
  require(static_cast<bool>(m), ErrorCode::IoError, "cannot write manifest in " + dir);
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    m << id_of(i) << '\t' << d.samples[i].caption << '\t' << "masks/" << id_of(i) << ".pgm\n";
}

}  // namespace sdg::toy

#pragma once

#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include "sdg/toy/shapes.hpp"

namespace sdg::toy {

// Shape features are coverage-weighted moments, which survive the blocky
// 4x upsampling of decoded latents far better than outline measures:
//   skew  = vertical third moment; an upright triangle is strongly negative
//   cross = E[dx^2 dy^2] / (E[dx^2] E[dy^2]); 1 for an axis-aligned square, 2/3 for a disc
struct OracleConfig {
  double foreground_threshold = 0.25;  // RGB distance from the background
  std::size_t min_area = 48;           // three latent cells at 4x pooling
  double triangle_skew = -0.2;
  double square_cross = 0.83;
};

struct Component {
  std::size_t area = 0;
  double cx = 0, cy = 0;       // coverage-weighted centroid
  double r = 0, g = 0, b = 0;  // mean colour
  std::size_t color = 0;       // anchor closest in direction from the background
  std::size_t shape = 0;
  double skew = 0, cross = 0;
};

struct ObjectResult {
  bool found = false;
  bool correct_color = false;
};

enum class Category { ZeroOrOne, TwoObj, TwoObjCorrect };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::ZeroOrOne: return "zero_or_one_obj";
    case Category::TwoObj: return "two_obj";
    case Category::TwoObjCorrect: return "two_obj_correct_colors";
  }
  return "?";
}

struct BindingResult {
  std::vector<ObjectResult> objects;  // one per caption object
  std::vector<Component> components;
  std::size_t found = 0;
  std::size_t correct = 0;

  /// TwoObjCorrect counts as two_obj as well when reports aggregate.
  Category category() const {
    if (objects.size() < 2 || found < objects.size()) return Category::ZeroOrOne;
    return correct == objects.size() ? Category::TwoObjCorrect : Category::TwoObj;
  }
};

inline std::size_t classify_shape(const ShapesConfig& cfg, const OracleConfig& oc, double skew, double cross) {
  const ShapeKind k = skew < oc.triangle_skew ? ShapeKind::Triangle
                      : cross >= oc.square_cross ? ShapeKind::Square
                                                 : ShapeKind::Circle;
  for (std::size_t i = 0; i < cfg.shapes.size(); ++i)
    if (cfg.shapes[i] == k) return i;
  return ShapesConfig::npos;
}

/// Foreground pixels grouped into 4-connected components, small ones dropped.
inline std::vector<Component> find_components(const Tensor<float>& img, const ShapesConfig& cfg,
                                              const OracleConfig& oc = {}) {
  require(img.rank() == 3 && img.dim(0) == 3, ErrorCode::ShapeMismatch, "oracle: expected a (3, h, w) image");
  const std::size_t h = img.dim(1), w = img.dim(2);
  const float bg = cfg.background;
  std::vector<char> fg(h * w, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dr = img.at(0, y, x) - bg, dg = img.at(1, y, x) - bg, db = img.at(2, y, x) - bg;
      fg[y * w + x] = std::sqrt(dr * dr + dg * dg + db * db) > oc.foreground_threshold;
    }
  std::vector<char> seen(h * w, 0);
  std::vector<Component> out;
  std::vector<std::size_t> stack, pixels;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!fg[start] || seen[start]) continue;
    pixels.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      pixels.push_back(p);
      const std::size_t y = p / w, x = p % w;
      auto visit = [&](std::size_t q) {
        if (fg[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    if (pixels.size() < oc.min_area) continue;
    Component c;
    c.area = pixels.size();
    for (std::size_t p : pixels) {
      c.r += img[p];
      c.g += img[h * w + p];
      c.b += img[2 * h * w + p];
    }
    c.r /= double(c.area);
    c.g /= double(c.area);
    c.b /= double(c.area);
    const double mr = c.r - bg, mg = c.g - bg, mb = c.b - bg;
    double best = -2;
    for (std::size_t i = 0; i < cfg.colors.size(); ++i) {
      const auto& a = cfg.colors[i];
      const double ar = a.r - bg, ag = a.g - bg, ab = a.b - bg;
      const double cosine = (mr * ar + mg * ag + mb * ab) /
                            (std::sqrt(ar * ar + ag * ag + ab * ab) * std::sqrt(mr * mr + mg * mg + mb * mb) + 1e-12);
      if (cosine > best) {
        best = cosine;
        c.color = i;
      }
    }
    // Coverage of each pixel by the anchor colour.
    const auto& a = cfg.colors[c.color];
    const double ar = a.r - bg, ag = a.g - bg, ab = a.b - bg, aa = ar * ar + ag * ag + ab * ab;
    std::vector<double> cov(pixels.size());
    double mass = 0, sx = 0, sy = 0;
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      const std::size_t p = pixels[k];
      const double v = ((img[p] - bg) * ar + (img[h * w + p] - bg) * ag + (img[2 * h * w + p] - bg) * ab) / aa;
      cov[k] = std::clamp(v, 0.0, 1.0);
      mass += cov[k];
      sx += cov[k] * double(p % w);
      sy += cov[k] * double(p / w);
    }
    mass = std::max(mass, 1e-12);
    c.cx = sx / mass;
    c.cy = sy / mass;
    double vxx = 0, vyy = 0, m3 = 0, m22 = 0;
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      const double dx = double(pixels[k] % w) - c.cx, dy = double(pixels[k] / w) - c.cy;
      vxx += cov[k] * dx * dx;
      vyy += cov[k] * dy * dy;
      m3 += cov[k] * dy * dy * dy;
      m22 += cov[k] * dx * dx * dy * dy;
    }
    vxx /= mass;
    vyy /= mass;
    c.skew = vyy > 0 ? (m3 / mass) / std::pow(vyy, 1.5) : 0.0;
    c.cross = vxx > 0 && vyy > 0 ? (m22 / mass) / (vxx * vyy) : 0.0;
    c.shape = classify_shape(cfg, oc, c.skew, c.cross);
    out.push_back(c);
  }
  return out;
}

/// Scores an image against the (colour, shape) objects named in `prompt`.
/// Each caption object claims one component: first one matching shape and
/// colour, otherwise one matching shape only.
inline BindingResult binding_oracle(const Tensor<float>& img, std::string_view prompt, const ShapesConfig& cfg,
                                    const OracleConfig& oc = {}) {
  BindingResult r;
  r.components = find_components(img, cfg, oc);
  const auto wanted = caption_objects(cfg, prompt);
  r.objects.resize(wanted.size());
  std::vector<bool> taken(r.components.size(), false);
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t i = 0; i < wanted.size(); ++i) {
      if (r.objects[i].found) continue;
      for (std::size_t j = 0; j < r.components.size(); ++j) {
        const auto& c = r.components[j];
        if (taken[j] || c.shape != wanted[i].second) continue;
        if (pass == 0 && c.color != wanted[i].first) continue;
        taken[j] = true;
        r.objects[i] = {true, c.color == wanted[i].first};
        break;
      }
    }
  for (const auto& o : r.objects) {
    r.found += o.found;
    r.correct += o.found && o.correct_color;
  }
  return r;
}

}  // namespace sdg::toy

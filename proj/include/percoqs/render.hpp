#pragma once

// SVG 1.1 panels of planar trees: survivors of each requested level, or the
// image cover {Q_tilde(i)} when rendering the image set.

#include <sstream>
#include <string>
#include <vector>

#include "percoqs/errors.hpp"
#include "percoqs/io.hpp"
#include "percoqs/percolation.hpp"
#include "percoqs/substitution.hpp"

namespace percoqs {

class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RenderOptions {
  std::vector<int> levels{1, 2, 3};
  bool image = false;
  double panel = 300.0;  // panel side in px
  double gap = 20.0;
};

namespace detail {

inline void svg_square(std::ostringstream& ss, double x0, double y0, double panel, const std::vector<double>& c,
                       double side) {
  // y grows downward in SVG.
  ss << "<rect x=\"" << fmt_double(x0 + panel * c[0]) << "\" y=\"" << fmt_double(y0 + panel * (1.0 - c[1] - side))
     << "\" width=\"" << fmt_double(panel * side) << "\" height=\"" << fmt_double(panel * side) << "\"/>\n";
}

}  // namespace detail

inline std::string render_svg(const PercTree& tree, const RenderOptions& opt = {}) {
  if (tree.lattice().d() != 2) throw UnsupportedError("rendering supports d = 2 only");
  for (int k : opt.levels)
    if (k < 0 || k > tree.depth()) throw PreconditionError("render level " + std::to_string(k) + " not sampled");
  std::optional<FlaggedTree> ft;
  if (opt.image) {
    if (tree.depth() < 1) throw PreconditionError("image rendering needs depth >= 1");
    ft.emplace(tree);
  }
  const double n = static_cast<double>(opt.levels.size());
  const double width = n * opt.panel + (n + 1) * opt.gap;
  const double height = opt.panel + 2 * opt.gap;
  std::ostringstream ss;
  ss << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt_double(width) << "\" height=\""
     << fmt_double(height) << "\" viewBox=\"0 0 " << fmt_double(width) << ' ' << fmt_double(height) << "\">\n";
  for (std::size_t p = 0; p < opt.levels.size(); ++p) {
    const int k = opt.levels[p];
    const double x0 = opt.gap + static_cast<double>(p) * (opt.panel + opt.gap);
    const double y0 = opt.gap;
    ss << "<g id=\"level-" << k << "\">\n";
    ss << "<rect x=\"" << fmt_double(x0) << "\" y=\"" << fmt_double(y0) << "\" width=\"" << fmt_double(opt.panel)
       << "\" height=\"" << fmt_double(opt.panel) << "\" fill=\"white\" stroke=\"black\"/>\n";
    ss << "<g fill=\"black\" stroke=\"none\">\n";
    if (opt.image) {
      for (const Box& b : image_cover(*ft, k)) detail::svg_square(ss, x0, y0, opt.panel, b.corner_doubles(), b.side());
    } else {
      const double side = std::pow(static_cast<double>(tree.lattice().M()), -k);
      for (std::size_t i = 0; i < tree.count(k); ++i)
        detail::svg_square(ss, x0, y0, opt.panel, tree.lattice().pi_double(tree.word(k, i)), side);
    }
    ss << "</g>\n</g>\n";
  }
  ss << "</svg>\n";
  return ss.str();
}

}  // namespace percoqs

#pragma once

// Deterministic SVG 1.1 maps: the neighbourhood graph over the polygons and
// one diverging choropleth per prediction column. Output bytes depend only on
// the inputs and options.

#include "arelink/augment.hpp"
#include "arelink/colour.hpp"
#include "arelink/geom.hpp"
#include "arelink/nb.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <utility>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace arelink {

enum class NodeStyle { point, numeric };

struct NbMapOptions {
  std::string fillcol = "antiquewhite1";
  std::string bordercol = "gray";
  double bordersize = 0.5;
  std::string linkcol = "darkblue";
  double linksize = 0.8;
  std::string pointcol = "darkblue";
  double pointsize = 2.5;
  NodeStyle nodes = NodeStyle::point;
  std::string numericcol = "darkblue";
  double numericsize = 12.0;
  bool concavehull = false;
  std::string hullcol = "darkred";
  double hullsize = 0.8;
  double concavity = 2.0;
  int width = 800;
};

struct PredMapOptions {
  std::string scale_low = "darkgreen";
  std::string scale_mid = "ivory";
  std::string scale_high = "darkred";
  double scale_midpoint = 0.0;
  std::string bordercol = "gray30";
  double bordersize = 0.5;
  int width = 800;
};

struct PredMap {
  std::string column;
  std::string title;     // grouping variable, e.g. "province"
  std::string subtitle;  // effect kind, e.g. "mrf.smooth"
  std::string svg;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Data bounding box plus a 2% margin mapped to pixels, y flipped.
class Viewport {
 public:
  Viewport(const BBox& data, int width, double extra_top = 0.0) {
    const double w = data.width() > 0 ? data.width() : 1.0;
    const double h = data.height() > 0 ? data.height() : 1.0;
    x0_ = data.xmin - 0.02 * w;
    y1_ = data.ymax + 0.02 * h;
    const double span_x = 1.04 * w;
    const double span_y = 1.04 * h;
    scale_ = static_cast<double>(width) / span_x;
    width_ = width;
    top_ = extra_top;
    height_ = static_cast<int>(std::ceil(span_y * scale_ + extra_top));
  }

  double px(double x) const { return (x - x0_) * scale_; }
  double py(double y) const { return (y1_ - y) * scale_ + top_; }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  double x0_ = 0, y1_ = 0, scale_ = 1, top_ = 0;
  int width_ = 0, height_ = 0;
};

inline std::string path_data(const AreaUnit& u, const Viewport& vp) {
  std::string d;
  auto ring = [&](const Ring& r) {
    for (std::size_t i = 0; i + 1 < r.size(); ++i)
      d += (i ? "L" : "M") + num(vp.px(r[i].x)) + "," + num(vp.py(r[i].y));
    d += "Z";
  };
  for (const auto& poly : u.parts) {
    ring(poly.outer);
    for (const auto& h : poly.holes) ring(h);
  }
  return d;
}

inline std::string svg_open(const Viewport& vp) {
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << vp.width() << "\" height=\""
    << vp.height() << "\" viewBox=\"0 0 " << vp.width() << ' ' << vp.height() << "\">\n";
  return o.str();
}

}  // namespace detail

inline std::string render_nb_map(const AreaCollection& coll, const NbStructure& nb,
                                 const NbMapOptions& opt = {}) {
  const Rgb fill = parse_colour(opt.fillcol), border = parse_colour(opt.bordercol),
            link = parse_colour(opt.linkcol), point = parse_colour(opt.pointcol),
            numeric = parse_colour(opt.numericcol), hull = parse_colour(opt.hullcol);
  std::vector<std::size_t> at(nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i) {
    auto idx = coll.index_of(nb.names()[i]);
    if (!idx) throw InputError("neighbourhood unit '" + nb.names()[i] + "' is not in the collection");
    at[i] = *idx;
  }
  const detail::Viewport vp(coll.bbox(), opt.width);
  std::ostringstream o;
  o << detail::svg_open(vp);
  o << "<g class=\"areas\">\n";
  for (const auto& u : coll.units())
    o << "<path class=\"area\" data-name=\"" << detail::xml_escape(u.name) << "\" d=\"" << detail::path_data(u, vp)
      << "\" fill=\"" << fill.hex() << "\" stroke=\"" << border.hex() << "\" stroke-width=\""
      << detail::num(opt.bordersize) << "\" fill-rule=\"evenodd\"/>\n";
  o << "</g>\n";

  if (opt.concavehull) {
    o << "<g class=\"hulls\">\n";
    for (const auto& u : coll.units()) {
      const Ring r = geom::concave_outline(u, opt.concavity);
      o << "<polygon class=\"hull\" points=\"";
      for (std::size_t i = 0; i + 1 < r.size(); ++i)
        o << (i ? " " : "") << detail::num(vp.px(r[i].x)) << ',' << detail::num(vp.py(r[i].y));
      o << "\" fill=\"none\" stroke=\"" << hull.hex() << "\" stroke-width=\"" << detail::num(opt.hullsize)
        << "\"/>\n";
    }
    o << "</g>\n";
  }

  std::vector<Point> c(nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i) c[i] = geom::centroid(coll[at[i]]);
  o << "<g class=\"links\">\n";
  for (const auto& [i, j] : nb.edges()) {
    const Point a = c[static_cast<std::size_t>(i - 1)], b = c[static_cast<std::size_t>(j - 1)];
    o << "<line class=\"link\" x1=\"" << detail::num(vp.px(a.x)) << "\" y1=\"" << detail::num(vp.py(a.y))
      << "\" x2=\"" << detail::num(vp.px(b.x)) << "\" y2=\"" << detail::num(vp.py(b.y)) << "\" stroke=\""
      << link.hex() << "\" stroke-width=\"" << detail::num(opt.linksize) << "\"/>\n";
  }
  o << "</g>\n<g class=\"nodes\">\n";
  for (std::size_t i = 0; i < nb.size(); ++i) {
    if (opt.nodes == NodeStyle::point) {
      o << "<circle class=\"node\" cx=\"" << detail::num(vp.px(c[i].x)) << "\" cy=\"" << detail::num(vp.py(c[i].y))
        << "\" r=\"" << detail::num(opt.pointsize) << "\" fill=\"" << point.hex() << "\"/>\n";
    } else {
      o << "<text class=\"node\" x=\"" << detail::num(vp.px(c[i].x)) << "\" y=\"" << detail::num(vp.py(c[i].y))
        << "\" font-size=\"" << detail::num(opt.numericsize) << "\" fill=\"" << numeric.hex()
        << "\" text-anchor=\"middle\" dominant-baseline=\"central\" font-family=\"sans-serif\">" << i + 1
        << "</text>\n";
    }
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

/// Splits a prediction column name into (title, subtitle), e.g.
/// "random.effect.llti|msoa" -> ("llti|msoa", "random.effect").
inline std::pair<std::string, std::string> split_prediction_name(const std::string& column) {
  for (const char* prefix : {"exp.mrf.smooth.", "exp.random.effect.", "mrf.smooth.", "random.effect."}) {
    const std::string p = prefix;
    if (column.rfind(p, 0) == 0) return {column.substr(p.size()), p.substr(0, p.size() - 1)};
  }
  return {column, ""};
}

inline std::string render_pred_map(const AreaCollection& coll, const PredictionColumn& col,
                                   const PredMapOptions& opt = {}) {
  const Rgb low = parse_colour(opt.scale_low), mid = parse_colour(opt.scale_mid),
            high = parse_colour(opt.scale_high), border = parse_colour(opt.bordercol);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, dev = 0.0;
  for (double v : col.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    dev = std::max(dev, std::abs(v - opt.scale_midpoint));
  }
  // A constant column is drawn entirely in the mid colour.
  if (!(hi > lo)) dev = 0.0;
  const DivergingScale scale(low, mid, high, opt.scale_midpoint, dev);
  const auto [title, subtitle] = split_prediction_name(col.name);

  const double header = 56.0;
  const detail::Viewport vp(coll.bbox(), opt.width, header);
  const int legend_h = 40;
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << vp.width() << "\" height=\""
    << vp.height() + legend_h << "\" viewBox=\"0 0 " << vp.width() << ' ' << vp.height() + legend_h << "\">\n";
  o << "<text class=\"title\" x=\"10\" y=\"24\" font-size=\"20\" font-family=\"sans-serif\">"
    << detail::xml_escape(title) << "</text>\n";
  o << "<text class=\"subtitle\" x=\"10\" y=\"46\" font-size=\"14\" font-family=\"sans-serif\" font-style=\"italic\">"
    << detail::xml_escape(subtitle) << "</text>\n";
  o << "<g class=\"areas\">\n";
  for (std::size_t i = 0; i < coll.size(); ++i)
    o << "<path class=\"area\" data-name=\"" << detail::xml_escape(coll[i].name) << "\" d=\""
      << detail::path_data(coll[i], vp) << "\" fill=\"" << scale(col.values.at(i)).hex() << "\" stroke=\""
      << border.hex() << "\" stroke-width=\"" << detail::num(opt.bordersize) << "\" fill-rule=\"evenodd\"/>\n";
  o << "</g>\n";

  const double lmin = std::isfinite(lo) ? lo : 0.0, lmax = std::isfinite(hi) ? hi : 0.0;
  const int y = vp.height() + 8;
  o << "<defs><linearGradient id=\"scale\" x1=\"0\" x2=\"1\" y1=\"0\" y2=\"0\">"
    << "<stop offset=\"0\" stop-color=\"" << scale(lmin).hex() << "\"/>";
  if (lmin < opt.scale_midpoint && opt.scale_midpoint < lmax)
    o << "<stop offset=\"" << detail::num((opt.scale_midpoint - lmin) / (lmax - lmin)) << "\" stop-color=\""
      << mid.hex() << "\"/>";
  o << "<stop offset=\"1\" stop-color=\"" << scale(lmax).hex() << "\"/></linearGradient></defs>\n";
  o << "<g class=\"legend\"><rect x=\"10\" y=\"" << y << "\" width=\"200\" height=\"12\" fill=\"url(#scale)\"/>"
    << "<text x=\"10\" y=\"" << y + 28 << "\" font-size=\"11\" font-family=\"sans-serif\">" << detail::num(lmin)
    << "</text><text x=\"210\" y=\"" << y + 28
    << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">" << detail::num(lmax)
    << "</text></g>\n</svg>\n";
  return o.str();
}

/// One choropleth per non-`se.` prediction column, in column order.
inline std::vector<PredMap> render_pred_maps(const AugmentedCollection& aug, const PredMapOptions& opt = {}) {
  std::vector<PredMap> out;
  for (const auto& c : aug.added) {
    if (c.name.rfind("se.", 0) == 0) continue;
    const auto [title, subtitle] = split_prediction_name(c.name);
    out.push_back({c.name, title, subtitle, render_pred_map(aug.base, c, opt)});
  }
  return out;
}

/// File name for a prediction map: the column name with characters outside
/// [A-Za-z0-9._-] replaced by '_'.
inline std::string pred_map_filename(const std::string& column) {
  std::string s = column;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-')) ch = '_';
  return "map_" + s + ".svg";
}

}  // namespace arelink

#pragma once

// GeoJSON (RFC 7946) FeatureCollection reading and writing. Coordinates are
// used verbatim.

#include "arelink/errors.hpp"
#include "arelink/geom.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace arelink {

namespace detail {

/// Text form of an identifier value: strings verbatim, integral numbers
/// without a decimal point, other numbers with round-trip precision.
inline std::string identifier_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 1e15) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.0f", d);
      return buf;
    }
    return v.dump();
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return {};
}

inline Ring parse_ring(const json& coords, std::size_t feature) {
  if (!coords.is_array())
    throw InputError("feature " + std::to_string(feature) + ": ring is not an array");
  Ring r;
  r.reserve(coords.size() + 1);
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw InputError("feature " + std::to_string(feature) + ": malformed coordinate");
    r.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  if (!r.empty() && r.front() != r.back()) r.push_back(r.front());
  std::vector<Point> distinct(r.begin(), r.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3)
    throw InputError("feature " + std::to_string(feature) +
                     ": polygon ring has fewer than 3 distinct vertices");
  return r;
}

inline Polygon parse_polygon(const json& rings, std::size_t feature) {
  if (!rings.is_array() || rings.empty())
    throw InputError("feature " + std::to_string(feature) + ": polygon has no rings");
  Polygon p;
  p.outer = parse_ring(rings[0], feature);
  for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(parse_ring(rings[i], feature));
  return p;
}

inline json ring_json(const Ring& r) {
  json a = json::array();
  for (auto p : r) a.push_back(json::array({p.x, p.y}));
  return a;
}

inline json polygon_json(const Polygon& p) {
  json rings = json::array();
  rings.push_back(ring_json(p.outer));
  for (const auto& h : p.holes) rings.push_back(ring_json(h));
  return rings;
}

}  // namespace detail

inline json geometry_json(const AreaUnit& u) {
  json g = json::object();
  if (u.parts.size() == 1) {
    g["type"] = "Polygon";
    g["coordinates"] = detail::polygon_json(u.parts.front());
  } else {
    g["type"] = "MultiPolygon";
    json polys = json::array();
    for (const auto& p : u.parts) polys.push_back(detail::polygon_json(p));
    g["coordinates"] = std::move(polys);
  }
  return g;
}

/// Parse a FeatureCollection whose features all carry Polygon or MultiPolygon
/// geometry and a `name_field` property. Units keep file order and all
/// properties.
inline AreaCollection load_areas(std::string_view text, std::string_view name_field) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
    throw InputError("document is not a GeoJSON FeatureCollection");
  const auto features = doc.find("features");
  if (features == doc.end() || !features->is_array())
    throw InputError("FeatureCollection has no 'features' array");

  std::vector<AreaUnit> units;
  std::vector<std::size_t> missing;
  std::map<std::string, std::vector<std::size_t>> seen;
  for (std::size_t i = 0; i < features->size(); ++i) {
    const json& f = (*features)[i];
    const json geometry = f.value("geometry", json());
    const std::string gtype = geometry.is_object() ? geometry.value("type", "") : "null";
    AreaUnit u;
    if (gtype == "Polygon") {
      u.parts.push_back(detail::parse_polygon(geometry.at("coordinates"), i));
    } else if (gtype == "MultiPolygon") {
      for (const auto& poly : geometry.at("coordinates"))
        u.parts.push_back(detail::parse_polygon(poly, i));
      if (u.parts.empty())
        throw InputError("feature " + std::to_string(i) + ": empty MultiPolygon");
    } else {
      throw InputError("feature " + std::to_string(i) + ": geometry type '" + gtype +
                       "' is not areal (need Polygon or MultiPolygon)");
    }
    u.attrs = f.value("properties", json::object());
    if (!u.attrs.is_object()) u.attrs = json::object();
    auto nit = u.attrs.find(std::string(name_field));
    if (nit == u.attrs.end() || detail::identifier_text(*nit).empty()) {
      missing.push_back(i);
    } else {
      u.name = detail::identifier_text(*nit);
      seen[u.name].push_back(i);
    }
    units.push_back(std::move(u));
  }
  if (!missing.empty()) {
    std::string msg = "features missing name field '" + std::string(name_field) + "':";
    for (auto i : missing) msg += " " + std::to_string(i);
    throw InputError(msg);
  }
  std::string dups;
  for (const auto& [name, where] : seen)
    if (where.size() > 1) dups += " " + name;
  if (!dups.empty())
    throw InputError("duplicate values of name field '" + std::string(name_field) + "':" + dups);
  return AreaCollection(std::move(units), std::string(name_field));
}

inline json to_geojson(const AreaCollection& coll) {
  json fc = json::object();
  fc["type"] = "FeatureCollection";
  json features = json::array();
  for (const auto& u : coll.units()) {
    json f = json::object();
    f["type"] = "Feature";
    f["properties"] = u.attrs;
    f["geometry"] = geometry_json(u);
    features.push_back(std::move(f));
  }
  fc["features"] = std::move(features);
  return fc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace arelink

#pragma once

// Attaches per-term predictions to an AreaCollection. Column order is: the
// original attributes, then `nb` (when attached), then each prediction column
// immediately followed by its `se.` twin; geometry always comes last when
// serialized.

#include "arelink/errors.hpp"
#include "arelink/fit.hpp"
#include "arelink/geojson.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace arelink {

struct PredictionColumn {
  std::string name;
  std::vector<double> values;  // one per unit
};

struct AugmentedCollection {
  AreaCollection base;
  std::vector<PredictionColumn> added;

  /// True when no prediction columns were attached.
  bool unchanged() const { return added.empty(); }

  /// Names of the non-`se.` prediction columns, in order.
  std::vector<std::string> prediction_columns() const {
    std::vector<std::string> out;
    for (const auto& c : added)
      if (c.name.rfind("se.", 0) != 0) out.push_back(c.name);
    return out;
  }

  const PredictionColumn* find(std::string_view name) const {
    for (const auto& c : added)
      if (c.name == name) return &c;
    return nullptr;
  }

  /// Full attribute names in contract order (geometry excluded).
  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    bool has_nb = false;
    if (!base.empty()) {
      for (const auto& [k, v] : base[0].attrs.items()) {
        if (k == "nb")
          has_nb = true;
        else
          out.push_back(k);
      }
    }
    if (has_nb) out.push_back("nb");
    for (const auto& c : added) out.push_back(c.name);
    return out;
  }

  /// Attributes of unit `i` in contract order.
  json row(std::size_t i) const {
    const auto& attrs = base[i].attrs;
    json o = json::object();
    for (const auto& [k, v] : attrs.items())
      if (k != "nb") o[k] = v;
    if (attrs.contains("nb")) o["nb"] = attrs["nb"];
    for (const auto& c : added) o[c.name] = c.values[i];
    return o;
  }
};

namespace detail {

inline std::string se_name(const std::string& column) { return "se." + column; }

inline bool is_prediction_name(const std::string& k) {
  auto starts = [&](const char* p) { return k.rfind(p, 0) == 0; };
  return starts("mrf.smooth.") || starts("random.effect.") || starts("se.mrf.smooth.") ||
         starts("se.random.effect.") || starts("exp.") || starts("se.exp.");
}

}  // namespace detail

/// Joins each term's per-level estimates onto units: MRF terms by unit name
/// via the grouping attribute, random effects by the grouping attribute's
/// value. Re-running replaces columns of the same names.
inline AugmentedCollection st_augment(const std::vector<TermPrediction>& terms,
                                      const AreaCollection& coll) {
  AugmentedCollection aug;
  aug.base = coll;
  std::set<std::string> fresh;
  for (const auto& t : terms) {
    fresh.insert(t.column);
    fresh.insert(detail::se_name(t.column));
  }
  for (auto& u : aug.base.units())
    for (const auto& name : fresh) u.attrs.erase(name);

  for (const auto& t : terms) {
    std::map<std::string, std::size_t> level_index;
    for (std::size_t l = 0; l < t.levels.size(); ++l) level_index[t.levels[l]] = l;
    PredictionColumn est{t.column, {}};
    PredictionColumn se{detail::se_name(t.column), {}};
    for (const auto& u : coll.units()) {
      auto it = u.attrs.find(t.term.group);
      std::string level = it != u.attrs.end() ? detail::identifier_text(*it) : std::string();
      if (it == u.attrs.end() && t.term.is_mrf()) level = u.name;
      auto li = level_index.find(level);
      if (li == level_index.end())
        throw InputError("cannot resolve level '" + level + "' of '" + t.term.group + "' for unit '" + u.name +
                         "' in term " + t.column);
      est.values.push_back(t.estimate[li->second]);
      se.values.push_back(t.se[li->second]);
    }
    aug.added.push_back(std::move(est));
    aug.added.push_back(std::move(se));
  }
  return aug;
}

inline AugmentedCollection st_augment(const FitResult& fit, const AreaCollection& coll) {
  return st_augment(fit.terms, coll);
}

/// Treats prediction-named attributes of a loaded collection (for example a
/// previously exported augmented file) as prediction columns again.
inline AugmentedCollection augmented_from(const AreaCollection& coll) {
  AugmentedCollection aug;
  aug.base = coll;
  if (coll.empty()) return aug;
  std::vector<std::string> names;
  for (const auto& [k, v] : coll[0].attrs.items())
    if (detail::is_prediction_name(k)) names.push_back(k);
  for (const auto& name : names) {
    PredictionColumn c{name, {}};
    for (const auto& u : coll.units()) {
      auto it = u.attrs.find(name);
      if (it == u.attrs.end() || !it->is_number())
        throw InputError("prediction column '" + name + "' is missing or non-numeric for unit '" + u.name + "'");
      c.values.push_back(it->get<double>());
    }
    aug.added.push_back(std::move(c));
  }
  for (auto& u : aug.base.units())
    for (const auto& name : names) u.attrs.erase(name);
  return aug;
}

/// Adds `exp.<column>` with its delta-method `se.` twin. The inverse link is
/// never applied implicitly.
inline AugmentedCollection transform_exp(const AugmentedCollection& aug, const std::string& column) {
  const auto* c = aug.find(column);
  const auto* s = aug.find(detail::se_name(column));
  if (!c || !s || column.rfind("se.", 0) == 0)
    throw InputError("no prediction column '" + column + "' to transform");
  AugmentedCollection out = aug;
  const std::string name = "exp." + column;
  std::erase_if(out.added, [&](const PredictionColumn& p) {
    return p.name == name || p.name == detail::se_name(name);
  });
  PredictionColumn e{name, {}}, es{detail::se_name(name), {}};
  for (std::size_t i = 0; i < c->values.size(); ++i) {
    const double v = std::exp(c->values[i]);
    e.values.push_back(v);
    es.values.push_back(v * s->values[i]);
  }
  out.added.push_back(std::move(e));
  out.added.push_back(std::move(es));
  return out;
}

inline json augmented_to_geojson(const AugmentedCollection& aug) {
  json fc = json::object();
  fc["type"] = "FeatureCollection";
  json features = json::array();
  for (std::size_t i = 0; i < aug.base.size(); ++i) {
    json f = json::object();
    f["type"] = "Feature";
    f["properties"] = aug.row(i);
    f["geometry"] = geometry_json(aug.base[i]);
    features.push_back(std::move(f));
  }
  fc["features"] = std::move(features);
  return fc;
}

namespace detail {

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NA" : (v > 0 ? "Inf" : "-Inf");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_cell(const json& v) {
  if (v.is_null()) return "NA";
  if (v.is_number_float()) return csv_number(v.get<double>());
  if (v.is_number()) return v.dump();
  std::string s;
  if (v.is_string()) {
    s = v.get<std::string>();
  } else if (v.is_array()) {
    // neighbour lists and similar: space-separated
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + (v[k].is_string() ? v[k].get<std::string>() : v[k].dump());
  } else {
    s = v.dump();
  }
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace detail

/// CSV without geometry, header in contract order.
inline std::string augmented_to_csv(const AugmentedCollection& aug) {
  std::ostringstream out;
  const auto names = aug.column_names();
  for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "," : "") << detail::csv_cell(json(names[k]));
  out << '\n';
  for (std::size_t i = 0; i < aug.base.size(); ++i) {
    const json r = aug.row(i);
    for (std::size_t k = 0; k < names.size(); ++k)
      out << (k ? "," : "") << (r.contains(names[k]) ? detail::csv_cell(r[names[k]]) : "NA");
    out << '\n';
  }
  return out.str();
}

enum class AugmentFormat { geojson, csv };

inline std::string export_augmented(const AugmentedCollection& aug, AugmentFormat format) {
  if (format == AugmentFormat::csv) return augmented_to_csv(aug);
  return augmented_to_geojson(aug).dump(2) + "\n";
}

}  // namespace arelink

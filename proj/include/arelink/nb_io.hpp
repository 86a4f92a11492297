#pragma once

// Serialization of neighbourhood structures: JSON (lossless), GAL and a
// binary CSV matrix.

#include "arelink/errors.hpp"
#include "arelink/nb.hpp"

#include <sstream>
#include <string>
#include <string_view>

namespace arelink {

enum class NbFormat { gal, matrix_csv, json };

inline json induced_json(const InducedLink& r) {
  json o = json::object();
  o["island_names"] = r.island_name;
  o["island_num"] = r.island_num;
  o["nb_num"] = r.nb_num;
  o["nb_names"] = r.nb_name;
  return o;
}

inline json audit_json(const IslandAudit& audit) {
  json a = json::array();
  for (const auto& r : audit) a.push_back(induced_json(r));
  return a;
}

inline json nb_to_json(const NbStructure& nb) {
  json o = json::object();
  o["names"] = nb.names();
  o["adj"] = nb.adj();
  o["induced"] = audit_json(nb.induced());
  return o;
}

inline NbStructure nb_from_json(const json& o) {
  try {
    std::vector<InducedLink> induced;
    if (o.contains("induced"))
      for (const auto& r : o.at("induced"))
        induced.push_back({r.at("island_names").get<std::string>(), r.at("island_num").get<int>(),
                           r.at("nb_num").get<int>(), r.at("nb_names").get<std::string>()});
    return NbStructure(o.at("names").get<std::vector<std::string>>(),
                       o.at("adj").get<std::vector<std::vector<int>>>(), std::move(induced));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed neighbourhood JSON: ") + e.what());
  }
}

struct GalHeader {
  std::string dataset = "arelink";
  std::string key = "name";
};

/// GAL: header "0 n dataset key", then for each unit a "name count" line
/// followed by a line of neighbour names. Induced-link provenance is not part
/// of the format.
inline std::string nb_to_gal(const NbStructure& nb, const GalHeader& header = {}) {
  for (const auto& name : nb.names())
    if (name.find_first_of(" \t\r\n") != std::string::npos)
      throw NbError("GAL cannot carry unit name with whitespace: '" + name + "'");
  std::ostringstream out;
  out << "0 " << nb.size() << ' ' << header.dataset << ' ' << header.key << '\n';
  for (std::size_t i = 0; i < nb.size(); ++i) {
    out << nb.names()[i] << ' ' << nb.adj()[i].size() << '\n';
    for (std::size_t k = 0; k < nb.adj()[i].size(); ++k) {
      if (k) out << ' ';
      out << nb.names()[static_cast<std::size_t>(nb.adj()[i][k] - 1)];
    }
    out << '\n';
  }
  return out.str();
}

inline NbStructure nb_from_gal(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw InputError("empty GAL document");
  std::istringstream hs(header);
  std::vector<std::string> h;
  for (std::string t; hs >> t;) h.push_back(t);
  std::size_t n = 0;
  try {
    n = std::stoul(h.size() >= 2 ? h[1] : h.at(0));
  } catch (const std::exception&) {
    throw InputError("malformed GAL header: '" + header + "'");
  }
  std::vector<std::string> names(n);
  std::vector<std::vector<std::string>> nbn(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    if (!(in >> names[i] >> count)) throw InputError("truncated GAL record " + std::to_string(i + 1));
    nbn[i].resize(count);
    for (auto& s : nbn[i])
      if (!(in >> s)) throw InputError("truncated GAL neighbour list for " + names[i]);
  }
  std::map<std::string, int> pos;
  for (std::size_t i = 0; i < n; ++i) pos[names[i]] = static_cast<int>(i) + 1;
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& s : nbn[i]) {
      auto it = pos.find(s);
      if (it == pos.end()) throw InputError("GAL neighbour '" + s + "' is not a unit");
      adj[i].push_back(it->second);
    }
    std::sort(adj[i].begin(), adj[i].end());
  }
  return NbStructure(std::move(names), std::move(adj));
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}
}  // namespace detail

/// Header row "name,<names...>", then one binary row per unit.
inline std::string nb_to_matrix_csv(const NbStructure& nb) {
  std::ostringstream out;
  out << "name";
  for (const auto& n : nb.names()) out << ',' << detail::csv_field(n);
  out << '\n';
  const auto m = nb.matrix();
  for (std::size_t i = 0; i < nb.size(); ++i) {
    out << detail::csv_field(nb.names()[i]);
    for (int x : m[i]) out << ',' << x;
    out << '\n';
  }
  return out.str();
}

inline std::string export_nb(const NbStructure& nb, NbFormat format) {
  switch (format) {
    case NbFormat::gal:
      return nb_to_gal(nb);
    case NbFormat::matrix_csv:
      return nb_to_matrix_csv(nb);
    case NbFormat::json:
      return nb_to_json(nb).dump(2) + "\n";
  }
  return {};
}

inline NbFormat parse_nb_format(std::string_view s) {
  if (s == "gal") return NbFormat::gal;
  if (s == "matrix-csv" || s == "csv") return NbFormat::matrix_csv;
  if (s == "json") return NbFormat::json;
  throw InputError("unknown neighbourhood format '" + std::string(s) + "'");
}

/// Aligned text table in the layout of a printed data frame:
/// a row-number column, then island_names island_num nb_num nb_names.
inline std::string format_audit_table(const IslandAudit& audit) {
  const std::vector<std::string> head{"island_names", "island_num", "nb_num", "nb_names"};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < audit.size(); ++i) {
    const auto& r = audit[i];
    rows.push_back({std::to_string(i + 1), r.island_name, std::to_string(r.island_num),
                    std::to_string(r.nb_num), r.nb_name});
  }
  std::vector<std::size_t> w(5, 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < 5; ++c) w[c] = std::max(w[c], r[c].size());
  for (std::size_t c = 1; c < 5; ++c) w[c] = std::max(w[c], head[c - 1].size());
  auto pad = [](const std::string& s, std::size_t width) {
    return std::string(width > s.size() ? width - s.size() : 0, ' ') + s;
  };
  std::ostringstream out;
  out << pad("", w[0]);
  for (std::size_t c = 1; c < 5; ++c) out << ' ' << pad(head[c - 1], w[c]);
  out << '\n';
  for (const auto& r : rows) {
    out << pad(r[0], w[0]);
    for (std::size_t c = 1; c < 5; ++c) out << ' ' << pad(r[c], w[c]);
    out << '\n';
  }
  return out.str();
}

}  // namespace arelink

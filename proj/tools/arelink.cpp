// arelink: build, audit and edit neighbourhood structures over polygon areas,
// fit models with random-effect and Markov random field terms, and map the
// per-area predictions.

#include "arelink/arelink.hpp"
#include "arelink/server.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <unistd.h>

namespace {

using namespace arelink;

struct Shared {
  std::string in;
  std::string name_field = "name";
  std::string nb_path;
  std::string out;
};

AreaCollection load_input(const Shared& s) {
  return detail::rekey(load_areas(read_file(s.in), s.name_field), s.name_field);
}

NbStructure load_nb(const std::string& path) {
  const std::string text = read_file(path);
  if (path.size() > 4 && path.substr(path.size() - 4) == ".gal") return nb_from_gal(text);
  try {
    return nb_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void emit(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-")
    std::cout << bytes;
  else
    write_file(path, bytes);
}

bool colour_enabled() {
  const char* env = std::getenv("ARELINK_COLOR");
  const std::string v = env ? env : "";
  if (v == "never") return false;
  if (v == "always") return true;
  return ::isatty(STDOUT_FILENO) != 0;
}

std::pair<std::string, std::string> split_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == s.size())
    throw InputError("expected a pair 'A,B', got '" + s + "'");
  return {s.substr(0, comma), s.substr(comma + 1)};
}

void print_error(const std::string& kind, const std::string& message, std::optional<std::size_t> offset = {}) {
  json e = json::object();
  e["error"] = json::object();
  e["error"]["kind"] = kind;
  e["error"]["message"] = message;
  if (offset) e["error"]["offset"] = *offset;
  std::cerr << e.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neighbourhood structures, spatial random-effect models and prediction maps for polygon areas"};
  app.require_subcommand(1);

  // bridges
  Shared br;
  int k = 1;
  bool remove_islands = false;
  std::string metric = "boundary", format = "json", areas_out;
  auto* bridges = app.add_subcommand("bridges", "Queen contiguity with islands linked to their k nearest units");
  bridges->add_option("--in", br.in, "input GeoJSON FeatureCollection of polygons")->required();
  bridges->add_option("--name-field", br.name_field, "property holding unique unit names")->capture_default_str();
  bridges->add_option("--k", k, "number of nearest units each island is linked to (link_islands_k)")->capture_default_str();
  bridges->add_flag("--remove-islands", remove_islands, "drop islands instead of linking them");
  bridges->add_option("--metric", metric, "island distance: boundary or centroid")
      ->check(CLI::IsMember({"boundary", "centroid"}))->capture_default_str();
  bridges->add_option("--format", format, "output format: json, gal or matrix-csv")
      ->check(CLI::IsMember({"json", "gal", "matrix-csv", "csv"}))->capture_default_str();
  bridges->add_option("--areas-out", areas_out, "also write the areas with an nb column as GeoJSON");
  bridges->add_option("--out", br.out, "output neighbourhood file (stdout when omitted)");

  // check-islands
  std::string audit_nb;
  bool audit_json_only = false;
  auto* check = app.add_subcommand("check-islands", "Print the audit of links induced for islands");
  check->add_option("--nb", audit_nb, "neighbourhood JSON")->required();
  check->add_flag("--json", audit_json_only, "print only the JSON form");

  // edit
  std::string edit_nb, edit_out;
  std::vector<std::string> joins, cuts;
  auto* edit = app.add_subcommand("edit", "Join or cut pairs of units; edits apply left to right");
  edit->add_option("--nb", edit_nb, "neighbourhood JSON")->required();
  auto* join_opt = edit->add_option("--join", joins, "pair A,B to link (names or 1-based positions)")
                       ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->allow_extra_args(false);
  auto* cut_opt = edit->add_option("--cut", cuts, "pair C,D to unlink (names or 1-based positions)")
                      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->allow_extra_args(false);
  edit->add_option("--out", edit_out, "output neighbourhood JSON (stdout when omitted)");

  // quickmap
  Shared qm;
  NbMapOptions map_opt;
  std::string nodes = "point";
  auto* quickmap = app.add_subcommand("quickmap", "Draw the neighbourhood graph over the polygons as SVG");
  quickmap->add_option("--in", qm.in, "input GeoJSON")->required();
  quickmap->add_option("--nb", qm.nb_path, "neighbourhood JSON")->required();
  quickmap->add_option("--name-field", qm.name_field, "property holding unique unit names")->capture_default_str();
  quickmap->add_option("--nodes", nodes, "node style: point or numeric")
      ->check(CLI::IsMember({"point", "numeric"}))->capture_default_str();
  quickmap->add_flag("--hulls", map_opt.concavehull, "outline each unit with its concave hull");
  quickmap->add_option("--concavity", map_opt.concavity, "hull concavity (larger is closer to convex)")->capture_default_str();
  quickmap->add_option("--fillcol", map_opt.fillcol, "polygon fill colour")->capture_default_str();
  quickmap->add_option("--bordercol", map_opt.bordercol, "polygon border colour")->capture_default_str();
  quickmap->add_option("--bordersize", map_opt.bordersize, "polygon border width")->capture_default_str();
  quickmap->add_option("--linkcol", map_opt.linkcol, "link colour")->capture_default_str();
  quickmap->add_option("--linksize", map_opt.linksize, "link width")->capture_default_str();
  quickmap->add_option("--pointcol", map_opt.pointcol, "node point colour")->capture_default_str();
  quickmap->add_option("--pointsize", map_opt.pointsize, "node point radius")->capture_default_str();
  quickmap->add_option("--numericcol", map_opt.numericcol, "node index colour")->capture_default_str();
  quickmap->add_option("--numericsize", map_opt.numericsize, "node index font size")->capture_default_str();
  quickmap->add_option("--hullcol", map_opt.hullcol, "hull colour")->capture_default_str();
  quickmap->add_option("--hullsize", map_opt.hullsize, "hull line width")->capture_default_str();
  quickmap->add_option("--out", qm.out, "output SVG (stdout when omitted)");

  // dist-band
  Shared db;
  double threshold = 0.0;
  auto* dist = app.add_subcommand("dist-band", "Link units whose centroids lie within a distance");
  dist->add_option("--in", db.in, "input GeoJSON")->required();
  dist->add_option("--name-field", db.name_field, "property holding unique unit names")->capture_default_str();
  dist->add_option("--threshold", threshold, "maximum centroid distance, in map units")->required();
  dist->add_option("--out", db.out, "output neighbourhood JSON (stdout when omitted)");

  // fit
  Shared ft;
  std::string formula, family = "gaussian";
  FitOptions fit_opt;
  auto* fit = app.add_subcommand("fit", "Fit a penalized GLM with random-effect and MRF terms");
  fit->add_option("--in", ft.in, "input GeoJSON with the model variables as properties")->required();
  fit->add_option("--nb", ft.nb_path, "neighbourhood JSON (required for MRF terms)");
  fit->add_option("--name-field", ft.name_field, "property holding unique unit names")->capture_default_str();
  fit->add_option("--formula", formula, "model formula, e.g. \"y ~ x + s(name, bs = 'mrf')\"")->required();
  fit->add_option("--family", family, "gaussian or poisson")
      ->check(CLI::IsMember({"gaussian", "poisson"}))->capture_default_str();
  fit->add_flag("--strict-rank", fit_opt.error_on_rank_deficiency, "fail instead of warning on rank deficiency");
  fit->add_option("--out", ft.out, "output fit JSON (stdout when omitted)");

  // augment
  Shared au;
  std::string fit_path, aug_format = "geojson";
  std::vector<std::string> transforms;
  auto* augment = app.add_subcommand("augment", "Attach per-term predictions and standard errors to the areas");
  augment->add_option("--fit", fit_path, "fit JSON written by 'fit'")->required();
  augment->add_option("--in", au.in, "input GeoJSON")->required();
  augment->add_option("--name-field", au.name_field, "property holding unique unit names")->capture_default_str();
  augment->add_option("--transform", transforms, "exp:<column> adds exp.<column> with a delta-method se.")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->allow_extra_args(false);
  augment->add_option("--format", aug_format, "geojson or csv")
      ->check(CLI::IsMember({"geojson", "csv"}))->capture_default_str();
  augment->add_option("--out", au.out, "output file (stdout when omitted)");

  // quickmap-preds
  Shared qp;
  PredMapOptions pred_opt;
  std::string out_dir;
  auto* preds = app.add_subcommand("quickmap-preds", "One diverging choropleth SVG per prediction column");
  preds->add_option("--in", qp.in, "augmented GeoJSON written by 'augment'")->required();
  preds->add_option("--name-field", qp.name_field, "property holding unique unit names")->capture_default_str();
  preds->add_option("--out-dir", out_dir, "directory for the SVG files")->required();
  preds->add_option("--scale-low", pred_opt.scale_low, "colour for low values")->capture_default_str();
  preds->add_option("--scale-mid", pred_opt.scale_mid, "colour at the midpoint")->capture_default_str();
  preds->add_option("--scale-high", pred_opt.scale_high, "colour for high values")->capture_default_str();
  preds->add_option("--scale-midpoint", pred_opt.scale_midpoint, "value mapped to the mid colour")->capture_default_str();

  // serve
  Shared sv;
  int port = 8080;
  std::string host = "127.0.0.1";
  ServerOptions server_opt;
  auto* serve = app.add_subcommand("serve", "Serve the interactive editing session over HTTP");
  serve->add_option("--in", sv.in, "input GeoJSON")->required();
  serve->add_option("--name-field", sv.name_field, "property holding unique unit names")->capture_default_str();
  serve->add_option("--nb", sv.nb_path, "starting neighbourhood JSON (default: bridges with k = 1)");
  serve->add_option("--port", port, "TCP port")->capture_default_str();
  serve->add_option("--host", host, "bind address")->capture_default_str();
  serve->add_option("--save-path", server_opt.save_path, "default target of POST /save")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*bridges) {
      BridgeOptions opt;
      opt.link_islands_k = k;
      opt.remove_islands = remove_islands;
      opt.metric = metric == "centroid" ? geom::Metric::centroid : geom::Metric::boundary;
      const auto b = st_bridges(load_areas(read_file(br.in), br.name_field), br.name_field, opt);
      emit(br.out, export_nb(b.nb, parse_nb_format(format)));
      if (!areas_out.empty()) write_file(areas_out, to_geojson(b.areas).dump(2) + "\n");
    } else if (*check) {
      const auto audit = check_islands(load_nb(audit_nb));
      if (!audit_json_only) {
        const std::string table = format_audit_table(audit);
        const auto eol = table.find('\n');
        if (colour_enabled())
          std::cout << "\x1b[1m" << table.substr(0, eol) << "\x1b[0m" << table.substr(eol);
        else
          std::cout << table;
      }
      std::cout << audit_json(audit).dump() << '\n';
    } else if (*edit) {
      NbStructure nb = load_nb(edit_nb);
      std::size_t ji = 0, ci = 0;
      for (const CLI::Option* o : edit->parse_order()) {
        if (o == join_opt) {
          const auto [a, b] = split_pair(joins.at(ji++));
          nb = manual_join(nb, parse_unit_ref(a), parse_unit_ref(b));
        } else if (o == cut_opt) {
          const auto [a, b] = split_pair(cuts.at(ci++));
          nb = manual_cut(nb, parse_unit_ref(a), parse_unit_ref(b));
        }
      }
      emit(edit_out, nb_to_json(nb).dump(2) + "\n");
    } else if (*quickmap) {
      map_opt.nodes = nodes == "numeric" ? NodeStyle::numeric : NodeStyle::point;
      emit(qm.out, render_nb_map(load_input(qm), load_nb(qm.nb_path), map_opt));
    } else if (*dist) {
      emit(db.out, nb_to_json(dist_band(load_input(db), threshold)).dump(2) + "\n");
    } else if (*fit) {
      ModelSpec spec = parse_formula(formula);
      spec.family = parse_family(family);
      const AreaCollection coll = load_input(ft);
      std::optional<NbStructure> nb;
      if (!ft.nb_path.empty()) nb = load_nb(ft.nb_path);
      const FitResult result = fit_model(spec, coll, nb ? &*nb : nullptr, fit_opt);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      emit(ft.out, fit_to_json(result).dump(2) + "\n");
    } else if (*augment) {
      json fit_json;
      try {
        fit_json = json::parse(read_file(fit_path));
      } catch (const json::parse_error& e) {
        throw InputError("'" + fit_path + "' is not valid JSON: " + e.what());
      }
      AugmentedCollection aug = st_augment(predictions_from_json(fit_json), load_input(au));
      for (const auto& t : transforms) {
        if (t.rfind("exp:", 0) != 0) throw InputError("unknown transform '" + t + "' (expected exp:<column>)");
        aug = transform_exp(aug, t.substr(4));
      }
      emit(au.out, export_augmented(aug, aug_format == "csv" ? AugmentFormat::csv : AugmentFormat::geojson));
    } else if (*preds) {
      const auto aug = augmented_from(load_input(qp));
      const auto maps = render_pred_maps(aug, pred_opt);
      std::filesystem::create_directories(out_dir);
      for (const auto& m : maps) {
        const auto path = (std::filesystem::path(out_dir) / pred_map_filename(m.column)).string();
        write_file(path, m.svg);
        std::cout << path << '\n';
      }
    } else if (*serve) {
      std::optional<NbStructure> nb;
      if (!sv.nb_path.empty()) nb = load_nb(sv.nb_path);
      Session session(load_areas(read_file(sv.in), sv.name_field), sv.name_field, nb);
      httplib::Server http;
      register_routes(http, session, server_opt);
      std::cerr << "listening on http://" << host << ':' << port << std::endl;
      if (!http.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const FormulaError& e) {
    print_error("formula", e.what(), e.offset());
    return 1;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}

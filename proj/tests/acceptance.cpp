// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "support/oracles.hpp"
#include "support/simulate.hpp"
#include "support/specs.hpp"

#include "arelink/arelink.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace arelink;

namespace {

namespace tol {
constexpr double kRectanglesSeconds = 1.0;
constexpr double kPrecisionSeconds = 30.0;
constexpr double kPrecisionZero = 1e-10;
constexpr double kPrecisionIdentity = 1e-9;
constexpr double kOls = 1e-8;
constexpr double kPoissonRate = 1e-8;
constexpr double kGradient = 1e-6;
constexpr double kGradientStep = 1e-5;
constexpr double kFlatField = 1e-4;
constexpr double kHugeLambda = 1e8;
constexpr double kBeta1 = 1.5;
constexpr double kBeta1Window = 0.25;
constexpr double kFieldCorrelation = 0.8;
constexpr double kRecoverySeconds = 60.0;
constexpr double kAicMargin = 2.0;
}  // namespace tol

constexpr unsigned kPrecisionSeed = 2024;
constexpr unsigned kGridSeed = 101;
constexpr unsigned kSpecSeed = 7;
constexpr int kGridSide = 10;
constexpr double kGridBeta0 = 0.5;
constexpr double kFieldPrecision = 1.0;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::vector<std::vector<int>> kRectanglesAdj{{2, 3}, {1, 3, 4}, {1, 2, 5}, {2}, {3}};

void rectangles(Verdict& v) {
  const auto t0 = Clock::now();
  const auto coll = oracle::rectangles();
  const auto k1 = st_bridges(coll, "name");
  v.check(k1.nb.names() == std::vector<std::string>{"Rect1", "Rect2", "Rect3", "Rect4", "Rect5"}, "names");
  v.check(k1.nb.adj() == kRectanglesAdj, "k=1 neighbour list");
  const std::vector<std::vector<int>> matrix{
      {0, 1, 1, 0, 0}, {1, 0, 1, 1, 0}, {1, 1, 0, 0, 1}, {0, 1, 0, 0, 0}, {0, 0, 1, 0, 0}};
  v.check(k1.nb.matrix() == matrix, "5x5 binary matrix");
  BridgeOptions drop;
  drop.remove_islands = true;
  const auto k0 = st_bridges(coll, "name", drop);
  v.check(k0.nb.names() == std::vector<std::string>{"Rect1", "Rect2", "Rect3"}, "remove_islands names");
  v.check(k0.nb.adj() == std::vector<std::vector<int>>{{2, 3}, {1, 3}, {1, 2}}, "remove_islands list");
  const std::string table = format_audit_table(check_islands(k1.nb));
  v.check(table ==
              "  island_names island_num nb_num nb_names\n"
              "1        Rect4          4      2    Rect2\n"
              "2        Rect5          5      3    Rect3\n",
          "audit table");
  const double s = seconds_since(t0);
  v.check(s < tol::kRectanglesSeconds, "runtime");
  v.detail << "k=1 list, matrix, 3-unit list and audit table exact; " << s << " s";
}

void edits(Verdict& v) {
  const auto nb = st_bridges(oracle::rectangles(), "name").nb;
  const auto edited = manual_cut(manual_join(nb, 3, 4), std::string("Rect1"), std::string("Rect2"));
  v.check(edited.neighbours(1) == std::vector<int>{3}, "Rect1");
  v.check(edited.neighbours(2) == std::vector<int>{3, 4}, "Rect2");
  v.check(edited.neighbours(3) == std::vector<int>{1, 2, 4, 5}, "Rect3");
  v.check(edited.neighbours(4) == std::vector<int>{2, 3} && edited.neighbours(5) == std::vector<int>{3},
          "Rect4/Rect5");
  v.detail << "Rect1:[3] Rect2:[3,4] Rect3:[1,2,4,5]";
}

void precision(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937 rng(kPrecisionSeed);
  std::uniform_int_distribution<int> size(2, 40);
  std::normal_distribution<double> z;
  int ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng);
    const auto nb = oracle::random_connected(n, 0.08, rng);
    const Eigen::MatrixXd p = icar_precision(nb).dense();
    bool good = (p - p.transpose()).cwiseAbs().maxCoeff() == 0.0;
    good = good && (p * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() < tol::kPrecisionZero;
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& e : x) e = z(rng);
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
    const double q = oracle::icar_quadratic(nb, x);
    good = good && std::abs(xv.dot(p * xv) - q) < tol::kPrecisionIdentity * std::max(1.0, q);
    const auto ev = oracle::jacobi_eigenvalues(oracle::to_matrix(p));
    const auto zeros = std::count_if(ev.begin(), ev.end(), [](double e) { return std::abs(e) < tol::kPrecisionZero; });
    good = good && zeros == oracle::component_count(nb);
    ok += good;
  }
  const double s = seconds_since(t0);
  v.check(ok == 200, std::to_string(200 - ok) + " structures");
  v.check(s < tol::kPrecisionSeconds, "runtime");
  v.detail << ok << "/200 structures (n<=40) symmetric, P1=0, quadratic identity, null count = components; " << s
           << " s";
}

AreaCollection table(const std::vector<std::pair<std::string, std::vector<double>>>& cols) {
  std::vector<AreaUnit> units(cols.front().second.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    units[i].name = "r" + std::to_string(i + 1);
    for (const auto& [k, vals] : cols) units[i].attrs[k] = vals[i];
  }
  return AreaCollection(std::move(units));
}

void fitter(Verdict& v) {
  // (a) closed-form least squares
  std::mt19937 rng(11);
  std::normal_distribution<double> z;
  std::vector<double> x1(40), x2(40), y(40);
  oracle::Matrix X;
  for (std::size_t i = 0; i < 40; ++i) {
    x1[i] = z(rng);
    x2[i] = 2.0 * z(rng);
    y[i] = 1.0 + 0.5 * x1[i] - x2[i] + z(rng);
    X.push_back({1.0, x1[i], x2[i]});
  }
  const auto ols = pirls_fit(build_design(parse_formula("y ~ x1 + x2"), table({{"x1", x1}, {"x2", x2}, {"y", y}})), {});
  const auto expect = oracle::least_squares(X, y);
  double err_a = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) err_a = std::max(err_a, std::abs(ols.beta(j) - expect[static_cast<std::size_t>(j)]));
  v.check(err_a < tol::kOls, "(a)");

  // (b) Poisson rate with offset
  ModelSpec rate = parse_formula("y ~ offset(log(area))");
  rate.family = Family::poisson;
  const auto pf = pirls_fit(build_design(rate, table({{"y", {2, 4, 6}}, {"area", {1, 2, 3}}})), {});
  const double err_b = std::abs(pf.beta(0) - std::log(12.0 / 6.0));
  v.check(err_b < tol::kPoissonRate, "(b)");

  // (c) gradient of the penalized objective at convergence
  const auto g = sim::poisson_grid(5, kGridBeta0, 1.0, 2.0, 5);
  ModelSpec mrf = parse_formula("y ~ x + s(unit, bs='mrf') + offset(log(area))");
  mrf.family = Family::poisson;
  const auto d = build_design(mrf, g.areas, &g.nb);
  const auto sel = select_lambdas(d);
  double grad = 0.0;
  for (Eigen::Index j = 0; j < sel.beta.size(); ++j) {
    Eigen::VectorXd up = sel.beta, down = sel.beta;
    up(j) += tol::kGradientStep;
    down(j) -= tol::kGradientStep;
    grad = std::max(grad, std::abs(penalized_deviance(d, sel.lambda, up) - penalized_deviance(d, sel.lambda, down)) /
                              (4.0 * tol::kGradientStep));
  }
  v.check(grad < tol::kGradient, "(c)");

  // (d) penalty dominance
  const auto flat = pirls_fit(d, {tol::kHugeLambda});
  double sup = 0.0;
  for (double e : flat.terms[0].estimate) sup = std::max(sup, std::abs(e));
  v.check(sup < tol::kFlatField, "(d)");

  v.detail << "(a) max|b-b_ols|=" << err_a << " (b) |b0-log 2|=" << err_b << " (c) grad sup=" << grad
           << " (d) field sup=" << sup;
}

ModelSpec grid_spec(bool with_field) {
  ModelSpec s = parse_formula(with_field ? "y ~ x + s(unit, bs='mrf') + offset(log(area))" : "y ~ x + offset(log(area))");
  s.family = Family::poisson;
  return s;
}

void recovery(Verdict& v) {
  const auto t0 = Clock::now();
  const auto g = sim::poisson_grid(kGridSide, kGridBeta0, tol::kBeta1, kFieldPrecision, kGridSeed);
  const auto fit = fit_model(grid_spec(true), g.areas, &g.nb);
  const double b1 = fit.beta(1);
  const double r = oracle::correlation(fit.terms[0].estimate, g.gamma);
  const double s = seconds_since(t0);
  v.check(std::abs(b1 - tol::kBeta1) <= tol::kBeta1Window, "beta1");
  v.check(r > tol::kFieldCorrelation, "correlation");
  v.check(s < tol::kRecoverySeconds, "runtime");
  v.detail << "10x10 grid seed " << kGridSeed << ": beta1=" << b1 << " (truth 1.5), corr(gamma)=" << r
           << ", lambda=" << fit.lambda[0] << "; " << s << " s";
}

void aic_ordering(Verdict& v) {
  const auto g = sim::poisson_grid(kGridSide, kGridBeta0, tol::kBeta1, kFieldPrecision, kGridSeed);
  const double with = fit_model(grid_spec(true), g.areas, &g.nb).aic;
  const double without = fit_model(grid_spec(false), g.areas).aic;
  const auto noise = sim::poisson_grid(kGridSide, kGridBeta0, tol::kBeta1, 0.0, kGridSeed);
  const double nwith = fit_model(grid_spec(true), noise.areas, &noise.nb).aic;
  const double nwithout = fit_model(grid_spec(false), noise.areas).aic;
  v.check(with < without - tol::kAicMargin, "field data");
  v.check(nwith >= nwithout - tol::kAicMargin, "noise data");
  v.detail << "field: AIC " << with << " vs " << without << "; noise: AIC " << nwith << " vs " << nwithout;
}

AugmentedCollection all_kinds() {
  auto g = sim::poisson_grid(4, kGridBeta0, 1.0, 1.0, 31);
  for (std::size_t i = 0; i < g.areas.size(); ++i) {
    g.areas[i].attrs["msoa"] = "M" + std::to_string(2 * (i / 8) + (i % 4) / 2);
    g.areas[i].attrs["y"] = g.areas[i].attrs["x"].get<double>() + 0.1 * static_cast<double>(i % 3);
  }
  const auto b = st_bridges(g.areas, "name");
  const auto fit = fit_model(
      parse_formula("y ~ x + s(msoa, bs='re') + s(msoa, x, bs='re') + s(unit, bs='mrf') + s(unit, by=x, bs='mrf')"),
      b.areas, &b.nb);
  return st_augment(fit, b.areas);
}

void naming(Verdict& v) {
  const auto aug = all_kinds();
  std::vector<std::string> added;
  for (const auto& c : aug.added) added.push_back(c.name);
  v.check(added == std::vector<std::string>{"random.effect.msoa", "se.random.effect.msoa", "random.effect.x|msoa",
                                             "se.random.effect.x|msoa", "mrf.smooth.unit", "se.mrf.smooth.unit",
                                             "mrf.smooth.x|unit", "se.mrf.smooth.x|unit"},
          "added names");
  const auto names = aug.column_names();
  v.check(names.size() == 15 && names[6] == "nb", "nb precedes predictions");
  const auto feature = augmented_to_geojson(aug)["features"][0];
  std::vector<std::string> keys, props;
  for (auto it = feature.begin(); it != feature.end(); ++it) keys.push_back(it.key());
  for (auto it = feature["properties"].begin(); it != feature["properties"].end(); ++it) props.push_back(it.key());
  v.check(!keys.empty() && keys.back() == "geometry", "geometry last");
  v.check(props == names, "property order");
  for (std::size_t i = 0; i < added.size(); ++i) v.detail << (i ? " " : "") << added[i];
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

void render(Verdict& v) {
  const auto b = st_bridges(oracle::rectangles(), "name");
  const std::string a = render_nb_map(b.areas, b.nb), a2 = render_nb_map(b.areas, b.nb);
  v.check(a == a2, "nb map bytes");
  const auto polys = count(a, "<path class=\"area\""), links = count(a, "<line class=\"link\"");
  v.check(polys == 5 && links == 5, "element counts");
  const auto aug = all_kinds();
  const auto maps = render_pred_maps(aug), maps2 = render_pred_maps(aug);
  bool same = maps.size() == maps2.size();
  for (std::size_t i = 0; same && i < maps.size(); ++i) same = maps[i].svg == maps2[i].svg;
  v.check(same, "choropleth bytes");
  v.check(maps.size() == aug.prediction_columns().size() && maps.size() == 4, "choropleth count");
  v.detail << polys << " polygons, " << links << " links, " << maps.size() << " choropleths for "
           << aug.prediction_columns().size() << " prediction columns; byte-identical reruns";
}

void formula(Verdict& v) {
  v.check(parse_formula(specs::kEarthquake) == specs::earthquake_spec(), "earthquake");
  v.check(parse_formula(specs::kMinimal) == specs::minimal_spec(), "minimal");
  v.check(parse_formula(specs::kNested) == specs::nested_spec(), "nested");
  std::mt19937 rng(kSpecSeed);
  int ok = 0;
  for (int i = 0; i < 200; ++i) {
    const auto spec = specs::random_spec(rng);
    try {
      ok += parse_formula(format_formula(spec)) == spec;
    } catch (const FormulaError&) {
    }
  }
  v.check(ok == 200, "round trips");
  v.detail << "3 formulas parsed exactly; " << ok << "/200 random specs round-trip";
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria{
      {"Rectangle fixture golden tests", rectangles},
      {"Edit semantics", edits},
      {"Precision-matrix properties", precision},
      {"Fitter oracles", fitter},
      {"Parameter recovery at desk scale", recovery},
      {"AIC ordering", aic_ordering},
      {"Naming contract", naming},
      {"Render determinism", render},
      {"Formula parser", formula}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "[exception: " << e.what() << "]";
    }
    failed += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}

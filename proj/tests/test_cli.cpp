#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using arelink::json;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("arelink_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  /// Runs the CLI with `args` (shell-quoted by the caller) in the test directory.
  Outcome run(const std::string& args, const std::string& env = "ARELINK_COLOR=never") const {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + ARELINK_CLI + "' " + args + " 2>'" +
                            err.string() + "'";
    Outcome r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.err = slurp(err);
    return r;
  }

  /// Rectangles with a synthetic count response, a covariate and a two-level group.
  fs::path synthetic_input() const {
    json fc = json::parse(arelink::read_file(oracle::data_path("rectangles.geojson")));
    const int y[] = {3, 7, 4, 12, 1};
    const double x[] = {0.1, 0.6, 0.3, 0.9, -0.4};
    for (std::size_t i = 0; i < 5; ++i) {
      auto& props = fc["features"][i]["properties"];
      props["y"] = y[i];
      props["x"] = x[i];
      props["side"] = i < 3 ? "west" : "east";
    }
    const fs::path p = dir / "input.geojson";
    arelink::write_file(p.string(), fc.dump(2));
    return p;
  }

  fs::path dir;
};

std::string fixture() { return "'" + oracle::data_path("rectangles.geojson") + "'"; }

}  // namespace

TEST_F(CliTest, BridgesPrintsTheRectanglesList) {
  const auto r = run("bridges --in " + fixture() + " --name-field name");
  ASSERT_EQ(r.status, 0) << r.err;
  const json nb = json::parse(r.out);
  EXPECT_EQ(nb["adj"], json::parse("[[2,3],[1,3,4],[1,2,5],[2],[3]]"));
  EXPECT_EQ(nb["induced"].size(), 2u);
}

TEST_F(CliTest, BridgesMatrixWithoutIslands) {
  const auto r = run("bridges --in " + fixture() + " --remove-islands --format matrix-csv");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, "name,Rect1,Rect2,Rect3\nRect1,0,1,1\nRect2,1,0,1\nRect3,1,1,0\n");
}

TEST_F(CliTest, CheckIslandsPrintsTwoRowAudit) {
  ASSERT_EQ(run("bridges --in " + fixture() + " --out nb.json").status, 0);
  const auto r = run("check-islands --nb nb.json");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out,
            "  island_names island_num nb_num nb_names\n"
            "1        Rect4          4      2    Rect2\n"
            "2        Rect5          5      3    Rect3\n"
            R"([{"island_names":"Rect4","island_num":4,"nb_num":2,"nb_names":"Rect2"},)"
            R"({"island_names":"Rect5","island_num":5,"nb_num":3,"nb_names":"Rect3"}])"
            "\n");
  const auto coloured = run("check-islands --nb nb.json", "ARELINK_COLOR=always");
  EXPECT_EQ(coloured.out.rfind("\x1b[1m  island_names", 0), 0u);
  EXPECT_EQ(run("check-islands --nb nb.json --json").out.front(), '[');
}

TEST_F(CliTest, EditsApplyLeftToRight) {
  ASSERT_EQ(run("bridges --in " + fixture() + " --out nb.json").status, 0);
  const auto r = run("edit --nb nb.json --join 3,4 --cut Rect1,Rect2 --out nb2.json");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(json::parse(slurp(dir / "nb2.json"))["adj"], json::parse("[[3],[3,4],[1,2,4,5],[2,3],[3]]"));
  // the same pair cut then joined ends up linked
  const auto again = run("edit --nb nb.json --cut 1,2 --join 1,2");
  EXPECT_EQ(json::parse(again.out)["adj"][0], json::parse("[2,3]"));
}

TEST_F(CliTest, CuttingAnAbsentEdgeFailsAndNamesThePair) {
  ASSERT_EQ(run("bridges --in " + fixture() + " --out nb.json").status, 0);
  const auto r = run("edit --nb nb.json --cut Rect1,Rect4 --out nb2.json");
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(fs::exists(dir / "nb2.json"));
  ASSERT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  const json e = json::parse(r.err);
  EXPECT_EQ(e["error"]["kind"], "nb");
  const std::string msg = e["error"]["message"];
  EXPECT_NE(msg.find("Rect1"), std::string::npos);
  EXPECT_NE(msg.find("Rect4"), std::string::npos);
}

TEST_F(CliTest, ErrorsAreSingleLineJson) {
  auto r = run("bridges --in missing.geojson");
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(json::parse(r.err)["error"]["kind"], "io");

  const auto in = synthetic_input();
  r = run("fit --in '" + in.string() + "' --formula \"y ~ s(side, bs='tp')\"");
  EXPECT_EQ(r.status, 1);
  const json e = json::parse(r.err);
  EXPECT_EQ(e["error"]["kind"], "formula");
  EXPECT_EQ(e["error"]["offset"], 15);

  r = run("bridges");
  EXPECT_EQ(r.status, 2);
  r = run("frobnicate");
  EXPECT_EQ(r.status, 2);
}

TEST_F(CliTest, QuickmapIsDeterministic) {
  ASSERT_EQ(run("bridges --in " + fixture() + " --out nb.json").status, 0);
  const auto a = run("quickmap --in " + fixture() + " --nb nb.json");
  const auto b = run("quickmap --in " + fixture() + " --nb nb.json --out map.svg");
  ASSERT_EQ(a.status, 0) << a.err;
  ASSERT_EQ(b.status, 0) << b.err;
  EXPECT_EQ(a.out, slurp(dir / "map.svg"));
  const auto numeric = run("quickmap --in " + fixture() + " --nb nb.json --nodes numeric --hulls");
  EXPECT_NE(numeric.out.find(">3</text>"), std::string::npos);
  EXPECT_NE(numeric.out.find("class=\"hull\""), std::string::npos);
  EXPECT_NE(run("quickmap --in " + fixture() + " --nb nb.json --fillcol nocolour").status, 0);
}

TEST_F(CliTest, DistBandUsesCentroids) {
  const auto r = run("dist-band --in " + fixture() + " --threshold 2");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["adj"], json::parse("[[2],[1,3],[2,5],[],[3]]"));
}

TEST_F(CliTest, PipelineEmitsOneMapPerPenalizedTerm) {
  const auto in = synthetic_input();
  const std::string q = "'" + in.string() + "'";
  const std::string before = slurp(in);

  auto r = run("bridges --in " + q + " --out nb.json --areas-out areas.geojson");
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("fit --in areas.geojson --nb nb.json --formula \"y ~ x + s(side, bs='re') + s(name, bs='mrf')\" "
          "--family poisson --out fit.json");
  ASSERT_EQ(r.status, 0) << r.err;
  const json fit = json::parse(slurp(dir / "fit.json"));
  EXPECT_EQ(fit["predictions"].size(), 2u);
  r = run("augment --fit fit.json --in areas.geojson --out aug.geojson --transform exp:mrf.smooth.name");
  ASSERT_EQ(r.status, 0) << r.err;
  const json aug = json::parse(slurp(dir / "aug.geojson"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : aug["features"][0]["properties"].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"name", "y", "x", "side", "nb", "random.effect.side",
                                            "se.random.effect.side", "mrf.smooth.name", "se.mrf.smooth.name",
                                            "exp.mrf.smooth.name", "se.exp.mrf.smooth.name"}));

  // maps from the untransformed augmentation: one per penalized term
  r = run("augment --fit fit.json --in areas.geojson --out plain.geojson");
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("quickmap-preds --in plain.geojson --out-dir maps --scale-low darkgreen --scale-mid ivory "
          "--scale-high darkred --scale-midpoint 0");
  ASSERT_EQ(r.status, 0) << r.err;
  std::vector<std::string> maps;
  for (const auto& e : fs::directory_iterator(dir / "maps")) maps.push_back(e.path().filename().string());
  std::sort(maps.begin(), maps.end());
  EXPECT_EQ(maps, (std::vector<std::string>{"map_mrf.smooth.name.svg", "map_random.effect.side.svg"}));
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);

  const auto csv = run("augment --fit fit.json --in areas.geojson --format csv");
  ASSERT_EQ(csv.status, 0) << csv.err;
  EXPECT_EQ(csv.out.substr(0, csv.out.find('\n')),
            "name,y,x,side,nb,random.effect.side,se.random.effect.side,mrf.smooth.name,se.mrf.smooth.name");
  EXPECT_EQ(std::count(csv.out.begin(), csv.out.end(), '\n'), 6);

  EXPECT_EQ(slurp(in), before);
}

TEST_F(CliTest, InputsAreNeverRewritten) {
  ASSERT_EQ(run("bridges --in " + fixture() + " --out nb.json").status, 0);
  const std::string nb_before = slurp(dir / "nb.json");
  const std::string fixture_before = slurp(oracle::data_path("rectangles.geojson"));
  run("edit --nb nb.json --join 1,5");
  run("edit --nb nb.json --cut 1,5");
  run("check-islands --nb nb.json");
  run("quickmap --in " + fixture() + " --nb nb.json --out map.svg");
  EXPECT_EQ(slurp(dir / "nb.json"), nb_before);
  EXPECT_EQ(slurp(oracle::data_path("rectangles.geojson")), fixture_before);
}

TEST_F(CliTest, GalRoundTripThroughEdit) {
  ASSERT_EQ(run("bridges --in " + fixture() + " --format gal --out nb.gal").status, 0);
  const auto r = run("edit --nb nb.gal --join 4,5");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["adj"], json::parse("[[2,3],[1,3,4],[1,2,5],[2,5],[3,4]]"));
}

TEST_F(CliTest, HelpDocumentsEveryFlag) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> flags{
      {"bridges", {"--in", "--name-field", "--k", "--remove-islands", "--out"}},
      {"check-islands", {"--nb"}},
      {"edit", {"--nb", "--join", "--cut", "--out"}},
      {"quickmap", {"--in", "--nb", "--nodes", "--hulls", "--out"}},
      {"dist-band", {"--in", "--threshold", "--out"}},
      {"fit", {"--in", "--nb", "--formula", "--family", "--out"}},
      {"augment", {"--fit", "--in", "--out", "--transform"}},
      {"quickmap-preds", {"--in", "--out-dir", "--scale-low", "--scale-mid", "--scale-high", "--scale-midpoint"}},
      {"serve", {"--in", "--port"}}};
  const auto top = run("--help");
  EXPECT_EQ(top.status, 0);
  for (const auto& [sub, opts] : flags) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    const auto r = run(sub + " --help");
    EXPECT_EQ(r.status, 0) << sub;
    for (const auto& f : opts) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
  }
}

#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "splatforge/assets/io.hpp"
#include "splatforge/assets/scene.hpp"
#include "splatforge/cli/cli.hpp"
#include "splatforge/gaussians/gaussians.hpp"

using namespace splatforge;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "splatforge");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Counts printed by reconstruct, keyed by their label.
std::size_t count_of(const std::string& out, const std::string& label) {
  std::istringstream in(out);
  std::string key;
  double value = 0;
  while (in >> key >> value) {
    if (key == label) return static_cast<std::size_t>(value);
  }
  return 0;
}

// A scene directory, a small config and its untrained params.
struct Workspace {
  testing::TempDir dir;
  fs::path spec = dir / "spec.json", scene = dir / "wall", config = dir / "config.json", params = dir / "params.json";

  explicit Workspace(double quantile = 0.8) {
    std::ofstream(spec) << R"({
      "width": 32, "height": 32, "focal": 32, "supersample": 1,
      "textures": {"n": {"type": "value_noise", "period": 0.2}},
      "objects": [{"type": "plane", "center": [0, 0, 2], "size": [8, 8], "texture": "n"}],
      "cameras": {"list": [{"position": [0, 0, 0], "look_at": [0, 0, 2]},
                           {"position": [0.1, 0, 0], "look_at": [0.1, 0, 2]},
                           {"position": [0.2, 0, 0], "look_at": [0.2, 0, 2]}]},
      "depth_range": [1, 4]
    })";
    std::ofstream(config) << R"({"factor": 2, "depth_count": 6, "feature_channels": 4, "enhanced_channels": 6,
      "match_stride": 2, "match_radius": 1, "attention_window": 2, "head_hidden": 8, "tr_hidden": 4,
      "densify_hidden": 4, "densify_children": 4, "densify_quantile": )"
                          << quantile << "}";
    REQUIRE(cli({"gen-scene", "--spec", spec.string(), "--out", scene.string(), "--factor", "2"}).code == 0);
    REQUIRE(cli({"train", "--scene", scene.string(), "--config", config.string(), "--out", params.string(), "--steps",
                 "0"})
                .code == 0);
  }
};

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"train", "--help"}).code == 0);
  CHECK(cli({}).code == 1);
  CHECK(cli({"bogus"}).code == 1);
  CHECK(cli({"render", "--splat", "a", "--camera", "b", "--out", "c", "--frobnicate"}).code == 1);
  CHECK(cli({"gen-scene", "--spec", "x.json"}).code == 1);
}

TEST_CASE("gen-scene writes a scene or fails without side effects") {
  Workspace ws;
  CHECK(fs::exists(ws.scene / "scene.json"));
  CHECK(fs::exists(ws.scene / "lr" / "view_000.png"));
  CHECK(read_png(ws.scene / "lr" / "view_000.png").width == 16);

  const fs::path other = ws.dir / "other";
  Run r = cli({"gen-scene", "--spec", ws.spec.string(), "--out", other.string(), "--factor", "3"});
  CHECK(r.code == 1);
  CHECK(r.err.find("factor") != std::string::npos);
  CHECK(!fs::exists(other));

  r = cli({"gen-scene", "--spec", ws.spec.string(), "--out", (ws.dir / "no" / "scene").string()});
  CHECK(r.code == 2);
  CHECK(!fs::exists(ws.dir / "no"));

  std::ofstream(ws.dir / "bad.json") << R"({"width": 32})";
  CHECK(cli({"gen-scene", "--spec", (ws.dir / "bad.json").string(), "--out", other.string()}).code == 1);
  CHECK(cli({"gen-scene", "--spec", (ws.dir / "none.json").string(), "--out", other.string()}).code == 2);
  CHECK(!fs::exists(other));
}

TEST_CASE("train with zero steps writes the initial params") {
  Workspace ws;
  const fs::path again = ws.dir / "again.json";
  CHECK(cli({"train", "--scene", ws.scene.string(), "--config", ws.config.string(), "--out", again.string(), "--steps",
             "0"})
            .code == 0);
  CHECK(slurp(again) == slurp(ws.params));
}

TEST_CASE("reconstruct prints counts and is deterministic") {
  Workspace ws;
  const fs::path a = ws.dir / "a.splat", b = ws.dir / "b.splat";
  const Run r = cli({"reconstruct", "--scene", ws.scene.string(), "--config", ws.config.string(), "--params",
                     ws.params.string(), "--out", a.string()});
  REQUIRE(r.code == 0);
  const std::size_t coarse = count_of(r.out, "coarse"), dense = count_of(r.out, "dense");
  CHECK(coarse == 2048);
  // Strictly above the per-view 0.8 quantile of 1024 values: at most 205 per view.
  CHECK(dense <= 4 * 410);
  CHECK(dense >= 4 * 400);
  CHECK(count_of(r.out, "refined") == coarse + dense);
  CHECK(read_splat(a).size() == coarse + dense);

  CHECK(cli({"reconstruct", "--scene", ws.scene.string(), "--config", ws.config.string(), "--params",
             ws.params.string(), "--out", b.string()})
            .code == 0);
  CHECK(slurp(a) == slurp(b));

  CHECK(cli({"reconstruct", "--scene", ws.scene.string(), "--config", ws.config.string(), "--params",
             (ws.dir / "none.json").string(), "--out", b.string()})
            .code == 2);
}

TEST_CASE("reconstruct with quantile 1 adds nothing") {
  Workspace ws(1.0);
  const Run r = cli({"reconstruct", "--scene", ws.scene.string(), "--config", ws.config.string(), "--params",
                     ws.params.string(), "--out", (ws.dir / "a.splat").string()});
  REQUIRE(r.code == 0);
  CHECK(count_of(r.out, "refined") == count_of(r.out, "coarse"));
}

TEST_CASE("corrupt camera JSON is reported by file name") {
  Workspace ws;
  std::ofstream(ws.scene / "cams" / "view_002.json") << "{ nope";
  const Run r = cli({"reconstruct", "--scene", ws.scene.string(), "--config", ws.config.string(), "--params",
                     ws.params.string(), "--out", (ws.dir / "a.splat").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("view_002.json") != std::string::npos);
}

TEST_CASE("render of an empty splat gives the background with a warning") {
  Workspace ws;
  const fs::path empty = ws.dir / "empty.splat", png = ws.dir / "bg.png";
  write_splat(GaussianSet(), empty);
  const Run r = cli({"render", "--splat", empty.string(), "--camera", (ws.scene / "cams" / "view_000.json").string(),
                     "--out", png.string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  const Image im = read_png(png);
  CHECK((im.width == 32 && im.height == 32));
  for (double v : im.data) CHECK(v == 0.0);

  std::ofstream(ws.dir / "junk.splat") << "JUNKJUNKJUNKJUNK";
  CHECK(cli({"render", "--splat", (ws.dir / "junk.splat").string(), "--camera",
             (ws.scene / "cams" / "view_000.json").string(), "--out", png.string()})
            .code == 2);
}

TEST_CASE("eval of ground-truth renders hits the caps") {
  Workspace ws;
  const fs::path renders = ws.dir / "renders", csv = ws.dir / "eval.csv";
  fs::copy(ws.scene / "hr", renders);
  const Run r = cli({"eval", "--scene", ws.scene.string(), "--renders", renders.string(), "--views", "all", "--csv",
                     csv.string()});
  REQUIRE(r.code == 0);
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "view,psnr,ssim");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.substr(line.find(',')) == ",100,1");
  }
  CHECK(rows == 3);
  CHECK(cli({"eval", "--scene", ws.scene.string(), "--renders", renders.string(), "--views", "some"}).code == 1);

  const Run model = cli({"eval", "--scene", ws.scene.string(), "--config", ws.config.string(), "--params",
                         ws.params.string()});
  CHECK(model.code == 0);
  CHECK(model.out.find("view_001") != std::string::npos);
}

TEST_CASE("tr-map writes both maps") {
  Workspace ws;
  const Run r = cli({"tr-map", "--image", (ws.scene / "lr" / "view_000.png").string(), "--out-dir", ws.dir.path().string(),
                     "--config", ws.config.string(), "--params", ws.params.string()});
  CHECK(r.code == 0);
  CHECK(read_png(ws.dir / "tr_oracle.png").width == 16);
  CHECK(read_png(ws.dir / "tr_pred.png").width == 16);
  CHECK(cli({"tr-map", "--image", (ws.scene / "lr" / "view_000.png").string(), "--out-dir",
             (ws.dir / "missing").string()})
            .code == 2);
}

#include <algorithm>
#include <fstream>
#include <system_error>

#include "splatforge/assets/io.hpp"
#include "splatforge/assets/scene.hpp"
#include "splatforge/errors.hpp"

namespace splatforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("corrupt JSON in " + path.string() + ": " + e.what());
  }
}

std::vector<std::uint16_t> depth_millimetres(const Image& depth) {
  std::vector<std::uint16_t> out(depth.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint16_t>(std::clamp(std::lround(depth.data[i] * 1000.0), 0L, 65535L));
  }
  return out;
}

}  // namespace

void write_scene(const Scene& scene, const fs::path& dir) {
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  if (!fs::is_directory(parent)) throw IoError("output parent directory " + parent.string() + " does not exist");
  const fs::path tmp = parent / ("." + target.filename().string() + ".tmp");
  std::error_code ec;
  fs::remove_all(tmp, ec);
  try {
    for (const char* sub : {"hr", "lr", "cams", "depth", "ref"}) fs::create_directories(tmp / sub);
    json views = json::array();
    for (const SceneView& v : scene.views) {
      write_png(v.hr, tmp / "hr" / (v.name + ".png"));
      write_png(v.lr, tmp / "lr" / (v.name + ".png"));
      write_camera(v.camera, tmp / "cams" / (v.name + ".json"));
      write_pfm(v.depth, tmp / "depth" / (v.name + ".pfm"));
      write_png16(depth_millimetres(v.depth), v.depth.height, v.depth.width, tmp / "depth" / (v.name + ".png"));
      views.push_back(v.name);
    }
    json meta = {{"id", scene.id},
                 {"factor", scene.factor},
                 {"views", views},
                 {"splits",
                  {{"context", scene.splits.context},
                   {"targets", scene.splits.targets},
                   {"heldout", scene.splits.heldout}}}};
    if (scene.depth_range) meta["depth_range"] = *scene.depth_range;
    write_json(meta, tmp / "scene.json");
    json manifest = {{"scene_id", scene.id}, {"description", scene.description}};
    if (scene.reference) {
      write_png(scene.reference->image, tmp / "ref" / "reference.png");
      write_camera(scene.reference->camera, tmp / "ref" / "camera.json");
      manifest["reference"] = "ref/reference.png";
    }
    write_json(manifest, tmp / "manifest.json");
    if (fs::exists(target)) fs::remove_all(target);
    fs::rename(tmp, target);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(tmp, ec);
    throw IoError(std::string("writing scene failed: ") + e.what());
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
}

Scene load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scene directory " + dir.string() + " does not exist");
  const json meta = read_json(dir / "scene.json");
  Scene scene;
  try {
    scene.id = meta.at("id").get<std::string>();
    scene.factor = meta.at("factor").get<int>();
    validate_factor(scene.factor);
    const json& sp = meta.at("splits");
    scene.splits.context = sp.at("context").get<std::vector<std::size_t>>();
    scene.splits.targets = sp.value("targets", std::vector<std::size_t>{});
    scene.splits.heldout = sp.value("heldout", std::vector<std::size_t>{});
    if (meta.contains("depth_range")) scene.depth_range = meta["depth_range"].get<std::array<double, 2>>();
    for (const auto& name : meta.at("views").get<std::vector<std::string>>()) {
      Camera cam = read_camera(dir / "cams" / (name + ".json"));
      Image hr = read_png(dir / "hr" / (name + ".png"));
      Image lr = read_png(dir / "lr" / (name + ".png"));
      Image depth = fs::exists(dir / "depth" / (name + ".pfm")) ? read_pfm(dir / "depth" / (name + ".pfm")) : Image();
      if (hr.channels != 3 || lr.channels != 3) throw ValidationError("view " + name + " must be RGB");
      if (hr.width != static_cast<std::size_t>(cam.width()) || hr.height != static_cast<std::size_t>(cam.height())) {
        throw ValidationError("view " + name + ": HR image does not match its camera");
      }
      if (lr.width * scene.factor != hr.width || lr.height * scene.factor != hr.height) {
        throw ValidationError("view " + name + ": LR image is not HR / " + std::to_string(scene.factor));
      }
      scene.views.push_back({name, cam, std::move(hr), std::move(lr), std::move(depth)});
    }
  } catch (const json::exception& e) {
    throw ValidationError("invalid scene.json in " + dir.string() + ": " + e.what());
  }
  const std::size_t n = scene.views.size();
  for (const auto* list : {&scene.splits.context, &scene.splits.targets, &scene.splits.heldout}) {
    for (std::size_t i : *list) {
      if (i >= n) throw ValidationError("scene.json split refers to missing view " + std::to_string(i));
    }
  }
  if (fs::exists(dir / "manifest.json")) {
    const json manifest = read_json(dir / "manifest.json");
    scene.description = manifest.value("description", std::string());
    if (manifest.contains("reference") && fs::exists(dir / "ref" / "camera.json")) {
      const fs::path image = dir / manifest["reference"].get<std::string>();
      scene.reference = SceneReference{read_camera(dir / "ref" / "camera.json"), read_png(image)};
    }
  }
  return scene;
}

}  // namespace splatforge

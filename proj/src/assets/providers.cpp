#include "splatforge/assets/providers.hpp"

#include <fstream>

#include "splatforge/assets/io.hpp"
#include "splatforge/errors.hpp"

namespace splatforge {

namespace fs = std::filesystem;

FileProvider::FileProvider(std::map<std::string, fs::path> manifests) : manifests_(std::move(manifests)) {}

FileProvider FileProvider::scan(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("gallery root " + root.string() + " does not exist");
  std::map<std::string, fs::path> found;
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path manifest = entry.path() / "manifest.json";
    if (!entry.is_directory() || !fs::exists(manifest)) continue;
    std::ifstream in(manifest);
    try {
      found[nlohmann::json::parse(in).at("scene_id").get<std::string>()] = manifest;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("corrupt manifest " + manifest.string() + ": " + e.what());
    }
  }
  return FileProvider(std::move(found));
}

ReferenceResult FileProvider::get_reference(const std::string& scene_id) const {
  auto it = manifests_.find(scene_id);
  if (it == manifests_.end()) throw ValidationError("no manifest for scene '" + scene_id + "'");
  std::ifstream in(it->second);
  if (!in) throw IoError("cannot read manifest " + it->second.string());
  std::string relative;
  try {
    relative = nlohmann::json::parse(in).at("reference").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest " + it->second.string() + " has no usable reference: " + e.what());
  }
  const fs::path image = it->second.parent_path() / relative;
  if (!fs::exists(image)) throw IoError("reference image " + image.string() + " is missing");
  return {read_png(image), "manifest " + it->second.string()};
}

void ProceduralProvider::add(const std::string& scene_id, SceneSpec spec, std::uint64_t seed) {
  scenes_.insert_or_assign(scene_id, Entry{std::move(spec), seed});
}

ReferenceResult ProceduralProvider::get_reference(const std::string& scene_id) const {
  auto it = scenes_.find(scene_id);
  if (it == scenes_.end()) throw ValidationError("procedural provider has no scene '" + scene_id + "'");
  const SceneSpec& spec = it->second.spec;
  const Camera cam = spec_camera(spec, spec.reference ? *spec.reference : default_reference_pose(spec));
  return {render_scene_view(spec, cam, it->second.seed).color, "procedural twin"};
}

StubRemoteProvider::StubRemoteProvider(std::optional<fs::path> fixtures) : fixtures_(std::move(fixtures)) {}

ReferenceResult StubRemoteProvider::get_reference(const std::string& scene_id) const {
  if (!fixtures_) return {std::nullopt, "unavailable: remote generation is not configured"};
  const fs::path image = *fixtures_ / (scene_id + ".png");
  if (!fs::exists(image)) return {std::nullopt, "unavailable: no fixture for '" + scene_id + "'"};
  return {read_png(image), "fixture " + image.string()};
}

}  // namespace splatforge

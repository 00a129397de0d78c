#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "splatforge/assets/scene.hpp"
#include "splatforge/geometry/image.hpp"

namespace splatforge {

/// Reference lookup result; `image` is empty when the provider cannot serve
/// the scene and the pipeline should run without a reference.
struct ReferenceResult {
  std::optional<Image> image;
  std::string note;

  bool available() const { return image.has_value(); }
};

class ReferenceProvider {
 public:
  virtual ~ReferenceProvider() = default;
  /// Throws ValidationError for unknown scenes and IoError for unreadable files.
  virtual ReferenceResult get_reference(const std::string& scene_id) const = 0;
};

/// Reads the image named by each scene's manifest.json.
class FileProvider : public ReferenceProvider {
 public:
  /// `manifests` maps scene id to its manifest path.
  explicit FileProvider(std::map<std::string, std::filesystem::path> manifests);
  /// Every scenes/<id>/manifest.json under `root`.
  static FileProvider scan(const std::filesystem::path& root);
  ReferenceResult get_reference(const std::string& scene_id) const override;

 private:
  std::map<std::string, std::filesystem::path> manifests_;
};

/// Renders the reference pose of a procedural scene: a twin that shares the
/// scene's geometry and textures exactly.
class ProceduralProvider : public ReferenceProvider {
 public:
  void add(const std::string& scene_id, SceneSpec spec, std::uint64_t seed);
  ReferenceResult get_reference(const std::string& scene_id) const override;

 private:
  struct Entry {
    SceneSpec spec;
    std::uint64_t seed;
  };
  std::map<std::string, Entry> scenes_;
};

/// Stand-in for a remote description-to-image service. Without a fixture
/// directory every request is unavailable; with one, <dir>/<scene_id>.png is
/// served.
class StubRemoteProvider : public ReferenceProvider {
 public:
  explicit StubRemoteProvider(std::optional<std::filesystem::path> fixtures = std::nullopt);
  ReferenceResult get_reference(const std::string& scene_id) const override;

 private:
  std::optional<std::filesystem::path> fixtures_;
};

}  // namespace splatforge

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "splatforge/geometry/camera.hpp"
#include "splatforge/geometry/image.hpp"

namespace splatforge {

enum class TextureKind { kChecker, kSine, kValueNoise };

/// Analytic texture over the surface coordinates (u, v) in metres.
struct TextureSpec {
  TextureKind kind = TextureKind::kChecker;
  double period = 0.25;       // checker square, sine wavelength or noise cell
  double angle_degrees = 0;   // sine grating direction
  std::array<Eigen::Vector3d, 2> colors{Eigen::Vector3d(0.1, 0.1, 0.1), Eigen::Vector3d(0.9, 0.9, 0.9)};
  std::uint64_t seed_offset = 0;  // value noise lattice seed, mixed with the scene seed
};

enum class ObjectKind { kPlane, kBox };

struct ObjectSpec {
  ObjectKind kind = ObjectKind::kPlane;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  // Plane: facing direction and in-plane up vector; size = (width, height).
  Eigen::Vector3d normal{0, 0, -1};
  Eigen::Vector3d up{0, -1, 0};
  // Box: full extents along x, y, z, then rotated about world y.
  Eigen::Vector3d size{1, 1, 1};
  double yaw_degrees = 0;
  std::string texture;
};

struct CameraPose {
  Eigen::Vector3d position;
  Eigen::Vector3d look_at;
};

struct SceneSplits {
  std::vector<std::size_t> context;
  std::vector<std::size_t> targets;
  std::vector<std::size_t> heldout;
};

/// Geometry, textures and cameras of a procedural scene.
struct SceneSpec {
  int width = 64;
  int height = 64;
  double focal = 64;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  std::map<std::string, TextureSpec> textures;
  std::vector<ObjectSpec> objects;
  std::vector<CameraPose> cameras;
  std::optional<CameraPose> reference;
  std::optional<SceneSplits> splits;
  std::optional<std::array<double, 2>> depth_range;
  std::string description;
  int supersample = 3;
};

/// Parses and validates a spec. Camera rings expand into explicit poses.
SceneSpec parse_scene_spec(const nlohmann::json& doc);
SceneSpec load_scene_spec(const std::filesystem::path& path);

struct SceneView {
  std::string name;
  Camera camera;  // on the HR grid
  Image hr;
  Image lr;
  Image depth;  // camera z at pixel centres, 0 where nothing was hit
};

struct SceneReference {
  Camera camera;
  Image image;
};

struct Scene {
  std::string id;
  std::string description;
  int factor = 4;
  std::vector<SceneView> views;
  SceneSplits splits;
  std::optional<SceneReference> reference;
  std::optional<std::array<double, 2>> depth_range;

  std::size_t hr_height() const { return views.at(0).hr.height; }
  std::size_t hr_width() const { return views.at(0).hr.width; }
};

/// Supported downsampling factors.
void validate_factor(int factor);

/// Ray-traced HR colour (supersampled, 8-bit quantised) and depth for one camera.
struct RenderedView {
  Image color;
  Image depth;
};
RenderedView render_scene_view(const SceneSpec& spec, const Camera& cam, std::uint64_t seed);

/// Renders every camera of the spec plus the reference view. LR images are
/// box downsamples of the quantised HR images by `factor`.
Scene gen_scene(const SceneSpec& spec, std::uint64_t seed, int factor, const std::string& id = "scene");

/// Default reference pose when the spec names none: the middle ring camera
/// pulled back by 10% and raised by 5 degrees around the look-at point.
CameraPose default_reference_pose(const SceneSpec& spec);

/// Camera for a pose on the spec's HR grid.
Camera spec_camera(const SceneSpec& spec, const CameraPose& pose);

/// Writes scenes/<id>/{hr,lr,cams,depth,ref}, scene.json and manifest.json.
/// Output goes to a sibling temp directory first and is renamed into place;
/// the parent of `dir` must exist.
void write_scene(const Scene& scene, const std::filesystem::path& dir);
/// Reads what write_scene produced. The reference is loaded from the manifest
/// when it is present.
Scene load_scene(const std::filesystem::path& dir);

}  // namespace splatforge

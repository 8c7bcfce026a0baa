#include "stmg/container.hpp"
#include "stmg/error.hpp"
#include "stmg/synthdata.hpp"

namespace stmg {

using nlohmann::json;

std::string encode_scene(const SceneSequence& s) {
  Container c;
  c.version = kSceneVersion;
  json& m = c.meta;
  m["kind"] = "scene";
  m["id"] = s.id;
  m["grid"] = {s.grid.width, s.grid.height};
  m["frames"] = s.frames;
  m["dims"] = {{"face", s.face_dim}, {"visual", s.visual_dim}, {"audio", s.audio_dim}};
  m["subjects"] = s.subjects;
  m["background_voiced"] = s.background_voiced;
  m["attention_target"] = s.attention_target;
  json faces = json::array();
  for (std::size_t n = 0; n < s.faces.size(); ++n) {
    const FaceTrack& f = s.faces[n];
    json boxes = json::array();
    for (const BoundingBox& b : f.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    faces.push_back({{"face_id", f.face_id}, {"first_frame", f.first_frame}, {"boxes", boxes}, {"speaking", f.speaking}});
    c.tensors.emplace("face_" + std::to_string(n) + ".features", f.features);
  }
  m["faces"] = std::move(faces);
  json fix = json::array();
  for (const auto& frame : s.fixations) {
    json pts = json::array();
    for (const Fixation& p : frame) pts.push_back({p.subject, p.col, p.row});
    fix.push_back(std::move(pts));
  }
  m["fixations"] = std::move(fix);
  c.tensors.emplace("visual", s.visual);
  c.tensors.emplace("audio", s.audio);
  c.tensors.emplace("density", s.density);
  return encode_container(c);
}

namespace {

const Tensor& tensor_or_throw(const Container& c, const std::string& name, const Shape& shape) {
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) throw ParseError("scene is missing tensor '" + name + "'", 0);
  if (it->second.shape() != shape) {
    throw ParseError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                         shape_str(shape),
                     0);
  }
  return it->second;
}

}  // namespace

SceneSequence decode_scene(const std::string& bytes) {
  const Container c = decode_container(bytes, kSceneVersion);
  SceneSequence s;
  try {
    const json& m = c.meta;
    if (m.at("kind").get<std::string>() != "scene") throw ParseError("container does not hold a scene", 0);
    s.id = m.at("id").get<std::string>();
    s.grid = {m.at("grid").at(0).get<std::size_t>(), m.at("grid").at(1).get<std::size_t>()};
    s.frames = m.at("frames").get<std::size_t>();
    s.face_dim = m.at("dims").at("face").get<std::size_t>();
    s.visual_dim = m.at("dims").at("visual").get<std::size_t>();
    s.audio_dim = m.at("dims").at("audio").get<std::size_t>();
    s.subjects = m.at("subjects").get<std::size_t>();
    s.background_voiced = m.at("background_voiced").get<std::vector<int>>();
    s.attention_target = m.at("attention_target").get<std::vector<int>>();
    const json& faces = m.at("faces");
    for (std::size_t n = 0; n < faces.size(); ++n) {
      FaceTrack f;
      f.face_id = faces[n].at("face_id").get<int>();
      f.first_frame = faces[n].at("first_frame").get<std::size_t>();
      for (const json& b : faces[n].at("boxes")) {
        f.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
      }
      f.speaking = faces[n].at("speaking").get<std::vector<int>>();
      if (f.speaking.size() != f.boxes.size() || f.first_frame + f.boxes.size() != s.frames) {
        throw ParseError("face " + std::to_string(n) + " track length is inconsistent with the frame count", 0);
      }
      f.features = tensor_or_throw(c, "face_" + std::to_string(n) + ".features", {f.boxes.size(), s.face_dim});
      s.faces.push_back(std::move(f));
    }
    for (const json& frame : m.at("fixations")) {
      std::vector<Fixation> pts;
      for (const json& p : frame) pts.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()});
      s.fixations.push_back(std::move(pts));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scene metadata: ") + e.what(), 0);
  }
  if (s.fixations.size() != s.frames || s.background_voiced.size() != s.frames || s.attention_target.size() != s.frames) {
    throw ParseError("per-frame annotation count does not match frame count", 0);
  }
  s.visual = tensor_or_throw(c, "visual", {s.frames, s.visual_dim});
  s.audio = tensor_or_throw(c, "audio", {s.frames, s.audio_dim});
  s.density = tensor_or_throw(c, "density", {s.frames, s.grid.height, s.grid.width});
  return s;
}

void write_scene(const SceneSequence& scene, const std::string& path) { write_file_atomic(path, encode_scene(scene)); }

SceneSequence read_scene(const std::string& path) { return decode_scene(read_file(path)); }

}  // namespace stmg

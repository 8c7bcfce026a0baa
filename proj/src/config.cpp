#include "stmg/config.hpp"

#include <set>
#include <type_traits>

#include "stmg/container.hpp"
#include "stmg/error.hpp"

namespace stmg {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": must be an object");
  }

  template <class T>
  Section& read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    const json& v = *it;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected true or false");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        fail(key, "expected a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) fail(key, "expected a string");
      out = v.get<T>();
    }
    return *this;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key().c_str(), "unknown field");
  }

  [[noreturn]] void fail(const char* key, const std::string& msg) const {
    throw ConfigError(name_ + "." + key + ": " + msg);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

// Validation errors name the field without the section; add it.
template <class F>
void validate_in(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(section + ".", 0) == 0) throw;
    throw ConfigError(section + "." + msg);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (clip_frames < 2) throw ConfigError("train.clip_frames: must be at least 2");
  if (batch_size == 0) throw ConfigError("train.batch_size: must be at least 1");
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr: must be > 0");
  adam.validate();
  loss.validate();
  if (warmup_epochs > epochs) throw ConfigError("train.warmup_epochs: exceeds train.epochs");
}

void RunConfig::validate() const {
  validate_in("generator", [&] { generator.validate(); });
  if (scenes == 0) throw ConfigError("scenes: must be at least 1");
  validate_in("network", [&] { network.validate(); });
  refiner.validate();
  train.validate();
  if (generator.face_dim != network.face_dim) throw ConfigError("network.face_dim: differs from generator.face_dim");
  if (generator.visual_dim != network.visual_dim)
    throw ConfigError("network.visual_dim: differs from generator.visual_dim");
  if (generator.audio_dim != network.audio_dim) throw ConfigError("network.audio_dim: differs from generator.audio_dim");
  if (generator.frames != train.clip_frames) throw ConfigError("train.clip_frames: differs from generator.frames");
}

json to_json(const GeneratorConfig& c) {
  return {{"faces", c.faces},
          {"frames", c.frames},
          {"width", c.width},
          {"height", c.height},
          {"face_dim", c.face_dim},
          {"visual_dim", c.visual_dim},
          {"audio_dim", c.audio_dim},
          {"subjects", c.subjects},
          {"turn_min", c.turn_min},
          {"turn_max", c.turn_max},
          {"background_voiced_prob", c.background_voiced_prob},
          {"on_target_fraction", c.on_target_fraction},
          {"other_face_fraction", c.other_face_fraction},
          {"attention_lag", c.attention_lag},
          {"snr", c.snr},
          {"fixation_spread", c.fixation_spread},
          {"blur_fraction", c.blur_fraction},
          {"late_face_frame", c.late_face_frame},
          {"world_seed", c.world_seed},
          {"seed", c.seed}};
}

json to_json(const NetworkConfig& c) {
  return {{"face_dim", c.face_dim}, {"visual_dim", c.visual_dim}, {"audio_dim", c.audio_dim},
          {"layers", c.layers},     {"heads", c.heads},           {"embed_dim", c.embed_dim},
          {"reweight", c.reweight}, {"slope", c.slope}};
}

json to_json(const RefinerConfig& c) { return {{"channels", c.channels}, {"kernel", c.kernel}, {"slope", c.slope}}; }

json to_json(const TrainConfig& c) {
  return {{"clip_frames", c.clip_frames},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"gamma1", c.loss.gamma1},
          {"gamma2", c.loss.gamma2},
          {"nss_weight", c.loss.beta1},
          {"cc_weight", c.loss.beta2},
          {"literal_sum", c.loss.literal_sum},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"seed", c.seed},
          {"checkpoint", c.checkpoint}};
}

json to_json(const RunConfig& c) {
  return {{"generator", to_json(c.generator)},
          {"scenes", c.scenes},
          {"network", to_json(c.network)},
          {"refiner", to_json(c.refiner)},
          {"train", to_json(c.train)}};
}

GeneratorConfig generator_from_json(const json& j) {
  GeneratorConfig c;
  Section s(j, "generator");
  s.read("faces", c.faces).read("frames", c.frames).read("width", c.width).read("height", c.height);
  s.read("face_dim", c.face_dim).read("visual_dim", c.visual_dim).read("audio_dim", c.audio_dim);
  s.read("subjects", c.subjects).read("turn_min", c.turn_min).read("turn_max", c.turn_max);
  s.read("background_voiced_prob", c.background_voiced_prob).read("on_target_fraction", c.on_target_fraction);
  s.read("other_face_fraction", c.other_face_fraction).read("attention_lag", c.attention_lag).read("snr", c.snr);
  s.read("fixation_spread", c.fixation_spread).read("blur_fraction", c.blur_fraction);
  s.read("late_face_frame", c.late_face_frame).read("world_seed", c.world_seed).read("seed", c.seed);
  s.finish();
  return c;
}

NetworkConfig network_from_json(const json& j) {
  NetworkConfig c;
  Section s(j, "network");
  s.read("face_dim", c.face_dim).read("visual_dim", c.visual_dim).read("audio_dim", c.audio_dim);
  s.read("layers", c.layers).read("heads", c.heads).read("embed_dim", c.embed_dim);
  s.read("reweight", c.reweight).read("slope", c.slope);
  s.finish();
  return c;
}

RefinerConfig refiner_from_json(const json& j) {
  RefinerConfig c;
  Section s(j, "refiner");
  s.read("channels", c.channels).read("kernel", c.kernel).read("slope", c.slope);
  s.finish();
  return c;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  Section s(j, "train");
  s.read("clip_frames", c.clip_frames).read("batch_size", c.batch_size);
  s.read("lr", c.adam.lr).read("beta1", c.adam.beta1).read("beta2", c.adam.beta2).read("adam_eps", c.adam.eps);
  s.read("gamma1", c.loss.gamma1).read("gamma2", c.loss.gamma2);
  s.read("nss_weight", c.loss.beta1).read("cc_weight", c.loss.beta2).read("literal_sum", c.loss.literal_sum);
  s.read("epochs", c.epochs).read("warmup_epochs", c.warmup_epochs).read("seed", c.seed);
  s.read("checkpoint", c.checkpoint);
  s.finish();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section s(j, "config");
  if (const json* g = s.child("generator")) c.generator = generator_from_json(*g);
  s.read("scenes", c.scenes);
  if (const json* n = s.child("network")) c.network = network_from_json(*n);
  if (const json* r = s.child("refiner")) c.refiner = refiner_from_json(*r);
  if (const json* t = s.child("train")) c.train = train_from_json(*t);
  s.finish();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  try {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("not valid JSON: ") + e.what());
    }
    RunConfig c = run_config_from_json(j);
    c.validate();
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace stmg

#include "stmg/checkpoint.hpp"

#include "stmg/config.hpp"
#include "stmg/container.hpp"
#include "stmg/error.hpp"

namespace stmg {

std::string encode_checkpoint(const Model& model) {
  Container c;
  c.version = kCheckpointVersion;
  c.meta = {{"kind", "checkpoint"}, {"network", to_json(model.net)}, {"refiner", to_json(model.refiner)}};
  c.tensors = model.params;
  return encode_container(c);
}

Model decode_checkpoint(const std::string& bytes) {
  Container c = decode_container(bytes, kCheckpointVersion);
  Model m;
  try {
    m.net = network_from_json(c.meta.at("network"));
    m.refiner = refiner_from_json(c.meta.at("refiner"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint meta: ") + e.what(), 0);
  }
  const Model expected = init_model(m.net, m.refiner, 0);
  for (const auto& [name, t] : expected.params) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end()) throw DimensionError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                           ", expected " + shape_str(t.shape()));
  }
  for (const auto& [name, t] : c.tensors)
    if (!expected.params.count(name)) throw DimensionError("checkpoint has unexpected tensor '" + name + "'");
  m.params = std::move(c.tensors);
  return m;
}

void write_checkpoint(const Model& model, const std::string& path) { write_file_atomic(path, encode_checkpoint(model)); }

Model read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace stmg

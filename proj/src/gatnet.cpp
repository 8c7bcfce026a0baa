#include "stmg/gatnet.hpp"

#include <cmath>

#include "stmg/error.hpp"
#include "stmg/random.hpp"

namespace stmg {

namespace {

constexpr NodeKind kModalities[] = {NodeKind::Face, NodeKind::Visual, NodeKind::Audio};

std::size_t input_dim(const NetworkConfig& cfg, std::size_t layer, NodeKind m) {
  if (layer > 0) return cfg.layer_output_dim(layer - 1);
  switch (m) {
    case NodeKind::Face: return cfg.face_dim;
    case NodeKind::Visual: return cfg.visual_dim;
    case NodeKind::Audio: return cfg.audio_dim;
  }
  return 0;
}

// Input width of modality `m` when entering pass `kind` of `layer`, or 0 if
// the modality does not take part in that pass.
std::size_t pass_input_dim(const NetworkConfig& cfg, std::size_t layer, EdgeKind kind, NodeKind m) {
  if (!StmgGraph::participates(m, kind)) return 0;
  const std::size_t out = cfg.layer_output_dim(layer);
  switch (kind) {
    case EdgeKind::Spatial: return input_dim(cfg, layer, m);
    case EdgeKind::Temporal: return out;
    case EdgeKind::MultiModal: return m == NodeKind::Audio ? input_dim(cfg, layer, m) : out;
  }
  return 0;
}

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out, Shape shape) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(-limit, limit);
  return t;
}

const Var& param(const ParamVars& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw DimensionError("missing network parameter '" + name + "'");
  return it->second;
}

Var modality(const ModalityFeatures& f, NodeKind m) {
  switch (m) {
    case NodeKind::Face: return f.face;
    case NodeKind::Visual: return f.visual;
    case NodeKind::Audio: return f.audio;
  }
  return {};
}

void set_modality(ModalityFeatures& f, NodeKind m, Var v) {
  switch (m) {
    case NodeKind::Face: f.face = v; break;
    case NodeKind::Visual: f.visual = v; break;
    case NodeKind::Audio: f.audio = v; break;
  }
}

}  // namespace

void NetworkConfig::validate() const {
  if (heads == 0) throw ConfigError("heads: must be at least 1");
  if (embed_dim == 0) throw ConfigError("embed_dim: must be at least 1");
  if (face_dim == 0 || visual_dim == 0 || audio_dim == 0) throw ConfigError("face_dim: feature dims must be positive");
  if (!(reweight >= 0.0 && reweight <= 1.0)) throw ConfigError("reweight: must lie in [0, 1]");
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("slope: must lie in (0, 1)");
}

std::size_t NetworkConfig::layer_output_dim(std::size_t l) const {
  return l + 1 == layers ? embed_dim : heads * embed_dim;
}

std::size_t NetworkConfig::final_dim(NodeKind kind) const {
  if (layers > 0) return layer_output_dim(layers - 1);
  return kind == NodeKind::Face ? face_dim : visual_dim;
}

std::string gat_param_name(std::size_t layer, EdgeKind pass, const std::string& what) {
  return "gat" + std::to_string(layer) + "." + to_string(pass) + "." + what;
}

ParamStore init_network_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamStore store;
  const std::size_t e = cfg.embed_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t out = cfg.layer_output_dim(l);
    for (EdgeKind kind : kAllEdgeKinds) {
      for (std::size_t d = 0; d < cfg.heads; ++d) {
        for (NodeKind m : kModalities) {
          const std::size_t in = pass_input_dim(cfg, l, kind, m);
          if (in == 0) continue;
          store[gat_param_name(l, kind, std::string("W.") + to_string(m) + ".h" + std::to_string(d))] =
              glorot(rng, in, e, {in, e});
        }
        store[gat_param_name(l, kind, "a.h" + std::to_string(d))] = glorot(rng, 2 * e, 1, {2 * e, 1});
      }
      for (NodeKind m : kModalities) {
        const std::size_t in = pass_input_dim(cfg, l, kind, m);
        if (in == 0 || in == out) continue;
        store[gat_param_name(l, kind, std::string("R.") + to_string(m))] = glorot(rng, in, out, {in, out});
      }
    }
  }
  for (NodeKind m : {NodeKind::Face, NodeKind::Visual}) {
    const std::size_t in = cfg.final_dim(m);
    store[std::string("cls.") + to_string(m) + ".W"] = glorot(rng, in, 2, {in, 2});
    store[std::string("cls.") + to_string(m) + ".b"] = Tensor({2}, 0.0);
  }
  return store;
}

ParamVars bind_params(Tape& tape, const ParamStore& store, bool trainable) {
  ParamVars vars;
  for (const auto& [name, t] : store) vars.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
  return vars;
}

GatPassResult gat_layer_forward(const StmgGraph& graph, EdgeKind kind, const ModalityFeatures& in,
                                const ParamVars& params, const NetworkConfig& cfg, std::size_t layer) {
  const std::size_t out_dim = cfg.layer_output_dim(layer);
  const bool last = layer + 1 == cfg.layers;
  const std::vector<NodeId>& nodes = graph.nodes();

  // Participating nodes, and their rows within the per-modality feature matrices.
  std::vector<std::size_t> row_of(nodes.size());
  {
    std::size_t face_row = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      row_of[i] = nodes[i].kind == NodeKind::Face ? face_row++ : nodes[i].frame;
    }
  }
  GatPassResult result;
  std::vector<NodeKind> used;
  for (NodeKind m : kModalities) {
    if (StmgGraph::participates(m, kind)) used.push_back(m);
  }
  std::vector<std::size_t> offset(3, 0);
  {
    std::size_t acc = 0;
    for (NodeKind m : used) {
      const Var v = modality(in, m);
      if (!v.valid()) throw ContractError(std::string("missing ") + to_string(m) + " features");
      offset[static_cast<int>(m)] = acc;
      acc += v.value().rows();
    }
  }
  std::vector<std::size_t> position(nodes.size(), SIZE_MAX);
  std::vector<std::size_t> stack_index;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!StmgGraph::participates(nodes[i].kind, kind)) continue;
    position[i] = result.nodes.size();
    result.nodes.push_back(i);
    stack_index.push_back(offset[static_cast<int>(nodes[i].kind)] + row_of[i]);
  }
  const std::size_t p = result.nodes.size();
  Mask mask(p * p, 0);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t j : graph.neighborhood(result.nodes[a], kind)) mask[a * p + position[j]] = 1;
  }

  std::vector<std::size_t> diag(p);
  for (std::size_t a = 0; a < p; ++a) diag[a] = a * p + a;
  const std::size_t e = cfg.embed_dim;
  std::vector<std::size_t> first_half(e), second_half(e);
  for (std::size_t k = 0; k < e; ++k) {
    first_half[k] = k;
    second_half[k] = e + k;
  }

  std::vector<Var> head_out;
  for (std::size_t d = 0; d < cfg.heads; ++d) {
    std::vector<Var> transformed;
    for (NodeKind m : used) {
      const Var& w = param(params, gat_param_name(layer, kind, std::string("W.") + to_string(m) + ".h" + std::to_string(d)));
      const Var x = modality(in, m);
      if (w.value().rows() != x.value().cols()) {
        throw DimensionError(gat_param_name(layer, kind, std::string("W.") + to_string(m)) + " expects input width " +
                             std::to_string(w.value().rows()) + ", got " + std::to_string(x.value().cols()));
      }
      transformed.push_back(matmul(x, w));
    }
    const Var embedded = gather_rows(concat_rows(transformed), stack_index);
    const Var& a = param(params, gat_param_name(layer, kind, "a.h" + std::to_string(d)));
    if (a.value().size() != 2 * e) throw DimensionError("attention vector must have 2 * embed_dim entries");
    const Var a_self = reshape(take(a, first_half), {e, 1});
    const Var a_nbr = reshape(take(a, second_half), {e, 1});
    const Var logits = leaky_relu(outer_add(matmul(embedded, a_self), matmul(embedded, a_nbr)), cfg.slope);
    const Var alpha = masked_softmax(logits, mask);
    const Var mixed = add(scale(embedded, cfg.reweight), scale(matmul(alpha, embedded), 1.0 - cfg.reweight));
    head_out.push_back(leaky_relu(mixed, cfg.slope));
    result.self_attention.push_back(take(alpha, diag));
    result.attention.push_back({layer, kind, d, result.nodes, mask, alpha.value()});
  }

  Var z;
  if (last) {
    z = head_out[0];
    for (std::size_t d = 1; d < head_out.size(); ++d) z = add(z, head_out[d]);
    if (head_out.size() > 1) z = scale(z, 1.0 / static_cast<double>(head_out.size()));
  } else {
    z = head_out.size() == 1 ? head_out[0] : concat_cols(head_out);
  }

  std::vector<Var> residual_parts;
  for (NodeKind m : used) {
    const Var x = modality(in, m);
    if (x.value().cols() == out_dim) {
      residual_parts.push_back(x);
    } else {
      residual_parts.push_back(matmul(x, param(params, gat_param_name(layer, kind, std::string("R.") + to_string(m)))));
    }
  }
  z = add(z, gather_rows(concat_rows(residual_parts), stack_index));

  result.features = in;
  for (NodeKind m : used) {
    std::vector<std::size_t> rows;
    for (std::size_t a = 0; a < p; ++a) {
      if (nodes[result.nodes[a]].kind == m) rows.push_back(a);
    }
    set_modality(result.features, m, gather_rows(z, rows));
  }
  return result;
}

StmgOutputs stmg_forward(Tape& tape, const StmgGraph& graph, const NodeInputs& inputs, const ParamVars& params,
                         const NetworkConfig& cfg) {
  cfg.validate();
  std::size_t face_nodes = 0;
  StmgOutputs out;
  for (const NodeId& n : graph.nodes()) {
    if (n.kind == NodeKind::Face) {
      ++face_nodes;
      out.face_nodes.push_back(n);
    }
  }
  const std::size_t frames = graph.frame_count();
  auto check = [](const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
    if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
      throw ContractError(std::string(what) + " features have shape " + shape_str(t.shape()) + ", expected [" +
                          std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
  };
  check(inputs.face, face_nodes, cfg.face_dim, "face");
  check(inputs.visual, frames, cfg.visual_dim, "visual");
  check(inputs.audio, frames, cfg.audio_dim, "audio");

  ModalityFeatures f{tape.constant(inputs.face), tape.constant(inputs.visual), tape.constant(inputs.audio)};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    for (EdgeKind kind : kAllEdgeKinds) {
      GatPassResult r = gat_layer_forward(graph, kind, f, params, cfg, l);
      f = r.features;
      out.passes.insert(out.passes.end(), r.attention.begin(), r.attention.end());
      if (kind == EdgeKind::Spatial && l + 1 == cfg.layers) {
        out.attention.nodes.clear();
        for (std::size_t i : r.nodes) out.attention.nodes.push_back(graph.nodes()[i]);
        out.attention.heads = r.self_attention;
      }
    }
  }
  auto head = [&](Var x, const std::string& m) {
    const Var& w = param(params, "cls." + m + ".W");
    if (w.value().rows() != x.value().cols()) {
      throw DimensionError("classifier cls." + m + ".W expects width " + std::to_string(w.value().rows()) + ", got " +
                           std::to_string(x.value().cols()));
    }
    return add_row_bias(matmul(x, w), param(params, "cls." + m + ".b"));
  };
  out.face_logits = head(f.face, "face");
  out.visual_logits = head(f.visual, "visual");
  return out;
}

std::vector<NodeClass> classify_nodes(const Tensor& logits) {
  if (logits.cols() != 2) throw DimensionError("classify_nodes expects two logits per node");
  std::vector<NodeClass> out;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double l0 = logits.at(i, 0), l1 = logits.at(i, 1);
    NodeClass c;
    c.label = l1 > l0 ? 1 : 0;
    c.confidence = 1.0 / (1.0 + std::exp(l0 - l1));
    out.push_back(c);
  }
  return out;
}

Var attention_readout(const AttentionRecord& record, HeadReadout readout) {
  if (record.heads.empty()) throw ContractError("attention record is empty");
  if (readout == HeadReadout::FirstHead || record.heads.size() == 1) return record.heads[0];
  Var acc = record.heads[0];
  for (std::size_t d = 1; d < record.heads.size(); ++d) acc = add(acc, record.heads[d]);
  return scale(acc, 1.0 / static_cast<double>(record.heads.size()));
}

std::vector<std::vector<double>> attention_weights_for_saliency(const AttentionRecord& record, std::size_t faces,
                                                                std::size_t frames, HeadReadout readout) {
  std::vector<std::vector<double>> out(frames, std::vector<double>(faces + 1, 1.0));
  if (record.heads.empty()) return out;
  const Tensor values = attention_readout(record, readout).value();
  for (std::size_t k = 0; k < record.nodes.size(); ++k) {
    const NodeId& n = record.nodes[k];
    if (n.frame >= frames) throw RangeError("attention record frame out of range");
    if (n.kind == NodeKind::Face) {
      if (n.face >= faces) throw RangeError("attention record face out of range");
      out[n.frame][n.face] = values[k];
    } else if (n.kind == NodeKind::Visual) {
      out[n.frame][faces] = values[k];
    }
  }
  return out;
}

}  // namespace stmg

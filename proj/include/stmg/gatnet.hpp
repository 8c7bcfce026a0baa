#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stmg/graph.hpp"
#include "stmg/tape.hpp"

namespace stmg {

/// Named parameter tensors, iterated in name order.
using ParamStore = std::map<std::string, Tensor>;
/// The same parameters bound to a tape.
using ParamVars = std::map<std::string, Var>;

/// Hyper-parameters of the STMG network.
struct NetworkConfig {
  std::size_t face_dim = 32;
  std::size_t visual_dim = 16;
  std::size_t audio_dim = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t embed_dim = 32;
  /// Weight of a node's own transformed feature against its attention-weighted
  /// neighborhood: h = p * W v_i + (1 - p) * sum_j alpha_ij W v_j.
  double reweight = 0.2;
  double slope = kDefaultLeakySlope;

  void validate() const;
  /// Output width of layer `l`: heads * embed_dim, or embed_dim for the last layer.
  std::size_t layer_output_dim(std::size_t l) const;
  /// Width of the node features the classifier heads see.
  std::size_t final_dim(NodeKind kind) const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Glorot-uniform initialization of every GAT transform, attention vector,
/// residual projection and the two classifier heads.
ParamStore init_network_params(const NetworkConfig& cfg, std::uint64_t seed);

/// Parameter names used by one GAT block, e.g. "gat0.spatial.W.face.h1".
std::string gat_param_name(std::size_t layer, EdgeKind pass, const std::string& what);

/// Binds every tensor in `store` to `tape` as a differentiable leaf
/// (or as a constant when `trainable` is false).
ParamVars bind_params(Tape& tape, const ParamStore& store, bool trainable = true);

/// Node features in graph order per modality.
struct NodeInputs {
  Tensor face;    // {number of face nodes, face_dim}; face nodes in graph order
  Tensor visual;  // {frames, visual_dim}
  Tensor audio;   // {frames, audio_dim}
};

/// Attention coefficients of one head in one sub-graph pass, kept for diagnostics.
struct PassAttention {
  std::size_t layer = 0;
  EdgeKind kind = EdgeKind::Spatial;
  std::size_t head = 0;
  std::vector<std::size_t> nodes;  // graph node indices, row/column order of `alpha`
  Mask mask;
  Tensor alpha;
};

/// Self-attention coefficients alpha_ii of the spatial pass, per head, for every
/// face and visual node (in graph order).
struct AttentionRecord {
  std::vector<NodeId> nodes;
  std::vector<Var> heads;  // each {nodes.size()}
};

struct StmgOutputs {
  Var face_logits;    // {face nodes, 2}
  Var visual_logits;  // {frames, 2}
  std::vector<NodeId> face_nodes;
  AttentionRecord attention;
  std::vector<PassAttention> passes;
};

/// One multi-head GAT pass over the sub-graph of `kind`.
///
/// Features are held per modality; each modality's rows follow graph order.
/// Modalities outside the sub-graph pass through unchanged.
struct ModalityFeatures {
  Var face;
  Var visual;
  Var audio;
};

struct GatPassResult {
  ModalityFeatures features;
  std::vector<Var> self_attention;  // per head, participating nodes in graph order
  std::vector<std::size_t> nodes;   // participating graph node indices
  std::vector<PassAttention> attention;
};

GatPassResult gat_layer_forward(const StmgGraph& graph, EdgeKind kind, const ModalityFeatures& in,
                                const ParamVars& params, const NetworkConfig& cfg, std::size_t layer);

/// Full L-layer forward: spatial, temporal and multi-modal GAT in series per
/// layer, residual on every block, heads averaged in the last layer, then the
/// classifier heads. The attention record comes from the last layer's spatial pass.
StmgOutputs stmg_forward(Tape& tape, const StmgGraph& graph, const NodeInputs& inputs, const ParamVars& params,
                         const NetworkConfig& cfg);

/// Class decision per node: argmax with ties to class 0, confidence = softmax p(class 1).
struct NodeClass {
  int label = 0;
  double confidence = 0.0;
};
std::vector<NodeClass> classify_nodes(const Tensor& logits);

enum class HeadReadout { Average, FirstHead };

/// Per-frame saliency weights: alpha_nn per face (faces absent from a frame
/// get 1) followed by the visual node's alpha.
std::vector<std::vector<double>> attention_weights_for_saliency(const AttentionRecord& record, std::size_t faces,
                                                                std::size_t frames,
                                                                HeadReadout readout = HeadReadout::Average);

/// On-tape head average (or head 0) of the self-attention record.
Var attention_readout(const AttentionRecord& record, HeadReadout readout = HeadReadout::Average);

}  // namespace stmg

#include "stmg/graph.hpp"

#include <algorithm>

#include "stmg/error.hpp"

namespace stmg {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Face: return "face";
    case NodeKind::Visual: return "visual";
    case NodeKind::Audio: return "audio";
  }
  return "?";
}

const char* to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Spatial: return "spatial";
    case EdgeKind::Temporal: return "temporal";
    case EdgeKind::MultiModal: return "multimodal";
  }
  return "?";
}

std::string NodeId::str() const {
  std::string s = to_string(kind);
  if (kind == NodeKind::Face) s += "(" + std::to_string(face) + ")";
  return s + "@" + std::to_string(frame);
}

bool StmgGraph::participates(NodeKind node, EdgeKind kind) {
  return kind == EdgeKind::MultiModal || node != NodeKind::Audio;
}

StmgGraph::StmgGraph(std::vector<std::size_t> face_first_frames, std::size_t frames)
    : face_first_frames_(std::move(face_first_frames)), frames_(frames) {
  if (face_first_frames_.empty()) throw ConfigError("faces: graph needs at least one face");
  if (frames_ == 0) throw ConfigError("frames: graph needs at least one frame");
  for (std::size_t t0 : face_first_frames_) {
    if (t0 >= frames_) throw RangeError("face first frame " + std::to_string(t0) + " is outside the clip");
  }

  auto spatial_nodes = [&](std::size_t t) {
    std::vector<NodeId> out;
    for (std::size_t n = 0; n < face_first_frames_.size(); ++n) {
      if (face_first_frames_[n] <= t) out.push_back(NodeId::face_node(n, t));
    }
    out.push_back(NodeId::visual(t));
    return out;
  };

  for (std::size_t t = 0; t < frames_; ++t) {
    const std::vector<NodeId> sp = spatial_nodes(t);
    nodes_.insert(nodes_.end(), sp.begin(), sp.end());
    nodes_.push_back(NodeId::audio(t));
    for (std::size_t i = 0; i < sp.size(); ++i) {
      for (std::size_t j = i + 1; j < sp.size(); ++j) edges_.push_back({EdgeKind::Spatial, sp[i], sp[j], false});
      edges_.push_back({EdgeKind::MultiModal, NodeId::audio(t), sp[i], true});
      if (t + 1 < frames_) {
        NodeId next = sp[i];
        next.frame = t + 1;
        edges_.push_back({EdgeKind::Temporal, sp[i], next, true});
      }
    }
  }
  std::sort(nodes_.begin(), nodes_.end());
  std::sort(edges_.begin(), edges_.end());

  for (auto& per_kind : neighborhoods_) per_kind.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (EdgeKind kind : kAllEdgeKinds) {
      if (participates(nodes_[i].kind, kind)) neighborhoods_[static_cast<int>(kind)][i].push_back(i);
    }
  }
  for (const Edge& e : edges_) {
    const std::size_t s = index_of(e.src), d = index_of(e.dst);
    auto& nb = neighborhoods_[static_cast<int>(e.kind)];
    nb[d].push_back(s);
    if (!e.directed) nb[s].push_back(d);
  }
  for (auto& per_kind : neighborhoods_)
    for (auto& list : per_kind) std::sort(list.begin(), list.end());
}

std::size_t StmgGraph::edge_count(EdgeKind kind) const {
  return static_cast<std::size_t>(std::count_if(edges_.begin(), edges_.end(), [kind](const Edge& e) { return e.kind == kind; }));
}

bool StmgGraph::contains(const NodeId& node) const { return std::binary_search(nodes_.begin(), nodes_.end(), node); }

std::size_t StmgGraph::index_of(const NodeId& node) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end() || *it != node) throw RangeError("node " + node.str() + " is not in the graph");
  return static_cast<std::size_t>(it - nodes_.begin());
}

const std::vector<std::size_t>& StmgGraph::neighborhood(std::size_t node_index, EdgeKind kind) const {
  if (node_index >= nodes_.size()) throw RangeError("node index out of range");
  return neighborhoods_[static_cast<int>(kind)][node_index];
}

StmgGraph build_stmg(std::size_t faces, std::size_t frames) {
  if (faces == 0) throw ConfigError("faces: graph needs at least one face");
  return StmgGraph(std::vector<std::size_t>(faces, 0), frames);
}

StmgGraph extend_with_face(const StmgGraph& g, std::size_t first_frame) {
  if (first_frame >= g.frame_count()) {
    throw RangeError("extend_with_face: first frame " + std::to_string(first_frame) + " >= frame count " +
                     std::to_string(g.frame_count()));
  }
  std::vector<std::size_t> firsts = g.face_first_frames();
  firsts.push_back(first_frame);
  return StmgGraph(std::move(firsts), g.frame_count());
}

std::vector<NodeId> neighbors(const StmgGraph& g, const NodeId& node, EdgeKind kind) {
  std::vector<NodeId> out;
  for (std::size_t j : g.neighborhood(g.index_of(node), kind)) out.push_back(g.nodes()[j]);
  return out;
}

}  // namespace stmg

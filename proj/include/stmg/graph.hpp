#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace stmg {

enum class NodeKind : std::uint8_t { Face = 0, Visual = 1, Audio = 2 };
enum class EdgeKind : std::uint8_t { Spatial = 0, Temporal = 1, MultiModal = 2 };

inline constexpr EdgeKind kAllEdgeKinds[] = {EdgeKind::Spatial, EdgeKind::Temporal, EdgeKind::MultiModal};

const char* to_string(NodeKind kind);
const char* to_string(EdgeKind kind);

/// Graph node: a face, the visual (background) node or the audio node of one frame.
/// `face` is meaningful only for NodeKind::Face. Ordered by (frame, kind, face).
struct NodeId {
  NodeKind kind = NodeKind::Face;
  std::size_t face = 0;
  std::size_t frame = 0;

  static NodeId face_node(std::size_t n, std::size_t t) { return {NodeKind::Face, n, t}; }
  static NodeId visual(std::size_t t) { return {NodeKind::Visual, 0, t}; }
  static NodeId audio(std::size_t t) { return {NodeKind::Audio, 0, t}; }

  bool operator==(const NodeId&) const = default;
  std::strong_ordering operator<=>(const NodeId& o) const {
    if (auto c = frame <=> o.frame; c != 0) return c;
    if (auto c = kind <=> o.kind; c != 0) return c;
    return face <=> o.face;
  }
  std::string str() const;
};

/// Spatial edges are undirected and stored once with src < dst; temporal
/// (t -> t+1) and multi-modal (audio -> spatial node) edges are directed.
struct Edge {
  EdgeKind kind = EdgeKind::Spatial;
  NodeId src;
  NodeId dst;
  bool directed = false;

  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

/// Spatio-temporal multi-modal graph over face, visual and audio nodes.
///
/// Per frame the faces and the visual node form a fully connected spatial
/// clique; every spatial node links forward to its successor in the next
/// frame; the audio node links forward to every spatial node of its frame.
/// Faces may arrive mid-clip: a face exists for frames >= its first frame.
/// Immutable once built.
class StmgGraph {
 public:
  StmgGraph() = default;
  StmgGraph(std::vector<std::size_t> face_first_frames, std::size_t frames);

  std::size_t face_count() const { return face_first_frames_.size(); }
  std::size_t frame_count() const { return frames_; }
  std::size_t face_first_frame(std::size_t n) const { return face_first_frames_.at(n); }
  const std::vector<std::size_t>& face_first_frames() const { return face_first_frames_; }

  /// Nodes in (frame, kind, face) order.
  const std::vector<NodeId>& nodes() const { return nodes_; }
  /// Edges sorted by (kind, src, dst).
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count(EdgeKind kind) const;

  bool contains(const NodeId& node) const;
  /// Position of `node` in nodes(); throws RangeError for unknown nodes.
  std::size_t index_of(const NodeId& node) const;

  /// True if the node takes part in the sub-graph of `kind`.
  static bool participates(NodeKind node, EdgeKind kind);

  /// Attention neighborhood: in-neighbors under `kind` plus the node itself
  /// when it participates, as sorted node indices.
  const std::vector<std::size_t>& neighborhood(std::size_t node_index, EdgeKind kind) const;

 private:
  std::vector<std::size_t> face_first_frames_;
  std::size_t frames_ = 0;
  std::vector<NodeId> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighborhoods_[3];
};

/// Graph with N faces present in every one of T frames. Throws ConfigError for N = 0 or T = 0.
StmgGraph build_stmg(std::size_t faces, std::size_t frames);

/// Adds one face that appears at frame t0. Throws RangeError if t0 >= T.
StmgGraph extend_with_face(const StmgGraph& g, std::size_t first_frame);

/// Neighborhood of `node` under `kind` as node ids (see StmgGraph::neighborhood).
std::vector<NodeId> neighbors(const StmgGraph& g, const NodeId& node, EdgeKind kind);

}  // namespace stmg

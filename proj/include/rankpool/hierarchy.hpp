#pragma once

#include <string>
#include <vector>

#include "rankpool/feature_maps.hpp"
#include "rankpool/pooling.hpp"

namespace rankpool {

/// Per-layer settings of a hierarchical rank pooling network. Layer l
/// (0-based, l < depth - 1) slides a window of windows[l] frames with step
/// strides[l]; the last layer rank-pools the whole remaining sequence, so
/// its window and stride entries are not used. maps[l] is applied to the
/// input of layer l.
struct HierarchyConfig {
  std::size_t depth = 2;
  std::vector<std::size_t> windows{20, 20};
  std::vector<std::size_t> strides{1, 1};
  std::vector<MapKind> maps{MapKind::Ser, MapKind::Ser};
  SvrConfig svr{};

  /// Same window, stride and map at every layer.
  static HierarchyConfig uniform(std::size_t depth, std::size_t window = 20, std::size_t stride = 1,
                                 MapKind map = MapKind::Ser, SvrConfig svr = {}) {
    HierarchyConfig c;
    c.depth = depth;
    c.windows.assign(depth, window);
    c.strides.assign(depth, stride);
    c.maps.assign(depth, map);
    c.svr = svr;
    return c;
  }

  void validate() const {
    if (depth < 1) throw InvalidInput("hierarchy depth must be at least 1");
    if (windows.size() != depth || strides.size() != depth || maps.size() != depth)
      throw InvalidInput("hierarchy per-layer lists must have length equal to depth");
    for (std::size_t l = 0; l < depth; ++l) {
      if (windows[l] < 1) throw InvalidInput("window size must be at least 1");
      if (strides[l] < 1) throw InvalidInput("stride must be at least 1");
    }
    svr.validate();
  }

  /// Encoding dimension for input dimension d.
  std::size_t output_dim(std::size_t d) const {
    for (auto m : maps) d = map_output_dim(m, d);
    return d;
  }
};

struct Window {
  std::size_t start;   // 0-based index of the first frame
  std::size_t length;
};

/// Sequence of encodings emitted by one layer, with the window each came from.
struct LayerOutput {
  std::vector<Vector> elements;
  std::vector<Window> windows;

  std::size_t size() const noexcept { return elements.size(); }

  Matrix matrix() const {
    Matrix m(static_cast<Eigen::Index>(elements.size()), elements.empty() ? 0 : elements.front().size());
    for (std::size_t i = 0; i < elements.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = elements[i].transpose();
    return m;
  }
};

/// Number of full windows of size m with stride s over j frames; one
/// clamped window when j < m.
inline std::size_t layer_output_count(std::size_t j, std::size_t m, std::size_t s) noexcept {
  return j < m ? 1 : (j - m) / s + 1;
}

/// One rank pooling layer over the rows of x.
inline LayerOutput rank_pool_layer(const Matrix& x, std::size_t window, std::size_t stride, MapKind map,
                                   const SvrConfig& svr) {
  if (window < 1 || stride < 1) throw InvalidInput("window and stride must be at least 1");
  if (x.rows() < 1) throw InvalidInput("rank_pool_layer needs at least one frame");
  const auto j = static_cast<std::size_t>(x.rows());
  const std::size_t len = std::min(window, j);
  const std::size_t count = layer_output_count(j, window, stride);
  const Matrix mapped = apply_map_rows(x, map);
  LayerOutput out;
  out.elements.reserve(count);
  out.windows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * stride;
    try {
      auto sol = rank_pool(Matrix(mapped.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len))), svr);
      out.elements.push_back(std::move(sol.u.values));
    } catch (const SolverDidNotConverge& e) {
      throw e.with_context("window starting at frame " + std::to_string(start + 1));
    }
    out.windows.push_back({start, len});
  }
  return out;
}

inline LayerOutput rank_pool_layer(const FrameSequence& x, std::size_t window, std::size_t stride, MapKind map,
                                   const SvrConfig& svr) {
  require_valid(x);
  return rank_pool_layer(x.matrix(), window, stride, map, svr);
}

/// Hierarchical rank pooling forward pass: depth - 1 sliding-window layers
/// followed by one rank pool over the whole transformed top sequence.
inline Encoding hrp_encode(const Matrix& x, const HierarchyConfig& cfg) {
  cfg.validate();
  Matrix seq = x;
  for (std::size_t l = 0; l + 1 < cfg.depth; ++l) {
    try {
      seq = rank_pool_layer(seq, cfg.windows[l], cfg.strides[l], cfg.maps[l], cfg.svr).matrix();
    } catch (const SolverDidNotConverge& e) {
      throw e.with_context("layer " + std::to_string(l + 1));
    }
  }
  try {
    auto sol = rank_pool(apply_map_rows(seq, cfg.maps[cfg.depth - 1]), cfg.svr);
    return {std::move(sol.u.values), "hrp"};
  } catch (const SolverDidNotConverge& e) {
    throw e.with_context("layer " + std::to_string(cfg.depth));
  }
}

inline Encoding hrp_encode(const FrameSequence& x, const HierarchyConfig& cfg) {
  require_valid(x);
  return hrp_encode(x.matrix(), cfg);
}

/// Prefix encodings: element t - 2 is the rank pool of psi(x_1..x_t) for
/// t = 2..J.
inline LayerOutput recursive_rank_pool(const Matrix& x, MapKind map, const SvrConfig& svr) {
  if (x.rows() < 2) throw PrefixTooShort("recursive rank pooling needs at least 2 frames");
  const Matrix mapped = apply_map_rows(x, map);
  LayerOutput out;
  for (Eigen::Index t = 2; t <= x.rows(); ++t) {
    try {
      out.elements.push_back(rank_pool(Matrix(mapped.topRows(t)), svr).u.values);
    } catch (const SolverDidNotConverge& e) {
      throw e.with_context("prefix of length " + std::to_string(t));
    }
    out.windows.push_back({0, static_cast<std::size_t>(t)});
  }
  return out;
}

inline LayerOutput recursive_rank_pool(const FrameSequence& x, MapKind map, const SvrConfig& svr) {
  require_valid(x);
  return recursive_rank_pool(x.matrix(), map, svr);
}

/// Recursive layer followed by a final rank pool of the transformed prefix
/// encodings. Output dimension matches a depth-2 hierarchy with the same map.
inline Encoding recursive_encode(const FrameSequence& x, MapKind map, const SvrConfig& svr) {
  const Matrix layer = recursive_rank_pool(x, map, svr).matrix();
  auto sol = rank_pool(apply_map_rows(layer, map), svr);
  return {std::move(sol.u.values), "recursive-rank"};
}

}  // namespace rankpool

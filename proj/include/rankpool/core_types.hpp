#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rankpool/errors.hpp"

namespace rankpool {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// An ordered list of frames x_1..x_J, each a real vector of dimension D.
///
/// Frames are kept as separate vectors so that malformed input (ragged
/// dimensions, non-finite values) can be represented and reported by
/// validate_dataset instead of being rejected at construction time.
struct FrameSequence {
  std::vector<Vector> frames;
  std::string id;
  std::optional<int> label;

  FrameSequence() = default;
  explicit FrameSequence(std::vector<Vector> f, std::string seq_id = {},
                         std::optional<int> y = std::nullopt)
      : frames(std::move(f)), id(std::move(seq_id)), label(y) {}

  /// Build from the rows of a J x D matrix.
  static FrameSequence from_matrix(const Matrix& m, std::string seq_id = {},
                                   std::optional<int> y = std::nullopt) {
    std::vector<Vector> rows;
    rows.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).transpose());
    return FrameSequence(std::move(rows), std::move(seq_id), y);
  }

  std::size_t length() const noexcept { return frames.size(); }
  std::size_t dim() const noexcept { return frames.empty() ? 0 : static_cast<std::size_t>(frames.front().size()); }

  /// Frames stacked as rows of a J x D matrix. Requires uniform dimension.
  Matrix matrix() const {
    const auto d = static_cast<Eigen::Index>(dim());
    Matrix m(static_cast<Eigen::Index>(frames.size()), d);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      if (frames[t].size() != d) throw InvalidInput("sequence '" + id + "' has ragged frame dimensions");
      m.row(static_cast<Eigen::Index>(t)) = frames[t].transpose();
    }
    return m;
  }
};

/// Fixed-length descriptor produced by a temporal encoder.
struct Encoding {
  Vector values;
  std::string provenance;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// Rank-pool result plus solver diagnostics.
struct RankPoolSolution {
  Encoding u;
  double objective = 0.0;
  double grad_norm = 0.0;
  Vector residuals;           // e_t per frame
  std::vector<bool> active;   // e_t != 0
  int iterations = 0;
};

/// Labelled collection of sequences plus the class-name table. Labels are
/// dense indices into class_names.
struct Dataset {
  std::vector<FrameSequence> sequences;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t size() const noexcept { return sequences.size(); }
};

struct Violation {
  std::string id;
  std::string rule;
};

/// Invariant checks for a single sequence. `num_classes` of 0 skips the
/// label range check.
inline std::vector<Violation> validate_sequence(const FrameSequence& s, std::size_t num_classes = 0) {
  std::vector<Violation> out;
  if (s.frames.empty()) {
    out.push_back({s.id, "sequence has no frames"});
    return out;
  }
  const auto d = s.frames.front().size();
  if (d == 0) out.push_back({s.id, "frame dimension is zero"});
  bool ragged = false;
  bool non_finite = false;
  for (const auto& f : s.frames) {
    if (f.size() != d) ragged = true;
    if (!f.allFinite()) non_finite = true;
  }
  if (ragged) out.push_back({s.id, "frames have mixed dimensions"});
  if (non_finite) out.push_back({s.id, "frame contains a non-finite value"});
  if (num_classes > 0 && s.label && (*s.label < 0 || static_cast<std::size_t>(*s.label) >= num_classes))
    out.push_back({s.id, "label " + std::to_string(*s.label) + " outside [0, " + std::to_string(num_classes) + ")"});
  return out;
}

/// Report every invariant breach in `d`; empty iff the dataset is well formed.
inline std::vector<Violation> validate_dataset(const Dataset& d) {
  std::vector<Violation> out;
  for (const auto& s : d.sequences) {
    auto v = validate_sequence(s, d.num_classes());
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

/// Throws InvalidInput if `s` would be rejected by validation.
inline void require_valid(const FrameSequence& s) {
  auto v = validate_sequence(s);
  if (!v.empty()) throw InvalidInput("sequence '" + s.id + "': " + v.front().rule);
}

}  // namespace rankpool

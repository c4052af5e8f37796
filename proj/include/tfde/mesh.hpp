#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tfde {

using Point = std::array<double, 2>;

/// Bitmask of labelled boundary pieces.
///
/// 1D: kLambda0 = {x=0}, kLambda1 = {x=1}.
/// 2D: kLambda1 = bottom edge (y=0), kLambda2 = right edge (x=1),
///     kLambda3 = top edge (y=1), kLambda4 = left edge (x=0).
/// Corner nodes carry the labels of both adjacent edges.
class SegmentSet {
 public:
  enum Bit : std::uint8_t {
    kLambda0 = 1u << 0,
    kLambda1 = 1u << 1,
    kLambda2 = 1u << 2,
    kLambda3 = 1u << 3,
    kLambda4 = 1u << 4,
  };

  constexpr SegmentSet() = default;
  constexpr explicit SegmentSet(std::uint8_t bits) : bits_(bits) {}

  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool intersects(SegmentSet other) const { return (bits_ & other.bits_) != 0; }
  constexpr SegmentSet operator|(SegmentSet other) const {
    return SegmentSet(static_cast<std::uint8_t>(bits_ | other.bits_));
  }
  constexpr bool operator==(const SegmentSet&) const = default;

  /// Whole boundary for the given dimension.
  static SegmentSet all(int dimension);

  /// Parses "L0", "L1+L2", "all" (case-insensitive, separators '+', ',' or '|').
  static SegmentSet parse(std::string_view text, int dimension);
  std::string to_string() const;

 private:
  std::uint8_t bits_ = 0;
};

/// Uniform mesh of [0,1] (linear segments) or [0,1]^2 (bilinear quadrilaterals).
///
/// 2D nodes are numbered row-major: index = iy * (n + 1) + ix.
class SpatialMesh {
 public:
  int dimension() const { return dimension_; }
  int elements_per_side() const { return n_; }
  double spacing() const { return 1.0 / n_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_elements() const { return elements_.size(); }

  std::span<const Point> nodes() const { return nodes_; }
  const Point& node(std::size_t i) const { return nodes_[i]; }

  /// Element connectivity; 1D elements use the first two entries, 2D
  /// elements list the corners counter-clockwise from the lower left.
  std::span<const std::array<int, 4>> elements() const { return elements_; }
  int nodes_per_element() const { return dimension_ == 1 ? 2 : 4; }

  SegmentSet labels(std::size_t node) const { return labels_[node]; }
  bool is_boundary(std::size_t node) const { return !labels_[node].empty(); }

  /// All boundary nodes in ascending index order.
  std::span<const int> boundary_nodes() const { return boundary_nodes_; }
  std::span<const int> interior_nodes() const { return interior_nodes_; }

  /// Position of a node inside boundary_nodes(), or -1.
  int boundary_slot(std::size_t node) const { return boundary_slot_[node]; }

  /// Boundary nodes lying on any segment of `segments`.
  std::vector<int> segment_nodes(SegmentSet segments) const;

  /// Lumped (nodal-quadrature) volume weight of a node; the weights sum to 1.
  double nodal_weight(std::size_t node) const { return weights_[node]; }
  std::span<const double> nodal_weights() const { return weights_; }

  /// Lumped boundary measure of a node restricted to `segments`.
  /// In 1D this is 1 on a labelled end point and 0 elsewhere.
  double boundary_weight(std::size_t node, SegmentSet segments) const;

  /// Index of the node at grid position (ix, iy); iy is ignored in 1D.
  int grid_index(int ix, int iy = 0) const { return dimension_ == 1 ? ix : iy * (n_ + 1) + ix; }

 private:
  friend SpatialMesh build_mesh(int dimension, int elements_per_side);

  int dimension_ = 1;
  int n_ = 0;
  std::vector<Point> nodes_;
  std::vector<std::array<int, 4>> elements_;
  std::vector<SegmentSet> labels_;
  std::vector<int> boundary_nodes_;
  std::vector<int> interior_nodes_;
  std::vector<int> boundary_slot_;
  std::vector<double> weights_;
};

/// Builds the uniform mesh. Throws std::invalid_argument for dimension not in
/// {1,2} or elements_per_side < 2.
SpatialMesh build_mesh(int dimension, int elements_per_side);

}  // namespace tfde

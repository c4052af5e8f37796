#include "tfde/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace tfde {

SegmentSet SegmentSet::all(int dimension) {
  if (dimension == 1) return SegmentSet(kLambda0 | kLambda1);
  return SegmentSet(kLambda1 | kLambda2 | kLambda3 | kLambda4);
}

SegmentSet SegmentSet::parse(std::string_view text, int dimension) {
  std::string lowered;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (lowered == "all" || lowered == "boundary") return all(dimension);

  SegmentSet result;
  std::size_t start = 0;
  while (start <= lowered.size()) {
    std::size_t end = lowered.find_first_of("+,|", start);
    if (end == std::string::npos) end = lowered.size();
    const std::string token = lowered.substr(start, end - start);
    if (token.size() != 2 || (token[0] != 'l')) {
      throw std::invalid_argument("unknown boundary segment '" + token + "'");
    }
    const int id = token[1] - '0';
    const bool ok = dimension == 1 ? (id == 0 || id == 1) : (id >= 1 && id <= 4);
    if (!ok) {
      throw std::invalid_argument("segment '" + token + "' does not exist in " +
                                  std::to_string(dimension) + "D");
    }
    result = result | SegmentSet(static_cast<std::uint8_t>(1u << id));
    start = end + 1;
  }
  if (result.empty()) throw std::invalid_argument("empty boundary segment list");
  return result;
}

std::string SegmentSet::to_string() const {
  std::string out;
  for (int id = 0; id <= 4; ++id) {
    if (bits_ & (1u << id)) {
      if (!out.empty()) out += '+';
      out += 'L';
      out += static_cast<char>('0' + id);
    }
  }
  return out;
}

std::vector<int> SpatialMesh::segment_nodes(SegmentSet segments) const {
  std::vector<int> out;
  for (int b : boundary_nodes_) {
    if (labels_[b].intersects(segments)) out.push_back(b);
  }
  return out;
}

double SpatialMesh::boundary_weight(std::size_t node, SegmentSet segments) const {
  const SegmentSet hit(static_cast<std::uint8_t>(labels_[node].bits() & segments.bits()));
  if (hit.empty()) return 0.0;
  if (dimension_ == 1) return 1.0;
  // Each labelled edge through this node contributes half an edge length.
  int edges = 0;
  for (int id = 1; id <= 4; ++id) {
    if (hit.bits() & (1u << id)) ++edges;
  }
  const Point& p = nodes_[node];
  const bool corner = (p[0] == 0.0 || p[0] == 1.0) && (p[1] == 0.0 || p[1] == 1.0);
  return corner ? 0.5 * spacing() * edges : spacing() * edges;
}

SpatialMesh build_mesh(int dimension, int elements_per_side) {
  if (dimension != 1 && dimension != 2) {
    throw std::invalid_argument("mesh dimension must be 1 or 2");
  }
  if (elements_per_side < 2) {
    throw std::invalid_argument("elements_per_side must be at least 2");
  }
  SpatialMesh mesh;
  mesh.dimension_ = dimension;
  const int n = elements_per_side;
  mesh.n_ = n;
  const double h = 1.0 / n;

  if (dimension == 1) {
    mesh.nodes_.resize(n + 1);
    mesh.labels_.assign(n + 1, SegmentSet());
    mesh.weights_.assign(n + 1, h);
    for (int i = 0; i <= n; ++i) mesh.nodes_[i] = {i == n ? 1.0 : i * h, 0.0};
    for (int e = 0; e < n; ++e) mesh.elements_.push_back({e, e + 1, -1, -1});
    mesh.labels_[0] = SegmentSet(SegmentSet::kLambda0);
    mesh.labels_[n] = SegmentSet(SegmentSet::kLambda1);
    mesh.weights_[0] = mesh.weights_[n] = 0.5 * h;
  } else {
    const int side = n + 1;
    mesh.nodes_.resize(static_cast<std::size_t>(side) * side);
    mesh.labels_.assign(mesh.nodes_.size(), SegmentSet());
    mesh.weights_.assign(mesh.nodes_.size(), 0.0);
    auto coord = [&](int i) { return i == n ? 1.0 : i * h; };
    for (int iy = 0; iy <= n; ++iy) {
      for (int ix = 0; ix <= n; ++ix) {
        const int id = iy * side + ix;
        mesh.nodes_[id] = {coord(ix), coord(iy)};
        std::uint8_t bits = 0;
        if (iy == 0) bits |= SegmentSet::kLambda1;
        if (ix == n) bits |= SegmentSet::kLambda2;
        if (iy == n) bits |= SegmentSet::kLambda3;
        if (ix == 0) bits |= SegmentSet::kLambda4;
        mesh.labels_[id] = SegmentSet(bits);
        const double wx = (ix == 0 || ix == n) ? 0.5 * h : h;
        const double wy = (iy == 0 || iy == n) ? 0.5 * h : h;
        mesh.weights_[id] = wx * wy;
      }
    }
    for (int ey = 0; ey < n; ++ey) {
      for (int ex = 0; ex < n; ++ex) {
        const int ll = ey * side + ex;
        mesh.elements_.push_back({ll, ll + 1, ll + side + 1, ll + side});
      }
    }
  }

  mesh.boundary_slot_.assign(mesh.nodes_.size(), -1);
  for (std::size_t i = 0; i < mesh.nodes_.size(); ++i) {
    if (mesh.labels_[i].empty()) {
      mesh.interior_nodes_.push_back(static_cast<int>(i));
    } else {
      mesh.boundary_slot_[i] = static_cast<int>(mesh.boundary_nodes_.size());
      mesh.boundary_nodes_.push_back(static_cast<int>(i));
    }
  }
  return mesh;
}

}  // namespace tfde

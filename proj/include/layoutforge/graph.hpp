#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "core.hpp"
#include "tensor.hpp"

namespace layoutforge {

inline constexpr double kNominalThickness = 0.1;

enum class NodeKind { Wall = 0, Door = 1, Window = 2 };
inline constexpr std::size_t kNodeFeatureWidth = 5;  // kind one-hot (3) + normalized center (2)

struct StructuralNode {
    NodeKind kind;
    Vec2 center;
    Rect box;
};

/// Walls, doors and windows with their pairwise center distances.
struct StructuralGraph {
    std::vector<StructuralNode> nodes;
    std::vector<double> adjacency;  // row-major n x n, meters
    ad::Tensor node_features;       // [n x 5]
    Rect bounds;

    std::size_t size() const { return nodes.size(); }
    double distance(std::size_t i, std::size_t j) const { return adjacency[i * nodes.size() + j]; }
    ad::Tensor adjacency_tensor() const { return ad::Tensor::from({size(), size()}, adjacency); }
};

namespace detail {
inline double point_segment_distance(Vec2 p, const WallSegment& w) {
    const double dx = w.end.x - w.start.x, dy = w.end.y - w.start.y;
    const double len2 = dx * dx + dy * dy;
    const double t = std::clamp(((p.x - w.start.x) * dx + (p.y - w.start.y) * dy) / len2, 0.0, 1.0);
    return distance(p, {w.start.x + t * dx, w.start.y + t * dy});
}

/// Segment bounding box, widened to `thickness` along any axis thinner than it.
inline Rect inflate_segment(const WallSegment& w, double thickness) {
    Rect r{std::min(w.start.x, w.end.x), std::min(w.start.y, w.end.y), std::max(w.start.x, w.end.x),
           std::max(w.start.y, w.end.y)};
    if (r.width() < thickness) {
        const double c = (r.min_x + r.max_x) / 2;
        r.min_x = c - thickness / 2;
        r.max_x = c + thickness / 2;
    }
    if (r.height() < thickness) {
        const double c = (r.min_y + r.max_y) / 2;
        r.min_y = c - thickness / 2;
        r.max_y = c + thickness / 2;
    }
    return r;
}

/// Whether the wall nearest to an opening runs along x. Ties go to the
/// earliest wall in plan order.
inline bool opening_runs_along_x(const Opening& o, const FloorPlan& plan) {
    double best = std::numeric_limits<double>::infinity();
    bool horizontal = true;
    for (const auto& w : plan.walls()) {
        const double d = point_segment_distance(o.position, w);
        if (d < best) {
            best = d;
            horizontal = w.horizontal();
        }
    }
    return horizontal;
}
}  // namespace detail

/// Box of an opening: `width` along its wall, `thickness` across it.
inline Rect opening_box(const Opening& o, const FloorPlan& plan, double thickness = kNominalThickness) {
    return detail::opening_runs_along_x(o, plan) ? Rect::from_center(o.position, o.width, thickness)
                                                 : Rect::from_center(o.position, thickness, o.width);
}

inline Rect wall_box(const WallSegment& w, double thickness = kNominalThickness) {
    return detail::inflate_segment(w, thickness);
}

/// Node order: walls in plan order, then doors, then windows.
inline StructuralGraph encode_graph(const FloorPlan& plan) {
    if (plan.walls().empty()) throw GeometryError("encode_graph: plan has no structural elements");
    StructuralGraph g;
    g.bounds = plan.bounds();
    for (const auto& w : plan.walls()) g.nodes.push_back({NodeKind::Wall, w.midpoint(), wall_box(w)});
    for (auto kind : {OpeningKind::Door, OpeningKind::Window})
        for (const auto& o : plan.openings())
            if (o.kind == kind)
                g.nodes.push_back({kind == OpeningKind::Door ? NodeKind::Door : NodeKind::Window, o.position,
                                   opening_box(o, plan)});

    const std::size_t n = g.nodes.size();
    g.adjacency.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            g.adjacency[i * n + j] = g.adjacency[j * n + i] = distance(g.nodes[i].center, g.nodes[j].center);

    const Rect& b = plan.bounds();
    std::vector<double> feats(n * kNodeFeatureWidth, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* f = feats.data() + i * kNodeFeatureWidth;
        f[static_cast<std::size_t>(g.nodes[i].kind)] = 1.0;
        f[3] = (g.nodes[i].center.x - b.min_x) / b.width();
        f[4] = (g.nodes[i].center.y - b.min_y) / b.height();
    }
    g.node_features = ad::Tensor::from({n, kNodeFeatureWidth}, std::move(feats));
    return g;
}

/// Row (cx, cy, extent_x, extent_y) of a box, normalized by the room bounds.
inline std::array<double, 4> normalize_box(const Rect& box, const Rect& bounds) {
    const Vec2 c = box.center();
    return {(c.x - bounds.min_x) / bounds.width(), (c.y - bounds.min_y) / bounds.height(), box.width() / bounds.width(),
            box.height() / bounds.height()};
}

inline Rect denormalize_box(std::span<const double> row, const Rect& bounds) {
    const Vec2 c{bounds.min_x + row[0] * bounds.width(), bounds.min_y + row[1] * bounds.height()};
    return Rect::from_center(c, row[2] * bounds.width(), row[3] * bounds.height());
}

/// One normalized box row per node, [n x 4].
inline ad::Tensor structural_ground_truth(const StructuralGraph& g) {
    std::vector<double> rows;
    rows.reserve(g.size() * 4);
    for (const auto& node : g.nodes) {
        const auto r = normalize_box(node.box, g.bounds);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    return ad::Tensor::from({g.size(), 4}, std::move(rows));
}

inline ad::Tensor structural_ground_truth(const FloorPlan& plan) { return structural_ground_truth(encode_graph(plan)); }

// ---------------------------------------------------------------------------
// Message passing

/// k(d) = exp(-d^2 / tau^2): 1 at d = 0, decaying toward 0.
inline double distance_kernel(double d, double tau) { return std::exp(-(d * d) / (tau * tau)); }

struct MessagePassingWeights {
    ad::Tensor w_self;   // [in x out]
    ad::Tensor w_neigh;  // [in x out]
    ad::Tensor bias;     // [out]
};

/// Differentiable kernel matrix with the diagonal masked out.
inline ad::Tensor neighbor_weights(const ad::Tensor& distances, double tau) {
    const std::size_t n = distances.rows();
    if (distances.cols() != n) throw ShapeError("adjacency must be square, got " + ad::shape_str(distances.shape()));
    std::vector<double> mask(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0.0;
    const ad::Tensor k = ad::exp(ad::scale(ad::square(distances), -1.0 / (tau * tau)));
    return ad::mul(k, ad::Tensor::from({n, n}, std::move(mask)));
}

/// state'[i] = leaky_relu(W_self state[i] + W_neigh sum_{j != i} k(d_ij) state[j] + b)
inline ad::Tensor message_passing_layer(const ad::Tensor& states, const ad::Tensor& distances,
                                        const MessagePassingWeights& w, double tau, double alpha = 0.2) {
    if (distances.rows() != states.rows())
        throw ShapeError("message_passing_layer: " + ad::shape_str(states.shape()) + " states vs " +
                         ad::shape_str(distances.shape()) + " adjacency");
    if (w.w_self.rows() != states.cols() || w.w_neigh.rows() != states.cols() || w.w_self.cols() != w.w_neigh.cols())
        throw ShapeError("message_passing_layer: weights " + ad::shape_str(w.w_self.shape()) + " / " +
                         ad::shape_str(w.w_neigh.shape()) + " do not fit states " + ad::shape_str(states.shape()));
    const ad::Tensor messages = ad::matmul(neighbor_weights(distances, tau), states);
    const ad::Tensor pre = ad::add(ad::matmul(states, w.w_self), ad::matmul(messages, w.w_neigh));
    return ad::leaky_relu(ad::add_bias(pre, w.bias), alpha);
}

}  // namespace layoutforge

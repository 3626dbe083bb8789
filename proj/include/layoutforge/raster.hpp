#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "core.hpp"
#include "graph.hpp"
#include "tensor.hpp"

namespace layoutforge {

/// Fixed metric canvas the room is drawn on. The room's min corner sits
/// `margin` meters inside the canvas origin, so absolute room size stays
/// visible in the raster.
struct Canvas {
    double size = 6.4;
    double margin = 0.2;
};

struct RasterFrame {
    Vec2 origin;
    double cell = 0.0;
    int resolution = 0;

    static RasterFrame for_room(const Rect& bounds, int resolution, const Canvas& canvas = {}) {
        if (resolution < 4) throw GeometryError("raster resolution must be at least 4, got " + std::to_string(resolution));
        return {{bounds.min_x - canvas.margin, bounds.min_y - canvas.margin}, canvas.size / resolution, resolution};
    }

    Vec2 cell_center(int row, int col) const { return {origin.x + (col + 0.5) * cell, origin.y + (row + 0.5) * cell}; }

    /// Element boxes are widened to at least one cell so that thin walls and
    /// openings always hit a row of cell centers.
    double stroke() const { return std::max(kNominalThickness, cell); }
};

enum class PlanChannel { Interior = 0, Wall = 1, Door = 2, Window = 3 };
inline constexpr int kPlanChannels = 4;

/// Channel-major grid, row 0 at the lowest y.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::string> channels;
    std::vector<double> values;

    Raster() = default;
    Raster(int w, int h, std::vector<std::string> names)
        : width(w), height(h), channels(std::move(names)),
          values(channels.size() * static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0) {}

    std::size_t channel_count() const { return channels.size(); }
    std::size_t index(std::size_t c, int row, int col) const {
        return (c * static_cast<std::size_t>(height) + static_cast<std::size_t>(row)) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(col);
    }
    double at(std::size_t c, int row, int col) const { return values[index(c, row, col)]; }
    double& at(std::size_t c, int row, int col) { return values[index(c, row, col)]; }

    ad::Tensor to_tensor() const { return ad::Tensor::row(values); }

    static Raster from_tensor(const ad::Tensor& t, int w, int h, std::vector<std::string> names) {
        Raster r(w, h, std::move(names));
        if (t.size() != r.values.size())
            throw ShapeError("raster tensor " + ad::shape_str(t.shape()) + " does not hold " +
                             std::to_string(r.values.size()) + " values");
        std::copy(t.data().begin(), t.data().end(), r.values.begin());
        return r;
    }
};

inline std::vector<std::string> plan_channel_names() { return {"interior", "wall", "door", "window"}; }

namespace detail {
inline void paint(Raster& r, std::size_t channel, const RasterFrame& f, const Rect& box) {
    for (int row = 0; row < r.height; ++row)
        for (int col = 0; col < r.width; ++col)
            if (box.contains(f.cell_center(row, col))) r.at(channel, row, col) = 1.0;
}

inline std::vector<Rect> raster_wall_boxes(const FloorPlan& plan, double stroke) {
    std::vector<Rect> boxes;
    for (const auto& w : plan.walls()) boxes.push_back(wall_box(w, stroke));
    return boxes;
}
}  // namespace detail

/// Cell-center coverage rule: 1.0 where an element covers the cell center.
inline Raster rasterize_floorplan(const FloorPlan& plan, const RasterFrame& frame) {
    Raster r(frame.resolution, frame.resolution, plan_channel_names());
    const auto walls = detail::raster_wall_boxes(plan, frame.stroke());
    for (const auto& b : walls) detail::paint(r, 1, frame, b);
    for (const auto& o : plan.openings())
        detail::paint(r, o.kind == OpeningKind::Door ? 2 : 3, frame, opening_box(o, plan, frame.stroke()));
    for (int row = 0; row < r.height; ++row)
        for (int col = 0; col < r.width; ++col)
            if (plan.bounds().contains(frame.cell_center(row, col)) && r.at(1, row, col) == 0.0) r.at(0, row, col) = 1.0;
    return r;
}

inline Raster rasterize_floorplan(const FloorPlan& plan, int resolution, const Canvas& canvas = {}) {
    return rasterize_floorplan(plan, RasterFrame::for_room(plan.bounds(), resolution, canvas));
}

/// One channel per furniture category.
inline Raster rasterize_layout(const Layout& layout, const Rect& bounds, int resolution, const CategoryTable& categories,
                               const Canvas& canvas = {}) {
    const auto frame = RasterFrame::for_room(bounds, resolution, canvas);
    Raster r(resolution, resolution, categories);
    for (const auto& item : layout) {
        if (static_cast<std::size_t>(item.category_id()) >= categories.size())
            throw DataError("rasterize_layout: furniture category id " + std::to_string(item.category_id()) +
                            " is outside the category table");
        detail::paint(r, static_cast<std::size_t>(item.category_id()), frame, furniture_footprint(item));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Tracing a (generated) plan raster back into geometry

struct TracedPlan {
    std::optional<FloorPlan> plan;
    int interior_cells = 0;
    bool degenerate() const { return !plan.has_value(); }
};

namespace detail {
struct Component {
    std::vector<std::pair<int, int>> cells;  // (row, col)
};

template <typename Pred>
std::vector<Component> components(int w, int h, Pred on) {
    std::vector<int> label(static_cast<std::size_t>(w * h), -1);
    std::vector<Component> out;
    for (int r0 = 0; r0 < h; ++r0)
        for (int c0 = 0; c0 < w; ++c0) {
            if (!on(r0, c0) || label[static_cast<std::size_t>(r0 * w + c0)] >= 0) continue;
            Component comp;
            std::queue<std::pair<int, int>> q;
            q.push({r0, c0});
            label[static_cast<std::size_t>(r0 * w + c0)] = static_cast<int>(out.size());
            while (!q.empty()) {
                auto [r, c] = q.front();
                q.pop();
                comp.cells.push_back({r, c});
                constexpr int dr[] = {1, -1, 0, 0};
                constexpr int dc[] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nr = r + dr[k], nc = c + dc[k];
                    if (nr < 0 || nc < 0 || nr >= h || nc >= w) continue;
                    auto& l = label[static_cast<std::size_t>(nr * w + nc)];
                    if (l >= 0 || !on(nr, nc)) continue;
                    l = static_cast<int>(out.size());
                    q.push({nr, nc});
                }
            }
            out.push_back(std::move(comp));
        }
    return out;
}

inline Vec2 snap_to_boundary(Vec2 p, const Rect& b) {
    const double d[4] = {p.y - b.min_y, b.max_x - p.x, b.max_y - p.y, p.x - b.min_x};
    int best = 0;
    for (int k = 1; k < 4; ++k)
        if (std::abs(d[k]) < std::abs(d[best])) best = k;
    Vec2 q{std::clamp(p.x, b.min_x, b.max_x), std::clamp(p.y, b.min_y, b.max_y)};
    switch (best) {
        case 0: q.y = b.min_y; break;
        case 1: q.x = b.max_x; break;
        case 2: q.y = b.max_y; break;
        default: q.x = b.min_x; break;
    }
    return q;
}
}  // namespace detail

/// Thresholds a plan raster at 0.5 and recovers a rectangular room from the
/// largest wall/interior component plus one opening per door/window blob.
/// Fewer than 4 interior cells yields a degenerate result.
inline TracedPlan trace_floorplan(const Raster& r, const RasterFrame& frame, double threshold = 0.5) {
    TracedPlan out;
    auto solid = [&](int row, int col) { return r.at(0, row, col) >= threshold || r.at(1, row, col) >= threshold; };
    auto comps = detail::components(r.width, r.height, solid);
    if (comps.empty()) return out;
    const auto& room = *std::max_element(comps.begin(), comps.end(),
                                         [](const auto& a, const auto& b) { return a.cells.size() < b.cells.size(); });
    Rect solid_ext{1e300, 1e300, -1e300, -1e300}, inner_ext = solid_ext;
    auto grow = [](Rect& e, Vec2 c) { e = {std::min(e.min_x, c.x), std::min(e.min_y, c.y), std::max(e.max_x, c.x), std::max(e.max_y, c.y)}; };
    for (auto [row, col] : room.cells) {
        const Vec2 c = frame.cell_center(row, col);
        grow(solid_ext, c);
        if (r.at(0, row, col) >= threshold && r.at(1, row, col) < threshold) {
            ++out.interior_cells;
            grow(inner_ext, c);
        }
    }
    if (out.interior_cells < 4) return out;
    // each wall line sits mid-band between the outermost solid cell and the first interior cell
    const double h = frame.cell;
    const Rect bounds{(solid_ext.min_x + std::max(solid_ext.min_x, inner_ext.min_x - h)) / 2,
                      (solid_ext.min_y + std::max(solid_ext.min_y, inner_ext.min_y - h)) / 2,
                      (solid_ext.max_x + std::min(solid_ext.max_x, inner_ext.max_x + h)) / 2,
                      (solid_ext.max_y + std::min(solid_ext.max_y, inner_ext.max_y + h)) / 2};
    if (!(bounds.width() > 0 && bounds.height() > 0)) return out;

    std::vector<Opening> openings;
    for (std::size_t ch : {std::size_t{2}, std::size_t{3}}) {
        auto blobs =
            detail::components(r.width, r.height, [&](int row, int col) { return r.at(ch, row, col) >= threshold; });
        for (const auto& blob : blobs) {
            Vec2 mean{0, 0};
            Rect ext{1e300, 1e300, -1e300, -1e300};
            for (auto [row, col] : blob.cells) {
                const Vec2 c = frame.cell_center(row, col);
                mean.x += c.x;
                mean.y += c.y;
                ext = {std::min(ext.min_x, c.x), std::min(ext.min_y, c.y), std::max(ext.max_x, c.x), std::max(ext.max_y, c.y)};
            }
            mean.x /= static_cast<double>(blob.cells.size());
            mean.y /= static_cast<double>(blob.cells.size());
            const double width = std::max(ext.width(), ext.height()) + frame.cell;
            openings.emplace_back(ch == 2 ? OpeningKind::Door : OpeningKind::Window, detail::snap_to_boundary(mean, bounds),
                                  width);
        }
    }
    out.plan.emplace(FloorPlan::rectangle_walls(bounds), std::move(openings), bounds);
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

struct Rgb {
    std::uint8_t r, g, b;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    void set(int x, int y, Rgb c) {
        const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
        rgb[i] = c.r;
        rgb[i + 1] = c.g;
        rgb[i + 2] = c.b;
    }
};

namespace palette {
inline constexpr Rgb kBackground{200, 200, 200};
inline constexpr Rgb kInterior{255, 255, 255};
inline constexpr Rgb kWall{0, 0, 0};
inline constexpr Rgb kDoor{139, 69, 19};
inline constexpr Rgb kWindow{0, 200, 220};

inline Rgb furniture(int category) {
    static constexpr std::array<Rgb, 12> base = {{{230, 25, 75},
                                                  {60, 180, 75},
                                                  {255, 225, 25},
                                                  {0, 130, 200},
                                                  {245, 130, 48},
                                                  {145, 30, 180},
                                                  {70, 240, 240},
                                                  {240, 50, 230},
                                                  {210, 245, 60},
                                                  {250, 190, 212},
                                                  {0, 128, 128},
                                                  {170, 110, 40}}};
    return base[static_cast<std::size_t>(category) % base.size()];
}
}  // namespace palette

/// Top-down composite: interior, furniture, walls, doors, windows (last wins).
/// Each raster cell becomes a scale x scale block; north is up.
inline Image render_image(const Raster& plan, const Raster* layout, int scale = 8, double threshold = 0.5) {
    if (layout && (layout->width != plan.width || layout->height != plan.height))
        throw ShapeError("render_image: plan and layout rasters differ in resolution");
    Image img{plan.width * scale, plan.height * scale, {}};
    img.rgb.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3, 0);
    for (int row = 0; row < plan.height; ++row)
        for (int col = 0; col < plan.width; ++col) {
            Rgb c = palette::kBackground;
            if (plan.at(0, row, col) >= threshold) c = palette::kInterior;
            if (layout)
                for (std::size_t k = 0; k < layout->channel_count(); ++k)
                    if (layout->at(k, row, col) >= threshold) c = palette::furniture(static_cast<int>(k));
            if (plan.at(1, row, col) >= threshold) c = palette::kWall;
            if (plan.at(2, row, col) >= threshold) c = palette::kDoor;
            if (plan.at(3, row, col) >= threshold) c = palette::kWindow;
            const int y0 = (plan.height - 1 - row) * scale;
            for (int dy = 0; dy < scale; ++dy)
                for (int dx = 0; dx < scale; ++dx) img.set(col * scale + dx, y0 + dy, c);
        }
    return img;
}

inline std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
    return out;
}

/// Legend lines "<id> <name> #rrggbb" for every furniture category, then the structure colors.
inline std::string render_legend(const CategoryTable& categories) {
    std::string out;
    char buf[16];
    for (std::size_t k = 0; k < categories.size(); ++k) {
        const Rgb c = palette::furniture(static_cast<int>(k));
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
        out += std::to_string(k) + " " + categories[k] + " " + buf + "\n";
    }
    out += "wall #000000\ndoor #8b4513\nwindow #00c8dc\n";
    return out;
}

}  // namespace layoutforge

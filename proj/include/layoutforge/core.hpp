#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace layoutforge {

// Error hierarchy. The CLI maps each family onto an exit code.
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Axis-aligned rectangle, min corner inclusive.
struct Rect {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    static Rect from_center(Vec2 c, double extent_x, double extent_y) {
        return {c.x - extent_x / 2, c.y - extent_y / 2, c.x + extent_x / 2, c.y + extent_y / 2};
    }

    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
    Vec2 center() const { return {(min_x + max_x) / 2, (min_y + max_y) / 2}; }
    double diagonal() const { return std::hypot(width(), height()); }

    bool contains(Vec2 p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }

    Rect expanded(double margin) const {
        return {min_x - margin, min_y - margin, max_x + margin, max_y + margin};
    }

    bool intersects(const Rect& o) const {
        return min_x < o.max_x && o.min_x < max_x && min_y < o.max_y && o.min_y < max_y;
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

inline double intersection_area(const Rect& a, const Rect& b) {
    const double w = std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x);
    const double h = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

// ---------------------------------------------------------------------------
// Furniture

struct Size3 {
    double length = 0.0;  // along x
    double width = 0.0;   // along y
    double height = 0.0;

    friend bool operator==(const Size3&, const Size3&) = default;
};

/// Ordered list of furniture category names; ids index into it.
using CategoryTable = std::vector<std::string>;

inline const CategoryTable& default_category_table() {
    static const CategoryTable table = {"bed",   "tatami_platform", "nightstand", "wardrobe",
                                        "desk",  "chair",           "armchair",   "bookshelf",
                                        "toilet", "sink",           "shower",     "bathtub"};
    return table;
}

/// Heights (m) per default category; top-down work ignores them.
inline const std::vector<double>& default_furniture_heights() {
    static const std::vector<double> h = {0.5, 0.35, 0.55, 2.1, 0.75, 0.9, 0.8, 1.8, 0.75, 0.85, 2.0, 0.6};
    return h;
}

namespace furniture {
inline constexpr int kBed = 0;
inline constexpr int kTatamiPlatform = 1;
inline constexpr int kNightstand = 2;
inline constexpr int kWardrobe = 3;
inline constexpr int kDesk = 4;
inline constexpr int kChair = 5;
inline constexpr int kArmchair = 6;
inline constexpr int kBookshelf = 7;
inline constexpr int kToilet = 8;
inline constexpr int kSink = 9;
inline constexpr int kShower = 10;
inline constexpr int kBathtub = 11;
}  // namespace furniture

/// A furniture piece. Axis-aligned; there is no orientation field.
class FurnitureItem {
public:
    FurnitureItem(int category_id, Vec2 position, Size3 size)
        : category_id_(category_id), position_(position), size_(size) {
        if (category_id < 0) throw DataError("negative furniture category id " + std::to_string(category_id));
        if (!(size.length > 0 && size.width > 0 && size.height > 0))
            throw GeometryError("furniture size components must be strictly positive");
    }

    int category_id() const { return category_id_; }
    Vec2 position() const { return position_; }
    Size3 size() const { return size_; }

    friend bool operator==(const FurnitureItem&, const FurnitureItem&) = default;

private:
    int category_id_;
    Vec2 position_;
    Size3 size_;
};

using Layout = std::vector<FurnitureItem>;

/// Top-down rectangle of an item; height is ignored.
inline Rect furniture_footprint(const FurnitureItem& item) {
    return Rect::from_center(item.position(), item.size().length, item.size().width);
}

// ---------------------------------------------------------------------------
// Floor plan

struct WallSegment {
    Vec2 start;
    Vec2 end;

    WallSegment(Vec2 s, Vec2 e) : start(s), end(e) {
        if (s == e) throw GeometryError("wall segment has coincident endpoints");
    }
    Vec2 midpoint() const { return {(start.x + end.x) / 2, (start.y + end.y) / 2}; }
    bool horizontal() const { return std::abs(end.y - start.y) <= std::abs(end.x - start.x); }

    friend bool operator==(const WallSegment&, const WallSegment&) = default;
};

enum class OpeningKind { Door, Window };

inline std::string_view to_string(OpeningKind k) { return k == OpeningKind::Door ? "door" : "window"; }

struct Opening {
    OpeningKind kind;
    Vec2 position;  // center
    double width;

    Opening(OpeningKind k, Vec2 p, double w) : kind(k), position(p), width(w) {
        if (!(w > 0)) throw GeometryError("opening width must be positive");
    }

    friend bool operator==(const Opening&, const Opening&) = default;
};

inline constexpr double kOpeningTolerance = 0.01;

class FloorPlan {
public:
    FloorPlan(std::vector<WallSegment> walls, std::vector<Opening> openings, Rect bounds)
        : walls_(std::move(walls)), openings_(std::move(openings)), bounds_(bounds) {
        if (!(bounds_.width() > 0 && bounds_.height() > 0))
            throw GeometryError("floor plan bounds must have positive width and height");
        if (walls_.size() < 3) throw GeometryError("floor plan needs at least 3 wall segments");
        const Rect tol = bounds_.expanded(kOpeningTolerance);
        for (const auto& o : openings_)
            if (!tol.contains(o.position)) throw GeometryError("opening center lies outside the room bounds");
    }

    /// Closed rectangular room with walls ordered bottom, right, top, left.
    static std::vector<WallSegment> rectangle_walls(const Rect& b) {
        return {WallSegment({b.min_x, b.min_y}, {b.max_x, b.min_y}),
                WallSegment({b.max_x, b.min_y}, {b.max_x, b.max_y}),
                WallSegment({b.max_x, b.max_y}, {b.min_x, b.max_y}),
                WallSegment({b.min_x, b.max_y}, {b.min_x, b.min_y})};
    }

    const std::vector<WallSegment>& walls() const { return walls_; }
    const std::vector<Opening>& openings() const { return openings_; }
    const Rect& bounds() const { return bounds_; }

    friend bool operator==(const FloorPlan&, const FloorPlan&) = default;

private:
    std::vector<WallSegment> walls_;
    std::vector<Opening> openings_;
    Rect bounds_;
};

// ---------------------------------------------------------------------------
// Labels

enum class RoomType { Bedroom = 0, Bathroom = 1, Study = 2 };
inline constexpr std::array<RoomType, 3> kRoomTypes = {RoomType::Bedroom, RoomType::Bathroom, RoomType::Study};

inline std::string_view to_string(RoomType t) {
    switch (t) {
        case RoomType::Bedroom: return "bedroom";
        case RoomType::Bathroom: return "bathroom";
        case RoomType::Study: return "study";
    }
    return "unknown";
}

inline RoomType room_type_from_string(std::string_view s) {
    for (auto t : kRoomTypes)
        if (to_string(t) == s) return t;
    throw DataError("unknown room type '" + std::string(s) + "'");
}

struct RoomLabel {
    RoomType room_type = RoomType::Bedroom;
    int dim_category = 0;

    friend bool operator==(const RoomLabel&, const RoomLabel&) = default;
};

enum class GoverningSide { Shorter, Longer };

/// Per room type: ascending thresholds splitting the governing side length
/// into bins (left-inclusive), plus the sampling range used by the synthetic
/// generator.
struct DimensionTable {
    std::vector<double> thresholds;
    double min_length = 1.5;
    double max_length = 6.0;

    int bins() const { return static_cast<int>(thresholds.size()) + 1; }

    /// Half-open [lo, hi) band of governing lengths for one bin.
    std::pair<double, double> band(int bin) const {
        const double lo = bin == 0 ? min_length : thresholds[static_cast<std::size_t>(bin - 1)];
        const double hi = bin == bins() - 1 ? max_length : thresholds[static_cast<std::size_t>(bin)];
        return {lo, hi};
    }
};

struct LabelConfig {
    std::array<DimensionTable, 3> tables;
    GoverningSide governing = GoverningSide::Shorter;

    /// Bedroom carries the 2.7 / 3.4 m split plus two larger bins; 5 + 5 + 4 = 14.
    static LabelConfig defaults() {
        LabelConfig c;
        c.tables[0] = {{2.7, 3.4, 4.4, 5.2}, 2.0, 6.0};
        c.tables[1] = {{2.0, 2.5, 3.0, 3.5}, 1.5, 4.0};
        c.tables[2] = {{2.4, 3.0, 3.8}, 1.8, 5.0};
        return c;
    }

    const DimensionTable& table(RoomType t) const { return tables[static_cast<std::size_t>(t)]; }

    int subcategory_count() const {
        int n = 0;
        for (const auto& t : tables) n += t.bins();
        return n;
    }

    int offset(RoomType t) const {
        int n = 0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(t); ++i) n += tables[i].bins();
        return n;
    }

    bool valid(const RoomLabel& l) const { return l.dim_category >= 0 && l.dim_category < table(l.room_type).bins(); }

    void validate() const {
        for (auto t : kRoomTypes) {
            const auto& tab = table(t);
            if (!(tab.min_length > 0 && tab.max_length > tab.min_length))
                throw ConfigError("invalid dimension range for " + std::string(to_string(t)));
            double prev = tab.min_length;
            for (double th : tab.thresholds) {
                if (!(th > prev)) throw ConfigError("thresholds for " + std::string(to_string(t)) + " must ascend inside the range");
                prev = th;
            }
            if (!(tab.max_length > prev)) throw ConfigError("last threshold for " + std::string(to_string(t)) + " exceeds range");
        }
    }

    int global_index(const RoomLabel& l) const {
        if (!valid(l))
            throw DataError("label (" + std::string(to_string(l.room_type)) + ", " + std::to_string(l.dim_category) +
                            ") is not a configured subcategory");
        return offset(l.room_type) + l.dim_category;
    }

    RoomLabel from_global_index(int index) const {
        for (auto t : kRoomTypes) {
            const int off = offset(t);
            if (index >= off && index < off + table(t).bins()) return {t, index - off};
        }
        throw DataError("subcategory index " + std::to_string(index) + " out of range");
    }
};

inline double governing_length(const Rect& bounds, GoverningSide side) {
    return side == GoverningSide::Shorter ? std::min(bounds.width(), bounds.height())
                                          : std::max(bounds.width(), bounds.height());
}

/// Dimensional category of a room from its governing side length.
inline RoomLabel label_from_dimensions(const Rect& bounds, RoomType room_type,
                                       const LabelConfig& config = LabelConfig::defaults()) {
    if (!(bounds.width() > 0 && bounds.height() > 0))
        throw GeometryError("label_from_dimensions: room dimensions must be positive");
    const double len = governing_length(bounds, config.governing);
    const auto& th = config.table(room_type).thresholds;
    const auto bin = std::upper_bound(th.begin(), th.end(), len) - th.begin();
    return {room_type, static_cast<int>(bin)};
}

inline std::vector<double> one_hot_label(const RoomLabel& label, const LabelConfig& config = LabelConfig::defaults()) {
    std::vector<double> v(static_cast<std::size_t>(config.subcategory_count()), 0.0);
    v[static_cast<std::size_t>(config.global_index(label))] = 1.0;
    return v;
}

// ---------------------------------------------------------------------------
// Scene

struct Scene {
    std::uint64_t scene_id = 0;
    FloorPlan floor_plan;
    Layout layout;
    RoomLabel label;

    friend bool operator==(const Scene&, const Scene&) = default;
};

/// Throws DataError / GeometryError if the scene breaks a dataset invariant.
inline void validate_scene(const Scene& s, const CategoryTable& categories, const LabelConfig& labels) {
    const std::string where = "scene " + std::to_string(s.scene_id) + ": ";
    if (!labels.valid(s.label)) throw DataError(where + "label is not a configured subcategory");
    for (const auto& item : s.layout) {
        if (static_cast<std::size_t>(item.category_id()) >= categories.size())
            throw DataError(where + "unknown furniture category id " + std::to_string(item.category_id()));
        if (!furniture_footprint(item).intersects(s.floor_plan.bounds()))
            throw GeometryError(where + "furniture footprint lies outside the room");
    }
    const auto expect = label_from_dimensions(s.floor_plan.bounds(), s.label.room_type, labels);
    if (expect.dim_category != s.label.dim_category)
        throw DataError(where + "dim_category " + std::to_string(s.label.dim_category) +
                        " disagrees with room dimensions (expected " + std::to_string(expect.dim_category) + ")");
}

}  // namespace layoutforge

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "nn.hpp"
#include "rng.hpp"

namespace layoutforge {

inline constexpr int kSchemaVersion = 1;

struct Dataset {
    CategoryTable categories = default_category_table();
    std::vector<Scene> scenes;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetConfig {
    std::uint64_t seed = 0;
    LabelConfig labels = LabelConfig::defaults();
    CategoryTable categories = default_category_table();
    /// Scenes per global subcategory index; size must equal labels.subcategory_count().
    std::vector<int> counts;
    /// Longer side is sampled up to this much beyond the governing side.
    double aspect_slack = 1.0;

    /// Spreads `total` scenes evenly over room types, then over each type's bins.
    static std::vector<int> balanced_counts(int total, const LabelConfig& labels) {
        std::vector<int> counts(static_cast<std::size_t>(labels.subcategory_count()), 0);
        for (int i = 0; i < total; ++i) {
            const auto type = kRoomTypes[static_cast<std::size_t>(i % 3)];
            const int within = (i / 3) % labels.table(type).bins();
            ++counts[static_cast<std::size_t>(labels.offset(type) + within)];
        }
        return counts;
    }
};

namespace detail {

inline double cm(double v) { return std::round(v * 100.0) / 100.0; }

/// Shortest decimal with at most 9 significant digits.
inline double sig9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

class LayoutBuilder {
public:
    LayoutBuilder(Rng& rng, double w, double d) : rng_(rng), w_(w), d_(d) {}

    void add(int category, double cx, double cy, double length, double width, double jitter = 0.05) {
        std::uniform_real_distribution<double> j(-jitter, jitter);
        length = cm(std::min(length, w_));
        width = cm(std::min(width, d_));
        cx = cm(std::clamp(cx + (jitter > 0 ? j(rng_) : 0.0), length / 2, w_ - length / 2));
        cy = cm(std::clamp(cy + (jitter > 0 ? j(rng_) : 0.0), width / 2, d_ - width / 2));
        const auto& heights = default_furniture_heights();
        const double h = static_cast<std::size_t>(category) < heights.size() ? heights[static_cast<std::size_t>(category)] : 1.0;
        items_.emplace_back(category, Vec2{cx, cy}, Size3{length, width, h});
    }

    Layout take() { return std::move(items_); }

private:
    Rng& rng_;
    double w_, d_;
    Layout items_;
};

/// Smallest x-extent each rule set needs.
inline double min_room_width(RoomType t, int cat) {
    switch (t) {
        case RoomType::Bedroom: return cat == 0 ? 2.9 : 2.6;
        case RoomType::Bathroom: return cat == 0 ? 1.8 : (cat == 1 ? 2.2 : 3.0);
        case RoomType::Study: return std::array{2.0, 2.4, 3.0, 3.8}[static_cast<std::size_t>(std::min(cat, 3))];
    }
    return 0.0;
}

inline Layout furnish(Rng& rng, RoomType type, int cat, double w, double d) {
    using namespace furniture;
    LayoutBuilder b(rng, w, d);
    switch (type) {
        case RoomType::Bedroom:
            if (cat == 0) {
                b.add(kTatamiPlatform, 1.0, d / 2, 2.0, d, 0.0);
                b.add(kWardrobe, w - 0.3, d - 0.8, 0.6, 1.6);
                break;
            }
            {
                std::uniform_real_distribution<double> j(-0.05, 0.05);
                const double bx = cm(w / 2 + j(rng));
                b.add(kBed, bx, d - 1.0, 1.6, 2.0, 0.0);
                b.add(kNightstand, bx - 1.05, d - 0.2, 0.45, 0.4, 0.0);
                b.add(kNightstand, bx + 1.05, d - 0.2, 0.45, 0.4, 0.0);
            }
            b.add(kWardrobe, 0.3, 1.0, 0.6, 1.6);
            if (cat >= 2) {
                b.add(kDesk, w - 0.3, 1.2, 0.6, 1.2);
                b.add(kChair, w - 0.9, 1.2, 0.5, 0.5);
            }
            if (cat >= 3) b.add(kArmchair, w - 0.5, d / 2 + 0.3, 0.8, 0.8);
            if (cat >= 4) b.add(kBookshelf, 0.2, d / 2 + 0.6, 0.4, 1.2);
            break;
        case RoomType::Bathroom:
            b.add(kToilet, 0.35, d - 0.35, 0.4, 0.7);
            b.add(kSink, w - 0.5, d - 0.225, 0.6, 0.45);
            if (cat == 1 || cat >= 3) b.add(kShower, w - 0.45, cat == 1 ? 0.45 : d / 2, 0.9, 0.9);
            if (cat >= 2) b.add(kBathtub, w - 0.85, 0.375, 1.7, 0.75);
            if (cat >= 4) {
                b.add(kSink, w - 1.2, d - 0.225, 0.6, 0.45);
                b.add(kWardrobe, 0.3, d / 2, 0.6, 1.0);
            }
            break;
        case RoomType::Study:
            b.add(kDesk, w / 2, d - 0.3, 1.2, 0.6);
            b.add(kChair, w / 2, d - 0.85, 0.5, 0.5);
            if (cat >= 1) b.add(kBookshelf, 0.2, d / 2, 0.4, 1.2);
            if (cat >= 2) b.add(kArmchair, w - 0.5, 0.9, 0.8, 0.8);
            if (cat >= 3) b.add(kBookshelf, w - 0.2, d / 2 + 0.5, 0.4, 1.2);
            break;
    }
    return b.take();
}

}  // namespace detail

/// One procedural room of the requested subcategory. Coordinates are
/// quantized to centimeters; the room's min corner is the origin.
inline Scene synthesize_scene(Rng& rng, RoomType room_type, int dim_category, const DatasetConfig& config) {
    const RoomLabel label{room_type, dim_category};
    if (!config.labels.valid(label))
        throw DataError("synthesize_scene: (" + std::string(to_string(room_type)) + ", " + std::to_string(dim_category) +
                        ") is not a configured subcategory");
    const auto& table = config.labels.table(room_type);
    const auto [lo, hi] = table.band(dim_category);
    const auto lo_cm = static_cast<long>(std::ceil(lo * 100 - 1e-9));
    const auto hi_cm = static_cast<long>(std::ceil(hi * 100 - 1e-9)) - 1;

    const std::uint64_t scene_id = rng();
    const double governing = static_cast<double>(std::uniform_int_distribution<long>(lo_cm, std::max(lo_cm, hi_cm))(rng)) / 100.0;

    double w = 0.0, d = 0.0;  // x extent, y extent
    const double min_w = detail::min_room_width(room_type, dim_category);
    if (config.labels.governing == GoverningSide::Shorter) {
        d = governing;
        const double w_lo = std::max(governing, min_w);
        const double w_hi = std::max(w_lo, std::min(governing + config.aspect_slack, table.max_length));
        w = detail::cm(std::uniform_real_distribution<double>(w_lo, w_hi)(rng));
    } else {
        w = governing;
        const double d_lo = std::max(table.min_length, governing - config.aspect_slack);
        d = detail::cm(std::uniform_real_distribution<double>(d_lo, governing)(rng));
    }
    const Rect bounds{0.0, 0.0, w, d};

    std::vector<Opening> openings;
    const double door_w = room_type == RoomType::Bathroom ? 0.7 : 0.8;
    const double door_x = room_type == RoomType::Bathroom
                              ? detail::cm(std::uniform_real_distribution<double>(0.5, 0.7)(rng))
                              : detail::cm(w / 2 + std::uniform_real_distribution<double>(-0.2, 0.2)(rng));
    openings.emplace_back(OpeningKind::Door, Vec2{door_x, 0.0}, door_w);
    const double win_w = detail::cm(std::clamp(w - 0.6, 0.4, 1.2));
    const double win_x = detail::cm(std::clamp(w / 2 + std::uniform_real_distribution<double>(-0.3, 0.3)(rng),
                                               win_w / 2 + 0.1, w - win_w / 2 - 0.1));
    openings.emplace_back(OpeningKind::Window, Vec2{win_x, d}, win_w);
    if (room_type != RoomType::Bathroom && dim_category >= 2) {
        const double side_w = detail::cm(std::clamp(d - 0.6, 0.4, 1.0));
        openings.emplace_back(OpeningKind::Window, Vec2{w, detail::cm(d / 2 + std::uniform_real_distribution<double>(-0.2, 0.2)(rng))},
                              side_w);
    }

    Scene s{scene_id, FloorPlan(FloorPlan::rectangle_walls(bounds), std::move(openings), bounds),
            detail::furnish(rng, room_type, dim_category, w, d), label};
    validate_scene(s, config.categories, config.labels);
    return s;
}

/// Scene i draws from its own stream seeded by (seed, i), so output does not
/// depend on how synthesis is scheduled.
inline Dataset synthesize_dataset(const DatasetConfig& config) {
    config.labels.validate();
    const auto n_sub = static_cast<std::size_t>(config.labels.subcategory_count());
    if (config.counts.size() != n_sub)
        throw ConfigError("dataset counts list has " + std::to_string(config.counts.size()) + " entries, expected " +
                          std::to_string(n_sub));
    Dataset ds;
    ds.categories = config.categories;
    std::unordered_set<std::uint64_t> ids;
    std::uint64_t index = 0;
    for (std::size_t g = 0; g < n_sub; ++g) {
        if (config.counts[g] < 0) throw ConfigError("negative scene count");
        const RoomLabel label = config.labels.from_global_index(static_cast<int>(g));
        for (int k = 0; k < config.counts[g]; ++k) {
            Rng rng(derive_seed(config.seed, index++));
            Scene s = synthesize_scene(rng, label.room_type, label.dim_category, config);
            if (!ids.insert(s.scene_id).second) throw DataError("scene id collision");
            ds.scenes.push_back(std::move(s));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// JSON

using Json = nlohmann::ordered_json;

namespace detail {
inline Json scene_to_json(const Scene& s, std::optional<bool> degenerate) {
    const auto& b = s.floor_plan.bounds();
    Json j;
    j["scene_id"] = s.scene_id;
    j["room_type"] = std::string(to_string(s.label.room_type));
    j["dim_category"] = s.label.dim_category;
    j["bounds"] = {sig9(b.min_x), sig9(b.min_y), sig9(b.max_x), sig9(b.max_y)};
    j["walls"] = Json::array();
    for (const auto& w : s.floor_plan.walls())
        j["walls"].push_back({sig9(w.start.x), sig9(w.start.y), sig9(w.end.x), sig9(w.end.y)});
    j["openings"] = Json::array();
    for (const auto& o : s.floor_plan.openings())
        j["openings"].push_back({{"kind", std::string(to_string(o.kind))},
                                 {"x", sig9(o.position.x)},
                                 {"y", sig9(o.position.y)},
                                 {"width", sig9(o.width)}});
    j["furniture"] = Json::array();
    for (const auto& f : s.layout)
        j["furniture"].push_back({{"category_id", f.category_id()},
                                  {"x", sig9(f.position().x)},
                                  {"y", sig9(f.position().y)},
                                  {"length", sig9(f.size().length)},
                                  {"width", sig9(f.size().width)},
                                  {"height", sig9(f.size().height)}});
    if (degenerate) j["degenerate"] = *degenerate;
    return j;
}

inline Scene scene_from_json(const Json& j) {
    const auto& b = j.at("bounds");
    if (!b.is_array() || b.size() != 4) throw DataError("bounds must be [min_x, min_y, max_x, max_y]");
    const Rect bounds{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    std::vector<WallSegment> walls;
    for (const auto& w : j.at("walls")) {
        if (!w.is_array() || w.size() != 4) throw DataError("wall entries must be [x1, y1, x2, y2]");
        walls.emplace_back(Vec2{w[0].get<double>(), w[1].get<double>()}, Vec2{w[2].get<double>(), w[3].get<double>()});
    }
    std::vector<Opening> openings;
    for (const auto& o : j.at("openings")) {
        const auto kind = o.at("kind").get<std::string>();
        if (kind != "door" && kind != "window") throw DataError("unknown opening kind '" + kind + "'");
        openings.emplace_back(kind == "door" ? OpeningKind::Door : OpeningKind::Window,
                              Vec2{o.at("x").get<double>(), o.at("y").get<double>()}, o.at("width").get<double>());
    }
    Layout layout;
    for (const auto& f : j.at("furniture"))
        layout.emplace_back(f.at("category_id").get<int>(), Vec2{f.at("x").get<double>(), f.at("y").get<double>()},
                            Size3{f.at("length").get<double>(), f.at("width").get<double>(), f.at("height").get<double>()});
    return Scene{j.at("scene_id").get<std::uint64_t>(), FloorPlan(std::move(walls), std::move(openings), bounds),
                 std::move(layout),
                 RoomLabel{room_type_from_string(j.at("room_type").get<std::string>()), j.at("dim_category").get<int>()}};
}

inline std::string line_col(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col) + " (byte " + std::to_string(byte) + ")";
}
}  // namespace detail

/// Serialized dataset text. Per-scene degenerate flags are written when given.
inline std::string dump_dataset(const Dataset& ds, const std::vector<std::optional<bool>>& degenerate = {}) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["category_table"] = ds.categories;
    doc["scenes"] = Json::array();
    for (std::size_t i = 0; i < ds.scenes.size(); ++i)
        doc["scenes"].push_back(detail::scene_to_json(ds.scenes[i], i < degenerate.size() ? degenerate[i] : std::nullopt));
    return doc.dump(1) + "\n";
}

/// Parses and validates a whole document; nothing is returned on any error.
inline Dataset parse_dataset(std::string_view text, const LabelConfig& labels = LabelConfig::defaults()) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw DataError("dataset parse error at " + detail::line_col(text, e.byte) + ": " + e.what());
    }
    Dataset ds;
    std::size_t idx = 0;
    try {
        const int version = doc.at("schema_version").get<int>();
        if (version != kSchemaVersion)
            throw DataError("dataset schema_version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kSchemaVersion) + ")");
        ds.categories = doc.at("category_table").get<CategoryTable>();
        std::unordered_set<std::uint64_t> ids;
        for (const auto& js : doc.at("scenes")) {
            Scene s = detail::scene_from_json(js);
            validate_scene(s, ds.categories, labels);
            if (!ids.insert(s.scene_id).second) throw DataError("duplicate scene_id " + std::to_string(s.scene_id));
            ds.scenes.push_back(std::move(s));
            ++idx;
        }
    } catch (const Json::exception& e) {
        throw DataError("dataset schema error in scene " + std::to_string(idx) + ": " + e.what());
    } catch (const GeometryError& e) {
        throw DataError("dataset scene " + std::to_string(idx) + ": " + e.what());
    }
    return ds;
}

inline void save_scenes(const std::string& path, const Dataset& ds) { nn::write_file(path, dump_dataset(ds)); }

inline Dataset load_scenes(const std::string& path, const LabelConfig& labels = LabelConfig::defaults()) {
    return parse_dataset(nn::read_file(path), labels);
}

// ---------------------------------------------------------------------------
// Split

struct SplitIndex {
    std::vector<std::uint64_t> train_ids;
    std::vector<std::uint64_t> test_ids;
};

/// Seeded shuffle of the scene ids, then a prefix of round(fraction * N) for training.
inline SplitIndex split(const Dataset& ds, std::uint64_t seed, double train_fraction = 0.9) {
    const std::size_t n = ds.scenes.size();
    if (n < 10) throw DataError("split needs at least 10 scenes, dataset has " + std::to_string(n));
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train fraction must lie in (0,1)");
    std::vector<std::uint64_t> ids;
    for (const auto& s : ds.scenes) ids.push_back(s.scene_id);
    Rng rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    SplitIndex out;
    out.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    return out;
}

/// Scenes with the given ids, in id-list order.
inline std::vector<Scene> select(const Dataset& ds, const std::vector<std::uint64_t>& ids) {
    std::map<std::uint64_t, const Scene*> by_id;
    for (const auto& s : ds.scenes) by_id[s.scene_id] = &s;
    std::vector<Scene> out;
    for (auto id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("scene id " + std::to_string(id) + " not in dataset");
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace layoutforge

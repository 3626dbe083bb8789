#include <gtest/gtest.h>

#include <random>
#include <set>

#include <layoutforge/core.hpp>

using namespace layoutforge;

namespace {

Rect room(double w, double d) { return {0.0, 0.0, w, d}; }

FloorPlan rectangle_plan(double w, double d, std::vector<Opening> openings = {}) {
    return FloorPlan(FloorPlan::rectangle_walls(room(w, d)), std::move(openings), room(w, d));
}

}  // namespace

TEST(Rect, FootprintIsCenteredOnPosition) {
    const FurnitureItem a(0, {1, 1}, {2, 2, 0.5});
    EXPECT_EQ(furniture_footprint(a), (Rect{0, 0, 2, 2}));
    const FurnitureItem b(0, {0, 0}, {1, 1, 0.5});
    EXPECT_EQ(furniture_footprint(b), (Rect{-0.5, -0.5, 0.5, 0.5}));
}

TEST(Rect, IntersectionArea) {
    EXPECT_DOUBLE_EQ(intersection_area({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0);
    EXPECT_DOUBLE_EQ(intersection_area({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0);
    EXPECT_DOUBLE_EQ(intersection_area({0, 0, 4, 4}, {1, 1, 2, 2}), 1.0);
}

TEST(Furniture, RejectsDegenerateSize) {
    EXPECT_THROW(FurnitureItem(0, {0, 0}, {0.0, 1, 1}), GeometryError);
    EXPECT_THROW(FurnitureItem(0, {0, 0}, {1, -1, 1}), GeometryError);
    EXPECT_THROW(FurnitureItem(0, {0, 0}, {1, 1, 0}), GeometryError);
    EXPECT_THROW(FurnitureItem(-1, {0, 0}, {1, 1, 1}), DataError);
}

TEST(FloorPlan, RejectsBadGeometry) {
    EXPECT_THROW(WallSegment({1, 1}, {1, 1}), GeometryError);
    EXPECT_THROW(Opening(OpeningKind::Door, {0, 0}, 0.0), GeometryError);
    const auto walls = FloorPlan::rectangle_walls(room(3, 3));
    EXPECT_THROW(FloorPlan(walls, {}, Rect{0, 0, 0, 3}), GeometryError);
    EXPECT_THROW(FloorPlan({walls[0], walls[1]}, {}, room(3, 3)), GeometryError);
    EXPECT_THROW(rectangle_plan(3, 3, {Opening(OpeningKind::Door, {1.5, -0.5}, 0.8)}), GeometryError);
    // openings may sit on the wall line within tolerance
    EXPECT_NO_THROW(rectangle_plan(3, 3, {Opening(OpeningKind::Door, {1.5, -0.005}, 0.8)}));
}

TEST(FloorPlan, RectangleWallOrder) {
    const auto w = FloorPlan::rectangle_walls(room(4, 3));
    ASSERT_EQ(w.size(), 4u);
    EXPECT_EQ(w[0].midpoint(), (Vec2{2, 0}));
    EXPECT_EQ(w[1].midpoint(), (Vec2{4, 1.5}));
    EXPECT_EQ(w[2].midpoint(), (Vec2{2, 3}));
    EXPECT_EQ(w[3].midpoint(), (Vec2{0, 1.5}));
    EXPECT_TRUE(w[0].horizontal());
    EXPECT_FALSE(w[1].horizontal());
}

TEST(Label, BedroomExamples) {
    EXPECT_EQ(label_from_dimensions(room(4.0, 2.5), RoomType::Bedroom).dim_category, 0);
    EXPECT_EQ(label_from_dimensions(room(3.0, 4.5), RoomType::Bedroom).dim_category, 1);
    EXPECT_EQ(label_from_dimensions(room(4.0, 5.0), RoomType::Bedroom).dim_category, 2);
}

TEST(Label, ThresholdsAreLeftInclusive) {
    EXPECT_EQ(label_from_dimensions(room(2.7, 5), RoomType::Bedroom).dim_category, 1);
    EXPECT_EQ(label_from_dimensions(room(3.4, 5), RoomType::Bedroom).dim_category, 2);
    EXPECT_EQ(label_from_dimensions(room(2.699999, 5), RoomType::Bedroom).dim_category, 0);
    EXPECT_EQ(label_from_dimensions(room(3.399999, 5), RoomType::Bedroom).dim_category, 1);
}

TEST(Label, LongerSideCanGovern) {
    auto cfg = LabelConfig::defaults();
    cfg.governing = GoverningSide::Longer;
    EXPECT_EQ(label_from_dimensions(room(2.5, 3.0), RoomType::Bedroom, cfg).dim_category, 1);
}

TEST(Label, RejectsNonPositiveRoom) {
    EXPECT_THROW(label_from_dimensions(Rect{0, 0, 0, 3}, RoomType::Bedroom), GeometryError);
}

TEST(Label, PiecewiseConstantAwayFromThresholds) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> len(1.0, 7.0);
    const auto cfg = LabelConfig::defaults();
    for (int i = 0; i < 2000; ++i) {
        const double l = len(rng);
        for (auto t : kRoomTypes) {
            bool near = false;
            for (double th : cfg.table(t).thresholds) near = near || std::abs(l - th) < 2e-3;
            if (near) continue;
            EXPECT_EQ(label_from_dimensions(room(l, 9), t), label_from_dimensions(room(l + 9e-4, 9), t));
            EXPECT_EQ(label_from_dimensions(room(l, 9), t), label_from_dimensions(room(l - 9e-4, 9), t));
        }
    }
}

TEST(Label, DefaultConfigHasFourteenSubcategories) {
    const auto cfg = LabelConfig::defaults();
    EXPECT_EQ(cfg.subcategory_count(), 14);
    EXPECT_EQ(cfg.table(RoomType::Bedroom).bins(), 5);
    EXPECT_EQ(cfg.table(RoomType::Bathroom).bins(), 5);
    EXPECT_EQ(cfg.table(RoomType::Study).bins(), 4);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Label, OneHot) {
    const auto cfg = LabelConfig::defaults();
    const auto first = one_hot_label({RoomType::Bedroom, 0}, cfg);
    ASSERT_EQ(first.size(), 14u);
    EXPECT_EQ(first[0], 1.0);
    const auto last = one_hot_label({RoomType::Study, 3}, cfg);
    EXPECT_EQ(last[13], 1.0);
    std::set<std::vector<double>> seen;
    for (int g = 0; g < 14; ++g) {
        const auto l = cfg.from_global_index(g);
        EXPECT_EQ(cfg.global_index(l), g);
        const auto v = one_hot_label(l, cfg);
        double norm = 0;
        for (double x : v) norm += std::abs(x);
        EXPECT_EQ(norm, 1.0);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 14u);
    EXPECT_THROW(one_hot_label({RoomType::Study, 4}, cfg), DataError);
}

TEST(Label, ValidateRejectsBadTables) {
    auto cfg = LabelConfig::defaults();
    cfg.tables[0].thresholds = {3.4, 2.7};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = LabelConfig::defaults();
    cfg.tables[1].max_length = 3.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Scene, ValidationCatchesInconsistencies) {
    const auto cats = default_category_table();
    const auto labels = LabelConfig::defaults();
    Scene ok{1, rectangle_plan(4, 3), {FurnitureItem(furniture::kBed, {2, 2}, {1.6, 2.0, 0.5})}, {RoomType::Bedroom, 1}};
    EXPECT_NO_THROW(validate_scene(ok, cats, labels));

    Scene wrong_label = ok;
    wrong_label.label.dim_category = 0;
    EXPECT_THROW(validate_scene(wrong_label, cats, labels), DataError);

    Scene outside = ok;
    outside.layout = {FurnitureItem(0, {10, 10}, {1, 1, 1})};
    EXPECT_THROW(validate_scene(outside, cats, labels), GeometryError);

    Scene bad_id = ok;
    bad_id.layout = {FurnitureItem(40, {1, 1}, {1, 1, 1})};
    try {
        validate_scene(bad_id, cats, labels);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("40"), std::string::npos);
    }
}

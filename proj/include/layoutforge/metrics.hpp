#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace layoutforge {

struct UndefinedMetricError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Category-count agreement over paired layouts: sum of per-category
/// min(generated, ground truth) counts divided by the ground-truth item total.
inline double mode_accuracy(const std::vector<Layout>& generated, const std::vector<Layout>& ground_truth, int n_categories) {
    if (generated.size() != ground_truth.size())
        throw ShapeError("mode_accuracy: " + std::to_string(generated.size()) + " generated vs " +
                         std::to_string(ground_truth.size()) + " ground-truth layouts");
    auto counts = [n_categories](const Layout& l) {
        std::vector<long> c(static_cast<std::size_t>(n_categories), 0);
        for (const auto& item : l) {
            if (item.category_id() >= n_categories)
                throw DataError("mode_accuracy: category id " + std::to_string(item.category_id()) + " >= n = " +
                                std::to_string(n_categories));
            ++c[static_cast<std::size_t>(item.category_id())];
        }
        return c;
    };
    long matched = 0, total = 0;
    for (std::size_t s = 0; s < generated.size(); ++s) {
        const auto g = counts(generated[s]);
        const auto t = counts(ground_truth[s]);
        for (std::size_t i = 0; i < t.size(); ++i) {
            matched += std::min(g[i], t[i]);
            total += t[i];
        }
    }
    if (total == 0) throw UndefinedMetricError("mode_accuracy: ground truth holds no furniture");
    return static_cast<double>(matched) / static_cast<double>(total);
}

inline double mode_accuracy(const Layout& generated, const Layout& ground_truth, int n_categories) {
    return mode_accuracy(std::vector<Layout>{generated}, std::vector<Layout>{ground_truth}, n_categories);
}

inline double box_iou(const Rect& a, const Rect& b) {
    if (!(a.width() > 0 && a.height() > 0 && b.width() > 0 && b.height() > 0))
        throw GeometryError("box_iou: rectangles must have positive area");
    const double inter = intersection_area(a, b);
    return inter / (a.area() + b.area() - inter);
}

/// Maximum-weight assignment on a dense rows x cols weight matrix
/// (Kuhn-Munkres with potentials). Returns the column for every row, or -1.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight) {
    const std::size_t n_rows = weight.size();
    if (n_rows == 0) return {};
    const std::size_t n_cols = weight[0].size();
    const bool flip = n_rows > n_cols;
    const std::size_t n = flip ? n_cols : n_rows;  // n <= m
    const std::size_t m = flip ? n_rows : n_cols;
    auto cost = [&](std::size_t i, std::size_t j) { return flip ? -weight[j][i] : -weight[i][j]; };

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> out(n_rows, -1);
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] == 0) continue;
        if (flip)
            out[j - 1] = static_cast<int>(p[j] - 1);
        else
            out[p[j] - 1] = static_cast<int>(j - 1);
    }
    return out;
}

enum class MatchRule {
    Optimal,  // best same-category assignment
    Greedy,   // ground-truth order, each takes its best unconsumed generated item
};

/// Mean over ground-truth items of the IoU with the generated item of the same
/// category it is matched to; unmatched items contribute 0.
inline double layout_iou(const Layout& generated, const Layout& ground_truth, MatchRule rule = MatchRule::Optimal) {
    if (ground_truth.empty()) throw UndefinedMetricError("layout_iou: ground truth holds no furniture");
    std::map<int, std::vector<Rect>> gen_by_cat, gt_by_cat;
    for (const auto& f : generated) gen_by_cat[f.category_id()].push_back(furniture_footprint(f));
    for (const auto& f : ground_truth) gt_by_cat[f.category_id()].push_back(furniture_footprint(f));

    double total = 0.0;
    for (const auto& [cat, gts] : gt_by_cat) {
        auto it = gen_by_cat.find(cat);
        if (it == gen_by_cat.end()) continue;
        const auto& gens = it->second;
        std::vector<std::vector<double>> w(gts.size(), std::vector<double>(gens.size()));
        for (std::size_t i = 0; i < gts.size(); ++i)
            for (std::size_t j = 0; j < gens.size(); ++j) w[i][j] = box_iou(gts[i], gens[j]);
        if (rule == MatchRule::Optimal) {
            const auto assign = max_weight_assignment(w);
            for (std::size_t i = 0; i < gts.size(); ++i)
                if (assign[i] >= 0) total += w[i][static_cast<std::size_t>(assign[i])];
        } else {
            std::vector<bool> taken(gens.size(), false);
            for (std::size_t i = 0; i < gts.size(); ++i) {
                int best = -1;
                for (std::size_t j = 0; j < gens.size(); ++j)
                    if (!taken[j] && (best < 0 || w[i][j] > w[i][static_cast<std::size_t>(best)])) best = static_cast<int>(j);
                if (best >= 0) {
                    taken[static_cast<std::size_t>(best)] = true;
                    total += w[i][static_cast<std::size_t>(best)];
                }
            }
        }
    }
    return total / static_cast<double>(ground_truth.size());
}

// ---------------------------------------------------------------------------
// Aggregation

struct SceneScore {
    RoomType room_type;
    double mode;
    double iou;
};

struct GroupStats {
    RoomType room_type;
    std::size_t count = 0;
    double mode_mean = 0, mode_std = 0, iou_mean = 0, iou_std = 0;
};

struct EvaluationReport {
    std::vector<GroupStats> rows;
    std::optional<GroupStats> overall;  // room_type field unused
    std::vector<std::string> warnings;
};

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

inline EvaluationReport aggregate(const std::vector<SceneScore>& scores) {
    EvaluationReport report;
    auto stats_of = [](RoomType t, const std::vector<const SceneScore*>& group) {
        std::vector<double> mode, iou;
        for (const auto* s : group) {
            mode.push_back(s->mode);
            iou.push_back(s->iou);
        }
        GroupStats g{t, group.size()};
        std::tie(g.mode_mean, g.mode_std) = mean_std(mode);
        std::tie(g.iou_mean, g.iou_std) = mean_std(iou);
        return g;
    };
    std::vector<const SceneScore*> all;
    for (auto t : kRoomTypes) {
        std::vector<const SceneScore*> group;
        for (const auto& s : scores)
            if (s.room_type == t) group.push_back(&s);
        if (group.empty()) {
            report.warnings.push_back("no scenes for room type " + std::string(to_string(t)) + "; row omitted");
            continue;
        }
        report.rows.push_back(stats_of(t, group));
        all.insert(all.end(), group.begin(), group.end());
    }
    if (!all.empty()) report.overall = stats_of(RoomType::Bedroom, all);
    return report;
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
    auto row = [](const GroupStats& g) {
        return nlohmann::ordered_json{{"count", g.count},
                                      {"mode_mean", round3(g.mode_mean)},
                                      {"mode_std", round3(g.mode_std)},
                                      {"iou_mean", round3(g.iou_mean)},
                                      {"iou_std", round3(g.iou_std)}};
    };
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& g : r.rows) {
        auto jr = nlohmann::ordered_json{{"room_type", std::string(to_string(g.room_type))}};
        jr.update(row(g));
        j["rows"].push_back(jr);
    }
    j["overall"] = r.overall ? row(*r.overall) : nlohmann::ordered_json(nullptr);
    j["warnings"] = r.warnings;
    return j;
}

/// Aligned text table: one row per room type, Mode and IoU columns.
inline std::string report_to_table(const EvaluationReport& r) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s %6s  %-15s %-15s\n", "Room", "N", "Mode", "IoU");
    out += buf;
    auto line = [&](const std::string& name, const GroupStats& g) {
        std::snprintf(buf, sizeof buf, "%-10s %6zu  %.3f \xC2\xB1 %.3f   %.3f \xC2\xB1 %.3f\n", name.c_str(), g.count,
                      g.mode_mean, g.mode_std, g.iou_mean, g.iou_std);
        out += buf;
    };
    for (const auto& g : r.rows) {
        std::string name(to_string(g.room_type));
        name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
        line(name, g);
    }
    if (r.overall) line("All", *r.overall);
    return out;
}

}  // namespace layoutforge

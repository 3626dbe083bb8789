#pragma once

// Three conditional generator/discriminator pairs trained jointly:
//   g1: (z, label)                 -> plan raster          d1: raster + label -> score
//   g2: (z, structural graph, label) -> per-node boxes     d2: boxes + graph + label -> score
//   g3: (g1 raster, g2 boxes, label) -> K furniture slots  d3: slots + label -> score
// The generator step minimizes L_G1 + L_G2 + L_G3, with L_G3 gradients
// reaching g1 and g2 unless stages are detached.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "dataset.hpp"
#include "graph.hpp"
#include "nn.hpp"
#include "raster.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace layoutforge {

using ad::Tensor;

struct ModelConfig {
    LabelConfig labels = LabelConfig::defaults();
    int categories = static_cast<int>(default_category_table().size());
    int resolution = 32;
    Canvas canvas{};
    std::size_t latent_dim = 32;
    std::size_t slots = 8;
    std::size_t g1_hidden = 64;
    std::size_t d1_hidden = 64;
    std::size_t graph_hidden = 32;
    std::size_t graph_rounds = 3;
    std::size_t graph_latent = 8;  // leading slice of z shared by every node
    std::size_t g3_hidden = 128;
    std::size_t d3_hidden = 64;
    double leaky_alpha = 0.2;
    std::array<double, 3> lambda_adv = {0.01, 0.01, 0.01};
    ad::Metric metric = ad::Metric::L2;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
    double learning_rate = 1e-3;
    bool detach_stages = false;
    bool condition_discriminators = true;

    std::size_t subcategories() const { return static_cast<std::size_t>(labels.subcategory_count()); }
    std::size_t raster_size() const { return static_cast<std::size_t>(kPlanChannels * resolution * resolution); }
    std::size_t slot_width() const { return 5 + static_cast<std::size_t>(categories); }

    void validate() const {
        labels.validate();
        if (resolution < 4) throw ConfigError("resolution must be at least 4");
        if (latent_dim < graph_latent || graph_latent == 0) throw ConfigError("latent_dim must be >= graph_latent > 0");
        if (slots == 0) throw ConfigError("slot count must be positive");
        if (categories <= 0) throw ConfigError("category table is empty");
        for (double l : lambda_adv)
            if (!(l >= 0)) throw ConfigError("adversarial weights must be non-negative");
        if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    }
};

// ---------------------------------------------------------------------------
// Slot encoding

/// Ground-truth layout as a [K x (1 + C + 4)] tensor: presence, category
/// one-hot, normalized center and size. Items are sorted by (category, x, y);
/// unused slots are all zero.
inline Tensor encode_slots(const Layout& layout, const Rect& bounds, std::size_t k, int n_categories) {
    if (layout.size() > k)
        throw DataError("layout has " + std::to_string(layout.size()) + " items but only " + std::to_string(k) + " slots");
    Layout sorted = layout;
    std::sort(sorted.begin(), sorted.end(), [](const FurnitureItem& a, const FurnitureItem& b) {
        if (a.category_id() != b.category_id()) return a.category_id() < b.category_id();
        if (a.position().x != b.position().x) return a.position().x < b.position().x;
        return a.position().y < b.position().y;
    });
    const std::size_t w = 5 + static_cast<std::size_t>(n_categories);
    std::vector<double> v(k * w, 0.0);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& f = sorted[i];
        if (f.category_id() >= n_categories) throw DataError("furniture category id " + std::to_string(f.category_id()) + " out of range");
        double* row = v.data() + i * w;
        row[0] = 1.0;
        row[1 + static_cast<std::size_t>(f.category_id())] = 1.0;
        const auto g = normalize_box(furniture_footprint(f), bounds);
        std::copy(g.begin(), g.end(), row + 1 + n_categories);
    }
    return Tensor::from({k, w}, std::move(v));
}

/// Slots with presence >= 0.5 become items; category is the argmax.
inline Layout decode_slots(const Tensor& slots, const Rect& bounds, int n_categories, double threshold = 0.5) {
    const std::size_t w = 5 + static_cast<std::size_t>(n_categories);
    if (slots.cols() != w) throw ShapeError("decode_slots: slot width " + std::to_string(slots.cols()) + ", expected " + std::to_string(w));
    const auto& heights = default_furniture_heights();
    Layout out;
    for (std::size_t i = 0; i < slots.rows(); ++i) {
        const double* row = slots.data().data() + i * w;
        if (row[0] < threshold) continue;
        const int cat = static_cast<int>(std::max_element(row + 1, row + 1 + n_categories) - (row + 1));
        const Rect box = denormalize_box(std::span<const double>(row + 1 + n_categories, 4), bounds);
        const double h = static_cast<std::size_t>(cat) < heights.size() ? heights[static_cast<std::size_t>(cat)] : 1.0;
        out.emplace_back(cat, box.center(), Size3{std::max(box.width(), 0.01), std::max(box.height(), 0.01), h});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Networks

class FloorplanGenerator {
public:
    FloorplanGenerator(const ModelConfig& c, std::uint64_t seed) {
        Rng rng(seed);
        l0_ = nn::Linear(params, "g1.layer0", c.latent_dim + c.subcategories(), c.g1_hidden, rng);
        l1_ = nn::Linear(params, "g1.layer1", c.g1_hidden, c.raster_size(), rng);
        alpha_ = c.leaky_alpha;
    }
    /// z [1 x Z], label [1 x S] -> raster [1 x 4*R*R] in (0,1)
    Tensor operator()(const Tensor& z, const Tensor& label) const {
        return ad::sigmoid(l1_(ad::leaky_relu(l0_(ad::concat_cols({z, label})), alpha_)));
    }
    nn::ParameterList params;

private:
    nn::Linear l0_, l1_;
    double alpha_ = 0.2;
};

class FloorplanDiscriminator {
public:
    FloorplanDiscriminator(const ModelConfig& c, std::uint64_t seed) : conditioned_(c.condition_discriminators) {
        Rng rng(seed);
        l0_ = nn::Linear(params, "d1.layer0", c.raster_size() + (conditioned_ ? c.subcategories() : 0), c.d1_hidden, rng);
        l1_ = nn::Linear(params, "d1.layer1", c.d1_hidden, 1, rng);
        alpha_ = c.leaky_alpha;
    }
    Tensor operator()(const Tensor& raster, const Tensor& label) const {
        const Tensor in = conditioned_ ? ad::concat_cols({raster, label}) : raster;
        return ad::sigmoid(l1_(ad::leaky_relu(l0_(in), alpha_)));
    }
    nn::ParameterList params;

private:
    bool conditioned_;
    nn::Linear l0_, l1_;
    double alpha_ = 0.2;
};

/// Message-passing trunk shared by g2 and d2.
class GraphTrunk {
public:
    GraphTrunk() = default;
    GraphTrunk(nn::ParameterList& params, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t rounds,
               double alpha, Rng& rng)
        : alpha_(alpha) {
        embed_ = nn::Linear(params, prefix + ".embed", in, hidden, rng);
        const double s = std::sqrt(1.0 / static_cast<double>(hidden));
        for (std::size_t r = 0; r < rounds; ++r) {
            const std::string p = prefix + ".mp" + std::to_string(r);
            MessagePassingWeights w;
            w.w_self = params.add(p + ".w_self", Tensor::from({hidden, hidden}, normal_vector(rng, hidden * hidden, s)));
            w.w_neigh = params.add(p + ".w_neigh", Tensor::from({hidden, hidden}, normal_vector(rng, hidden * hidden, s)));
            w.bias = params.add(p + ".bias", Tensor::zeros({hidden}));
            rounds_.push_back(std::move(w));
        }
    }
    Tensor operator()(const Tensor& node_inputs, const Tensor& distances, double tau) const {
        Tensor h = ad::leaky_relu(embed_(node_inputs), alpha_);
        for (const auto& w : rounds_) h = message_passing_layer(h, distances, w, tau, alpha_);
        return h;
    }

private:
    nn::Linear embed_;
    std::vector<MessagePassingWeights> rounds_;
    double alpha_ = 0.2;
};

/// Kernel width: half the room diagonal.
inline double graph_tau(const StructuralGraph& g) { return g.bounds.diagonal() / 2; }

class GraphGenerator {
public:
    GraphGenerator(const ModelConfig& c, std::uint64_t seed) : z_slice_(c.graph_latent) {
        Rng rng(seed);
        trunk_ = GraphTrunk(params, "g2", c.graph_latent + kNodeFeatureWidth + c.subcategories(), c.graph_hidden,
                            c.graph_rounds, c.leaky_alpha, rng);
        head_ = nn::Linear(params, "g2.head", c.graph_hidden, 4, rng);
    }
    /// Every node sees the same z slice and label, so the map is permutation-equivariant.
    /// Centers are predicted as logit-space offsets from the node's own center feature.
    Tensor operator()(const Tensor& z, const StructuralGraph& g, const Tensor& label) const {
        if (g.size() == 0) throw GeometryError("g2: structural graph is empty");
        const std::size_t n = g.size();
        const Tensor in = ad::concat_cols(
            {ad::broadcast_rows(ad::slice_cols(z, 0, z_slice_), n), g.node_features, ad::broadcast_rows(label, n)});
        const Tensor raw = head_(trunk_(in, g.adjacency_tensor(), graph_tau(g)));
        return ad::sigmoid(ad::add(raw, center_prior(g)));
    }
    nn::ParameterList params;

private:
    static Tensor center_prior(const StructuralGraph& g) {
        constexpr double kEdge = 1e-3;
        std::vector<double> v(g.size() * 4, 0.0);
        const auto& f = g.node_features.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t k = 0; k < 2; ++k) {
                const double c = std::clamp(f[i * kNodeFeatureWidth + 3 + k], kEdge, 1.0 - kEdge);
                v[i * 4 + k] = std::log(c / (1.0 - c));
            }
        return Tensor::from({g.size(), 4}, std::move(v));
    }

    std::size_t z_slice_;
    GraphTrunk trunk_;
    nn::Linear head_;
};

class GraphDiscriminator {
public:
    GraphDiscriminator(const ModelConfig& c, std::uint64_t seed) : conditioned_(c.condition_discriminators) {
        Rng rng(seed);
        trunk_ = GraphTrunk(params, "d2", 4 + kNodeFeatureWidth + (conditioned_ ? c.subcategories() : 0), c.graph_hidden, 1,
                            c.leaky_alpha, rng);
        out_ = nn::Linear(params, "d2.out", c.graph_hidden, 1, rng);
    }
    Tensor operator()(const Tensor& boxes, const StructuralGraph& g, const Tensor& label) const {
        const std::size_t n = g.size();
        std::vector<Tensor> parts = {boxes, g.node_features};
        if (conditioned_) parts.push_back(ad::broadcast_rows(label, n));
        return ad::sigmoid(out_(ad::mean_rows(trunk_(ad::concat_cols(parts), g.adjacency_tensor(), graph_tau(g)))));
    }
    nn::ParameterList params;

private:
    bool conditioned_;
    GraphTrunk trunk_;
    nn::Linear out_;
};

class LayoutGenerator {
public:
    LayoutGenerator(const ModelConfig& c, std::uint64_t seed)
        : k_(c.slots), categories_(static_cast<std::size_t>(c.categories)) {
        Rng rng(seed);
        l0_ = nn::Linear(params, "g3.layer0", c.raster_size() + 12 + c.subcategories(), c.g3_hidden, rng);
        l1_ = nn::Linear(params, "g3.layer1", c.g3_hidden, c.slots * c.slot_width(), rng);
        alpha_ = c.leaky_alpha;
    }
    /// Boxes are pooled (mean, max and min over nodes) into a 12-wide condition.
    /// The min extents are the wall thickness over the room size, which carries scale.
    Tensor operator()(const Tensor& plan_raster, const Tensor& boxes, const Tensor& label) const {
        const Tensor pooled = ad::concat_cols(
            {ad::mean_rows(boxes), ad::max_rows(boxes), ad::scale(ad::max_rows(ad::scale(boxes, -1.0)), -1.0)});
        const Tensor raw = l1_(ad::leaky_relu(l0_(ad::concat_cols({plan_raster, pooled, label})), alpha_));
        const Tensor grid = ad::reshape(raw, {k_, 5 + categories_});
        return ad::concat_cols({ad::sigmoid(ad::slice_cols(grid, 0, 1)),
                                ad::softmax_rows(ad::slice_cols(grid, 1, 1 + categories_)),
                                ad::sigmoid(ad::slice_cols(grid, 1 + categories_, 5 + categories_))});
    }
    nn::ParameterList params;

private:
    std::size_t k_, categories_;
    nn::Linear l0_, l1_;
    double alpha_ = 0.2;
};

class LayoutDiscriminator {
public:
    LayoutDiscriminator(const ModelConfig& c, std::uint64_t seed) : conditioned_(c.condition_discriminators) {
        Rng rng(seed);
        l0_ = nn::Linear(params, "d3.layer0", c.slots * c.slot_width() + (conditioned_ ? c.subcategories() : 0),
                         c.d3_hidden, rng);
        l1_ = nn::Linear(params, "d3.layer1", c.d3_hidden, 1, rng);
        alpha_ = c.leaky_alpha;
    }
    /// Category and geometry columns are scaled by each slot's presence, so an
    /// absent generated slot can match the all-zero rows of encoded ground truth.
    Tensor operator()(const Tensor& slots, const Tensor& label) const {
        const std::size_t w = slots.cols();
        const Tensor presence = ad::slice_cols(slots, 0, 1);
        const Tensor spread = ad::matmul(presence, Tensor::from({1, w - 1}, std::vector<double>(w - 1, 1.0)));
        const Tensor gated = ad::concat_cols({presence, ad::mul(ad::slice_cols(slots, 1, w), spread)});
        const Tensor flat = ad::flatten(gated);
        const Tensor in = conditioned_ ? ad::concat_cols({flat, label}) : flat;
        return ad::sigmoid(l1_(ad::leaky_relu(l0_(in), alpha_)));
    }
    nn::ParameterList params;

private:
    bool conditioned_;
    nn::Linear l0_, l1_;
    double alpha_ = 0.2;
};

// ---------------------------------------------------------------------------
// Losses

struct GeneratorLoss {
    Tensor total;
    Tensor reconstruction;
    std::optional<Tensor> adversarial;  // absent when lambda is zero
};

namespace detail {
inline GeneratorLoss generator_loss(const Tensor& generated, const Tensor& target, const std::optional<Tensor>& score,
                                    double lambda, ad::Metric metric) {
    GeneratorLoss out;
    out.reconstruction = ad::reconstruction_distance(generated, target, metric);
    out.total = out.reconstruction;
    if (lambda != 0.0) {
        if (!score) throw std::invalid_argument("adversarial weight is non-zero but no discriminator score was given");
        out.adversarial = ad::adversarial_generator_loss(*score);
        out.total = ad::add(out.total, ad::scale(*out.adversarial, lambda));
    }
    return out;
}
}  // namespace detail

/// L_G1 = M(g1 - x1_gt) + lambda * L_adv1
inline GeneratorLoss loss_G1(const Tensor& generated, const Tensor& ground_truth, const std::optional<Tensor>& d1_score,
                             double lambda, ad::Metric metric) {
    return detail::generator_loss(generated, ground_truth, d1_score, lambda, metric);
}

inline GeneratorLoss loss_G2(const Tensor& boxes, const Tensor& ground_truth, const std::optional<Tensor>& d2_score,
                             double lambda, ad::Metric metric) {
    if (boxes.rows() != ground_truth.rows())
        throw ShapeError("loss_G2: node-count mismatch, " + std::to_string(boxes.rows()) + " generated vs " +
                         std::to_string(ground_truth.rows()) + " ground-truth boxes");
    return detail::generator_loss(boxes, ground_truth, d2_score, lambda, metric);
}

inline GeneratorLoss loss_G3(const Tensor& slots, const Tensor& ground_truth, const std::optional<Tensor>& d3_score,
                             double lambda, ad::Metric metric) {
    return detail::generator_loss(slots, ground_truth, d3_score, lambda, metric);
}

inline Tensor loss_D1(const Tensor& fake, const Tensor& real) { return ad::bce_discriminator_loss(fake, real); }
inline Tensor loss_D2(const Tensor& fake, const Tensor& real) { return ad::bce_discriminator_loss(fake, real); }
inline Tensor loss_D3(const Tensor& fake, const Tensor& real) { return ad::bce_discriminator_loss(fake, real); }

// ---------------------------------------------------------------------------
// Training

/// Per-scene tensors computed once: targets, owned latent, graph, label.
struct PreparedScene {
    const Scene* scene = nullptr;
    Tensor label;
    Tensor latent;
    Tensor plan_raster;
    StructuralGraph graph;
    Tensor boxes;
    Tensor slots;
};

/// The latent a dataset scene owns: a standard-normal vector seeded by (root, scene_id).
inline Tensor owned_latent(std::uint64_t root_seed, std::uint64_t scene_id, std::size_t dim) {
    Rng rng(derive_seed(derive_seed(root_seed, "latent"), scene_id));
    return Tensor::row(normal_vector(rng, dim));
}

inline Tensor label_tensor(const RoomLabel& label, const LabelConfig& labels) { return Tensor::row(one_hot_label(label, labels)); }

inline PreparedScene prepare_scene(const Scene& s, const ModelConfig& c, std::uint64_t seed) {
    PreparedScene p;
    p.scene = &s;
    p.label = label_tensor(s.label, c.labels);
    p.latent = owned_latent(seed, s.scene_id, c.latent_dim);
    p.plan_raster = rasterize_floorplan(s.floor_plan, c.resolution, c.canvas).to_tensor();
    p.graph = encode_graph(s.floor_plan);
    p.boxes = structural_ground_truth(p.graph);
    p.slots = encode_slots(s.layout, s.floor_plan.bounds(), c.slots, c.categories);
    return p;
}

inline std::vector<PreparedScene> prepare_scenes(const std::vector<Scene>& scenes, const ModelConfig& c, std::uint64_t seed) {
    std::vector<PreparedScene> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(prepare_scene(s, c, seed));
    return out;
}

/// Reconstruction terms for the generators, discriminator BCE terms.
struct StepLosses {
    std::uint64_t step = 0;
    double g1 = 0, d1 = 0, g2 = 0, d2 = 0, g3 = 0, d3 = 0;
};

using EpochLosses = StepLosses;

struct GeneratedScene {
    Scene scene;
    bool degenerate = false;
};

class TrainingState {
public:
    TrainingState(ModelConfig config, std::uint64_t seed)
        : config_((config.validate(), std::move(config))),
          seed_(seed),
          g1_(config_, derive_seed(seed, "g1")),
          d1_(config_, derive_seed(seed, "d1")),
          g2_(config_, derive_seed(seed, "g2")),
          d2_(config_, derive_seed(seed, "d2")),
          g3_(config_, derive_seed(seed, "g3")),
          d3_(config_, derive_seed(seed, "d3")),
          optimizers_(6, nn::Optimizer(config_.optimizer, config_.learning_rate)) {}

    const ModelConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t step() const { return step_; }
    const std::vector<StepLosses>& history() const { return history_; }

    const FloorplanGenerator& g1() const { return g1_; }
    const GraphGenerator& g2() const { return g2_; }
    const LayoutGenerator& g3() const { return g3_; }
    const FloorplanDiscriminator& d1() const { return d1_; }
    const GraphDiscriminator& d2() const { return d2_; }
    const LayoutDiscriminator& d3() const { return d3_; }

    std::vector<nn::ParameterList*> generator_params() { return {&g1_.params, &g2_.params, &g3_.params}; }
    std::vector<nn::ParameterList*> discriminator_params() { return {&d1_.params, &d2_.params, &d3_.params}; }
    std::vector<nn::ParameterList*> all_params() { return {&g1_.params, &d1_.params, &g2_.params, &d2_.params, &g3_.params, &d3_.params}; }
    std::vector<const nn::ParameterList*> all_params() const {
        return {&g1_.params, &d1_.params, &g2_.params, &d2_.params, &g3_.params, &d3_.params};
    }

    /// Generator outputs for one scene, recorded for both phases of a step.
    struct Pass {
        const PreparedScene* scene = nullptr;
        Tensor x1, boxes, slots;
    };

    Pass generator_pass(const PreparedScene& p) const {
        const auto& c = config_;
        Pass out{&p, g1_(p.latent, p.label), g2_(p.latent, p.graph, p.label), {}};
        out.slots = g3_(c.detach_stages ? out.x1.detach() : out.x1, c.detach_stages ? out.boxes.detach() : out.boxes, p.label);
        return out;
    }

    /// Updates d1..d3 on detached generator outputs. Generator parameters are untouched.
    void discriminator_step(const Pass& pass, StepLosses& rec) {
        const PreparedScene& p = *pass.scene;
        for (auto* l : discriminator_params()) l->zero_grad();
        const Tensor ld1 = loss_D1(d1_(pass.x1.detach(), p.label), d1_(p.plan_raster, p.label));
        const Tensor ld2 = loss_D2(d2_(pass.boxes.detach(), p.graph, p.label), d2_(p.boxes, p.graph, p.label));
        const Tensor ld3 = loss_D3(d3_(pass.slots.detach(), p.label), d3_(p.slots, p.label));
        rec.d1 = ld1.item();
        rec.d2 = ld2.item();
        rec.d3 = ld3.item();
        guard(rec.d1, "loss_d1");
        guard(rec.d2, "loss_d2");
        guard(rec.d3, "loss_d3");
        ld1.backward();
        ld2.backward();
        ld3.backward();
        optimizers_[1].step(d1_.params);
        optimizers_[3].step(d2_.params);
        optimizers_[5].step(d3_.params);
    }

    /// Joint update of g1..g3. Discriminators are frozen so only input gradients flow through them.
    void generator_step(const Pass& pass, StepLosses& rec) {
        const PreparedScene& p = *pass.scene;
        const auto& c = config_;
        const auto& lam = c.lambda_adv;
        auto score = [](double lambda, auto&& f) -> std::optional<Tensor> {
            if (lambda == 0.0) return std::nullopt;
            return f();
        };
        for (auto* l : discriminator_params()) l->set_trainable(false);
        const auto lg1 = loss_G1(pass.x1, p.plan_raster, score(lam[0], [&] { return d1_(pass.x1, p.label); }), lam[0], c.metric);
        const auto lg2 = loss_G2(pass.boxes, p.boxes, score(lam[1], [&] { return d2_(pass.boxes, p.graph, p.label); }), lam[1],
                                 c.metric);
        const auto lg3 = loss_G3(pass.slots, p.slots, score(lam[2], [&] { return d3_(pass.slots, p.label); }), lam[2], c.metric);
        for (auto* l : discriminator_params()) l->set_trainable(true);
        rec.g1 = lg1.reconstruction.item();
        rec.g2 = lg2.reconstruction.item();
        rec.g3 = lg3.reconstruction.item();
        const Tensor total = ad::add(ad::add(lg1.total, lg2.total), lg3.total);
        guard(total.item(), "generator loss");
        for (auto* l : generator_params()) l->zero_grad();
        total.backward();
        optimizers_[0].step(g1_.params);
        optimizers_[2].step(g2_.params);
        optimizers_[4].step(g3_.params);
        for (auto* l : discriminator_params()) l->zero_grad();
    }

    /// Discriminator steps on detached generator outputs, then one joint
    /// generator step. Throws DivergenceError on a non-finite loss.
    StepLosses train_step(const PreparedScene& p) {
        ++step_;
        StepLosses rec;
        rec.step = step_;
        const Pass pass = generator_pass(p);
        discriminator_step(pass, rec);
        generator_step(pass, rec);
        history_.push_back(rec);
        return rec;
    }

    /// One pass over the scenes in order; returns the mean of each loss.
    EpochLosses train_epoch(const std::vector<PreparedScene>& scenes) {
        if (scenes.empty()) throw DataError("train_epoch: empty dataset");
        EpochLosses mean;
        for (const auto& p : scenes) {
            const auto r = train_step(p);
            mean.g1 += r.g1;
            mean.d1 += r.d1;
            mean.g2 += r.g2;
            mean.d2 += r.d2;
            mean.g3 += r.g3;
            mean.d3 += r.d3;
        }
        const double n = static_cast<double>(scenes.size());
        mean.g1 /= n;
        mean.d1 /= n;
        mean.g2 /= n;
        mean.d2 /= n;
        mean.g3 /= n;
        mean.d3 /= n;
        mean.step = step_;
        return mean;
    }

    /// Norm of the gradient that L_g3 alone sends into g1 and g2 parameters.
    /// Zero when stages are detached.
    double cross_stage_gradient_norm(const PreparedScene& p) {
        for (auto* l : all_params()) l->zero_grad();
        const Tensor x1 = g1_(p.latent, p.label);
        const Tensor boxes = g2_(p.latent, p.graph, p.label);
        const auto& c = config_;
        const Tensor slots = g3_(c.detach_stages ? x1.detach() : x1, c.detach_stages ? boxes.detach() : boxes, p.label);
        ad::reconstruction_distance(slots, p.slots, c.metric).backward();
        double sq = 0.0;
        for (auto* l : {&g1_.params, &g2_.params})
            for (const auto& prm : l->items())
                if (prm.tensor.has_grad())
                    for (double g : prm.tensor.grad()) sq += g * g;
        for (auto* l : all_params()) l->zero_grad();
        return std::sqrt(sq);
    }

    struct Outputs {
        Tensor plan_raster;
        Tensor boxes;
        Tensor slots;
    };

    /// Teacher-forced forward pass on a dataset scene (owned latent, true graph).
    Outputs forward(const PreparedScene& p) {
        NoGrad guard(*this);
        Outputs o;
        o.plan_raster = g1_(p.latent, p.label);
        o.boxes = g2_(p.latent, p.graph, p.label);
        o.slots = g3_(o.plan_raster, o.boxes, p.label);
        return o;
    }

    /// Decoded layout for a dataset scene, in that scene's room frame.
    Layout predict_layout(const PreparedScene& p) {
        return decode_slots(forward(p).slots, p.scene->floor_plan.bounds(), config_.categories);
    }

    /// Full pipeline from a latent: g1 raster, traced plan, its graph, g2 boxes, g3 slots.
    GeneratedScene generate(const Tensor& z, const RoomLabel& label, std::uint64_t scene_id) {
        NoGrad guard(*this);
        const auto& c = config_;
        const Tensor l = label_tensor(label, c.labels);
        const Tensor x1 = g1_(z, l);
        const Rect canvas_room{0.0, 0.0, c.canvas.size - 2 * c.canvas.margin, c.canvas.size - 2 * c.canvas.margin};
        const auto frame = RasterFrame::for_room(canvas_room, c.resolution, c.canvas);
        const auto traced = trace_floorplan(Raster::from_tensor(x1, c.resolution, c.resolution, plan_channel_names()), frame);
        GeneratedScene out{Scene{scene_id, fallback_plan(label), {}, label}, traced.degenerate()};
        if (traced.plan) out.scene.floor_plan = *traced.plan;
        const auto graph = encode_graph(out.scene.floor_plan);
        const Tensor boxes = g2_(z, graph, l);
        const Tensor slots = g3_(x1, boxes, l);
        out.scene.layout = decode_slots(slots, out.scene.floor_plan.bounds(), c.categories);
        return out;
    }

    /// Latent for the i-th sample of a generation seed stream.
    Tensor sample_latent(std::uint64_t seed, std::uint64_t index) const {
        Rng rng(derive_seed(derive_seed(seed, "generate"), index));
        return Tensor::row(normal_vector(rng, config_.latent_dim));
    }

    std::string checkpoint_bytes() const { return nn::encode_checkpoint(nn::snapshot(all_params())); }
    void load_checkpoint_bytes(std::string_view bytes) { nn::restore(nn::decode_checkpoint(bytes), all_params()); }

    std::string loss_csv() const {
        std::string out = "step,loss_g1,loss_d1,loss_g2,loss_d2,loss_g3,loss_d3\n";
        char buf[256];
        for (const auto& r : history_) {
            std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          static_cast<unsigned long long>(r.step), r.g1, r.d1, r.g2, r.d2, r.g3, r.d3);
            out += buf;
        }
        return out;
    }

private:
    /// Disables gradient recording on every parameter for its lifetime.
    class NoGrad {
    public:
        explicit NoGrad(TrainingState& s) : s_(s) {
            for (auto* l : s_.all_params()) l->set_trainable(false);
        }
        ~NoGrad() {
            for (auto* l : s_.all_params()) l->set_trainable(true);
        }
        NoGrad(const NoGrad&) = delete;
        NoGrad& operator=(const NoGrad&) = delete;

    private:
        TrainingState& s_;
    };

    void guard(double v, const char* what) const {
        if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " became non-finite at step " + std::to_string(step_));
    }

    /// Square room at the middle of the label's band, used when g1's raster traces to nothing.
    FloorPlan fallback_plan(const RoomLabel& label) const {
        const auto [lo, hi] = config_.labels.table(label.room_type).band(label.dim_category);
        const double side = (lo + hi) / 2;
        const Rect b{0.0, 0.0, side, side};
        return FloorPlan(FloorPlan::rectangle_walls(b), {}, b);
    }

    ModelConfig config_;
    std::uint64_t seed_;
    FloorplanGenerator g1_;
    FloorplanDiscriminator d1_;
    GraphGenerator g2_;
    GraphDiscriminator d2_;
    LayoutGenerator g3_;
    LayoutDiscriminator d3_;
    std::vector<nn::Optimizer> optimizers_;  // g1, d1, g2, d2, g3, d3
    std::uint64_t step_ = 0;
    std::vector<StepLosses> history_;
};

}  // namespace layoutforge

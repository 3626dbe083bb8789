#pragma once

// Subcommands behind the `layoutforge` executable. Everything writes under
// RunConfig::out_dir and reports through the given streams, so tests can
// drive the CLI in-process.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "dataset.hpp"
#include "gan.hpp"
#include "metrics.hpp"
#include "raster.hpp"

namespace layoutforge {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitDivergence = 4 };

inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kLossFile = "losses.csv";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kLegendFile = "legend.txt";

/// "bedroom:1" -> {Bedroom, 1}, checked against the configured tables.
inline RoomLabel parse_label(const std::string& text, const LabelConfig& labels) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError("label must look like <room_type>:<dim_category>, got '" + text + "'");
    RoomType type;
    try {
        type = room_type_from_string(text.substr(0, colon));
    } catch (const std::exception&) {
        throw ConfigError("unknown room type in label '" + text + "'");
    }
    const RoomLabel label{type, static_cast<int>(detail::parse_int("label", text.substr(colon + 1)))};
    if (!labels.valid(label)) throw ConfigError("label '" + text + "' is outside the configured subcategories");
    return label;
}

inline void ensure_out_dir(const RunConfig& c) {
    std::error_code ec;
    std::filesystem::create_directories(c.out_dir, ec);
    if (ec) throw DataError("cannot create output directory '" + c.out_dir + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// synth-data

inline void cmd_synth_data(const RunConfig& c, int count, std::ostream& out, std::ostream& err) {
    if (count < 0) throw ConfigError("scene count must be non-negative");
    c.validate();
    ensure_out_dir(c);
    DatasetConfig dc;
    dc.seed = c.root_seed();
    dc.labels = c.model.labels;
    dc.counts = DatasetConfig::balanced_counts(count, dc.labels);
    const Dataset ds = synthesize_dataset(dc);
    if (count == 0) err << "warning: writing an empty dataset\n";
    save_scenes(c.resolve(c.dataset), ds);
    out << "wrote " << ds.scenes.size() << " scenes to " << c.resolve(c.dataset) << "\n";
    for (int g = 0; g < dc.labels.subcategory_count(); ++g) {
        const auto l = dc.labels.from_global_index(g);
        out << "  " << to_string(l.room_type) << ":" << l.dim_category << "  " << dc.counts[static_cast<std::size_t>(g)] << "\n";
    }
}

// ---------------------------------------------------------------------------
// train

/// Training scenes: the train split when the dataset can be split, else every scene.
inline std::vector<Scene> training_scenes(const RunConfig& c, const Dataset& ds, std::ostream& err) {
    if (ds.scenes.empty()) throw DataError("dataset has no scenes to train on");
    if (ds.scenes.size() < 10) {
        err << "warning: " << ds.scenes.size() << " scenes are too few to split; training on all of them\n";
        return ds.scenes;
    }
    return select(ds, split(ds, c.effective_split_seed(), c.train_fraction).train_ids);
}

inline void cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
    c.validate();
    ensure_out_dir(c);
    const Dataset ds = load_scenes(c.resolve(c.dataset), c.model.labels);
    const auto scenes = training_scenes(c, ds, err);
    const auto prepared = prepare_scenes(scenes, c.model, c.root_seed());
    TrainingState state(c.model, c.root_seed());
    const int report_every = std::max(1, c.epochs / 20);
    out << "training on " << scenes.size() << " scenes for " << c.epochs << " epochs\n";
    try {
        for (int e = 1; e <= c.epochs; ++e) {
            const auto m = state.train_epoch(prepared);
            if (e % report_every == 0 || e == c.epochs) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "epoch %d  g1 %.5f d1 %.4f  g2 %.5f d2 %.4f  g3 %.5f d3 %.4f\n", e, m.g1, m.d1,
                              m.g2, m.d2, m.g3, m.d3);
                out << buf;
            }
            if (c.checkpoint_every > 0 && e % c.checkpoint_every == 0 && e != c.epochs)
                nn::write_file(c.resolve("checkpoint_epoch" + std::to_string(e) + ".bin"), state.checkpoint_bytes());
        }
    } catch (const DivergenceError&) {
        nn::write_file(c.resolve("checkpoint_partial.bin"), state.checkpoint_bytes());
        nn::write_file(c.resolve(kLossFile), state.loss_csv());
        throw;
    }
    nn::write_file(c.resolve(kCheckpointFile), state.checkpoint_bytes());
    nn::write_file(c.resolve(kLossFile), state.loss_csv());
    out << "wrote " << c.resolve(kCheckpointFile) << " and " << c.resolve(kLossFile) << "\n";
}

inline TrainingState load_state(const RunConfig& c, const std::string& checkpoint) {
    TrainingState state(c.model, c.root_seed());
    state.load_checkpoint_bytes(nn::read_file(c.resolve(checkpoint)));
    return state;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
    std::string checkpoint = kCheckpointFile;
    std::string label = "bedroom:0";
    int count = 1;
    std::optional<std::uint64_t> seed;  // defaults to the root seed
    int scale = 8;
};

inline std::uint64_t generated_scene_id(std::uint64_t seed, std::uint64_t index) {
    return derive_seed(derive_seed(seed, "scene"), index);
}

/// Sample i depends only on (seed, i), so a longer run extends a shorter one.
inline std::vector<GeneratedScene> cmd_generate(const RunConfig& c, const GenerateOptions& o, std::ostream& out) {
    c.validate();
    if (o.count < 0) throw ConfigError("count must be non-negative");
    if (o.scale < 1) throw ConfigError("scale must be positive");
    const RoomLabel label = parse_label(o.label, c.model.labels);
    ensure_out_dir(c);
    TrainingState state = load_state(c, o.checkpoint);
    const std::uint64_t seed = o.seed.value_or(c.root_seed());
    std::vector<GeneratedScene> results;
    for (int i = 0; i < o.count; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        GeneratedScene g = state.generate(state.sample_latent(seed, idx), label, generated_scene_id(seed, idx));
        const std::string stem = std::to_string(g.scene.scene_id) + "_generate";
        Dataset one;
        one.scenes.push_back(g.scene);
        nn::write_file(c.resolve(stem + ".json"), dump_dataset(one, {g.degenerate}));
        const auto frame = RasterFrame::for_room(g.scene.floor_plan.bounds(), c.model.resolution, c.model.canvas);
        const Raster plan = rasterize_floorplan(g.scene.floor_plan, frame);
        const Raster layout = rasterize_layout(g.scene.layout, g.scene.floor_plan.bounds(), c.model.resolution,
                                               default_category_table(), c.model.canvas);
        nn::write_file(c.resolve(stem + ".ppm"), encode_ppm(render_image(plan, &layout, o.scale)));
        out << stem << (g.degenerate ? "  (degenerate)" : "") << "  " << g.scene.layout.size() << " items\n";
        results.push_back(std::move(g));
    }
    nn::write_file(c.resolve(kLegendFile), render_legend(default_category_table()));
    return results;
}

// ---------------------------------------------------------------------------
// evaluate

enum class EvalSource { Checkpoint, Untrained, GroundTruth };

struct EvaluateOptions {
    std::string checkpoint = kCheckpointFile;
    EvalSource source = EvalSource::Checkpoint;
};

/// One layout per held-out scene from its owned latent and true graph,
/// scored against that scene's layout.
inline EvaluationReport evaluate_scenes(TrainingState* state, const std::vector<Scene>& test, const RunConfig& c) {
    std::vector<SceneScore> scores;
    for (const auto& s : test) {
        Layout generated = s.layout;
        if (state) generated = state->predict_layout(prepare_scene(s, c.model, c.root_seed()));
        scores.push_back({s.label.room_type, mode_accuracy(generated, s.layout, c.model.categories),
                          layout_iou(generated, s.layout)});
    }
    return aggregate(scores);
}

inline EvaluationReport cmd_evaluate(const RunConfig& c, const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
    c.validate();
    ensure_out_dir(c);
    const Dataset ds = load_scenes(c.resolve(c.dataset), c.model.labels);
    const auto test = select(ds, split(ds, c.effective_split_seed(), c.train_fraction).test_ids);
    if (test.empty()) throw DataError("test split is empty");

    std::optional<TrainingState> state;
    if (o.source == EvalSource::Checkpoint) state.emplace(load_state(c, o.checkpoint));
    else if (o.source == EvalSource::Untrained) state.emplace(c.model, c.root_seed());
    const auto report = evaluate_scenes(state ? &*state : nullptr, test, c);

    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    auto j = report_to_json(report);
    j["source"] = o.source == EvalSource::Checkpoint ? "checkpoint" : (o.source == EvalSource::Untrained ? "untrained" : "ground_truth");
    j["test_scenes"] = test.size();
    nn::write_file(c.resolve(kReportJson), j.dump(2) + "\n");
    const std::string table = report_to_table(report);
    nn::write_file(c.resolve(kReportText), table);
    out << table;
    return report;
}

// ---------------------------------------------------------------------------
// render

struct RenderOptions {
    std::vector<std::uint64_t> scene_ids;  // empty: every scene
    std::string stage = "layout";          // plan | layout | predicted
    std::string checkpoint = kCheckpointFile;
    int scale = 8;
};

inline std::vector<std::string> cmd_render(const RunConfig& c, const RenderOptions& o, std::ostream& out) {
    c.validate();
    if (o.stage != "plan" && o.stage != "layout" && o.stage != "predicted")
        throw ConfigError("stage must be plan, layout or predicted, got '" + o.stage + "'");
    if (o.scale < 1) throw ConfigError("scale must be positive");
    ensure_out_dir(c);
    const Dataset ds = load_scenes(c.resolve(c.dataset), c.model.labels);
    std::vector<Scene> scenes = o.scene_ids.empty() ? ds.scenes : select(ds, o.scene_ids);
    std::optional<TrainingState> state;
    if (o.stage == "predicted") state.emplace(load_state(c, o.checkpoint));

    std::vector<std::string> written;
    for (const auto& s : scenes) {
        const auto& bounds = s.floor_plan.bounds();
        const Raster plan = rasterize_floorplan(s.floor_plan, RasterFrame::for_room(bounds, c.model.resolution, c.model.canvas));
        std::optional<Raster> layout;
        if (o.stage == "layout")
            layout = rasterize_layout(s.layout, bounds, c.model.resolution, ds.categories, c.model.canvas);
        else if (o.stage == "predicted")
            layout = rasterize_layout(state->predict_layout(prepare_scene(s, c.model, c.root_seed())), bounds,
                                      c.model.resolution, default_category_table(), c.model.canvas);
        const std::string name = std::to_string(s.scene_id) + "_" + o.stage + ".ppm";
        nn::write_file(c.resolve(name), encode_ppm(render_image(plan, layout ? &*layout : nullptr, o.scale)));
        written.push_back(name);
    }
    nn::write_file(c.resolve(kLegendFile), render_legend(ds.categories));
    out << "rendered " << written.size() << " images\n";
    return written;
}

// ---------------------------------------------------------------------------
// Command line

namespace detail {
inline std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return "--" + key;
}
}  // namespace detail

/// Parses `args` (without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Conditional floor-plan and furniture layout generation", "layoutforge"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "flat key = value config file");
    app.add_option("--set", overrides, "key=value override, repeatable");
    std::map<std::string, std::string> flag_values;
    bool detach_flag = false;
    for (const auto& key : RunConfig::keys()) {
        if (key == "detach_stages") continue;
        app.add_option(detail::flag_name(key), flag_values[key], "config key " + key);
    }
    app.add_flag("--detach-stages", detach_flag, "cut L_g3 gradients into g1 and g2");

    int synth_count = 300;
    auto* synth = app.add_subcommand("synth-data", "write a procedural dataset");
    synth->add_option("--count", synth_count, "number of scenes");

    app.add_subcommand("train", "train all six networks jointly");

    GenerateOptions gen;
    std::uint64_t gen_seed = 0;
    auto* generate = app.add_subcommand("generate", "sample scenes from a checkpoint");
    generate->add_option("--checkpoint", gen.checkpoint);
    generate->add_option("--label", gen.label, "<room_type>:<dim_category>");
    generate->add_option("--count", gen.count);
    auto* gen_seed_opt = generate->add_option("--sample-seed", gen_seed, "latent stream seed (default: root seed)");
    generate->add_option("--scale", gen.scale, "pixels per raster cell");

    EvaluateOptions ev;
    bool ev_untrained = false, ev_ground_truth = false;
    auto* evaluate = app.add_subcommand("evaluate", "score the held-out split");
    evaluate->add_option("--checkpoint", ev.checkpoint);
    evaluate->add_flag("--untrained", ev_untrained, "score a freshly initialized model");
    evaluate->add_flag("--ground-truth", ev_ground_truth, "score the ground truth against itself");

    RenderOptions rd;
    auto* render = app.add_subcommand("render", "draw dataset scenes as PPM images");
    render->add_option("--scene-id", rd.scene_ids, "scene ids (default: all)");
    render->add_option("--stage", rd.stage, "plan | layout | predicted");
    render->add_option("--checkpoint", rd.checkpoint);
    render->add_option("--scale", rd.scale, "pixels per raster cell");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        RunConfig c;
        if (!config_path.empty()) apply_config_file(c, config_path);
        for (const auto& key : RunConfig::keys())
            if (key != "detach_stages" && app.count(detail::flag_name(key)) > 0) c.set(key, flag_values[key]);
        if (detach_flag) c.model.detach_stages = true;
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            c.set(detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
        }
        apply_seed_env(c);

        if (*synth) cmd_synth_data(c, synth_count, out, err);
        else if (app.got_subcommand("train")) cmd_train(c, out, err);
        else if (*generate) {
            if (*gen_seed_opt) gen.seed = gen_seed;
            cmd_generate(c, gen, out);
        } else if (*evaluate) {
            if (ev_untrained && ev_ground_truth) throw ConfigError("--untrained and --ground-truth are exclusive");
            ev.source = ev_untrained ? EvalSource::Untrained : (ev_ground_truth ? EvalSource::GroundTruth : EvalSource::Checkpoint);
            cmd_evaluate(c, ev, out, err);
        } else if (*render) {
            cmd_render(c, rd, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        err << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const UndefinedMetricError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const GeometryError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace layoutforge

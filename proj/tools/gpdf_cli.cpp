#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpdf/eval.hpp"
#include "gpdf/io.hpp"
#include "gpdf/pipeline.hpp"
#include "gpdf/planning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

gpdf::Scene load_scene(const std::string &path) {
    if (!fs::exists(path)) throw ConfigError("scene file not found: " + path);
    try {
        return gpdf::Scene::from_json_file(path);
    } catch (const std::exception &e) {
        throw ConfigError(std::string("invalid scene: ") + e.what());
    }
}

std::vector<double> parse_resolutions(const std::string &text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw ConfigError("no resolutions given");
    return out;
}

struct ScenarioFile {
    gpdf::Point3 start;
    gpdf::Point3 goal;
    gpdf::SphereBody body;
    gpdf::ReactiveParams reactive;
    gpdf::ChompParams chomp;
    std::size_t waypoints = 50;
    std::size_t max_steps = 2000;
};

ScenarioFile load_scenario(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception &e) {
        throw ConfigError(std::string("invalid scenario json: ") + e.what());
    }
    auto vec3 = [](const json &a) {
        return gpdf::Point3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    };
    ScenarioFile s;
    try {
        s.start = vec3(j.at("start"));
        s.goal = vec3(j.at("goal"));
        if (j.contains("spheres")) {
            for (const auto &sj : j.at("spheres")) {
                gpdf::BodySphere sphere;
                if (sj.contains("offset")) sphere.offset = vec3(sj.at("offset"));
                sphere.radius = sj.value("radius", 0.05);
                s.body.push_back(sphere);
            }
        } else {
            s.body = {{{-0.05, 0, 0}, 0.05}, {{0, 0, 0}, 0.05}, {{0.05, 0, 0}, 0.05}};
        }
        if (j.contains("reactive")) {
            const auto &r = j.at("reactive");
            s.reactive.d_safe = r.value("d_safe", s.reactive.d_safe);
            s.reactive.d_min = r.value("d_min", s.reactive.d_min);
            s.reactive.step_size = r.value("step_size", s.reactive.step_size);
            s.reactive.goal_tolerance = r.value("goal_tolerance", s.reactive.goal_tolerance);
        }
        if (j.contains("chomp")) {
            const auto &c = j.at("chomp");
            s.chomp.clearance = c.value("clearance", s.chomp.clearance);
            s.chomp.smoothness_weight = c.value("smoothness_weight", s.chomp.smoothness_weight);
            s.chomp.obstacle_weight = c.value("obstacle_weight", s.chomp.obstacle_weight);
            s.chomp.learning_rate = c.value("learning_rate", s.chomp.learning_rate);
            s.chomp.max_iterations = c.value("max_iterations", s.chomp.max_iterations);
        }
        s.waypoints = j.value("waypoints", s.waypoints);
        s.max_steps = j.value("max_steps", s.max_steps);
    } catch (const ConfigError &) {
        throw;
    } catch (const std::exception &e) {
        throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
    return s;
}

void write_trajectory_csv(const std::string &path, const std::vector<gpdf::Point3> &waypoints) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "k,x,y,z\n";
    out.precision(9);
    for (std::size_t k = 0; k < waypoints.size(); ++k) {
        out << k << "," << waypoints[k].x() << "," << waypoints[k].y() << ","
            << waypoints[k].z() << "\n";
    }
}

std::shared_ptr<gpdf::FusedField> field_from_map(const std::string &map_path, double resolution) {
    if (!fs::exists(map_path)) throw ConfigError("map file not found: " + map_path);
    if (fs::path(map_path).extension() == ".ply") {
        auto field = std::make_shared<gpdf::FusedField>(
            gpdf::default_kernel_for_resolution(resolution),
            gpdf::FusionParams::for_resolution(resolution));
        field->insert(gpdf::read_ply(map_path));
        return field;
    }
    // Scene json: map it first, then plan against the final field.
    gpdf::PipelineConfig cfg;
    cfg.scene = load_scene(map_path);
    cfg.resolution = resolution;
    cfg.evaluate_end = false;
    return gpdf::run_pipeline(cfg).field;
}

int run_sim(const std::string &scene_path, double resolution, double eta, const std::string &out,
            std::uint64_t seed, double noise, double slice_z, bool verbose) {
    gpdf::PipelineConfig cfg;
    cfg.scene = load_scene(scene_path);
    cfg.resolution = resolution;
    if (eta > 0.0) cfg.fusion_threshold = eta;
    cfg.out_dir = out;
    cfg.seed = seed;
    cfg.noise_sigma = noise;
    cfg.slice_z = slice_z;
    cfg.verbose = verbose;
    const gpdf::PipelineResult result = gpdf::run_pipeline(cfg);
    std::cout << "frames: " << result.frames << "\n"
              << "store points: " << result.metrics.store_points << "\n"
              << "distance rmse [m]: " << result.metrics.distance_rmse << "\n"
              << "surface rmse [m]: " << result.metrics.surface_rmse << "\n"
              << "mean gradient cosine: " << result.metrics.mean_cosine << "\n"
              << "mean update [ms]: " << result.metrics.mean_update_ms << "\n"
              << "query per point [us]: " << result.metrics.query_us_per_point << "\n"
              << "map: " << result.map_path << "\n";
    return 0;
}

int run_replay(const std::string &dataset, double resolution, const std::string &out,
               bool verbose) {
    gpdf::PipelineConfig cfg;
    cfg.dataset_dir = dataset;
    cfg.resolution = resolution;
    cfg.out_dir = out;
    cfg.verbose = verbose;
    const gpdf::PipelineResult result = gpdf::run_pipeline(cfg);
    std::cout << "frames: " << result.frames << "\n"
              << "store points: " << result.metrics.store_points << "\n"
              << "mean update [ms]: " << result.metrics.mean_update_ms << "\n"
              << "map: " << result.map_path << "\n";
    return 0;
}

int run_query(const std::string &map, const std::string &grid_path, const std::string &out,
              double resolution) {
    const auto field = field_from_map(map, resolution);
    gpdf::GridSpec grid;
    try {
        grid = gpdf::GridSpec::from_json_file(grid_path);
    } catch (const std::exception &e) {
        throw ConfigError(std::string("invalid grid: ") + e.what());
    }
    const std::vector<gpdf::Point3> points = grid.points();
    const std::vector<gpdf::FieldSample> samples = field->query_batch(points);
    gpdf::write_grid_csv(out, points, samples);
    std::cout << "wrote " << points.size() << " samples to " << out << "\n";
    return 0;
}

int run_plan(const std::string &map, const std::string &scenario_path, const std::string &mode,
             const std::string &out, double resolution) {
    const ScenarioFile scenario = load_scenario(scenario_path);
    const auto field = field_from_map(map, resolution);
    fs::create_directories(out);

    if (mode == "reactive") {
        const gpdf::RolloutResult rollout = gpdf::reactive_rollout(
            scenario.start, scenario.goal, *field, scenario.reactive, scenario.max_steps);
        write_trajectory_csv((fs::path(out) / "trajectory.csv").string(), rollout.path);
        std::cout << "reached: " << (rollout.reached ? "yes" : "no") << "\n"
                  << "steps: " << rollout.steps << "\n"
                  << "min queried distance [m]: " << rollout.min_distance << "\n";
        return rollout.reached ? 0 : 2;
    }
    if (mode == "chomp") {
        const gpdf::Trajectory init =
            gpdf::Trajectory::straight_line(scenario.start, scenario.goal, scenario.waypoints);
        const gpdf::ChompResult result =
            gpdf::chomp_optimize(init, scenario.body, *field, scenario.chomp);
        write_trajectory_csv((fs::path(out) / "trajectory.csv").string(),
                             result.trajectory.waypoints);
        std::ofstream costs(fs::path(out) / "cost_history.csv");
        costs << "iteration,cost\n";
        costs.precision(12);
        for (std::size_t i = 0; i < result.cost_history.size(); ++i) {
            costs << i << "," << result.cost_history[i] << "\n";
        }
        std::cout << "iterations: " << result.iterations << "\n"
                  << "initial cost: " << result.cost_history.front() << "\n"
                  << "final cost: " << result.cost_history.back() << "\n";
        return 0;
    }
    throw ConfigError("unknown mode: " + mode);
}

int run_bench(const std::string &scene_path, const std::string &resolutions_text,
              const std::string &out, std::uint64_t seed) {
    const gpdf::Scene scene = load_scene(scene_path);
    const std::vector<double> resolutions = parse_resolutions(resolutions_text);

    std::ofstream csv(out);
    if (!csv) throw std::runtime_error("cannot open for writing: " + out);
    csv << "resolution,distance_rmse,baseline_rmse,mean_cosine,surface_rmse,mean_update_ms,"
           "query_us_per_point,store_points\n";
    csv.precision(9);

    for (const double res : resolutions) {
        gpdf::PipelineConfig cfg;
        cfg.scene = scene;
        cfg.resolution = res;
        cfg.seed = seed;
        const gpdf::PipelineResult result = gpdf::run_pipeline(cfg);

        std::vector<double> times;
        for (std::size_t i = 0; i < result.frames; ++i) times.push_back(scene.frame_time(i));
        const std::vector<gpdf::Point3> queries = gpdf::sample_visible_free_space(
            scene, times, cfg.eval_samples, cfg.eval_min_distance, cfg.eval_max_distance,
            seed + 1);
        const double baseline = gpdf::nearest_point_rmse(
            result.field->export_points(), scene, scene.frame_time(result.frames - 1), queries);

        csv << res << "," << result.metrics.distance_rmse << "," << baseline << ","
            << result.metrics.mean_cosine << "," << result.metrics.surface_rmse << ","
            << result.metrics.mean_update_ms << "," << result.metrics.query_us_per_point << ","
            << result.metrics.store_points << "\n";
        std::cout << "resolution " << res << ": rmse " << result.metrics.distance_rmse
                  << ", baseline " << baseline << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Incremental Gaussian-process distance field mapping and planning"};
    app.require_subcommand(1);

    // sim run
    auto *sim = app.add_subcommand("sim", "Synthetic scene simulation");
    sim->require_subcommand(1);
    auto *sim_run = sim->add_subcommand("run", "Render, integrate and evaluate a scene");
    std::string scene_path, out_dir;
    double resolution = 0.01, eta = 0.0, noise = 0.0, slice_z = 0.15;
    std::uint64_t seed = 0;
    bool verbose = false;
    sim_run->add_option("--scene", scene_path, "Scene json")->required();
    sim_run->add_option("--resolution", resolution, "Training resolution [m]");
    sim_run->add_option("--eta", eta, "Fusion/removal threshold [m] (default 5x resolution)");
    sim_run->add_option("--out", out_dir, "Output directory")->required();
    sim_run->add_option("--seed", seed, "RNG seed");
    sim_run->add_option("--noise", noise, "Depth noise sigma [m]");
    sim_run->add_option("--slice-z", slice_z, "Field slice height [m]");
    sim_run->add_flag("--verbose", verbose, "Per-frame progress");

    // replay
    auto *replay = app.add_subcommand("replay", "Replay a recorded PLY+pose dataset");
    std::string dataset_dir;
    replay->add_option("--dataset", dataset_dir, "Dataset directory")->required();
    replay->add_option("--resolution", resolution, "Training resolution [m]");
    replay->add_option("--out", out_dir, "Output directory")->required();
    replay->add_flag("--verbose", verbose, "Per-frame progress");

    // query
    auto *query = app.add_subcommand("query", "Sample a stored map on a grid");
    std::string map_path, grid_path, out_csv;
    query->add_option("--map", map_path, "Map PLY or scene json")->required();
    query->add_option("--grid", grid_path, "Grid spec json")->required();
    query->add_option("--out", out_csv, "Output csv")->required();
    query->add_option("--resolution", resolution, "Training resolution [m]");

    // plan
    auto *plan = app.add_subcommand("plan", "Plan against a mapped field");
    std::string scenario_path, mode = "chomp";
    plan->add_option("--map", map_path, "Map PLY or scene json")->required();
    plan->add_option("--scenario", scenario_path, "Scenario json")->required();
    plan->add_option("--mode", mode, "reactive|chomp");
    plan->add_option("--out", out_dir, "Output directory")->required();
    plan->add_option("--resolution", resolution, "Training resolution [m]");

    // bench
    auto *bench = app.add_subcommand("bench", "Sweep training resolutions on a scene");
    std::string resolutions_text = "0.01,0.05,0.10,0.15,0.20,0.30";
    bench->add_option("--scene", scene_path, "Scene json")->required();
    bench->add_option("--resolutions", resolutions_text, "Comma-separated resolutions [m]");
    bench->add_option("--out", out_csv, "Output csv")->required();
    bench->add_option("--seed", seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (sim_run->parsed()) {
            return run_sim(scene_path, resolution, eta, out_dir, seed, noise, slice_z, verbose);
        }
        if (replay->parsed()) return run_replay(dataset_dir, resolution, out_dir, verbose);
        if (query->parsed()) return run_query(map_path, grid_path, out_csv, resolution);
        if (plan->parsed()) return run_plan(map_path, scenario_path, mode, out_dir, resolution);
        if (bench->parsed()) return run_bench(scene_path, resolutions_text, out_csv, seed);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

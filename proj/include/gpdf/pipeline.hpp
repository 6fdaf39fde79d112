#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpdf/eval.hpp"
#include "gpdf/fused_field.hpp"
#include "gpdf/io.hpp"
#include "gpdf/scene.hpp"

namespace gpdf {

/// Kernel defaults scaled so the lengthscale always exceeds the training
/// point spacing.
KernelParams default_kernel_for_resolution(double resolution);

struct PipelineConfig {
    std::optional<Scene> scene;      // exactly one of scene/dataset_dir
    std::string dataset_dir;

    double resolution = 0.01;
    std::optional<double> fusion_threshold;  // default 5 x resolution
    std::optional<KernelParams> kernel;      // default scaled to resolution

    std::string out_dir;             // empty: no artifacts written
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    std::optional<std::size_t> max_frames;

    bool evaluate_end = true;
    std::size_t eval_samples = 2000;
    double eval_min_distance = 0.02;
    double eval_max_distance = 0.5;

    std::optional<double> slice_z;   // horizontal slice dump height
    bool verbose = false;
};

struct PipelineResult {
    MetricsReport metrics;
    std::vector<UpdateStats> frame_stats;
    std::size_t frames = 0;
    std::string map_path;
    std::string metrics_path;
    std::string slice_path;
    std::shared_ptr<FusedField> field;  // the populated map
};

/// Renders (or reads) every frame, integrates it into a fused field, then
/// evaluates and writes the map PLY, per-frame metrics CSV and an optional
/// horizontal field slice. Deterministic for a fixed seed.
PipelineResult run_pipeline(const PipelineConfig &config);

}  // namespace gpdf

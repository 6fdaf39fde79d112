#pragma once

#include <string>
#include <vector>

#include "gpdf/frustum_field.hpp"
#include "gpdf/geometry.hpp"
#include "gpdf/gp.hpp"

namespace gpdf {

/// ASCII PLY with double x/y/z and optional uchar red/green/blue.
void write_ply(const std::string &path, const PointCloud &cloud);
PointCloud read_ply(const std::string &path);

/// Pose file: one line per frame, `timestamp tx ty tz qx qy qz qw`.
struct TimedPose {
    double timestamp = 0.0;
    Pose pose;
};
std::vector<TimedPose> read_pose_file(const std::string &path);
void write_pose_file(const std::string &path, const std::vector<TimedPose> &poses);

/// Grid slice dump, header `x,y,z,distance,gx,gy,gz`. Undefined gradients
/// write zeros.
void write_grid_csv(const std::string &path, std::span<const Point3> points,
                    std::span<const FieldSample> samples);

/// Regular grid on a plane spanned by two axes.
struct GridSpec {
    Point3 origin = Point3::Zero();
    Eigen::Vector3d u_axis = Eigen::Vector3d::UnitX();
    Eigen::Vector3d v_axis = Eigen::Vector3d::UnitY();
    int u_count = 10;
    int v_count = 10;
    double spacing = 0.05;

    std::vector<Point3> points() const;
    static GridSpec from_json_file(const std::string &path);
};

/// Replays a recorded sequence: per-frame ASCII PLY clouds named by
/// timestamp (`<seconds>.ply`), a `poses.txt` pose file, and an optional
/// `intrinsics.json`. Clouds are in the sensor frame; poses map sensor to
/// world. Frames without a pose within the matching tolerance are skipped
/// with a warning.
class DatasetReader {
public:
    explicit DatasetReader(const std::string &directory, double pose_tolerance = 0.01);

    bool has_next() const { return cursor_ < entries_.size(); }
    SensorFrame next();

    std::size_t frame_count() const { return entries_.size(); }
    std::size_t skipped_frames() const { return skipped_; }
    std::size_t dropped_points() const { return dropped_points_; }
    const CameraIntrinsics &intrinsics() const { return intrinsics_; }

private:
    struct Entry {
        double timestamp;
        std::string path;
        Pose pose;
    };
    std::vector<Entry> entries_;
    std::size_t cursor_ = 0;
    std::size_t skipped_ = 0;
    std::size_t dropped_points_ = 0;
    CameraIntrinsics intrinsics_;
    int next_index_ = 0;
};

}  // namespace gpdf

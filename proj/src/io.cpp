#include "gpdf/io.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace gpdf {

void write_ply(const std::string &path, const PointCloud &cloud) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const bool with_colors = cloud.has_colors();
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (with_colors) {
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    out << "end_header\n";
    out.precision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point3 &p = cloud.points[i];
        out << p.x() << " " << p.y() << " " << p.z();
        if (with_colors) {
            const Color &c = cloud.colors[i];
            out << " " << int(c[0]) << " " << int(c[1]) << " " << int(c[2]);
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

PointCloud read_ply(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);

    std::string line;
    std::getline(in, line);
    if (line != "ply") throw std::runtime_error("not a PLY file: " + path);

    std::size_t vertex_count = 0;
    std::vector<std::string> properties;
    bool ascii = false;
    bool in_vertex_element = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            in_vertex_element = name == "vertex";
            if (in_vertex_element) {
                vertex_count = count;
            } else if (count > 0) {
                throw std::runtime_error("unsupported non-vertex element in: " + path);
            }
        } else if (word == "property" && in_vertex_element) {
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw std::runtime_error("unsupported list property: " + path);
            properties.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    if (!ascii) throw std::runtime_error("only ascii PLY is supported: " + path);

    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (std::size_t i = 0; i < properties.size(); ++i) {
        const std::string &n = properties[i];
        if (n == "x") ix = static_cast<int>(i);
        if (n == "y") iy = static_cast<int>(i);
        if (n == "z") iz = static_cast<int>(i);
        if (n == "red") ir = static_cast<int>(i);
        if (n == "green") ig = static_cast<int>(i);
        if (n == "blue") ib = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error("PLY lacks x/y/z: " + path);
    const bool with_colors = ir >= 0 && ig >= 0 && ib >= 0;

    PointCloud cloud;
    cloud.reserve(vertex_count);
    std::vector<double> values(properties.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        if (!std::getline(in, line)) throw std::runtime_error("truncated PLY: " + path);
        std::istringstream ls(line);
        std::string token;
        for (double &val : values) {
            if (!(ls >> token)) throw std::runtime_error("malformed PLY vertex line: " + path);
            try {
                val = std::stod(token);  // accepts nan/inf, which stream extraction does not
            } catch (const std::exception &) {
                throw std::runtime_error("malformed PLY vertex line: " + path);
            }
        }
        const Point3 p(values[ix], values[iy], values[iz]);
        if (with_colors) {
            cloud.push_back(p, Color{static_cast<std::uint8_t>(values[ir]),
                                     static_cast<std::uint8_t>(values[ig]),
                                     static_cast<std::uint8_t>(values[ib])});
        } else {
            cloud.push_back(p);
        }
    }
    return cloud;
}

std::vector<TimedPose> read_pose_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pose file: " + path);
    std::vector<TimedPose> poses;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
            throw std::runtime_error("malformed pose line: " + line);
        }
        TimedPose tp;
        tp.timestamp = t;
        tp.pose.translation = {tx, ty, tz};
        tp.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
        poses.push_back(tp);
    }
    std::sort(poses.begin(), poses.end(),
              [](const TimedPose &a, const TimedPose &b) { return a.timestamp < b.timestamp; });
    return poses;
}

void write_pose_file(const std::string &path, const std::vector<TimedPose> &poses) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.precision(17);
    for (const TimedPose &tp : poses) {
        const Eigen::Quaterniond q(tp.pose.rotation);
        out << tp.timestamp << " " << tp.pose.translation.x() << " " << tp.pose.translation.y()
            << " " << tp.pose.translation.z() << " " << q.x() << " " << q.y() << " " << q.z()
            << " " << q.w() << "\n";
    }
}

void write_grid_csv(const std::string &path, std::span<const Point3> points,
                    std::span<const FieldSample> samples) {
    if (points.size() != samples.size()) {
        throw std::invalid_argument("write_grid_csv: size mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "x,y,z,distance,gx,gy,gz\n";
    out.precision(9);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point3 &p = points[i];
        const FieldSample &s = samples[i];
        const Eigen::Vector3d g =
            s.gradient_defined ? s.gradient : Eigen::Vector3d::Zero();
        out << p.x() << "," << p.y() << "," << p.z() << "," << s.distance << "," << g.x() << ","
            << g.y() << "," << g.z() << "\n";
    }
}

std::vector<Point3> GridSpec::points() const {
    std::vector<Point3> pts;
    pts.reserve(static_cast<std::size_t>(u_count) * v_count);
    for (int v = 0; v < v_count; ++v) {
        for (int u = 0; u < u_count; ++u) {
            pts.push_back(origin + spacing * (u * u_axis + v * v_axis));
        }
    }
    return pts;
}

GridSpec GridSpec::from_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open grid file: " + path);
    nlohmann::json j;
    in >> j;
    GridSpec g;
    auto vec3 = [](const nlohmann::json &a) {
        return Point3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    };
    if (j.contains("origin")) g.origin = vec3(j.at("origin"));
    if (j.contains("u_axis")) g.u_axis = vec3(j.at("u_axis")).normalized();
    if (j.contains("v_axis")) g.v_axis = vec3(j.at("v_axis")).normalized();
    g.u_count = j.value("u_count", 10);
    g.v_count = j.value("v_count", 10);
    g.spacing = j.value("spacing", 0.05);
    return g;
}

DatasetReader::DatasetReader(const std::string &directory, double pose_tolerance) {
    if (!fs::is_directory(directory)) {
        throw std::runtime_error("dataset directory not found: " + directory);
    }

    intrinsics_.hfov = 70.0 * M_PI / 180.0;
    intrinsics_.vfov = 50.0 * M_PI / 180.0;
    intrinsics_.near_plane = 0.1;
    intrinsics_.far_plane = 6.0;
    const fs::path intr_path = fs::path(directory) / "intrinsics.json";
    if (fs::exists(intr_path)) {
        std::ifstream in(intr_path);
        nlohmann::json j;
        in >> j;
        intrinsics_.hfov = j.value("hfov_deg", 70.0) * M_PI / 180.0;
        intrinsics_.vfov = j.value("vfov_deg", 50.0) * M_PI / 180.0;
        intrinsics_.near_plane = j.value("near", 0.1);
        intrinsics_.far_plane = j.value("far", 6.0);
    }

    std::vector<TimedPose> poses;
    const fs::path pose_path = fs::path(directory) / "poses.txt";
    if (fs::exists(pose_path)) poses = read_pose_file(pose_path.string());

    std::vector<std::pair<double, std::string>> clouds;
    for (const auto &entry : fs::directory_iterator(directory)) {
        if (entry.path().extension() != ".ply") continue;
        const std::string stem = entry.path().stem().string();
        try {
            clouds.emplace_back(std::stod(stem), entry.path().string());
        } catch (const std::exception &) {
            throw std::runtime_error("cannot parse timestamp from filename: " +
                                     entry.path().string());
        }
    }
    std::sort(clouds.begin(), clouds.end());

    for (const auto &[t, path] : clouds) {
        const TimedPose *best = nullptr;
        double best_dt = pose_tolerance;
        for (const TimedPose &tp : poses) {
            const double dt = std::abs(tp.timestamp - t);
            if (dt <= best_dt) {
                best_dt = dt;
                best = &tp;
            }
        }
        if (!best) {
            std::cerr << "dataset: no pose within " << pose_tolerance << " s for frame at t=" << t
                      << ", skipping\n";
            ++skipped_;
            continue;
        }
        entries_.push_back({t, path, best->pose});
    }
}

SensorFrame DatasetReader::next() {
    if (!has_next()) throw std::out_of_range("DatasetReader: no more frames");
    const Entry &e = entries_[cursor_++];
    SensorFrame frame;
    frame.timestamp = e.timestamp;
    frame.pose = e.pose;
    frame.intrinsics = intrinsics_;
    frame.index = next_index_++;
    std::size_t dropped = 0;
    frame.cloud = filter_finite(read_ply(e.path), &dropped);
    dropped_points_ += dropped;
    return frame;
}

}  // namespace gpdf

#include "gpdf/scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gpdf {

using nlohmann::json;

Pose pose_at(const std::vector<MotionKeyframe> &keyframes, double t) {
    if (keyframes.empty()) return Pose::identity();
    if (t <= keyframes.front().t || keyframes.size() == 1) {
        return {keyframes.front().rotation.toRotationMatrix(), keyframes.front().position};
    }
    if (t >= keyframes.back().t) {
        return {keyframes.back().rotation.toRotationMatrix(), keyframes.back().position};
    }
    std::size_t hi = 1;
    while (keyframes[hi].t < t) ++hi;
    const MotionKeyframe &a = keyframes[hi - 1];
    const MotionKeyframe &b = keyframes[hi];
    const double span = b.t - a.t;
    const double s = span > 0.0 ? (t - a.t) / span : 0.0;
    Pose p;
    p.translation = (1.0 - s) * a.position + s * b.position;
    p.rotation = a.rotation.slerp(s, b.rotation).toRotationMatrix();
    return p;
}

Primitive Primitive::plane(const Point3 &point, const Point3 &normal, Color color) {
    Primitive prim;
    prim.kind = Kind::Plane;
    prim.plane_normal = normal.normalized();
    prim.color = color;
    prim.motion = {{0.0, point, Eigen::Quaterniond::Identity()}};
    return prim;
}

Primitive Primitive::sphere(const Point3 &center, double radius, Color color) {
    Primitive prim;
    prim.kind = Kind::Sphere;
    prim.sphere_radius = radius;
    prim.color = color;
    prim.motion = {{0.0, center, Eigen::Quaterniond::Identity()}};
    return prim;
}

Primitive Primitive::box(const Point3 &center, const Point3 &half_extents, Color color) {
    Primitive prim;
    prim.kind = Kind::Box;
    prim.box_half_extents = half_extents;
    prim.color = color;
    prim.motion = {{0.0, center, Eigen::Quaterniond::Identity()}};
    return prim;
}

std::size_t Scene::frame_count() const {
    return static_cast<std::size_t>(std::floor(duration * frame_rate)) + 1;
}

double Scene::frame_time(std::size_t index) const {
    return static_cast<double>(index) / frame_rate;
}

Eigen::Quaterniond look_at(const Point3 &eye, const Point3 &target, const Point3 &up) {
    const Eigen::Vector3d fwd = (target - eye).normalized();  // camera +z
    Eigen::Vector3d right = fwd.cross(up);
    if (right.norm() < 1e-9) right = fwd.cross(Point3::UnitX());
    right.normalize();
    const Eigen::Vector3d down = fwd.cross(right);  // camera +y
    Eigen::Matrix3d rot;
    rot.col(0) = right;
    rot.col(1) = down;
    rot.col(2) = fwd;
    return Eigen::Quaterniond(rot);
}

Scene Scene::ball_on_table() {
    Scene scene;
    scene.duration = 5.0;
    scene.frame_rate = 10.0;
    scene.image_width = 160;
    scene.image_height = 120;
    scene.intrinsics.hfov = 60.0 * M_PI / 180.0;
    scene.intrinsics.vfov = 45.0 * M_PI / 180.0;
    scene.intrinsics.near_plane = 0.1;
    scene.intrinsics.far_plane = 6.0;

    // Table top at z = 0, 1.5 m x 1 m.
    scene.primitives.push_back(
        Primitive::box({0.0, 0.0, -0.05}, {0.75, 0.5, 0.05}, {150, 110, 70}));

    // Ball rolling left to right at 0.2 m/s.
    Primitive ball = Primitive::sphere({-0.5, 0.0, 0.15}, 0.15, {220, 60, 60});
    ball.motion = {{0.0, {-0.5, 0.0, 0.15}, Eigen::Quaterniond::Identity()},
                   {5.0, {0.5, 0.0, 0.15}, Eigen::Quaterniond::Identity()}};
    scene.primitives.push_back(ball);

    // Fixed camera 1.5 m up, tilted 30 degrees off vertical.
    const Point3 eye(0.0, -0.85, 1.5);
    const Eigen::Quaterniond q = look_at(eye, {0.0, 0.0, 0.0});
    scene.camera_motion = {{0.0, eye, q}};
    return scene;
}

Scene Scene::room() {
    Scene scene;
    scene.duration = 5.0;
    scene.frame_rate = 10.0;
    scene.image_width = 160;
    scene.image_height = 120;
    scene.intrinsics.hfov = 70.0 * M_PI / 180.0;
    scene.intrinsics.vfov = 50.0 * M_PI / 180.0;
    scene.intrinsics.near_plane = 0.1;
    scene.intrinsics.far_plane = 8.0;

    scene.primitives.push_back(
        Primitive::plane({0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, {120, 120, 130}));  // floor
    scene.primitives.push_back(
        Primitive::plane({0.0, 3.0, 0.0}, {0.0, -1.0, 0.0}, {160, 160, 150}));  // back wall
    scene.primitives.push_back(
        Primitive::plane({-2.8, 0.0, 0.0}, {1.0, 0.0, 0.0}, {150, 150, 160}));  // side wall
    scene.primitives.push_back(
        Primitive::box({1.4, 2.4, 0.25}, {0.3, 0.25, 0.25}, {150, 110, 70}));  // crate
    scene.primitives.push_back(Primitive::sphere({-1.5, 1.9, 0.4}, 0.4, {220, 60, 60}));

    // Pan across the room from a fixed height.
    const Point3 eye(0.2, -2.2, 1.5);
    scene.camera_motion = {{0.0, eye, look_at(eye, {-2.4, 1.8, 0.3})},
                           {2.5, eye, look_at(eye, {-0.2, 2.2, 0.3})},
                           {5.0, eye, look_at(eye, {1.6, 1.8, 0.3})}};
    return scene;
}

namespace {

GroundTruth primitive_truth(const Primitive &prim, double t, const Point3 &x) {
    const Pose pose = prim.pose(t);
    GroundTruth gt;
    switch (prim.kind) {
        case Primitive::Kind::Plane: {
            const Eigen::Vector3d n = pose.rotation * prim.plane_normal;
            const double signed_d = n.dot(x - pose.translation);
            gt.distance = std::abs(signed_d);
            gt.gradient = signed_d >= 0.0 ? n : Eigen::Vector3d(-n);
            gt.inside = false;
            break;
        }
        case Primitive::Kind::Sphere: {
            const Eigen::Vector3d rel = x - pose.translation;
            const double r = rel.norm();
            if (r >= prim.sphere_radius) {
                gt.distance = r - prim.sphere_radius;
                gt.gradient = r > 1e-12 ? Eigen::Vector3d(rel / r) : Eigen::Vector3d::UnitZ();
            } else {
                gt.distance = prim.sphere_radius - r;  // penetration depth
                gt.inside = true;
                gt.gradient = r > 1e-12 ? Eigen::Vector3d(-rel / r) : Eigen::Vector3d::UnitZ();
            }
            break;
        }
        case Primitive::Kind::Box: {
            const Eigen::Vector3d q = pose.rotation.transpose() * (x - pose.translation);
            const Eigen::Vector3d e = q.cwiseAbs() - prim.box_half_extents;
            if ((e.array() > 0.0).any()) {
                Eigen::Vector3d outside = e.cwiseMax(0.0);
                gt.distance = outside.norm();
                Eigen::Vector3d g_local = outside / gt.distance;
                for (int a = 0; a < 3; ++a) {
                    if (q[a] < 0.0) g_local[a] = -g_local[a];
                }
                gt.gradient = pose.rotation * g_local;
            } else {
                // Inside: penetration depth to the nearest face.
                int axis = 0;
                e.maxCoeff(&axis);
                gt.distance = -e[axis];
                gt.inside = true;
                Eigen::Vector3d g_local = Eigen::Vector3d::Zero();
                g_local[axis] = q[axis] >= 0.0 ? -1.0 : 1.0;  // deeper into the box
                gt.gradient = pose.rotation * g_local;
            }
            break;
        }
    }
    return gt;
}

}  // namespace

GroundTruth ground_truth(const Scene &scene, double t, const Point3 &x) {
    GroundTruth best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        GroundTruth gt = primitive_truth(scene.primitives[i], t, x);
        const double effective = gt.inside ? 0.0 : gt.distance;
        const double best_effective = best.inside ? 0.0 : best.distance;
        if (best.primitive < 0 || effective < best_effective) {
            gt.primitive = static_cast<int>(i);
            best = gt;
        }
    }
    if (best.primitive < 0) {
        best.distance = std::numeric_limits<double>::infinity();
        return best;
    }
    if (best.inside) best.distance = 0.0;  // inside reports the zero-distance convention
    return best;
}

double surface_distance(const Scene &scene, double t, const Point3 &x) {
    double best = std::numeric_limits<double>::infinity();
    for (const Primitive &prim : scene.primitives) {
        best = std::min(best, primitive_truth(prim, t, x).distance);
    }
    return best;
}

namespace {

std::optional<double> ray_primitive(const Primitive &prim, double t, const Point3 &origin,
                                    const Eigen::Vector3d &dir) {
    constexpr double kEps = 1e-9;
    const Pose pose = prim.pose(t);
    switch (prim.kind) {
        case Primitive::Kind::Plane: {
            const Eigen::Vector3d n = pose.rotation * prim.plane_normal;
            const double denom = n.dot(dir);
            if (std::abs(denom) < 1e-12) return std::nullopt;
            const double s = n.dot(pose.translation - origin) / denom;
            if (s <= kEps) return std::nullopt;
            return s;
        }
        case Primitive::Kind::Sphere: {
            const Eigen::Vector3d oc = origin - pose.translation;
            const double b = oc.dot(dir);
            const double c = oc.squaredNorm() - prim.sphere_radius * prim.sphere_radius;
            const double disc = b * b - c;
            if (disc < 0.0) return std::nullopt;
            const double sq = std::sqrt(disc);
            const double s0 = -b - sq;
            if (s0 > kEps) return s0;
            const double s1 = -b + sq;
            if (s1 > kEps) return s1;
            return std::nullopt;
        }
        case Primitive::Kind::Box: {
            const Eigen::Vector3d o = pose.rotation.transpose() * (origin - pose.translation);
            const Eigen::Vector3d d = pose.rotation.transpose() * dir;
            double s_near = -std::numeric_limits<double>::infinity();
            double s_far = std::numeric_limits<double>::infinity();
            for (int a = 0; a < 3; ++a) {
                const double h = prim.box_half_extents[a];
                if (std::abs(d[a]) < 1e-13) {
                    if (std::abs(o[a]) > h) return std::nullopt;
                    continue;
                }
                double lo = (-h - o[a]) / d[a];
                double hi = (h - o[a]) / d[a];
                if (lo > hi) std::swap(lo, hi);
                s_near = std::max(s_near, lo);
                s_far = std::min(s_far, hi);
                if (s_near > s_far) return std::nullopt;
            }
            if (s_near > kEps) return s_near;
            if (s_far > kEps) return s_far;
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<RayHit> ray_cast(const Scene &scene, double t, const Point3 &origin,
                               const Eigen::Vector3d &direction) {
    const Eigen::Vector3d dir = direction.normalized();
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto s = ray_primitive(scene.primitives[i], t, origin, dir);
        if (s && (!best || *s < best->range)) {
            best = RayHit{*s, static_cast<int>(i)};
        }
    }
    return best;
}

SensorFrame render_frame(const Scene &scene, double t, double noise_sigma,
                         std::mt19937_64 *rng) {
    SensorFrame frame;
    frame.pose = scene.camera_pose(t);
    frame.intrinsics = scene.intrinsics;
    frame.timestamp = t;
    frame.index = static_cast<int>(std::lround(t * scene.frame_rate));

    const double th = std::tan(0.5 * scene.intrinsics.hfov);
    const double tv = std::tan(0.5 * scene.intrinsics.vfov);
    std::normal_distribution<double> noise(0.0, noise_sigma);

    for (int v = 0; v < scene.image_height; ++v) {
        for (int u = 0; u < scene.image_width; ++u) {
            const double px = th * (2.0 * (u + 0.5) / scene.image_width - 1.0);
            const double py = tv * (2.0 * (v + 0.5) / scene.image_height - 1.0);
            const Eigen::Vector3d dir_cam = Eigen::Vector3d(px, py, 1.0).normalized();
            const Eigen::Vector3d dir_world = frame.pose.rotation * dir_cam;
            const auto hit = ray_cast(scene, t, frame.pose.translation, dir_world);
            if (!hit) continue;
            double range = hit->range;
            if (noise_sigma > 0.0 && rng) range += noise(*rng);
            const Point3 p_cam = dir_cam * range;
            if (!(p_cam.z() > scene.intrinsics.near_plane) ||
                p_cam.z() > scene.intrinsics.far_plane) {
                continue;
            }
            frame.cloud.push_back(p_cam, scene.primitives[hit->primitive].color);
        }
    }
    return frame;
}

namespace {

Point3 parse_vec3(const json &j) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_json(const Point3 &p) { return json::array({p.x(), p.y(), p.z()}); }

std::vector<MotionKeyframe> parse_motion(const json &j) {
    std::vector<MotionKeyframe> motion;
    for (const auto &kf : j) {
        MotionKeyframe m;
        m.t = kf.value("t", 0.0);
        m.position = parse_vec3(kf.at("position"));
        if (kf.contains("quaternion")) {
            const auto &q = kf.at("quaternion");  // [qx, qy, qz, qw]
            m.rotation = Eigen::Quaterniond(q[3].get<double>(), q[0].get<double>(),
                                            q[1].get<double>(), q[2].get<double>())
                             .normalized();
        } else if (kf.contains("look_at")) {
            m.rotation = look_at(m.position, parse_vec3(kf.at("look_at")));
        }
        motion.push_back(m);
    }
    return motion;
}

json motion_json(const std::vector<MotionKeyframe> &motion) {
    json arr = json::array();
    for (const MotionKeyframe &m : motion) {
        json kf;
        kf["t"] = m.t;
        kf["position"] = vec3_json(m.position);
        kf["quaternion"] = json::array(
            {m.rotation.x(), m.rotation.y(), m.rotation.z(), m.rotation.w()});
        arr.push_back(kf);
    }
    return arr;
}

}  // namespace

Scene Scene::from_json_text(const std::string &text) {
    const json j = json::parse(text);
    if (j.contains("builtin")) {
        const std::string name = j.at("builtin").get<std::string>();
        if (name == "ball_on_table") return ball_on_table();
        if (name == "room") return room();
        throw std::invalid_argument("unknown builtin scene: " + name);
    }

    Scene scene;
    scene.duration = j.value("duration", 5.0);
    scene.frame_rate = j.value("frame_rate", 10.0);
    if (j.contains("camera")) {
        const auto &cam = j.at("camera");
        scene.image_width = cam.value("width", 160);
        scene.image_height = cam.value("height", 120);
        scene.intrinsics.hfov = cam.value("hfov_deg", 60.0) * M_PI / 180.0;
        scene.intrinsics.vfov = cam.value("vfov_deg", 45.0) * M_PI / 180.0;
        scene.intrinsics.near_plane = cam.value("near", 0.1);
        scene.intrinsics.far_plane = cam.value("far", 6.0);
        if (cam.contains("keyframes")) scene.camera_motion = parse_motion(cam.at("keyframes"));
    }
    for (const auto &pj : j.value("primitives", json::array())) {
        Primitive prim;
        const std::string kind = pj.at("type").get<std::string>();
        if (kind == "plane") {
            prim.kind = Primitive::Kind::Plane;
            prim.plane_normal = parse_vec3(pj.at("normal")).normalized();
        } else if (kind == "sphere") {
            prim.kind = Primitive::Kind::Sphere;
            prim.sphere_radius = pj.at("radius").get<double>();
        } else if (kind == "box") {
            prim.kind = Primitive::Kind::Box;
            prim.box_half_extents = parse_vec3(pj.at("half_extents"));
        } else {
            throw std::invalid_argument("unknown primitive type: " + kind);
        }
        if (pj.contains("color")) {
            const auto &c = pj.at("color");
            prim.color = {c[0].get<std::uint8_t>(), c[1].get<std::uint8_t>(),
                          c[2].get<std::uint8_t>()};
        }
        if (pj.contains("keyframes")) {
            prim.motion = parse_motion(pj.at("keyframes"));
        } else if (pj.contains("position")) {
            prim.motion = {{0.0, parse_vec3(pj.at("position")), Eigen::Quaterniond::Identity()}};
        }
        scene.primitives.push_back(prim);
    }
    return scene;
}

Scene Scene::from_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open scene file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string Scene::to_json_text() const {
    json j;
    j["duration"] = duration;
    j["frame_rate"] = frame_rate;
    json cam;
    cam["width"] = image_width;
    cam["height"] = image_height;
    cam["hfov_deg"] = intrinsics.hfov * 180.0 / M_PI;
    cam["vfov_deg"] = intrinsics.vfov * 180.0 / M_PI;
    cam["near"] = intrinsics.near_plane;
    cam["far"] = intrinsics.far_plane;
    cam["keyframes"] = motion_json(camera_motion);
    j["camera"] = cam;
    json prims = json::array();
    for (const Primitive &prim : primitives) {
        json pj;
        switch (prim.kind) {
            case Primitive::Kind::Plane:
                pj["type"] = "plane";
                pj["normal"] = vec3_json(prim.plane_normal);
                break;
            case Primitive::Kind::Sphere:
                pj["type"] = "sphere";
                pj["radius"] = prim.sphere_radius;
                break;
            case Primitive::Kind::Box:
                pj["type"] = "box";
                pj["half_extents"] = vec3_json(prim.box_half_extents);
                break;
        }
        pj["color"] = json::array({prim.color[0], prim.color[1], prim.color[2]});
        pj["keyframes"] = motion_json(prim.motion);
        prims.push_back(pj);
    }
    j["primitives"] = prims;
    return j.dump(2);
}

}  // namespace gpdf

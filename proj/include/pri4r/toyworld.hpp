#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/checkpoint.hpp"
#include "pri4r/geometry.hpp"
#include "pri4r/rng.hpp"

namespace pri4r {

enum class TaskKind : uint32_t { Drawer = 0, Door = 1, PickPlace = 2 };

inline const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::Drawer: return "drawer";
        case TaskKind::Door: return "door";
        case TaskKind::PickPlace: return "pickplace";
    }
    return "?";
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "drawer") return TaskKind::Drawer;
    if (s == "door") return TaskKind::Door;
    if (s == "pickplace") return TaskKind::PickPlace;
    throw std::runtime_error("unknown task: " + s);
}

enum class Articulation : uint8_t { Fixed, Prismatic, Revolute, Free };

constexpr double kActionLimit = 0.05;   // |delta|_inf per step, meters
constexpr double kGraspRadius = 0.02;   // attach distance to a handle point
constexpr size_t kObsDim = 16;
constexpr size_t kProprioDim = 4;
constexpr size_t kActionDim = 4;

struct Body {
    TriangleMesh mesh;  // vertices in the body's initial world placement
    Articulation art = Articulation::Fixed;
    Vec3 axis{1, 0, 0};       // prismatic direction / revolute axis (unit)
    Vec3 pivot{};             // revolute pivot
    double range_lo = 0, range_hi = 0;
    double coord = 0;         // articulated coordinate (m or rad)
    Vec3 free_offset{};       // accumulated translation of a Free body
    Vec3 handle{};            // grasp point, in the mesh frame
    bool is_robot = false;

    RigidTransform pose() const {
        switch (art) {
            case Articulation::Fixed: return RigidTransform::identity();
            case Articulation::Prismatic: return RigidTransform::translate(axis * coord);
            case Articulation::Revolute: return RigidTransform::rotate_about(pivot, axis, coord);
            case Articulation::Free: return RigidTransform::translate(free_offset);
        }
        return RigidTransform::identity();
    }
    Vec3 handle_world() const { return pose()(handle); }
    Vec3 center_world() const { return pose()(mesh.vertex_mean()); }

    void clamp_coord() { coord = std::min(range_hi, std::max(range_lo, coord)); }
};

struct Action {
    Vec3 delta{};              // meters per step, |.|_inf <= 0.05
    double gripper = 0.0;      // commanded width in [0,1]; < 0.5 closes
};

struct Scene {
    TaskKind task = TaskKind::Drawer;
    std::vector<Body> bodies;  // bodies[0] is the robot gripper (Free)
    Vec3 gripper_pos{};
    double gripper_width = 0.0;
    int attached = -1;         // body index held by the gripper, -1 if none
    Vec3 goal_center{};        // PickPlace goal region center

    Body& gripper_body() { return bodies[0]; }
    const Body& gripper_body() const { return bodies[0]; }
};

struct Observation {
    std::vector<double> scene_features;  // kObsDim
    std::array<double, kProprioDim> proprio{};
    uint32_t task_id = 0;
};

// Deterministic kinematic step. Order: clamp action, move gripper, release or
// drag the attached body, then try to engage a grasp.
inline void step(Scene& s, const Action& a_in) {
    Action a = a_in;
    a.delta.x = std::min(kActionLimit, std::max(-kActionLimit, a.delta.x));
    a.delta.y = std::min(kActionLimit, std::max(-kActionLimit, a.delta.y));
    a.delta.z = std::min(kActionLimit, std::max(-kActionLimit, a.delta.z));
    a.gripper = std::min(1.0, std::max(0.0, a.gripper));

    s.gripper_pos += a.delta;
    s.gripper_width = a.gripper;

    if (s.attached >= 0 && a.gripper >= 0.5) s.attached = -1;
    if (s.attached >= 0) {
        Body& b = s.bodies[static_cast<size_t>(s.attached)];
        switch (b.art) {
            case Articulation::Free:
                b.free_offset += a.delta;
                break;
            case Articulation::Prismatic:
                b.coord += dot(b.axis, a.delta);
                b.clamp_coord();
                break;
            case Articulation::Revolute: {
                Vec3 h = b.handle_world();
                Vec3 r = h - b.pivot;
                Vec3 r_perp = r - b.axis * dot(b.axis, r);
                double rad = norm(r_perp);
                if (rad > 1e-9) {
                    Vec3 tangent = normalized(cross(b.axis, r_perp));
                    b.coord += dot(tangent, a.delta) / rad;
                    b.clamp_coord();
                }
                break;
            }
            case Articulation::Fixed:
                break;
        }
    } else if (a.gripper < 0.5) {
        for (size_t i = 1; i < s.bodies.size(); ++i) {
            if (s.bodies[i].art == Articulation::Fixed) continue;
            if (norm(s.bodies[i].handle_world() - s.gripper_pos) <= kGraspRadius) {
                s.attached = static_cast<int>(i);
                break;
            }
        }
    }
    s.gripper_body().free_offset = s.gripper_pos - s.gripper_body().mesh.vertex_mean();
}

inline Observation observe(const Scene& s) {
    Observation o;
    o.scene_features.assign(kObsDim, 0.0);
    size_t k = 0;
    for (size_t i = 1; i < s.bodies.size() && k + 4 <= 12; ++i) {
        Vec3 t = s.bodies[i].pose().translation;
        o.scene_features[k++] = t.x;
        o.scene_features[k++] = t.y;
        o.scene_features[k++] = t.z;
        o.scene_features[k++] = s.bodies[i].coord;
    }
    o.scene_features[12] = s.goal_center.x;
    o.scene_features[13] = s.goal_center.y;
    o.scene_features[14] = s.goal_center.z;
    o.scene_features[15] = s.attached >= 0 ? 1.0 : 0.0;
    o.proprio = {s.gripper_pos.x, s.gripper_pos.y, s.gripper_pos.z, s.gripper_width};
    o.task_id = static_cast<uint32_t>(s.task);
    return o;
}

inline bool success(const Scene& s) {
    switch (s.task) {
        case TaskKind::Drawer:
            // bodies[1] is the fixed cabinet shell; the sliding drawer is [2]
            return s.bodies[2].coord >= 0.18;
        case TaskKind::Door:
            return s.bodies[1].coord >= 80.0 * M_PI / 180.0;
        case TaskKind::PickPlace: {
            Vec3 c = s.bodies[1].center_world();
            return norm(c - s.goal_center) <= 0.03 && s.gripper_width >= 0.5;
        }
    }
    return false;
}

// --------------------------------------------------------------------------
// scene construction (randomization: body xy uniform in a 0.4 m square)
// --------------------------------------------------------------------------

inline Scene make_scene(TaskKind task, Pcg32& rng) {
    Scene s;
    s.task = task;
    s.gripper_pos = {0.0, 0.0, 0.3};
    s.gripper_width = 0.0;

    Body grip;
    grip.mesh = make_box(s.gripper_pos, {0.015, 0.015, 0.03}, 0);
    grip.art = Articulation::Free;
    grip.is_robot = true;
    s.bodies.push_back(grip);

    double bx = rng.uniform(0.35, 0.75);
    double by = rng.uniform(-0.2, 0.2);

    switch (task) {
        case TaskKind::Drawer: {
            Body cab;
            cab.mesh = make_box({bx, by, 0.12}, {0.10, 0.10, 0.12}, 1);
            cab.art = Articulation::Fixed;
            s.bodies.push_back(cab);

            Body drawer;
            drawer.mesh = make_box({bx - 0.01, by, 0.08}, {0.08, 0.08, 0.03}, 2);
            drawer.art = Articulation::Prismatic;
            drawer.axis = {-1, 0, 0};  // pulls toward the robot base
            drawer.range_lo = 0.0;
            drawer.range_hi = 0.2;
            drawer.handle = {bx - 0.10, by, 0.08};
            s.bodies.push_back(drawer);
            // fix body ids after push order settles
            s.bodies[1].mesh.body_id = 1;
            s.bodies[2].mesh.body_id = 2;
            break;
        }
        case TaskKind::Door: {
            Body door;
            door.mesh = make_box({bx, by, 0.15}, {0.12, 0.012, 0.12}, 1);
            door.art = Articulation::Revolute;
            door.axis = {0, 0, 1};
            door.pivot = {bx - 0.12, by, 0.15};
            door.range_lo = 0.0;
            door.range_hi = 100.0 * M_PI / 180.0;
            door.handle = {bx + 0.10, by - 0.03, 0.15};
            s.bodies.push_back(door);
            break;
        }
        case TaskKind::PickPlace: {
            Body obj;
            obj.mesh = make_box({bx, by, 0.02}, {0.02, 0.02, 0.02}, 1);
            obj.art = Articulation::Free;
            obj.handle = {bx, by, 0.04};
            s.bodies.push_back(obj);
            double gx, gy;
            do {
                gx = rng.uniform(0.35, 0.75);
                gy = rng.uniform(-0.2, 0.2);
            } while (std::hypot(gx - bx, gy - by) < 0.12);
            s.goal_center = {gx, gy, 0.02};
            break;
        }
    }
    // mesh centroid of face 0 is used as the body reference point for Free
    // bodies; keep the gripper body in sync with the gripper position
    s.gripper_body().free_offset = s.gripper_pos - s.gripper_body().mesh.vertex_mean();
    return s;
}

// --------------------------------------------------------------------------
// episodes
// --------------------------------------------------------------------------

struct Episode {
    uint32_t task_id = 0;
    uint64_t seed = 0;
    std::vector<Observation> observations;               // length T (pre-action)
    std::vector<Action> actions;                         // length T
    std::vector<std::vector<RigidTransform>> poses;      // T x n_bodies
    std::vector<std::vector<Vec3>> tracks;               // T x Np
    std::vector<SurfacePoint> points;                    // Np
    std::vector<uint8_t> labels;                         // Np (0 robot, 1 scene)

    size_t length() const { return actions.size(); }
    size_t n_points() const { return points.size(); }
};

// P_tau[j] = locate(point j, mesh of its body, pose of that body at tau)
inline std::vector<std::vector<Vec3>> extract_tracks(
    const std::vector<Body>& bodies, const std::vector<std::vector<RigidTransform>>& poses,
    const std::vector<SurfacePoint>& points) {
    std::vector<std::vector<Vec3>> tracks(poses.size());
    for (size_t t = 0; t < poses.size(); ++t) {
        tracks[t].reserve(points.size());
        for (const auto& sp : points) {
            if (sp.body_id < 0 || static_cast<size_t>(sp.body_id) >= bodies.size())
                throw GeometryError("extract_tracks: body id " + std::to_string(sp.body_id) +
                                    " missing from pose record");
            tracks[t].push_back(
                locate(sp, bodies[static_cast<size_t>(sp.body_id)].mesh,
                       poses[t][static_cast<size_t>(sp.body_id)]));
        }
    }
    return tracks;
}

namespace detail {

// waypoint controller shared by all scripted tasks
struct Waypoint {
    Vec3 target;
    double grip;
    int dwell = 0;  // extra steps to hold at the target
};

inline Action toward(const Vec3& from, const Waypoint& w) {
    Vec3 d = w.target - from;
    Action a;
    a.delta = {std::min(kActionLimit, std::max(-kActionLimit, d.x)),
               std::min(kActionLimit, std::max(-kActionLimit, d.y)),
               std::min(kActionLimit, std::max(-kActionLimit, d.z))};
    a.gripper = w.grip;
    return a;
}

inline bool at(const Vec3& p, const Vec3& q) { return norm(p - q) < 1e-12; }

}  // namespace detail

// Scripted expert that provably reaches the task's success predicate. Fails a
// hard assertion if it does not (that would be a scripting bug, not a policy
// failure).
inline Episode script_demonstration(TaskKind task, uint64_t seed, size_t n_points,
                                    double robot_fraction = 0.5) {
    Pcg32 rng(seed, 0x9e3779b97f4a7c15ULL);
    Scene s = make_scene(task, rng);

    Episode ep;
    ep.task_id = static_cast<uint32_t>(task);
    ep.seed = seed;

    auto record = [&]() {
        ep.observations.push_back(observe(s));
        std::vector<RigidTransform> frame;
        for (const auto& b : s.bodies) frame.push_back(b.pose());
        ep.poses.push_back(std::move(frame));
    };
    auto act = [&](const Action& a) {
        record();
        ep.actions.push_back(a);
        step(s, a);
    };
    auto goto_wp = [&](const detail::Waypoint& w) {
        while (!detail::at(s.gripper_pos, w.target)) act(detail::toward(s.gripper_pos, w));
        for (int i = 0; i < w.dwell; ++i) act(Action{{0, 0, 0}, w.grip});
    };

    switch (task) {
        case TaskKind::Drawer: {
            Vec3 h = s.bodies[2].handle_world();
            goto_wp({h, 1.0});
            goto_wp({h, 0.0, 1});  // close and attach
            Vec3 pulled = h + s.bodies[2].axis * 0.19;
            goto_wp({pulled, 0.0});
            goto_wp({pulled, 1.0, 1});  // release
            break;
        }
        case TaskKind::Door: {
            Body& door = s.bodies[1];
            goto_wp({door.handle_world(), 1.0});
            goto_wp({s.gripper_pos, 0.0, 1});
            double target_angle = 85.0 * M_PI / 180.0;
            while (door.coord < target_angle) {
                double dtheta = std::min(0.1, target_angle + 0.05 - door.coord);
                Vec3 next = RigidTransform::rotate_about(door.pivot, door.axis,
                                                         door.coord + dtheta)(door.handle);
                act(detail::toward(s.gripper_pos, {next, 0.0}));
            }
            goto_wp({s.gripper_pos, 1.0, 1});
            break;
        }
        case TaskKind::PickPlace: {
            Body& obj = s.bodies[1];
            Vec3 h = obj.handle_world();
            goto_wp({{h.x, h.y, 0.2}, 1.0});
            goto_wp({h, 1.0});
            goto_wp({h, 0.0, 1});  // grasp
            goto_wp({{h.x, h.y, 0.2}, 0.0});
            Vec3 place = s.goal_center + Vec3{0, 0, 0.02};  // handle sits 0.02 above center
            goto_wp({{place.x, place.y, 0.2}, 0.0});
            goto_wp({place, 0.0});
            goto_wp({place, 1.0, 1});  // release
            goto_wp({{place.x, place.y, 0.2}, 1.0});
            break;
        }
    }
    if (!success(s)) throw std::logic_error("script_demonstration: scripted episode did not succeed");

    // privileged supervision: sample identity-preserving surface points at the
    // first frame, robot-centered crop, then retrieve them at every timestep
    std::vector<MeshInstance> instances;
    for (size_t i = 0; i < s.bodies.size(); ++i)
        instances.push_back({&s.bodies[i].mesh, ep.poses[0][i],
                             s.bodies[i].is_robot ? PointLabel::Robot : PointLabel::Scene});
    Vec3 crop_center = {ep.observations[0].proprio[0], ep.observations[0].proprio[1],
                        ep.observations[0].proprio[2]};
    ep.points = sample_surface_points(instances, n_points, crop_center, 1.0, robot_fraction, rng);
    for (const auto& sp : ep.points) ep.labels.push_back(static_cast<uint8_t>(sp.label));
    ep.tracks = extract_tracks(s.bodies, ep.poses, ep.points);
    return ep;
}

// --------------------------------------------------------------------------
// P4RD dataset container
// --------------------------------------------------------------------------

constexpr uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::vector<Episode>& eps, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dataset: cannot open " + path + " for writing");
    os.write("P4RD", 4);
    io::write_u32(os, kDatasetVersion);
    io::write_u32(os, eps.empty() ? 0 : eps[0].task_id);
    io::write_u32(os, static_cast<uint32_t>(eps.size()));
    io::write_u32(os, static_cast<uint32_t>(kObsDim));
    io::write_u32(os, static_cast<uint32_t>(kActionDim));
    io::write_u32(os, eps.empty() ? 0 : static_cast<uint32_t>(eps[0].n_points()));
    for (const auto& ep : eps) {
        os.write(reinterpret_cast<const char*>(&ep.seed), 8);
        io::write_u32(os, static_cast<uint32_t>(ep.length()));
        io::write_u32(os, static_cast<uint32_t>(ep.poses.empty() ? 0 : ep.poses[0].size()));
        for (const auto& o : ep.observations) {
            io::write_f64(os, o.scene_features.data(), kObsDim);
            io::write_f64(os, o.proprio.data(), kProprioDim);
        }
        for (const auto& a : ep.actions) {
            double buf[4] = {a.delta.x, a.delta.y, a.delta.z, a.gripper};
            io::write_f64(os, buf, 4);
        }
        for (const auto& frame : ep.poses)
            for (const auto& p : frame) {
                io::write_f64(os, p.rotation.m.data(), 9);
                double t[3] = {p.translation.x, p.translation.y, p.translation.z};
                io::write_f64(os, t, 3);
            }
        for (const auto& frame : ep.tracks)
            for (const auto& p : frame) {
                double buf[3] = {p.x, p.y, p.z};
                io::write_f64(os, buf, 3);
            }
        os.write(reinterpret_cast<const char*>(ep.labels.data()),
                 static_cast<std::streamsize>(ep.labels.size()));
        for (const auto& sp : ep.points) {
            io::write_u32(os, static_cast<uint32_t>(sp.body_id));
            io::write_u32(os, sp.face_index);
            io::write_f64(os, sp.barycentric.data(), 3);
            uint8_t lab = static_cast<uint8_t>(sp.label);
            os.write(reinterpret_cast<const char*>(&lab), 1);
        }
    }
    if (!os) throw std::runtime_error("dataset: write failed for " + path);
}

inline std::vector<Episode> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "P4RD", 4) != 0)
        throw std::runtime_error("dataset: bad magic in " + path);
    uint32_t version = io::read_u32(is, "version");
    if (version != kDatasetVersion)
        throw std::runtime_error("dataset: unsupported version " + std::to_string(version));
    uint32_t task_id = io::read_u32(is, "task");
    uint32_t n_eps = io::read_u32(is, "episode count");
    uint32_t obs_dim = io::read_u32(is, "obs dim");
    uint32_t act_dim = io::read_u32(is, "action dim");
    uint32_t np = io::read_u32(is, "point count");
    if (obs_dim != kObsDim || act_dim != kActionDim)
        throw std::runtime_error("dataset: dimension mismatch in " + path);
    std::vector<Episode> eps(n_eps);
    for (auto& ep : eps) {
        ep.task_id = task_id;
        is.read(reinterpret_cast<char*>(&ep.seed), 8);
        uint32_t T = io::read_u32(is, "episode length");
        uint32_t nb = io::read_u32(is, "body count");
        ep.observations.resize(T);
        for (auto& o : ep.observations) {
            o.scene_features.resize(kObsDim);
            io::read_f64(is, o.scene_features.data(), kObsDim, "observations");
            io::read_f64(is, o.proprio.data(), kProprioDim, "proprio");
            o.task_id = task_id;
        }
        ep.actions.resize(T);
        for (auto& a : ep.actions) {
            double buf[4];
            io::read_f64(is, buf, 4, "actions");
            a.delta = {buf[0], buf[1], buf[2]};
            a.gripper = buf[3];
        }
        ep.poses.assign(T, std::vector<RigidTransform>(nb));
        for (auto& frame : ep.poses)
            for (auto& p : frame) {
                io::read_f64(is, p.rotation.m.data(), 9, "poses");
                double t[3];
                io::read_f64(is, t, 3, "poses");
                p.translation = {t[0], t[1], t[2]};
            }
        ep.tracks.assign(T, std::vector<Vec3>(np));
        for (auto& frame : ep.tracks)
            for (auto& p : frame) {
                double buf[3];
                io::read_f64(is, buf, 3, "tracks");
                p = {buf[0], buf[1], buf[2]};
                if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                    throw std::runtime_error("dataset: non-finite track coordinate in " + path);
            }
        ep.labels.resize(np);
        is.read(reinterpret_cast<char*>(ep.labels.data()), np);
        ep.points.resize(np);
        for (auto& sp : ep.points) {
            sp.body_id = static_cast<int>(io::read_u32(is, "points"));
            sp.face_index = io::read_u32(is, "points");
            io::read_f64(is, sp.barycentric.data(), 3, "points");
            uint8_t lab;
            is.read(reinterpret_cast<char*>(&lab), 1);
            sp.label = static_cast<PointLabel>(lab);
        }
        if (!is) throw std::runtime_error("dataset: truncated episode in " + path);
    }
    return eps;
}

}  // namespace pri4r

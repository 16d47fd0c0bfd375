#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/geometry.hpp"
#include "pri4r/toyworld.hpp"

namespace pri4r {

enum class VariantKind : uint8_t { Full3D = 0, GoalOnly, Track2D, RobotOnly, SceneOnly };

inline const char* variant_name(VariantKind v) {
    switch (v) {
        case VariantKind::Full3D: return "full3d";
        case VariantKind::GoalOnly: return "goal_only";
        case VariantKind::Track2D: return "track2d";
        case VariantKind::RobotOnly: return "robot_only";
        case VariantKind::SceneOnly: return "scene_only";
    }
    return "?";
}

inline VariantKind variant_from_name(const std::string& s) {
    if (s == "full3d") return VariantKind::Full3D;
    if (s == "goal_only") return VariantKind::GoalOnly;
    if (s == "track2d") return VariantKind::Track2D;
    if (s == "robot_only") return VariantKind::RobotOnly;
    if (s == "scene_only") return VariantKind::SceneOnly;
    throw std::runtime_error("unknown supervision variant: " + s);
}

struct SupervisionVariant {
    VariantKind kind = VariantKind::Full3D;
    CameraModel camera;  // consulted only when kind == Track2D
};

// One training record: the point set at the window start, per-step 3D
// displacements over the action chunk, and the aligned actions/observation.
struct TrackWindow {
    size_t t = 0;
    std::vector<Vec3> p_t;                 // Np
    std::vector<std::vector<Vec3>> delta;  // H x Np
    std::vector<uint8_t> labels;           // Np
    std::vector<Action> actions;           // H
    Observation observation;               // at t
    std::vector<Vec3> p_end;               // Np, absolute P_{t+H} (GoalOnly target)
    std::vector<std::vector<Vec3>> abs;    // H+1 x Np, absolute P_{t..t+H}
};

// delta[h][j] = P_{t+h+1}[j] - P_{t+h}[j]
inline std::vector<std::vector<Vec3>> displacements(const std::vector<std::vector<Vec3>>& track,
                                                    size_t t, size_t h) {
    if (t + h + 1 > track.size())
        throw std::runtime_error("displacements: window [" + std::to_string(t) + ", " +
                                 std::to_string(t + h + 1) + ") exceeds track length " +
                                 std::to_string(track.size()));
    std::vector<std::vector<Vec3>> out(h);
    for (size_t i = 0; i < h; ++i) {
        out[i].resize(track[t].size());
        for (size_t j = 0; j < track[t].size(); ++j)
            out[i][j] = track[t + i + 1][j] - track[t + i][j];
    }
    return out;
}

// Windows at t = 0, stride, 2*stride, ...; each needs tracks and actions for
// indices t .. t+H, plus one step of margin so every window also has a
// defined successor state.
inline std::vector<TrackWindow> build_windows(const Episode& ep, size_t h, size_t stride = 1) {
    if (ep.length() < h + 2)
        throw std::runtime_error("build_windows: episode of length " + std::to_string(ep.length()) +
                                 " too short for horizon " + std::to_string(h));
    std::vector<TrackWindow> out;
    for (size_t t = 0; t + h + 1 <= ep.length() - 1; t += stride) {
        TrackWindow w;
        w.t = t;
        w.p_t = ep.tracks[t];
        w.delta = displacements(ep.tracks, t, h);
        w.labels = ep.labels;
        w.actions.assign(ep.actions.begin() + static_cast<long>(t),
                         ep.actions.begin() + static_cast<long>(t + h));
        w.observation = ep.observations[t];
        w.p_end = ep.tracks[t + h];
        w.abs.assign(ep.tracks.begin() + static_cast<long>(t),
                     ep.tracks.begin() + static_cast<long>(t + h + 1));
        out.push_back(std::move(w));
    }
    return out;
}

// The target tensor for one supervision variant, with enough metadata to
// drive the head: which point rows survive and the output dimensionality.
struct VariantTarget {
    std::vector<double> values;     // flattened target
    Shape shape;
    std::vector<size_t> point_idx;  // surviving point indices, original order
    size_t out_dim = 3;             // per-cell prediction width (2 for Track2D)
    bool goal_only = false;
};

inline VariantTarget make_variant(const TrackWindow& w, const SupervisionVariant& variant) {
    size_t h = w.delta.size();
    size_t np = w.p_t.size();
    VariantTarget out;
    switch (variant.kind) {
        case VariantKind::Full3D: {
            out.point_idx.resize(np);
            for (size_t j = 0; j < np; ++j) out.point_idx[j] = j;
            out.shape = {h, np, 3};
            out.values.reserve(h * np * 3);
            for (const auto& row : w.delta)
                for (const auto& p : row) {
                    out.values.push_back(p.x);
                    out.values.push_back(p.y);
                    out.values.push_back(p.z);
                }
            break;
        }
        case VariantKind::GoalOnly: {
            out.goal_only = true;
            out.point_idx.resize(np);
            for (size_t j = 0; j < np; ++j) out.point_idx[j] = j;
            out.shape = {np, 3};
            for (const auto& p : w.p_end) {
                out.values.push_back(p.x);
                out.values.push_back(p.y);
                out.values.push_back(p.z);
            }
            break;
        }
        case VariantKind::Track2D: {
            out.out_dim = 2;
            out.point_idx.resize(np);
            for (size_t j = 0; j < np; ++j) out.point_idx[j] = j;
            out.shape = {h, np, 2};
            // project every absolute position, then difference in pixel space
            std::vector<std::vector<std::array<double, 2>>> px(h + 1);
            for (size_t i = 0; i <= h; ++i) {
                px[i].resize(np);
                for (size_t j = 0; j < np; ++j) px[i][j] = project(w.abs[i][j], variant.camera);
            }
            for (size_t i = 0; i < h; ++i)
                for (size_t j = 0; j < np; ++j) {
                    out.values.push_back(px[i + 1][j][0] - px[i][j][0]);
                    out.values.push_back(px[i + 1][j][1] - px[i][j][1]);
                }
            break;
        }
        case VariantKind::RobotOnly:
        case VariantKind::SceneOnly: {
            uint8_t want = variant.kind == VariantKind::RobotOnly
                               ? static_cast<uint8_t>(PointLabel::Robot)
                               : static_cast<uint8_t>(PointLabel::Scene);
            for (size_t j = 0; j < np; ++j)
                if (w.labels[j] == want) out.point_idx.push_back(j);
            if (out.point_idx.empty())
                throw std::runtime_error(std::string("make_variant: no points with label ") +
                                         (want == 0 ? "Robot" : "Scene") + " in window");
            out.shape = {h, out.point_idx.size(), 3};
            for (const auto& row : w.delta)
                for (size_t j : out.point_idx) {
                    out.values.push_back(row[j].x);
                    out.values.push_back(row[j].y);
                    out.values.push_back(row[j].z);
                }
            break;
        }
    }
    return out;
}

// P_t as fed to the point MLP: centered on the gripper position, meters
inline std::vector<double> normalized_points(const std::vector<Vec3>& pts,
                                             const std::vector<size_t>& idx,
                                             const Observation& obs) {
    Vec3 center{obs.proprio[0], obs.proprio[1], obs.proprio[2]};
    std::vector<double> out;
    out.reserve(idx.size() * 3);
    for (size_t j : idx) {
        Vec3 p = pts[j] - center;
        out.push_back(p.x);
        out.push_back(p.y);
        out.push_back(p.z);
    }
    return out;
}

// --------------------------------------------------------------------------
// P4RT external track files (stand-in for pseudo-labeled real-world tracks)
// --------------------------------------------------------------------------

constexpr uint32_t kTrackFileVersion = 1;

struct ExternalTracks {
    std::vector<std::vector<Vec3>> tracks;  // T x Np
    std::vector<uint8_t> labels;            // Np
};

inline void export_tracks(const ExternalTracks& et, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("tracks: cannot open " + path + " for writing");
    os.write("P4RT", 4);
    io::write_u32(os, kTrackFileVersion);
    uint32_t np = static_cast<uint32_t>(et.labels.size());
    io::write_u32(os, np);
    io::write_u32(os, static_cast<uint32_t>(et.tracks.size()));
    os.write(reinterpret_cast<const char*>(et.labels.data()), np);
    for (const auto& frame : et.tracks) {
        if (frame.size() != np) throw std::runtime_error("tracks: ragged frame on export");
        for (const auto& p : frame) {
            double buf[3] = {p.x, p.y, p.z};
            io::write_f64(os, buf, 3);
        }
    }
    if (!os) throw std::runtime_error("tracks: write failed for " + path);
}

inline ExternalTracks import_external_tracks(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("tracks: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "P4RT", 4) != 0)
        throw std::runtime_error("tracks: bad magic in " + path);
    uint32_t version = io::read_u32(is, "version");
    if (version != kTrackFileVersion)
        throw std::runtime_error("tracks: unsupported version " + std::to_string(version));
    uint32_t np = io::read_u32(is, "point count");
    uint32_t t = io::read_u32(is, "frame count");
    if (np == 0 || t == 0) throw std::runtime_error("tracks: empty track file " + path);
    ExternalTracks et;
    et.labels.resize(np);
    is.read(reinterpret_cast<char*>(et.labels.data()), np);
    if (!is) throw std::runtime_error("tracks: truncated labels in " + path);
    et.tracks.assign(t, std::vector<Vec3>(np));
    for (uint32_t f = 0; f < t; ++f)
        for (uint32_t j = 0; j < np; ++j) {
            double buf[3];
            is.read(reinterpret_cast<char*>(buf), 24);
            if (!is)
                throw std::runtime_error("tracks: truncated at frame " + std::to_string(f) +
                                         " point " + std::to_string(j) + " in " + path);
            for (double v : buf)
                if (!std::isfinite(v))
                    throw std::runtime_error("tracks: non-finite coordinate at frame " +
                                             std::to_string(f) + " point " + std::to_string(j) +
                                             " in " + path);
            et.tracks[f][j] = {buf[0], buf[1], buf[2]};
        }
    // reject trailing garbage as well
    char extra;
    is.read(&extra, 1);
    if (!is.eof()) throw std::runtime_error("tracks: trailing bytes after last frame in " + path);
    return et;
}

}  // namespace pri4r

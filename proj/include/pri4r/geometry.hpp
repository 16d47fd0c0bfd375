#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/rng.hpp"

namespace pri4r {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    double n = norm(a);
    return {a.x / n, a.y / n, a.z / n};
}

struct Mat3 {
    // row-major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
                r.m[i * 3 + j] = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
        return r;
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    static Mat3 axis_angle(const Vec3& axis_unit, double angle) {
        Vec3 a = axis_unit;
        double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
        Mat3 r;
        r.m = {t * a.x * a.x + c,       t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y,
               t * a.x * a.y + s * a.z, t * a.y * a.y + c,       t * a.y * a.z - s * a.x,
               t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c};
        return r;
    }
};

// p -> R p + t
struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;

    Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform operator*(const RigidTransform& o) const {
        return {rotation * o.rotation, rotation * o.translation + translation};
    }
    RigidTransform inverse() const {
        Mat3 rt = rotation.transposed();
        return {rt, rt * (translation * -1.0)};
    }

    static RigidTransform identity() { return {}; }
    static RigidTransform translate(const Vec3& t) { return {Mat3{}, t}; }
    static RigidTransform rotate_about(const Vec3& pivot, const Vec3& axis_unit, double angle) {
        Mat3 r = Mat3::axis_angle(axis_unit, angle);
        return {r, pivot - r * pivot};
    }

    // RᵀR = I within tol and det = +1 within tol
    bool is_valid(double tol = 1e-10) const {
        Mat3 rtr = rotation.transposed() * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double want = i == j ? 1.0 : 0.0;
                if (std::fabs(rtr.m[i * 3 + j] - want) > tol) return false;
            }
        return std::fabs(rotation.det() - 1.0) <= tol;
    }
};

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> faces;
    int body_id = -1;

    double face_area(size_t f) const {
        const auto& fc = faces[f];
        Vec3 e1 = vertices[fc[1]] - vertices[fc[0]];
        Vec3 e2 = vertices[fc[2]] - vertices[fc[0]];
        return 0.5 * norm(cross(e1, e2));
    }

    Vec3 vertex_mean() const {
        Vec3 m{};
        for (const auto& v : vertices) m += v;
        return m * (1.0 / static_cast<double>(vertices.size()));
    }

    Vec3 face_centroid(size_t f) const {
        const auto& fc = faces[f];
        return (vertices[fc[0]] + vertices[fc[1]] + vertices[fc[2]]) * (1.0 / 3.0);
    }

    // degenerate faces (area <= 1e-12 m^2) are rejected, not skipped
    void validate() const {
        for (size_t f = 0; f < faces.size(); ++f) {
            for (uint32_t vi : faces[f])
                if (vi >= vertices.size())
                    throw GeometryError("mesh: face " + std::to_string(f) + " vertex index " +
                                        std::to_string(vi) + " out of range");
            if (face_area(f) <= 1e-12)
                throw GeometryError("mesh: face " + std::to_string(f) + " is degenerate");
        }
    }
};

enum class PointLabel : uint8_t { Robot = 0, Scene = 1 };

// Identity-preserving point on a mesh surface: the tracked entity of the
// whole pipeline. body_id ties it back to the owning rigid body's pose stream.
struct SurfacePoint {
    int body_id = -1;
    uint32_t face_index = 0;
    std::array<double, 3> barycentric{1, 0, 0};
    PointLabel label = PointLabel::Scene;

    bool barycentric_valid(double tol = 1e-12) const {
        double s = barycentric[0] + barycentric[1] + barycentric[2];
        if (std::fabs(s - 1.0) > tol) return false;
        for (double b : barycentric)
            if (b < -tol || b > 1.0 + tol) return false;
        return true;
    }
};

inline Vec3 locate(const SurfacePoint& sp, const TriangleMesh& mesh, const RigidTransform& pose) {
    if (sp.face_index >= mesh.faces.size())
        throw GeometryError("locate: face index " + std::to_string(sp.face_index) + " out of range (" +
                            std::to_string(mesh.faces.size()) + " faces)");
    const auto& f = mesh.faces[sp.face_index];
    Vec3 p = mesh.vertices[f[0]] * sp.barycentric[0] + mesh.vertices[f[1]] * sp.barycentric[1] +
             mesh.vertices[f[2]] * sp.barycentric[2];
    return pose(p);
}

struct CameraModel {
    RigidTransform world_to_camera;
    double fx = 128, fy = 128;
    double cx = 64, cy = 64;
};

struct ProjectionError : std::runtime_error {
    double depth;
    explicit ProjectionError(double d)
        : std::runtime_error("project: point behind camera, depth = " + std::to_string(d)), depth(d) {}
};

inline std::array<double, 2> project(const Vec3& p, const CameraModel& cam) {
    Vec3 c = cam.world_to_camera(p);
    if (c.z <= 1e-6) throw ProjectionError(c.z);
    return {cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy};
}

// A posed mesh instance eligible for sampling.
struct MeshInstance {
    const TriangleMesh* mesh;
    RigidTransform pose;
    PointLabel label;
};

// Crop-then-sample of §surface points: faces whose world centroid lies inside
// the axis-aligned cube [center ± half_extent] are drawn area-weighted; the
// barycentric coordinate is uniform over the triangle. Exactly
// floor(n * robot_fraction) points carry the Robot label.
inline std::vector<SurfacePoint> sample_surface_points(const std::vector<MeshInstance>& meshes,
                                                       size_t n, const Vec3& crop_center,
                                                       double crop_half_extent, double robot_fraction,
                                                       Pcg32& rng) {
    if (n < 1) throw GeometryError("sample_surface_points: n must be >= 1");
    struct Cand {
        size_t mesh_idx;
        uint32_t face;
        double cum_area;
    };
    auto inside = [&](const Vec3& p) {
        return std::fabs(p.x - crop_center.x) <= crop_half_extent &&
               std::fabs(p.y - crop_center.y) <= crop_half_extent &&
               std::fabs(p.z - crop_center.z) <= crop_half_extent;
    };
    auto gather = [&](PointLabel want) {
        std::vector<Cand> cands;
        double acc = 0.0;
        for (size_t mi = 0; mi < meshes.size(); ++mi) {
            if (meshes[mi].label != want) continue;
            const TriangleMesh& m = *meshes[mi].mesh;
            for (uint32_t f = 0; f < m.faces.size(); ++f) {
                if (!inside(meshes[mi].pose(m.face_centroid(f)))) continue;
                acc += m.face_area(f);  // rigid transform preserves area
                cands.push_back({mi, f, acc});
            }
        }
        return cands;
    };
    size_t n_robot = static_cast<size_t>(std::floor(static_cast<double>(n) * robot_fraction));
    size_t n_scene = n - n_robot;

    std::vector<SurfacePoint> out;
    out.reserve(n);
    auto draw = [&](const std::vector<Cand>& cands, PointLabel label, size_t count) {
        if (count == 0) return;
        if (cands.empty())
            throw GeometryError(std::string("sample_surface_points: no ") +
                                (label == PointLabel::Robot ? "Robot" : "Scene") +
                                "-labeled faces inside the crop cube");
        double total = cands.back().cum_area;
        for (size_t i = 0; i < count; ++i) {
            double r = rng.uniform() * total;
            size_t lo = 0, hi = cands.size() - 1;
            while (lo < hi) {
                size_t mid = (lo + hi) / 2;
                if (cands[mid].cum_area < r) lo = mid + 1;
                else hi = mid;
            }
            const Cand& c = cands[lo];
            double u = rng.uniform(), v = rng.uniform();
            if (u + v > 1.0) {  // reflect into the triangle
                u = 1.0 - u;
                v = 1.0 - v;
            }
            SurfacePoint sp;
            sp.body_id = meshes[c.mesh_idx].mesh->body_id;
            sp.face_index = c.face;
            sp.barycentric = {1.0 - u - v, u, v};
            sp.label = label;
            out.push_back(sp);
        }
    };
    draw(gather(PointLabel::Robot), PointLabel::Robot, n_robot);
    draw(gather(PointLabel::Scene), PointLabel::Scene, n_scene);
    return out;
}

// OBJ subset: "v x y z" and triangular "f a b c" lines (1-based indices,
// "a/vt/vn" forms accepted, extra attributes ignored)
inline TriangleMesh load_obj(std::istream& is) {
    TriangleMesh mesh;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z))
                throw GeometryError("obj: malformed vertex at line " + std::to_string(lineno));
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<uint32_t> idx;
            std::string tok;
            while (ls >> tok) {
                size_t slash = tok.find('/');
                long v = std::stol(tok.substr(0, slash));
                if (v < 1)
                    throw GeometryError("obj: non-positive index at line " + std::to_string(lineno));
                idx.push_back(static_cast<uint32_t>(v - 1));
            }
            if (idx.size() != 3)
                throw GeometryError("obj: face at line " + std::to_string(lineno) +
                                    " has " + std::to_string(idx.size()) + " vertices, triangles required");
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
        }
    }
    mesh.validate();
    return mesh;
}

inline TriangleMesh load_obj_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw GeometryError("obj: cannot open " + path);
    return load_obj(is);
}

// axis-aligned cuboid as 12 triangles, centered at `center`
inline TriangleMesh make_box(const Vec3& center, const Vec3& half_extent, int body_id = -1) {
    TriangleMesh m;
    m.body_id = body_id;
    const Vec3& h = half_extent;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back(center + Vec3{(i & 1) ? h.x : -h.x, (i & 2) ? h.y : -h.y,
                                           (i & 4) ? h.z : -h.z});
    auto quad = [&](uint32_t a, uint32_t b, uint32_t c, uint32_t d) {
        m.faces.push_back({a, b, c});
        m.faces.push_back({a, c, d});
    };
    quad(0, 2, 3, 1);  // z-
    quad(4, 5, 7, 6);  // z+
    quad(0, 1, 5, 4);  // y-
    quad(2, 6, 7, 3);  // y+
    quad(0, 4, 6, 2);  // x-
    quad(1, 3, 7, 5);  // x+
    return m;
}

}  // namespace pri4r

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "pri4r/supervision.hpp"

using namespace pri4r;

namespace {

// hand-built track tensor: frames[t][j]
std::vector<std::vector<Vec3>> linear_track(size_t t_len, size_t np, const Vec3& step_d) {
    std::vector<std::vector<Vec3>> track(t_len, std::vector<Vec3>(np));
    for (size_t t = 0; t < t_len; ++t)
        for (size_t j = 0; j < np; ++j)
            track[t][j] = Vec3{0.25 * static_cast<double>(j), 0, 0} +
                          step_d * static_cast<double>(t);
    return track;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("displacements of a constant track are zero") {
    auto track = linear_track(6, 3, {0, 0, 0});
    auto d = displacements(track, 0, 4);
    for (const auto& row : d)
        for (const auto& p : row) CHECK(norm(p) == 0.0);
}

TEST_CASE("uniformly advancing track yields constant deltas") {
    auto track = linear_track(6, 2, {1, 2, 3});
    auto d = displacements(track, 1, 3);
    for (const auto& row : d)
        for (const auto& p : row) {
            CHECK(p.x == 1.0);
            CHECK(p.y == 2.0);
            CHECK(p.z == 3.0);
        }
}

TEST_CASE("deltas telescope to the endpoint difference exactly") {
    Episode ep = script_demonstration(TaskKind::Drawer, 2, 16);
    size_t h = 5;
    auto d = displacements(ep.tracks, 0, h);
    for (size_t j = 0; j < ep.n_points(); ++j) {
        Vec3 sum{};
        for (size_t i = 0; i < h; ++i) sum += d[i][j];
        Vec3 endpoint = ep.tracks[h][j] - ep.tracks[0][j];
        CHECK(sum.x == Catch::Approx(endpoint.x).margin(1e-12));
        CHECK(sum.y == Catch::Approx(endpoint.y).margin(1e-12));
        CHECK(sum.z == Catch::Approx(endpoint.z).margin(1e-12));
    }
}

TEST_CASE("displacements reject out-of-range windows") {
    auto track = linear_track(5, 2, {0, 0, 0});
    CHECK_THROWS(displacements(track, 2, 4));
}

TEST_CASE("window counting matches the contract") {
    const size_t h = 4;
    // T = H+2 -> exactly one window
    Episode ep;
    ep.task_id = 0;
    size_t t_len = h + 2;
    ep.tracks = linear_track(t_len, 2, {0.01, 0, 0});
    ep.labels = {0, 1};
    ep.actions.assign(t_len, Action{});
    ep.observations.assign(t_len, Observation{});
    CHECK(build_windows(ep, h, 1).size() == 1);

    // T = H+2+k -> k+1 windows
    for (size_t k = 1; k <= 3; ++k) {
        size_t t2 = h + 2 + k;
        ep.tracks = linear_track(t2, 2, {0.01, 0, 0});
        ep.actions.assign(t2, Action{});
        ep.observations.assign(t2, Observation{});
        CHECK(build_windows(ep, h, 1).size() == k + 1);
    }

    // too short
    ep.tracks = linear_track(h + 1, 2, {0, 0, 0});
    ep.actions.assign(h + 1, Action{});
    ep.observations.assign(h + 1, Observation{});
    CHECK_THROWS(build_windows(ep, h, 1));
}

TEST_CASE("window deltas match displacements applied to raw tracks") {
    Episode ep = script_demonstration(TaskKind::Door, 4, 8);
    size_t h = 6;
    auto windows = build_windows(ep, h, 2);
    for (const auto& w : windows) {
        auto expect = displacements(ep.tracks, w.t, h);
        for (size_t i = 0; i < h; ++i)
            for (size_t j = 0; j < ep.n_points(); ++j) REQUIRE(w.delta[i][j] == expect[i][j]);
        // reconstructibility: P_t + cumsum(delta) hits stored absolutes
        for (size_t j = 0; j < ep.n_points(); ++j) {
            Vec3 acc = w.p_t[j];
            for (size_t i = 0; i < h; ++i) {
                acc += w.delta[i][j];
                CHECK(norm(acc - w.abs[i + 1][j]) <= 1e-9);
            }
            CHECK(norm(acc - w.p_end[j]) <= 1e-9);
        }
    }
}

TEST_CASE("full3d and goal-only variant targets") {
    Episode ep = script_demonstration(TaskKind::Drawer, 6, 8);
    auto w = build_windows(ep, 4, 1)[0];
    SupervisionVariant full;
    auto vt = make_variant(w, full);
    REQUIRE(vt.shape == Shape{4, 8, 3});
    CHECK(vt.out_dim == 3);
    CHECK_FALSE(vt.goal_only);
    CHECK(vt.values[0] == w.delta[0][0].x);

    SupervisionVariant goal;
    goal.kind = VariantKind::GoalOnly;
    auto gt = make_variant(w, goal);
    REQUIRE(gt.shape == Shape{8, 3});
    CHECK(gt.goal_only);
    // absolute endpoint, not a displacement sum
    CHECK(gt.values[0] == w.p_end[0].x);
    CHECK(gt.values[1] == w.p_end[0].y);
}

TEST_CASE("track2d on a static scene is all zeros") {
    const size_t h = 3, np = 4;
    TrackWindow w;
    w.p_t.assign(np, Vec3{0.1, 0.2, 0.5});
    w.delta.assign(h, std::vector<Vec3>(np, Vec3{}));
    w.labels.assign(np, 1);
    w.abs.assign(h + 1, w.p_t);
    w.p_end = w.p_t;
    SupervisionVariant v;
    v.kind = VariantKind::Track2D;
    v.camera.world_to_camera = RigidTransform::translate({0, 0, 2});
    auto vt = make_variant(w, v);
    REQUIRE(vt.shape == Shape{h, np, 2});
    CHECK(vt.out_dim == 2);
    for (double x : vt.values) CHECK(x == 0.0);
}

TEST_CASE("track2d matches an independent per-step reprojection") {
    Episode ep = script_demonstration(TaskKind::Door, 8, 8);
    auto w = build_windows(ep, 5, 1).back();
    SupervisionVariant v;
    v.kind = VariantKind::Track2D;
    v.camera.world_to_camera = RigidTransform::translate({0, 0, 2});
    auto vt = make_variant(w, v);
    size_t np = ep.n_points();
    for (size_t i = 0; i < 5; ++i)
        for (size_t j = 0; j < np; ++j) {
            auto a = project(w.abs[i][j], v.camera);
            auto b = project(w.abs[i + 1][j], v.camera);
            CHECK(std::abs(vt.values[(i * np + j) * 2 + 0] - (b[0] - a[0])) <= 1e-9);
            CHECK(std::abs(vt.values[(i * np + j) * 2 + 1] - (b[1] - a[1])) <= 1e-9);
        }
}

TEST_CASE("label-filtered variants keep original order and match full3d rows") {
    const size_t h = 2, np = 5;
    TrackWindow w;
    w.labels = {0, 1, 0, 1, 1};  // robot points at indices 0, 2
    Pcg32 rng(40);
    w.p_t.resize(np);
    for (auto& p : w.p_t) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    w.delta.assign(h, std::vector<Vec3>(np));
    for (auto& row : w.delta)
        for (auto& p : row) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    w.abs.assign(h + 1, w.p_t);
    w.p_end = w.p_t;

    SupervisionVariant robot;
    robot.kind = VariantKind::RobotOnly;
    auto rt = make_variant(w, robot);
    CHECK(rt.point_idx == std::vector<size_t>{0, 2});
    REQUIRE(rt.shape == Shape{h, 2, 3});

    SupervisionVariant full;
    auto ft = make_variant(w, full);
    for (size_t i = 0; i < h; ++i)
        for (size_t jj = 0; jj < 2; ++jj) {
            size_t j = rt.point_idx[jj];
            for (size_t c = 0; c < 3; ++c)
                CHECK(rt.values[(i * 2 + jj) * 3 + c] == ft.values[(i * np + j) * 3 + c]);
        }

    SupervisionVariant scene;
    scene.kind = VariantKind::SceneOnly;
    CHECK(make_variant(w, scene).point_idx == std::vector<size_t>{1, 3, 4});

    // empty subset is an error
    w.labels = {1, 1, 1, 1, 1};
    CHECK_THROWS_WITH(make_variant(w, robot), Catch::Matchers::ContainsSubstring("Robot"));
}

TEST_CASE("point normalization is gripper-centered") {
    std::vector<Vec3> pts = {{1, 2, 3}, {0.5, 0, 0}};
    Observation obs;
    obs.proprio = {1.0, 2.0, 3.0, 0.0};
    auto out = normalized_points(pts, {0, 1}, obs);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.0);
    CHECK(out[3] == -0.5);
    CHECK(out[4] == -2.0);
    CHECK(out[5] == -3.0);
}

TEST_CASE("external track round-trip is bitwise") {
    Episode ep = script_demonstration(TaskKind::PickPlace, 12, 8);
    ExternalTracks et{ep.tracks, ep.labels};
    export_tracks(et, "sv_rt.p4rt");
    auto back = import_external_tracks("sv_rt.p4rt");
    CHECK(back.labels == et.labels);
    REQUIRE(back.tracks.size() == et.tracks.size());
    for (size_t t = 0; t < et.tracks.size(); ++t)
        for (size_t j = 0; j < et.labels.size(); ++j) REQUIRE(back.tracks[t][j] == et.tracks[t][j]);
    std::remove("sv_rt.p4rt");
}

TEST_CASE("external track validation names the offending frame and point") {
    ExternalTracks et;
    et.labels = {0, 1};
    et.tracks = {{{0, 0, 0}, {1, 1, 1}}, {{0, 0, 0}, {1, 1, std::numeric_limits<double>::quiet_NaN()}}};
    // export writes raw bytes; the NaN is caught on import
    export_tracks(et, "sv_nan.p4rt");
    CHECK_THROWS_WITH(import_external_tracks("sv_nan.p4rt"),
                      Catch::Matchers::ContainsSubstring("frame 1") &&
                          Catch::Matchers::ContainsSubstring("point 1"));
    std::remove("sv_nan.p4rt");
}

TEST_CASE("truncated and malformed track files are rejected outright") {
    Episode ep = script_demonstration(TaskKind::Drawer, 13, 4);
    export_tracks({ep.tracks, ep.labels}, "sv_tr.p4rt");
    std::string bytes = slurp("sv_tr.p4rt");
    std::ofstream("sv_tr.p4rt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    CHECK_THROWS_WITH(import_external_tracks("sv_tr.p4rt"),
                      Catch::Matchers::ContainsSubstring("truncated"));

    std::ofstream("sv_tr.p4rt", std::ios::binary) << (bytes + "xx");
    CHECK_THROWS_WITH(import_external_tracks("sv_tr.p4rt"),
                      Catch::Matchers::ContainsSubstring("trailing"));

    std::ofstream("sv_tr.p4rt", std::ios::binary) << "BAD!" << bytes.substr(4);
    CHECK_THROWS_WITH(import_external_tracks("sv_tr.p4rt"),
                      Catch::Matchers::ContainsSubstring("magic"));
    std::remove("sv_tr.p4rt");
}

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "pri4r/checkpoint.hpp"

using namespace pri4r;

namespace {

std::string tmp_path(const char* name) { return std::string("ckpt_test_") + name; }

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint round-trip is lossless") {
    ParamStore ps;
    Pcg32 rng(42);
    ps.create_fan_in("layer.w", {3, 5}, 3, rng);
    ps.create("layer.b", {5}, {1e-300, -0.0, 3.14, 2.0, -7.5});
    std::string path = tmp_path("rt.p4rk");
    save_checkpoint(ps, path);

    auto entries = load_checkpoint(path);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].name == "layer.w");
    CHECK(entries[0].shape == Shape{3, 5});
    CHECK(entries[0].data == ps.at("layer.w").data());
    CHECK(entries[1].data == ps.at("layer.b").data());

    ParamStore ps2;
    Pcg32 rng2(7);
    ps2.create_fan_in("layer.w", {3, 5}, 3, rng2);
    ps2.create_zeros("layer.b", {5});
    restore_params(ps2, entries);
    CHECK(ps2.at("layer.w").data() == ps.at("layer.w").data());
    CHECK(ps2.at("layer.b").data() == ps.at("layer.b").data());
    std::remove(path.c_str());
}

TEST_CASE("checkpoint writes are byte-deterministic") {
    auto build = []() {
        ParamStore ps;
        Pcg32 rng(3);
        ps.create_fan_in("a", {4, 4}, 4, rng);
        ps.create_fan_in("b", {2}, 2, rng);
        return ps;
    };
    ParamStore a = build(), b = build();
    save_checkpoint(a, tmp_path("d1.p4rk"));
    save_checkpoint(b, tmp_path("d2.p4rk"));
    CHECK(slurp(tmp_path("d1.p4rk")) == slurp(tmp_path("d2.p4rk")));
    std::remove(tmp_path("d1.p4rk").c_str());
    std::remove(tmp_path("d2.p4rk").c_str());
}

TEST_CASE("checkpoint rejects bad magic") {
    std::string path = tmp_path("bad.p4rk");
    std::ofstream(path, std::ios::binary) << "NOPE1234";
    CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects truncation") {
    ParamStore ps;
    ps.create("w", {4}, {1, 2, 3, 4});
    std::string path = tmp_path("trunc.p4rk");
    save_checkpoint(ps, path);
    std::string bytes = slurp(path);
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 9);
    CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("truncated"));
    std::remove(path.c_str());
}

TEST_CASE("restore rejects unexpected names and shapes") {
    ParamStore ps;
    ps.create("w", {2}, {1, 2});
    std::vector<CheckpointEntry> wrong_name{{"v", {2}, {1, 2}}};
    CHECK_THROWS(restore_params(ps, wrong_name));
    std::vector<CheckpointEntry> wrong_shape{{"w", {3}, {1, 2, 3}}};
    CHECK_THROWS(restore_params(ps, wrong_shape));
}

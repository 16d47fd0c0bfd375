#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "pri4r/eval.hpp"
#include "pri4r/svg.hpp"
#include "pri4r/trainer.hpp"

using namespace pri4r;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("identical inputs render byte-identical svg") {
    std::vector<Series> series{{"a", {{0, 1}, {1, 0.5}, {2, 0.25}}},
                               {"b", {{0, 2}, {1, 1.9}, {2, 1.7}}}};
    std::string s1 = render_line_chart(series, "t", "x", "y");
    std::string s2 = render_line_chart(series, "t", "x", "y");
    CHECK(s1 == s2);
    CHECK(s1.rfind("<svg", 0) == 0);
    CHECK(s1.find("</svg>") != std::string::npos);
    CHECK(s1.find("polyline") != std::string::npos);
    CHECK(s1.find(">a<") != std::string::npos);
    CHECK(s1.find(">b<") != std::string::npos);

    // different data renders differently
    series[0].points[1].second = 0.6;
    CHECK(render_line_chart(series, "t", "x", "y") != s1);
}

TEST_CASE("single-point series get a padded axis instead of a degenerate one") {
    std::vector<Series> series{{"pt", {{3.0, 7.0}}}};
    std::string svg = render_line_chart(series, "t", "x", "y");
    // range collapses to [v-1, v+1]: both endpoints appear as tick labels
    CHECK(svg.find(">2<") != std::string::npos);
    CHECK(svg.find(">4<") != std::string::npos);
    CHECK(svg.find(">6<") != std::string::npos);
    CHECK(svg.find(">8<") != std::string::npos);
    CHECK(svg.find("polyline") == std::string::npos);  // no line through one point
    CHECK(svg.find("circle") != std::string::npos);
}

TEST_CASE("empty or non-finite inputs are rejected") {
    CHECK_THROWS(render_line_chart({}, "t", "x", "y"));
    CHECK_THROWS(render_line_chart({{"e", {}}}, "t", "x", "y"));
    CHECK_THROWS(
        render_line_chart({{"n", {{0.0, std::numeric_limits<double>::quiet_NaN()}}}}, "t", "x", "y"));
}

TEST_CASE("write_svg emits the exact string") {
    std::string svg = render_line_chart({{"s", {{0, 0}, {1, 1}}}}, "t", "x", "y");
    write_svg(svg, "plot_a.svg");
    write_svg(svg, "plot_b.svg");
    CHECK(slurp("plot_a.svg") == svg);
    CHECK(slurp("plot_a.svg") == slurp("plot_b.svg"));
    std::remove("plot_a.svg");
    std::remove("plot_b.svg");
}

TEST_CASE("training logs plot reproducibly through the csv reader") {
    std::vector<TrainLogRow> rows(3);
    rows[0] = {100, 0.5, 0.3, 0.2, -1.0, 0.0};
    rows[1] = {200, 0.4, 0.25, 0.15, -1.0, 0.0};
    rows[2] = {300, 0.3, 0.2, 0.1, 0.5, 0.0};
    write_train_log_csv(rows, "plot_log1.csv", false);
    write_train_log_csv(rows, "plot_log2.csv", false);

    auto series_from = [](const std::string& path) {
        auto cells = read_csv(path);
        Series s{"loss_total", {}};
        for (size_t i = 1; i < cells.size(); ++i)
            s.points.emplace_back(std::stod(cells[i][0]), std::stod(cells[i][1]));
        return s;
    };
    Series s1 = series_from("plot_log1.csv");
    Series s2 = series_from("plot_log2.csv");
    REQUIRE(s1.points.size() == 3);
    CHECK(s1.points[0] == std::make_pair(100.0, 0.5));
    std::string svg1 = render_line_chart({s1}, "loss", "step", "loss_total");
    std::string svg2 = render_line_chart({s2}, "loss", "step", "loss_total");
    CHECK(svg1 == svg2);
    std::remove("plot_log1.csv");
    std::remove("plot_log2.csv");
}

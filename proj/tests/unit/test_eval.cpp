#include "doctest.h"

#include "timely/eval.hpp"
#include "timely/rng.hpp"

#include <sstream>

using namespace timely;
using namespace timely::eval;

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double below = 0, equal = 0;
        for (double w : v) below += w < v[i], equal += w == v[i];
        r[i] = below + (equal + 1) / 2.0;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("scores") {
    std::vector<bool> noisy(10, false), flagged(10, false);
    noisy[2] = noisy[7] = true;
    SUBCASE("hand count") {
        flagged[2] = flagged[7] = flagged[0] = flagged[9] = true;
        auto m = score(flagged, noisy);
        CHECK(m.precision == 0.5);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(m.selected_items == 0.4);
        CHECK_FALSE(m.accuracy);
    }
    SUBCASE("exact") {
        auto m = score(noisy, noisy);
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }
    SUBCASE("edge cases") {
        std::vector<bool> none(10, false);
        auto clean = score(none, none);
        CHECK(clean.precision == 1.0);
        CHECK(clean.recall == 1.0);
        auto missed = score(none, noisy);
        CHECK(missed.recall == 0.0);
        CHECK(missed.f1 == 0.0);
        flagged[0] = true;
        auto wrong = score(flagged, none);
        CHECK(wrong.precision == 0.0);
    }
    SUBCASE("accuracy of proposed labels") {
        std::vector<int> truth{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
        std::vector<int> proposed = truth;
        proposed[3] = 0;
        auto m = score(flagged, noisy, truth, &proposed);
        REQUIRE(m.accuracy);
        CHECK(*m.accuracy == 0.9);
    }
}

TEST_CASE("confusion matrix") {
    std::vector<int> a{0, 1, 2, 2}, b{0, 1, 2, 2};
    Eigen::MatrixXd c = confusion(a, b, 3);
    CHECK(c == Eigen::MatrixXd(Eigen::Vector3d(1, 1, 2).asDiagonal()));
    auto off = confusion(std::vector<int>(5, 0), std::vector<int>(5, 1), 3);
    CHECK(off(0, 1) == 5.0);
    CHECK(off.sum() == 5.0);
    auto norm = confusion(std::vector<int>{0, 0, 0, 2}, std::vector<int>{0, 1, 1, 0}, 3, true);
    CHECK(norm.row(0).sum() == doctest::Approx(1.0));
    CHECK(norm.row(1).sum() == 0.0);
    CHECK(norm.row(2).sum() == 1.0);
}

TEST_CASE("spearman equals pearson on average ranks") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a(30), b(30);
        for (int i = 0; i < 30; ++i) {
            a[i] = static_cast<double>(rng.below(8));  // plenty of ties
            b[i] = a[i] + rng.normal();
        }
        CHECK(spearman(a, b) == doctest::Approx(pearson(average_ranks(a), average_ranks(b))).epsilon(1e-12));
    }
    std::vector<double> x{1, 2, 3}, y{3, 2, 1};
    CHECK(spearman(x, y) == doctest::Approx(-1.0));
}

TEST_CASE("benchmark layout and clean data") {
    BenchmarkConfig config;
    config.seeds = {0};
    config.threads = 1;
    auto res = run_benchmark(config);
    CHECK(res.rows.size() == 18);
    CHECK(res.runs.size() == 18);
    CHECK(res.rows[0].method == "timely");
    CHECK(res.rows[0].noise_level == 10);
    for (const auto& r : res.rows) CHECK(r.failed_seeds == 0);

    std::ostringstream csv;
    write_csv(csv, res.rows);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 19);
    CHECK(to_json(res) == to_json(run_benchmark(config)));

    BenchmarkConfig clean;
    clean.noise_levels = {0};
    clean.seeds = {0, 1};
    clean.methods = {"timely"};
    auto c = run_benchmark(clean);
    REQUIRE(c.rows.size() == 1);
    CHECK(c.rows[0].selected_items < 0.03);
    CHECK(*c.rows[0].accuracy > 0.97);

    BenchmarkConfig bad;
    bad.methods = {"nope"};
    CHECK_THROWS_AS(run_benchmark(bad), ValidationError);
}

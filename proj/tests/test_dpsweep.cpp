#include "dualpath/dpsweep.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace dualpath;
using namespace dualpath::sweep;

namespace {

std::vector<std::vector<double>> gaussian_cloud(Rng& rng, std::size_t n, const std::vector<double>& mean,
                                                double std) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(mean.size());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = mean[j] + std * rng.normal();
        out.push_back(std::move(v));
    }
    return out;
}

// exhaustive pairwise k-NN oracle for small sets
PrecisionRecall oracle_pr(const std::vector<std::vector<double>>& real,
                          const std::vector<std::vector<double>>& fake, int k) {
    auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    auto radius = [&](const std::vector<std::vector<double>>& pts, std::size_t i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (i != j) d.push_back(dist(pts[i], pts[j]));
        std::sort(d.begin(), d.end());
        return d[static_cast<std::size_t>(k - 1)];
    };
    PrecisionRecall out;
    std::size_t hits = 0;
    for (const auto& f : fake) {
        bool in = false;
        for (std::size_t i = 0; i < real.size() && !in; ++i) in = dist(f, real[i]) <= radius(real, i);
        hits += in ? 1 : 0;
    }
    out.precision = static_cast<double>(hits) / static_cast<double>(fake.size());
    hits = 0;
    for (const auto& r : real) {
        bool in = false;
        for (std::size_t i = 0; i < fake.size() && !in; ++i) in = dist(r, fake[i]) <= radius(fake, i);
        hits += in ? 1 : 0;
    }
    out.recall = static_cast<double>(hits) / static_cast<double>(real.size());
    out.f1 = (out.precision == 0.0 || out.recall == 0.0)
                 ? 0.0
                 : 2 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

SweepPoint make_point(double ratio, double mse, double fid) {
    SweepPoint p;
    p.weights = {1.0, ratio};
    p.mse = mse;
    p.fid = fid;
    p.precision = 0.5;
    p.recall = 0.5;
    p.f1 = 0.5;
    p.converged = true;
    return p;
}

}  // namespace

TEST_SUITE("dpsweep") {

TEST_CASE("grid resolution covers both legs and the nine labeled points") {
    SweepGrid grid;
    auto pts = grid.resolve();
    // 9 leg-1 values + 15 leg-2 values - shared (1,1) + 9 representative = 32
    CHECK(pts.size() == 32);
    // monotone in the perceptual-weight ratio
    for (std::size_t i = 1; i < pts.size(); ++i)
        CHECK(pts[i - 1].lambda_p / pts[i - 1].lambda_d <= pts[i].lambda_p / pts[i].lambda_d);
    for (const auto& rep : SweepGrid::representative_points()) {
        bool found = false;
        for (const auto& p : pts)
            found |= p.lambda_d == rep.lambda_d && p.lambda_p == rep.lambda_p;
        CHECK(found);
    }
    // no duplicates
    for (std::size_t i = 1; i < pts.size(); ++i)
        CHECK((pts[i].lambda_d != pts[i - 1].lambda_d || pts[i].lambda_p != pts[i - 1].lambda_p));
}

TEST_CASE("fid of a set against itself is ~0 and symmetry is bitwise") {
    Rng rng(41);
    auto cloud = gaussian_cloud(rng, 64, {1.0, -2.0, 0.5, 3.0}, 1.0);
    CHECK(fid_from_embeddings(cloud, cloud) <= 1e-6);

    auto other = gaussian_cloud(rng, 64, {0.0, 0.0, 0.0, 0.0}, 1.5);
    const double ab = fid_from_embeddings(cloud, other);
    const double ba = fid_from_embeddings(other, cloud);
    CHECK(ab == ba);  // bitwise
    CHECK(ab > 0.0);
}

TEST_CASE("fid matches the closed form for shifted equal-covariance Gaussians") {
    Rng rng(42);
    // means differ by a vector of norm 2, covariance equal -> FID = 4
    const std::vector<double> mu_r = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> mu_f = mu_r;
    mu_f[0] = 2.0;
    auto real = gaussian_cloud(rng, 2000, mu_r, 1.0);
    auto fake = gaussian_cloud(rng, 2000, mu_f, 1.0);
    const double fid = fid_from_embeddings(real, fake);
    CHECK(fid == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("fid adds eps to near-singular covariances and records it") {
    // all points identical in one coordinate -> singular covariance
    Rng rng(43);
    auto real = gaussian_cloud(rng, 32, {0.0, 0.0, 0.0}, 1.0);
    auto fake = gaussian_cloud(rng, 32, {0.0, 0.0, 0.0}, 1.0);
    for (auto& v : real) v[2] = 5.0;
    for (auto& v : fake) v[2] = 5.0;
    bool eps = false;
    const double fid = fid_from_embeddings(real, fake, &eps);
    CHECK(eps);
    CHECK(std::isfinite(fid));
    CHECK_THROWS_AS(fid_from_embeddings({{1.0}}, {{1.0}, {2.0}}), InputError);
}

TEST_CASE("precision/recall: identity, separation, and the k-NN oracle") {
    Rng rng(44);
    auto real = gaussian_cloud(rng, 24, {0.0, 0.0}, 1.0);
    auto pr = precision_recall(real, real, 3);
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);
    CHECK(pr.f1 == 1.0);

    auto far = gaussian_cloud(rng, 24, {1000.0, 1000.0}, 1.0);
    auto pr2 = precision_recall(real, far, 3);
    CHECK(pr2.precision == 0.0);
    CHECK(pr2.recall == 0.0);
    CHECK(pr2.f1 == 0.0);

    // exhaustive oracle on small random sets
    for (int trial = 0; trial < 5; ++trial) {
        auto a = gaussian_cloud(rng, 20 + trial * 8, {0.0, 0.0, 0.0}, 1.0);
        auto b = gaussian_cloud(rng, 18 + trial * 7, {0.8, -0.2, 0.1}, 1.2);
        auto got = precision_recall(a, b, 3);
        auto want = oracle_pr(a, b, 3);
        CHECK(got.precision == doctest::Approx(want.precision));
        CHECK(got.recall == doctest::Approx(want.recall));
        CHECK(got.f1 == doctest::Approx(want.f1));
    }
    CHECK_THROWS_AS(precision_recall(gaussian_cloud(rng, 3, {0.0}, 1.0), real, 3), InputError);
}

TEST_CASE("half-in half-out fake cloud gives precision 0.5, recall 0, f1 0") {
    // controlled geometry: sparse real line (wide radii), the inside half of
    // fake is a micro-cluster within a real radius but with tiny own radii
    // that cover no real point, the outside half is far away
    std::vector<std::vector<double>> real, fake;
    for (int i = 0; i < 16; ++i) real.push_back({static_cast<double>(i), 0.0});
    for (int i = 0; i < 8; ++i) fake.push_back({0.5 + 1e-6 * i, 0.0});          // inside, micro-clustered
    for (int i = 0; i < 8; ++i) fake.push_back({1000.0 + 500.0 * i, 9999.0});   // far outside, mutually distant
    auto pr = precision_recall(real, fake, 1);
    CHECK(pr.precision == doctest::Approx(0.5));
    CHECK(pr.recall == 0.0);
    CHECK(pr.f1 == 0.0);
    auto want = oracle_pr(real, fake, 1);
    CHECK(pr.precision == doctest::Approx(want.precision));
    CHECK(pr.recall == doctest::Approx(want.recall));
}

TEST_CASE("f1 bounds: zero iff either side is zero, at most twice each side") {
    Rng rng(45);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = gaussian_cloud(rng, 16, {0.0, 0.0}, 1.0);
        auto b = gaussian_cloud(rng, 16, {rng.normal(), rng.normal()}, 1.0);
        auto pr = precision_recall(a, b, 2);
        CHECK(pr.precision >= 0.0);
        CHECK(pr.precision <= 1.0);
        CHECK(pr.recall >= 0.0);
        CHECK(pr.recall <= 1.0);
        if (pr.precision == 0.0 || pr.recall == 0.0) CHECK(pr.f1 == 0.0);
        else CHECK(pr.f1 > 0.0);
        CHECK(pr.f1 <= 2.0 * pr.precision);
        CHECK(pr.f1 <= 2.0 * pr.recall);
    }
}

TEST_CASE("detect_phases recovers the quadratic ground truth within one grid point") {
    // mse = (r-3)^2, fid = (r-6)^2 over r = 1..9
    std::vector<SweepPoint> pts;
    for (int r = 1; r <= 9; ++r)
        pts.push_back(make_point(static_cast<double>(r), std::pow(r - 3.0, 2), std::pow(r - 6.0, 2)));
    auto res = detect_phases(pts, 3);
    REQUIRE(res.order.size() == 9);
    CHECK_FALSE(res.partial);
    // true boundaries at sorted positions 2 (r=3) and 5 (r=6)
    CHECK(std::abs(res.turning1 - 2) <= 1);
    CHECK(std::abs(res.turning2 - 5) <= 1);
    // leading points positive-sum, trailing negative-sum
    CHECK(res.labels.front() == Phase::positive_sum);
    CHECK(res.labels.back() == Phase::negative_sum);
    // contiguous runs after absorption: at most 3
    int runs = 1;
    for (std::size_t i = 1; i < res.labels.size(); ++i)
        if (res.labels[i] != res.labels[i - 1]) ++runs;
    CHECK(runs <= 3);
}

TEST_CASE("monotone co-decreasing pair is a single positive-sum regime with a partial flag") {
    std::vector<SweepPoint> pts;
    for (int r = 1; r <= 7; ++r)
        pts.push_back(make_point(static_cast<double>(r), 10.0 - r, 20.0 - 2.0 * r));
    auto res = detect_phases(pts, 3);
    CHECK(res.partial);
    for (Phase p : res.labels) CHECK(p == Phase::positive_sum);
    CHECK(res.turning1 == -1);
    CHECK(res.turning2 == -1);
}

TEST_CASE("detection sorts by ratio, so input order does not matter") {
    std::vector<SweepPoint> fwd, rev;
    for (int r = 1; r <= 9; ++r)
        fwd.push_back(make_point(static_cast<double>(r), std::pow(r - 3.0, 2), std::pow(r - 6.0, 2)));
    rev = fwd;
    std::reverse(rev.begin(), rev.end());
    auto a = detect_phases(fwd, 3);
    auto b = detect_phases(rev, 3);
    CHECK(a.turning1 == b.turning1);
    CHECK(a.turning2 == b.turning2);
    CHECK(a.labels == b.labels);
}

TEST_CASE("phase detection requires five converged points") {
    std::vector<SweepPoint> pts;
    for (int r = 1; r <= 4; ++r) pts.push_back(make_point(r, 1.0, 1.0));
    CHECK_THROWS_AS(detect_phases(pts, 3), InputError);
    pts.push_back(make_point(5, std::nan(""), 1.0));
    pts.back().converged = false;
    CHECK_THROWS_AS(detect_phases(pts, 3), InputError);
}

TEST_CASE("downstream optimum: ties resolve to the lowest ratio, phases attach") {
    std::vector<SweepPoint> pts;
    for (int r = 1; r <= 9; ++r) {
        auto p = make_point(static_cast<double>(r), std::pow(r - 3.0, 2), std::pow(r - 6.0, 2));
        p.downstream["segmentation"] = (r == 4) ? 0.9 : 0.5;  // peak inside coopetitive
        p.downstream["bp"] = 3.0;                             // all equal -> lowest ratio wins
        pts.push_back(p);
    }
    auto phases = detect_phases(pts, 3);
    auto optima = locate_downstream_optimum(pts, phases);
    REQUIRE(optima.size() == 2);
    CHECK(optima[0].task == "bp");
    CHECK(optima[0].point_index == 0);  // min over equal values -> first
    CHECK(optima[1].task == "segmentation");
    CHECK(optima[1].point_index == 3);
    CHECK(optima[1].phase == Phase::coopetitive);
    CHECK(optima[1].near_coopetitive);
}

TEST_CASE("sweep CSV round trip") {
    namespace fs = std::filesystem;
    std::vector<SweepPoint> pts;
    for (int r = 1; r <= 5; ++r) {
        auto p = make_point(static_cast<double>(r), 0.1 * r, 2.0 / r);
        p.downstream["segmentation"] = 0.1 * r;
        pts.push_back(p);
    }
    pts[2].converged = false;
    pts[2].mse = std::nan("");
    const fs::path path = fs::temp_directory_path() / "dualpath_sweep_rt.csv";
    write_sweep_csv(path, pts, "deadbeef", 7);
    auto back = read_sweep_csv(path);
    REQUIRE(back.size() == pts.size());
    CHECK(back[0].weights.lambda_p == pts[0].weights.lambda_p);
    CHECK(back[1].mse == doctest::Approx(pts[1].mse));
    CHECK_FALSE(back[2].converged);
    CHECK(back[4].downstream.at("segmentation") == doctest::Approx(0.5));
    fs::remove(path);
}

TEST_CASE("scatter SVG is written with log axes") {
    namespace fs = std::filesystem;
    ScatterSeries s;
    s.name = "demo";
    s.pts = {{0.01, 0.5}, {0.1, 0.7}, {1.0, 0.9}};
    s.labels = {"A", "", ""};
    const fs::path path = fs::temp_directory_path() / "dualpath_scatter.svg";
    write_scatter_svg(path, "demo plot", "mse", "1-fid", {s}, true, true);
    const std::string svg = read_file(path);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("(log)") != std::string::npos);
    CHECK(svg.find(">A<") != std::string::npos);
    fs::remove(path);
}

}  // TEST_SUITE

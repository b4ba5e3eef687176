#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "ttad/common.hpp"
#include "ttad/recon.hpp"
#include "ttad/time_branch.hpp"

using namespace ttad;

namespace {

Tensor random_matrix(int64_t r, int64_t c, uint64_t seed, bool grad = false) {
    auto rng = make_rng(seed, 0);
    std::vector<double> v(static_cast<size_t>(r * c));
    for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
    return Tensor::from({r, c}, v, grad);
}

}  // namespace

TEST_CASE("reconstruction reassembles to the window shape") {
    // 4 patches of length 6, 2 channels: rows are 4 x 12, window is 24 x 2.
    auto rng = make_rng(1, 0);
    auto params = ReconParams::init(16, 2, 64, 12, rng);
    auto h = random_matrix(4, 16, 2);
    auto z = random_matrix(4, 16, 3);
    auto rows = reconstruct(params, h, z);
    CHECK(rows.rows() == 4);
    CHECK(rows.cols() == 12);
    auto window = unpatch(rows.data(), 4, 6, 2);
    CHECK(window.size() == 48);
}

TEST_CASE("dropped text rows cannot influence the reconstruction") {
    auto rng = make_rng(5, 0);
    auto params = ReconParams::init(16, 2, 64, 6, rng);
    auto h = random_matrix(4, 16, 6);

    // Mask keeps rows 0 and 2; rows 1 and 3 are zeroed by the condenser.
    auto gate = Tensor::from({4}, {1.0, 0.0, 1.0, 0.0});
    auto z_a = random_matrix(4, 16, 7);
    auto z_b = z_a.data();
    for (int64_t c = 0; c < 16; ++c) {
        z_b[static_cast<size_t>(1 * 16 + c)] = 123.0;
        z_b[static_cast<size_t>(3 * 16 + c)] = -9.0;
    }
    NoGradGuard ng;
    auto xa = reconstruct(params, h, mul_colvec(Tensor::from({4, 16}, z_a.data()), gate));
    auto xb = reconstruct(params, h, mul_colvec(Tensor::from({4, 16}, z_b), gate));
    for (int64_t r = 0; r < 4; ++r)
        for (int64_t c = 0; c < 6; ++c) CHECK(xa.at(r, c) == xb.at(r, c));
}

TEST_CASE("reconstruction gradient reaches the text side when any row survives") {
    auto rng = make_rng(9, 0);
    auto params = ReconParams::init(8, 2, 16, 4, rng);
    auto h = random_matrix(3, 8, 10);
    auto z = random_matrix(3, 8, 11, true);
    auto gate = Tensor::from({3}, {0.0, 1.0, 0.0});
    auto target = random_matrix(3, 4, 12);

    auto report = grad_check(
        [&](const std::vector<Tensor>& inputs) {
            return loss_rec(target, reconstruct(params, h, mul_colvec(inputs[0], gate)));
        },
        {z}, 1e-4);
    CHECK(report.pass);

    z.zero_grad();
    backward(loss_rec(target, reconstruct(params, h, mul_colvec(z, gate))));
    double g_kept = 0.0, g_dropped = 0.0;
    for (int64_t c = 0; c < 8; ++c) {
        g_dropped += std::fabs(z.grad()[static_cast<size_t>(c)]);
        g_kept += std::fabs(z.grad()[static_cast<size_t>(8 + c)]);
        g_dropped += std::fabs(z.grad()[static_cast<size_t>(16 + c)]);
    }
    CHECK(g_kept > 0.0);
    CHECK(g_dropped == 0.0);
}

TEST_CASE("reconstruction loss closed forms") {
    auto x = random_matrix(4, 6, 13);
    CHECK(loss_rec(x, x).item() == 0.0);

    auto y = x.data();
    y[static_cast<size_t>(2 * 6 + 3)] += 0.25;
    auto yt = Tensor::from({4, 6}, y);
    CHECK(loss_rec(x, yt).item() == doctest::Approx(0.25 * 0.25 / 24.0).epsilon(1e-12));
    CHECK(loss_rec(yt, x).item() == doctest::Approx(loss_rec(x, yt).item()).epsilon(1e-15));

    // Raw-sum mode skips the element-count division.
    CHECK(loss_rec(x, yt, true).item() == doctest::Approx(0.25 * 0.25).epsilon(1e-12));
}

TEST_CASE("score accumulator averages over covering windows") {
    ScoreAccumulator acc(6);
    acc.add_window(0, {1.0, 2.0, 3.0});
    acc.add_window(2, {5.0, 6.0, 7.0});
    acc.add_window(3, {0.0, 0.0, 0.0});
    auto scores = acc.finalize();
    CHECK(scores == std::vector<double>{1.0, 2.0, 4.0, 3.0, 3.5, 0.0});

    ScoreAccumulator gap(4);
    gap.add_window(0, {1.0, 1.0});
    CHECK_THROWS_AS(gap.finalize(), std::runtime_error);
}

TEST_CASE("threshold labels count and tie rules") {
    std::vector<double> flat(100, 1.0);
    auto l = threshold_labels(flat, 0.1);
    int64_t flags = 0;
    for (size_t i = 0; i < l.size(); ++i) flags += l[i];
    CHECK(flags == 10);
    for (size_t i = 0; i < 10; ++i) CHECK(l[i] == 1);  // ties go to earlier timestamps
    for (size_t i = 10; i < 100; ++i) CHECK(l[i] == 0);

    auto r = threshold_labels({3.0, 1.0, 2.0, 0.0}, 0.5);
    CHECK(r == std::vector<uint8_t>{1, 0, 1, 0});

    // ceil semantics: 0.05 * 41 = 2.05 -> 3 flags.
    std::vector<double> ramp(41);
    for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    auto c = threshold_labels(ramp, 0.05);
    int64_t total = 0;
    for (auto v : c) total += v;
    CHECK(total == 3);
    CHECK(c[40] == 1);
    CHECK(c[39] == 1);
    CHECK(c[38] == 1);

    CHECK_THROWS_AS(threshold_labels(flat, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(threshold_labels(flat, 1.5), std::invalid_argument);
}

TEST_CASE("scores csv round trip with and without labels") {
    ScoreSeries s;
    s.timestamps = {100, 160, 220};
    s.scores = {0.125, 1.0 / 3.0, 7.25e-9};
    s.labels = {0, 1, 0};
    auto path = (std::filesystem::temp_directory_path() / "ttad_scores_rt.csv").string();
    write_scores_csv(path, s);
    auto back = read_scores_csv(path);
    CHECK(back.timestamps == s.timestamps);
    CHECK(back.scores == s.scores);
    CHECK(back.labels == s.labels);

    ScoreSeries bare;
    bare.timestamps = {5, 6};
    bare.scores = {0.5, 0.25};
    write_scores_csv(path, bare);
    auto back2 = read_scores_csv(path);
    CHECK_FALSE(back2.has_labels());
    CHECK(back2.scores == bare.scores);
    std::remove(path.c_str());
}

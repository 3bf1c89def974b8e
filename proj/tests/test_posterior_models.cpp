#include "doctest.h"

#include <cmath>
#include <memory>

#include "postpred/likelihoods.hpp"
#include "postpred/posterior_models.hpp"
#include "postpred/primary_models.hpp"
#include "support/oracles.hpp"

using namespace postpred;

namespace {

HypernetArch arch_of(std::vector<int64_t> widths, bool conditioned = false, int64_t cond_dim = 0) {
    HypernetArch a;
    a.widths = std::move(widths);
    a.conditioned = conditioned;
    a.cond_dim = cond_dim;
    return a;
}

LatentSpec uniform_latent(int64_t dim) {
    LatentSpec l;
    l.dim = dim;
    return l;
}

ThetaLayout flat_layout(int64_t p) {
    ThetaLayout layout;
    layout.add("theta", {p});
    return layout;
}

} // namespace

TEST_CASE("frozen input weights make every sample identical (degenerate collapse)") {
    Rng init(5);
    HypernetPosterior net(arch_of({3, 8, 6}), uniform_latent(3), init);
    net.freeze_input_weights();
    Rng rng(11);
    ThetaBatch batch = net.sample(flat_layout(6), 16, rng);
    CHECK(batch.values.shape() == Shape{16, 6});
    for (int64_t l = 1; l < 16; ++l) {
        for (int64_t j = 0; j < 6; ++j) {
            CHECK(batch.values.data()[l * 6 + j] == batch.values.data()[j]);
        }
    }
    // frozen weights are excluded from the trainable set
    CHECK(net.parameters().size() == net.named_parameters().size() - 1);
}

TEST_CASE("L=1 yields exactly one parameter vector") {
    Rng init(7);
    HypernetPosterior net(arch_of({2, 5}), uniform_latent(2), init);
    Rng rng(1);
    ThetaBatch batch = net.sample(flat_layout(5), 1, rng);
    CHECK(batch.values.shape() == Shape{1, 5});
}

TEST_CASE("linear hypernet empirical variance matches W diag(1/3) W^T") {
    // theta = W z + b with z ~ U(-1,1): var(theta_i) = (1/3) sum_j W_ij^2
    Rng init(13);
    HypernetPosterior net(arch_of({4, 3}), uniform_latent(4), init);
    // overwrite init with a known W (stored [in,out])
    std::vector<double> w = {0.5, -1.0, 2.0, 1.5, 0.2, -0.4, -0.8, 1.1, 0.0, 0.3, 0.9, -2.0};
    net.named_parameters()[0].second.raw_data() = w;

    const int64_t n = 10000;
    Rng rng(17);
    ThetaBatch batch = net.sample(flat_layout(3), n, rng);
    for (int64_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += batch.values.data()[i * 3 + j];
        mean /= n;
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double c = batch.values.data()[i * 3 + j] - mean;
            var += c * c;
        }
        var /= n;
        double expect = 0.0;
        for (int64_t zi = 0; zi < 4; ++zi) expect += w[zi * 3 + j] * w[zi * 3 + j];
        expect /= 3.0;
        CHECK(var == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("conditional hypernet with zeroed x-columns ignores the conditioning input") {
    Rng init(19);
    HypernetPosterior net(arch_of({3, 8, 4}, true, 2), uniform_latent(3), init);
    // zero the x-facing rows of the first layer (rows latent..latent+cond)
    Tensor w0 = net.named_parameters()[0].second; // [3+2, 8]
    for (int64_t r = 3; r < 5; ++r) {
        for (int64_t c = 0; c < 8; ++c) w0.raw_data()[r * 8 + c] = 0.0;
    }
    Tensor xa = Tensor::from_data({2, 2}, {5.0, -3.0, 0.1, 9.0});
    Tensor xb = Tensor::from_data({2, 2}, {-1.0, 2.0, 7.0, -4.0});
    Rng rng_a(23), rng_b(23); // same z stream
    Tensor ta = net.sample_values_conditional(xa, 4, rng_a);
    Tensor tb = net.sample_values_conditional(xb, 4, rng_b);
    CHECK(ta.data() == tb.data());
}

TEST_CASE("distinct conditioning rows with a shared z produce distinct parameters") {
    Rng init(29);
    HypernetPosterior net(arch_of({2, 8, 3}, true, 1), uniform_latent(2), init);
    // drive the raw map directly with a frozen z and two different x values
    Tensor in_a = Tensor::from_data({1, 3}, {0.3, -0.4, 0.2});
    Tensor in_b = Tensor::from_data({1, 3}, {0.3, -0.4, 5.0});
    Tensor out_a = net.transform(in_a);
    Tensor out_b = net.transform(in_b);
    double diff = 0.0;
    for (int64_t j = 0; j < 3; ++j) diff += std::fabs(out_a.data()[j] - out_b.data()[j]);
    CHECK(diff > 1e-6);
}

TEST_CASE("B=1 conditional sampling equals an unconditioned net with x appended to z") {
    Rng init(31);
    HypernetPosterior cond_net(arch_of({3, 6, 4}, true, 1), uniform_latent(3), init);
    // clone parameters into an unconditioned net over a 4-wide latent
    Rng init2(31);
    HypernetPosterior flat_net(arch_of({4, 6, 4}), uniform_latent(4), init2);
    auto src = cond_net.named_parameters();
    auto dst = flat_net.named_parameters();
    REQUIRE(src.size() == dst.size());
    for (size_t i = 0; i < src.size(); ++i) dst[i].second.raw_data() = src[i].second.data();

    const double xv = 0.7;
    Rng rng(37);
    Tensor theta_cond = cond_net.sample_values_conditional(Tensor::from_data({1, 1}, {xv}), 5, rng);

    // rebuild the same latent draws and append x as a constant coordinate
    Rng rng2(37);
    Tensor z = cond_net.latent().draw({1, 5}, rng2); // same stream as above
    std::vector<double> zin(5 * 4);
    for (int64_t l = 0; l < 5; ++l) {
        for (int64_t j = 0; j < 3; ++j) zin[l * 4 + j] = z.data()[l * 3 + j];
        zin[l * 4 + 3] = xv;
    }
    Tensor theta_flat = flat_net.transform(Tensor::from_data({5, 4}, std::move(zin)));
    CHECK(theta_cond.data() == theta_flat.data());
}

TEST_CASE("mdn: tiny sigma collapses samples onto the mean head") {
    Rng init(41);
    MdnPosterior mdn(1, {8}, 5, init);
    auto named = mdn.named_parameters();
    // freeze log-sigma at log(1e-12)
    for (auto& [name, t] : named) {
        if (name == "log_sigma_w") std::fill(t.raw_data().begin(), t.raw_data().end(), 0.0);
        if (name == "log_sigma_b") std::fill(t.raw_data().begin(), t.raw_data().end(), std::log(1e-12));
    }
    Tensor x = Tensor::from_data({2, 1}, {0.4, -1.2});
    Rng rng(43);
    Tensor theta = mdn.sample_values_conditional(x, 6, rng);
    auto [mu, log_sigma] = mdn.heads(x);
    for (int64_t b = 0; b < 2; ++b) {
        for (int64_t l = 0; l < 6; ++l) {
            for (int64_t j = 0; j < 5; ++j) {
                CHECK(std::fabs(theta.data()[(b * 6 + l) * 5 + j] - mu.data()[b * 5 + j]) < 1e-9);
            }
        }
    }
}

TEST_CASE("mdn: sample mean approaches the mean head within Monte-Carlo error") {
    Rng init(47);
    MdnPosterior mdn(1, {4}, 3, init);
    Tensor x = Tensor::from_data({1, 1}, {0.8});
    auto [mu, log_sigma] = mdn.heads(x);
    const int64_t n = 10000;
    Rng rng(53);
    Tensor theta = mdn.sample_values_conditional(x, n, rng);
    for (int64_t j = 0; j < 3; ++j) {
        double mean = 0.0, var = 0.0;
        for (int64_t l = 0; l < n; ++l) mean += theta.data()[l * 3 + j];
        mean /= n;
        for (int64_t l = 0; l < n; ++l) {
            const double c = theta.data()[l * 3 + j] - mean;
            var += c * c;
        }
        var /= n;
        const double se = std::sqrt(var / n);
        CHECK(std::fabs(mean - mu.data()[j]) < 3.0 * se + 1e-12);
    }
}

TEST_CASE("mdn: gradient of the sample mean w.r.t. the mu bias is one") {
    Rng init(59);
    MdnPosterior mdn(1, {4}, 2, init);
    Tensor mu_b;
    for (auto& [name, t] : mdn.named_parameters()) {
        if (name == "mu_b") mu_b = t;
    }
    Tensor x = Tensor::from_data({1, 1}, {0.3});
    Rng rng(61);
    Tensor theta = mdn.sample_values_conditional(x, 7, rng); // [1,7,2]
    backward(mean(slice_last(theta, 0, 1)));
    CHECK(mu_b.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mu_b.grad()[1] == 0.0);
}

TEST_CASE("composition: a single part delegates exactly") {
    Rng init(67);
    auto net = std::make_shared<HypernetPosterior>(arch_of({2, 4, 5}), uniform_latent(2), init);
    ComposedPosterior composed({{0, 5, net}});
    Rng ra(71), rb(71);
    Tensor direct = net->sample_values(3, ra);
    Tensor via = composed.sample_values(3, rb);
    CHECK(direct.data() == via.data());
}

TEST_CASE("composition: two segments concatenate independent generators") {
    Rng init(73);
    auto part1 = std::make_shared<HypernetPosterior>(arch_of({2, 3}), uniform_latent(2), init);
    auto part2 = std::make_shared<HypernetPosterior>(arch_of({2, 4}), uniform_latent(2), init);
    ComposedPosterior composed({{0, 3, part1}, {3, 4, part2}});
    CHECK(composed.out_len() == 7);

    Rng ra(79);
    Tensor joint = composed.sample_values(5, ra);
    Rng rb(79);
    Tensor first = part1->sample_values(5, rb);
    Tensor second = part2->sample_values(5, rb); // continues the same stream
    for (int64_t l = 0; l < 5; ++l) {
        for (int64_t j = 0; j < 3; ++j) CHECK(joint.data()[l * 7 + j] == first.data()[l * 3 + j]);
        for (int64_t j = 0; j < 4; ++j) CHECK(joint.data()[l * 7 + 3 + j] == second.data()[l * 4 + j]);
    }
}

TEST_CASE("composition: cross-segment sample covariance vanishes for linear parts") {
    Rng init(83);
    auto part1 = std::make_shared<HypernetPosterior>(arch_of({2, 1}), uniform_latent(2), init);
    auto part2 = std::make_shared<HypernetPosterior>(arch_of({2, 1}), uniform_latent(2), init);
    // non-trivial output scale
    part1->named_parameters()[0].second.raw_data() = {1.0, -2.0};
    part2->named_parameters()[0].second.raw_data() = {0.5, 1.5};
    ComposedPosterior composed({{0, 1, part1}, {1, 1, part2}});
    const int64_t n = 10000;
    Rng rng(89);
    Tensor theta = composed.sample_values(n, rng);
    double m0 = 0.0, m1 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        m0 += theta.data()[i * 2];
        m1 += theta.data()[i * 2 + 1];
    }
    m0 /= n;
    m1 /= n;
    double cov = 0.0, v0 = 0.0, v1 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double a = theta.data()[i * 2] - m0;
        const double b = theta.data()[i * 2 + 1] - m1;
        cov += a * b;
        v0 += a * a;
        v1 += b * b;
    }
    const double corr = cov / std::sqrt(v0 * v1);
    CHECK(std::fabs(corr) < 0.05);
}

TEST_CASE("composition rejects gaps, overlaps and length mismatches") {
    Rng init(97);
    auto p1 = std::make_shared<HypernetPosterior>(arch_of({2, 3}), uniform_latent(2), init);
    auto p2 = std::make_shared<HypernetPosterior>(arch_of({2, 4}), uniform_latent(2), init);
    CHECK_THROWS_AS(ComposedPosterior({{0, 3, p1}, {4, 4, p2}}), ContractError); // gap
    CHECK_THROWS_AS(ComposedPosterior({{0, 3, p1}, {2, 4, p2}}), ContractError); // overlap
    CHECK_THROWS_AS(ComposedPosterior({{0, 4, p1}}), ContractError);             // wrong length
}

TEST_CASE("reparameterization: d theta / d phi passes finite differences for all generators") {
    SUBCASE("unconditioned hypernet") {
        Rng init(101);
        HypernetPosterior net(arch_of({2, 5, 3}), uniform_latent(2), init);
        auto params = net.parameters();
        auto loss = [&]() {
            Rng rng(7); // frozen noise: loss is a deterministic function of phi
            Tensor theta = net.sample_values(4, rng);
            return sum(square(theta));
        };
        auto check = oracles::check_gradients(loss, params);
        INFO(check.worst);
        CHECK(check.ok);
        CHECK(check.max_rel_err < 1e-5);
    }
    SUBCASE("conditional hypernet") {
        Rng init(103);
        HypernetPosterior net(arch_of({2, 5, 3}, true, 2), uniform_latent(2), init);
        Tensor x = Tensor::from_data({3, 2}, {0.1, -0.2, 0.5, 0.8, -0.7, 0.3});
        auto params = net.parameters();
        auto loss = [&]() {
            Rng rng(9);
            Tensor theta = net.sample_values_conditional(x, 3, rng);
            return sum(square(theta));
        };
        auto check = oracles::check_gradients(loss, params);
        INFO(check.worst);
        CHECK(check.ok);
        CHECK(check.max_rel_err < 1e-5);
    }
    SUBCASE("mdn") {
        Rng init(107);
        MdnPosterior mdn(2, {4}, 3, init);
        Tensor x = Tensor::from_data({2, 2}, {0.1, -0.2, 0.5, 0.8});
        auto params = mdn.parameters();
        auto loss = [&]() {
            Rng rng(11);
            Tensor theta = mdn.sample_values_conditional(x, 3, rng);
            return sum(square(theta));
        };
        auto check = oracles::check_gradients(loss, params);
        INFO(check.worst);
        CHECK(check.ok);
        CHECK(check.max_rel_err < 1e-5);
    }
}

TEST_CASE("degenerate generator: MC loss equals the single-sample likelihood loss") {
    Rng init(109);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({3, 8, 2}), uniform_latent(3), init);
    net.freeze_input_weights();
    Tensor x = Tensor::from_data({4, 1}, {0.0, 0.5, 1.0, 1.5});
    Tensor y = Tensor::from_data({4, 1}, {1.0, 2.0, 3.0, 4.0});
    GaussianLikelihood lik(0.5);

    auto loss_with_l = [&](int64_t l) {
        Rng rng(113);
        ThetaBatch theta = net.sample(primary.layout(), l, rng);
        Tensor preds = primary.forward(theta, x);
        return mc_predictive_loss(lik.log_lik(y, preds, theta), mc_axis_of(theta),
                                  LossMode::neg_log_mean_prob)
            .item();
    };
    const double single = loss_with_l(1);
    const double ten = loss_with_l(10);
    CHECK(std::fabs(single - ten) <= 1e-12 * std::max(1.0, std::fabs(single)));
}

TEST_CASE("seeded determinism: identical seeds give identical sample batches") {
    Rng init(127);
    HypernetPosterior net(arch_of({4, 16, 6}), uniform_latent(4), init);
    Rng ra(5), rb(5);
    CHECK(net.sample_values(8, ra).data() == net.sample_values(8, rb).data());
}

TEST_CASE("sampling contract errors") {
    Rng init(131);
    HypernetPosterior uncond(arch_of({2, 3}), uniform_latent(2), init);
    HypernetPosterior cond(arch_of({2, 3}, true, 1), uniform_latent(2), init);
    Rng rng(1);
    CHECK_THROWS_AS(uncond.sample(flat_layout(3), 0, rng), ContractError);
    CHECK_THROWS_AS(uncond.sample_conditional(flat_layout(3), Tensor::zeros({1, 1}), 2, rng),
                    ContractError);
    CHECK_THROWS_AS(cond.sample(flat_layout(3), 2, rng), ContractError);
    CHECK_THROWS_AS(cond.sample_values_conditional(Tensor::zeros({1, 3}), 2, rng), ContractError);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>

#include "semidrd/contrastive/dual_contrastive.hpp"
#include "semidrd/contrastive/memory_bank.hpp"
#include "semidrd/nn/perceptual_encoder.hpp"
#include "semidrd/train/config.hpp"

#include "test_support.hpp"

using namespace semidrd;
using testsup::random_image;
using testsup::random_tensor;

namespace {

/// Independent scalar recomputation: flatten the taps and evaluate the
/// weighted distance ratios in double.
template <class T>
double oracle_contrastive(const Tensor<T>& anchor, const Tensor<T>& positive, const std::vector<Tensor<T>>& negs,
                          const PerceptualEncoder<T>& enc, const ContrastiveWeights& w) {
    auto ta = enc.taps(anchor);
    auto tp = enc.taps(positive);
    double loss = 0;
    for (const auto& neg : negs) {
        auto tn = enc.taps(neg);
        for (size_t i = 0; i < ta.size(); ++i) {
            double num = 0, den = 0;
            for (size_t j = 0; j < ta[i].data.size(); ++j) {
                const double dp = static_cast<double>(tp[i].data[j]) - static_cast<double>(ta[i].data[j]);
                const double dn = static_cast<double>(tn[i].data[j]) - static_cast<double>(ta[i].data[j]);
                num += dp * dp;
                den += dn * dn;
            }
            loss += w.omega[i] * num / (den + w.eps);
        }
    }
    return loss;
}

Tensor<float> rain_of(float v, int64_t hw = 8) { return Tensor<float>(1, 3, hw, hw, v); }

}  // namespace

TEST_CASE("memory bank is a bounded fifo") {
    MemoryBank bank(2);
    bank.push(rain_of(0.1f), RainOrigin::Synthetic);
    CHECK(bank.size() == 1);
    bank.push(rain_of(0.2f), RainOrigin::Synthetic);
    bank.push(rain_of(0.3f), RainOrigin::Real);
    CHECK(bank.size() == 2);
    CHECK(bank.entry(0).rain.data[0] == 0.2f);
    CHECK(bank.entry(1).rain.data[0] == 0.3f);
}

TEST_CASE("memory bank eviction follows the insertion log") {
    MemoryBank bank(64);
    for (int i = 0; i < 100; ++i) bank.push(rain_of(static_cast<float>(i)), RainOrigin::Synthetic);
    REQUIRE(bank.size() == 64);
    // the oldest 36 entries are gone
    for (size_t i = 0; i < 64; ++i) CHECK(bank.entry(i).rain.data[0] == static_cast<float>(i + 36));
}

TEST_CASE("bank sampling is deterministic, uniform, and filterable") {
    MemoryBank bank(8);
    bank.push(rain_of(1.0f), RainOrigin::Synthetic);
    auto one = bank.sample(3, std::nullopt, 5);
    REQUIRE(one.size() == 3);
    for (const auto& t : one) CHECK(t.data[0] == 1.0f);

    CHECK_THROWS_AS(bank.sample(2, RainOrigin::Real, 5), EmptyBankError);

    for (int i = 2; i <= 4; ++i) bank.push(rain_of(static_cast<float>(i)), RainOrigin::Synthetic);
    auto a = bank.sample(10, std::nullopt, 7);
    auto b = bank.sample(10, std::nullopt, 7);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data[0] == b[i].data[0]);

    // 4 entries, 1e4 draws: each frequency within [0.22, 0.28]
    std::map<float, int> counts;
    auto draws = bank.sample(10000, std::nullopt, 11);
    for (const auto& t : draws) counts[t.data[0]]++;
    REQUIRE(counts.size() == 4);
    for (const auto& [v, n] : counts) {
        const double f = n / 10000.0;
        CHECK(f >= 0.22);
        CHECK(f <= 0.28);
    }
}

TEST_CASE("bank rejects non-finite layers") {
    MemoryBank bank(4);
    Tensor<float> bad = rain_of(0.5f);
    bad.data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(bank.push(bad, RainOrigin::Real), std::invalid_argument);
}

TEST_CASE("rain layers are center-cropped or tiled to fit") {
    Tensor<float> rain(1, 3, 6, 6);
    for (int64_t y = 0; y < 6; ++y)
        for (int64_t x = 0; x < 6; ++x)
            for (int64_t c = 0; c < 3; ++c) rain.at(0, c, y, x) = static_cast<float>(y * 6 + x);
    Tensor<float> crop = fit_rain_layer(rain, 4, 4);
    CHECK(crop.at(0, 0, 0, 0) == rain.at(0, 0, 1, 1));  // centered window
    Tensor<float> tile = fit_rain_layer(rain, 9, 9);
    CHECK(tile.at(0, 0, 8, 8) == rain.at(0, 0, 8 % 6, 8 % 6));
    CHECK(tile.at(0, 1, 7, 2) == rain.at(0, 1, 1, 2));
}

TEST_CASE("augmented negatives compose anchor + bank rain, original last") {
    Rng rng(61);
    MemoryBank bank(8);
    Tensor<float> r1 = rain_of(0.4f);
    bank.push(r1, RainOrigin::Synthetic);
    Tensor<float> anchor = random_image<float>(8, 8, rng, 0.0, 0.9);
    Tensor<float> rainy = random_image<float>(8, 8, rng, 0.0, 1.0);

    auto negs = augment_negatives(anchor, rainy, bank, 3, 9);
    REQUIRE(negs.size() == 3);
    for (size_t k = 0; k + 1 < negs.size(); ++k)
        for (size_t i = 0; i < anchor.data.size(); ++i) {
            const float expect = std::min(1.0f, std::max(0.0f, anchor.data[i] + 0.4f));
            CHECK(negs[k].data[i] == expect);
        }
    CHECK(negs.back().data == rainy.data);
}

TEST_CASE("empty bank falls back to the original rainy image") {
    Rng rng(62);
    MemoryBank bank(8);
    Tensor<float> anchor = random_image<float>(8, 8, rng);
    Tensor<float> rainy = random_image<float>(8, 8, rng);
    auto negs = augment_negatives(anchor, rainy, bank, 4, 1);
    REQUIRE(negs.size() == 4);
    for (const auto& n : negs) CHECK(n.data == rainy.data);

    // filter with no matching origin falls back the same way
    bank.push(rain_of(0.2f), RainOrigin::Synthetic);
    negs = augment_negatives(anchor, rainy, bank, 4, 1, RainOrigin::Real);
    for (const auto& n : negs) CHECK(n.data == rainy.data);

    CHECK_THROWS_AS(augment_negatives(anchor, rainy, bank, 0, 1), std::invalid_argument);
}

TEST_CASE("default negative count is four") {
    TrainConfig cfg;
    CHECK(cfg.m == 4);
    CHECK(cfg.omega == std::vector<double>{0.2, 0.5, 1.0});
}

TEST_CASE("domain transform fixes points and collapses zero variance") {
    Rng rng(63);
    Tensor<double> content = random_image<double>(8, 8, rng, 0.3, 0.7);
    Tensor<double> same = domain_transform(content, content);
    for (size_t i = 0; i < content.data.size(); ++i)
        CHECK(same.data[i] == Catch::Approx(content.data[i]).margin(1e-9));

    Tensor<double> flat(1, 3, 8, 8, 0.5);
    Tensor<double> style(1, 3, 8, 8, 0.2);  // zero variance, mean 0.2
    Tensor<double> out = domain_transform(flat, style);
    for (double v : out.data) CHECK(v == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("domain transform matches the style statistics") {
    Rng rng(64);
    Tensor<double> content = random_image<double>(8, 8, rng, 0.35, 0.65);
    Tensor<double> style = random_image<double>(8, 8, rng, 0.3, 0.6);
    Tensor<double> out = domain_transform(content, style);
    for (int64_t c = 0; c < 3; ++c) {
        auto stats = [&](const Tensor<double>& t) {
            double m = 0, v = 0;
            for (int64_t i = 0; i < 64; ++i) m += t.plane(0)[c * 64 + i];
            m /= 64.0;
            for (int64_t i = 0; i < 64; ++i) {
                const double d = t.plane(0)[c * 64 + i] - m;
                v += d * d;
            }
            return std::make_pair(m, std::sqrt(v / 64.0));
        };
        auto [ms, ss] = stats(style);
        auto [mo, so] = stats(out);
        CHECK(mo == Catch::Approx(ms).margin(1e-6));
        CHECK(so == Catch::Approx(ss).margin(1e-6));
    }

    // idempotent on its style target
    Tensor<double> twice = domain_transform(out, style);
    for (size_t i = 0; i < out.data.size(); ++i) CHECK(twice.data[i] == Catch::Approx(out.data[i]).margin(1e-6));
}

TEST_CASE("encoder construction is deterministic per seed") {
    EncoderSpec spec = EncoderSpec::tiny();
    PerceptualEncoder<double> a(spec, 77), b(spec, 77), c(spec, 78);
    Rng rng(65);
    Tensor<double> x = random_image<double>(8, 8, rng);
    auto ta = a.taps(x), tb = b.taps(x), tc = c.taps(x);
    REQUIRE(ta.size() == 2);
    for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].data == tb[i].data);
    CHECK(ta[0].data != tc[0].data);
    CHECK_THROWS_AS(a.taps(Tensor<double>(1, 3, 2, 2, 0.1)), std::invalid_argument);
}

TEST_CASE("encoder weight files round-trip and validate") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "semidrd-test-encw";
    fs::create_directories(dir);
    EncoderSpec spec = EncoderSpec::tiny();
    PerceptualEncoder<float> a(spec, 5);
    a.save_weights((dir / "w.bin").string());
    PerceptualEncoder<float> b(spec, (dir / "w.bin").string());
    Rng rng(66);
    Tensor<float> x = random_image<float>(8, 8, rng);
    auto ta = a.taps(x), tb = b.taps(x);
    for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].data == tb[i].data);

    // truncated file is rejected
    {
        std::ifstream in(dir / "w.bin", std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(dir / "trunc.bin", std::ios::binary);
        out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
    }
    CHECK_THROWS_AS(PerceptualEncoder<float>(spec, (dir / "trunc.bin").string()), FormatError);
    CHECK_THROWS_AS(PerceptualEncoder<float>(EncoderSpec::vgg16(), (dir / "w.bin").string()), FormatError);
}

TEST_CASE("optional input normalization shifts the encoder input") {
    EncoderSpec spec = EncoderSpec::tiny();
    PerceptualEncoder<double> plain(spec, 21);
    spec.norm_mean = {0.4, 0.5, 0.6};
    spec.norm_std = {0.2, 0.25, 0.3};
    PerceptualEncoder<double> normed(spec, 21);

    Rng rng(73);
    Tensor<double> x = random_image<double>(8, 8, rng);
    Tensor<double> xn = x;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 64; ++i)
            xn.plane(0)[c * 64 + i] = (xn.plane(0)[c * 64 + i] - spec.norm_mean[static_cast<size_t>(c)]) /
                                      spec.norm_std[static_cast<size_t>(c)];
    auto a = normed.taps(x);
    auto b = plain.taps(xn);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < a[i].data.size(); ++j) CHECK(a[i].data[j] == Catch::Approx(b[i].data[j]).margin(1e-12));

    // gradients flow through the normalization
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    Tensor<double> pos = random_image<double>(8, 8, rng);
    std::vector<Tensor<double>> negs = {random_image<double>(8, 8, rng)};
    auto eval = [&]() { return contrastive_loss(x, pos, negs, normed, w); };
    Graph<double> g;
    auto av = g.input(x, true);
    std::vector<Graph<double>::Value> nv = {g.constant(negs[0])};
    g.backward(contrastive_loss_g(g, av, g.constant(pos), nv, normed, w));
    CHECK(testsup::grad_rel_error(g.grad_of(av), testsup::fd_gradient<double>(x, eval)) < 1e-3);

    EncoderSpec bad = spec;
    bad.norm_std = {0.2, 0.25};
    PerceptualEncoder<double> broken(bad, 21);
    CHECK_THROWS_AS(broken.taps(x), std::invalid_argument);
}

TEST_CASE("vgg16 preset has the expected stage layout") {
    EncoderSpec s = EncoderSpec::vgg16();
    REQUIRE(s.stages.size() == 5);
    CHECK(s.n_taps() == 3);
    CHECK(s.stages[1].tap);   // after the 2nd pooling stage
    CHECK(s.stages[2].tap);   // after the 3rd
    CHECK(s.stages[4].tap);   // after the 5th
    CHECK_FALSE(s.stages[0].tap);
    CHECK_FALSE(s.stages[3].tap);
    const int convs = 2 + 2 + 3 + 3 + 3;
    int total = 0;
    for (const auto& st : s.stages) total += st.convs;
    CHECK(total == convs);
}

TEST_CASE("contrastive loss vanishes when anchor equals positive") {
    Rng rng(67);
    PerceptualEncoder<double> enc(EncoderSpec::tiny(), 9);
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    Tensor<double> anchor = random_image<double>(8, 8, rng);
    Tensor<double> neg = random_image<double>(8, 8, rng);
    CHECK(contrastive_loss(anchor, anchor, {neg}, enc, w) == 0.0);
    // degenerate equality: 0 / eps per term
    CHECK(contrastive_loss(anchor, anchor, {anchor, anchor}, enc, w) == 0.0);
}

TEST_CASE("contrastive loss equals the flattened oracle") {
    Rng rng(68);
    PerceptualEncoder<double> enc(EncoderSpec::tiny(), 10);
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    Tensor<double> anchor = random_image<double>(8, 8, rng);
    Tensor<double> positive = random_image<double>(8, 8, rng);
    std::vector<Tensor<double>> negs;
    for (int k = 0; k < 4; ++k) negs.push_back(random_image<double>(8, 8, rng));
    const double got = contrastive_loss(anchor, positive, negs, enc, w);
    const double want = oracle_contrastive(anchor, positive, negs, enc, w);
    CHECK(got == Catch::Approx(want).epsilon(1e-9).margin(1e-9));
    CHECK(got >= 0.0);
}

TEST_CASE("loss never drops below its value at the positive endpoint") {
    Rng rng(69);
    PerceptualEncoder<double> enc(EncoderSpec::tiny(), 11);
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    Tensor<double> positive = random_image<double>(8, 8, rng);
    std::vector<Tensor<double>> negs;
    for (int k = 0; k < 2; ++k) negs.push_back(random_image<double>(8, 8, rng));
    for (double t : {0.0, 0.5, 1.0}) {
        Tensor<double> anchor = positive;
        for (size_t i = 0; i < anchor.data.size(); ++i)
            anchor.data[i] = (1.0 - t) * positive.data[i] + t * negs[0].data[i];
        const double l = contrastive_loss(anchor, positive, negs, enc, w);
        CHECK(l >= 0.0);  // the loss at t = 0 is exactly 0
        if (t == 0.0) CHECK(l == 0.0);
    }
}

TEST_CASE("contrastive loss anchor gradient matches finite differences") {
    Rng rng(70);
    PerceptualEncoder<double> enc(EncoderSpec::tiny(), 12);
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    Tensor<double> anchor = random_image<double>(8, 8, rng);
    Tensor<double> positive = random_image<double>(8, 8, rng);
    std::vector<Tensor<double>> negs = {random_image<double>(8, 8, rng), random_image<double>(8, 8, rng)};

    auto eval = [&]() {
        return contrastive_loss(anchor, positive, negs, enc, w);
    };
    Graph<double> g;
    auto av = g.input(anchor, true);
    std::vector<Graph<double>::Value> nv;
    for (const auto& n : negs) nv.push_back(g.constant(n));
    auto loss = contrastive_loss_g(g, av, g.constant(positive), nv, enc, w);
    g.backward(loss);
    Tensor<double> fd = testsup::fd_gradient<double>(anchor, eval);
    CHECK(testsup::grad_rel_error(g.grad_of(av), fd) < 1e-3);
}

TEST_CASE("dual losses equal their manual composition") {
    Rng rng(71);
    PerceptualEncoder<double> enc(EncoderSpec::tiny(), 13);
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    w.m = 3;
    MemoryBank bank(8);
    bank.push(rain_of(0.3f), RainOrigin::Synthetic);
    bank.push(rain_of(0.15f), RainOrigin::Real);

    Tensor<double> derained = random_image<double>(8, 8, rng);
    Tensor<double> clean = random_image<double>(8, 8, rng);
    Tensor<double> rainy = random_image<double>(8, 8, rng);

    const double sup = supervised_dual_loss(derained, clean, rainy, bank, enc, w, 99);
    auto negs = augment_negatives(derained, rainy, bank, w.m, 99);
    CHECK(sup == Catch::Approx(contrastive_loss(derained, clean, negs, enc, w)).epsilon(1e-12));

    Tensor<double> pseudo = random_image<double>(8, 8, rng);
    const double unsup = unsupervised_dual_loss(derained, pseudo, rainy, bank, enc, w, 99);
    Tensor<double> positive = domain_transform(pseudo, derained);
    auto rnegs = augment_negatives(derained, rainy, bank, w.m, 99, RainOrigin::Real);
    CHECK(unsup == Catch::Approx(contrastive_loss(derained, positive, rnegs, enc, w)).epsilon(1e-12));
}

TEST_CASE("unsupervised loss is finite on an empty real bank and zero at its fixed point") {
    Rng rng(72);
    PerceptualEncoder<double> enc(EncoderSpec::tiny(), 14);
    ContrastiveWeights w;
    w.omega = {0.2, 0.5};
    MemoryBank bank(8);  // empty: fallback path
    Tensor<double> derained = random_image<double>(8, 8, rng);
    Tensor<double> pseudo = random_image<double>(8, 8, rng);
    Tensor<double> rainy = random_image<double>(8, 8, rng);
    const double l = unsupervised_dual_loss(derained, pseudo, rainy, bank, enc, w, 3);
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);

    // pseudo-clean already statistics-matched to the anchor and equal to it
    Tensor<double> anchor = random_image<double>(8, 8, rng, 0.3, 0.7);
    const double zero = unsupervised_dual_loss(anchor, anchor, rainy, bank, enc, w, 3);
    CHECK(zero == Catch::Approx(0.0).margin(1e-12));
}

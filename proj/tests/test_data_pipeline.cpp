#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <variant>

#include "semidrd/data/batch_stream.hpp"
#include "semidrd/data/dataset.hpp"
#include "semidrd/data/image_io.hpp"
#include "semidrd/data/synth.hpp"
#include "semidrd/train/config.hpp"

#include "test_support.hpp"

using namespace semidrd;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("semidrd-test-" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}
}  // namespace

TEST_CASE("zero density yields an empty rain field") {
    StreakParams p;
    p.density = 0;
    p.seed = 5;
    Tensor<float> r = synthesize_streaks(32, 32, p);
    for (float v : r.data) CHECK(v == 0.0f);
}

TEST_CASE("streak synthesis is deterministic and nonnegative") {
    StreakParams p;
    p.seed = 123;
    Tensor<float> a = synthesize_streaks(48, 40, p);
    Tensor<float> b = synthesize_streaks(48, 40, p);
    REQUIRE(a.data.size() == b.data.size());
    CHECK(a.data == b.data);  // bit-identical
    for (float v : a.data) CHECK(v >= 0.0f);
    p.seed = 124;
    Tensor<float> c = synthesize_streaks(48, 40, p);
    CHECK(a.data != c.data);
}

TEST_CASE("streak coverage tracks the density parameter") {
    StreakParams p;
    p.density = 0.1;
    p.intensity = 0.8;
    p.seed = 7;
    Tensor<float> r = synthesize_streaks(64, 64, p);
    // independent scan: fraction of pixels above 0.05 in one channel
    int64_t hits = 0;
    for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 64; ++x)
            if (r.at(0, 0, y, x) > 0.05f) ++hits;
    const double frac = static_cast<double>(hits) / (64.0 * 64.0);
    CHECK(frac >= 0.07);
    CHECK(frac <= 0.13);
}

TEST_CASE("coverage holds across the density range") {
    for (double density : {0.05, 0.1, 0.15}) {
        StreakParams p;
        p.density = density;
        p.intensity = 0.7;
        p.length = 10;
        p.seed = 42;
        Tensor<float> r = synthesize_streaks(96, 96, p);
        int64_t hits = 0;
        for (int64_t y = 0; y < 96; ++y)
            for (int64_t x = 0; x < 96; ++x)
                if (r.at(0, 0, y, x) > 0.05f) ++hits;
        const double frac = static_cast<double>(hits) / (96.0 * 96.0);
        INFO("density " << density << " frac " << frac);
        CHECK(frac >= 0.7 * density);
        CHECK(frac <= 1.3 * density);
    }
}

TEST_CASE("streak synthesis rejects tiny shapes and bad params") {
    StreakParams p;
    CHECK_THROWS_AS(synthesize_streaks(8, 64, p), std::invalid_argument);
    CHECK_THROWS_AS(synthesize_streaks(64, 15, p), std::invalid_argument);
    StreakParams bad = p;
    bad.angle_deg = 60;
    CHECK_THROWS_AS(synthesize_streaks(64, 64, bad), std::invalid_argument);
    bad = p;
    bad.intensity = 0;
    CHECK_THROWS_AS(synthesize_streaks(64, 64, bad), std::invalid_argument);
}

TEST_CASE("composite clamps the additive model") {
    Tensor<float> zero(1, 3, 16, 16, 0.0f);
    Tensor<float> r(1, 3, 16, 16, 0.3f);
    Tensor<float> o = composite(zero, r);
    for (float v : o.data) CHECK(v == 0.3f);

    Tensor<float> bright(1, 3, 16, 16, 0.9f);
    Tensor<float> heavy(1, 3, 16, 16, 0.5f);
    o = composite(bright, heavy);
    for (float v : o.data) CHECK(v == 1.0f);

    Tensor<float> misfit(1, 3, 16, 8);
    CHECK_THROWS_AS(composite(bright, misfit), std::invalid_argument);
}

TEST_CASE("composite equals the per-pixel recomputation") {
    Rng rng(11);
    Tensor<float> b = testsup::random_image<float>(8, 8, rng, 0.0, 1.0);
    Tensor<float> r = testsup::random_tensor<float>(1, 3, 8, 8, rng, 0.0, 0.6);
    Tensor<float> o = composite(b, r);
    for (size_t i = 0; i < o.data.size(); ++i) {
        const float expect = std::min(1.0f, std::max(0.0f, b.data[i] + r.data[i]));
        CHECK(o.data[i] == expect);
    }
    // where streaks are zero the composite equals the clean image
    Tensor<float> none(1, 3, 8, 8, 0.0f);
    CHECK(composite(b, none).data == b.data);
}

TEST_CASE("crop_patch is exact indexing") {
    Rng rng(12);
    Tensor<float> img = testsup::random_image<float>(12, 14, rng);
    Tensor<float> full = crop_patch(img, 0, 0, 12);
    // identity crop of the square part
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 12; ++y)
            for (int64_t x = 0; x < 12; ++x) CHECK(full.at(0, c, y, x) == img.at(0, c, y, x));

    // ramp image: value encodes position
    Tensor<float> ramp(1, 3, 16, 16);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x) ramp.at(0, c, y, x) = static_cast<float>(y * 16 + x + c);
    Tensor<float> crop = crop_patch(ramp, 2, 3, 5);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 5; ++y)
            for (int64_t x = 0; x < 5; ++x) CHECK(crop.at(0, c, y, x) == ramp.at(0, c, y + 2, x + 3));

    CHECK_THROWS_AS(crop_patch(ramp, 12, 12, 5), std::invalid_argument);
    CHECK_THROWS_AS(crop_patch(ramp, -1, 0, 4), std::invalid_argument);
}

TEST_CASE("default training patch size is 100") {
    TrainConfig cfg;
    CHECK(cfg.patch == 100);
    CHECK(cfg.batch == 8);
}

TEST_CASE("crop and composite commute") {
    Rng rng(13);
    Tensor<float> b = testsup::random_image<float>(20, 20, rng, 0.0, 1.0);
    StreakParams p;
    p.seed = 3;
    Tensor<float> r = synthesize_streaks(20, 20, p);
    Tensor<float> a = crop_patch(composite(b, r), 4, 5, 9);
    Tensor<float> c = composite(crop_patch(b, 4, 5, 9), crop_patch(r, 4, 5, 9));
    CHECK(a.data == c.data);
}

TEST_CASE("labeled samples satisfy the residual identity") {
    Rng rng(14);
    Tensor<float> clean = testsup::random_image<float>(24, 24, rng, 0.0, 1.0);
    StreakParams p;
    p.seed = 8;
    Tensor<float> rainy = composite(clean, synthesize_streaks(24, 24, p));
    LabeledSample s = LabeledSample::from_pair(rainy, clean);
    for (size_t i = 0; i < s.rainy.data.size(); ++i) {
        CHECK(s.streaks.data[i] >= 0.0f);
        if (s.rainy.data[i] < 1.0f)
            CHECK(s.streaks.data[i] == Catch::Approx(s.rainy.data[i] - s.clean.data[i]).margin(1e-7));
        const float recomposed = std::min(1.0f, std::max(0.0f, s.clean.data[i] + s.streaks.data[i]));
        CHECK(recomposed == Catch::Approx(s.rainy.data[i]).margin(1e-7));
    }
}

TEST_CASE("png round trip quantizes to 8 bits") {
    const fs::path dir = temp_dir("png");
    Rng rng(15);
    Tensor<float> img = testsup::random_image<float>(17, 23, rng, 0.0, 1.0);
    write_png((dir / "x.png").string(), img);
    Tensor<float> back = read_png((dir / "x.png").string());
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.data.size(); ++i) {
        const float expect = std::lround(img.data[i] * 255.0f) / 255.0f;
        CHECK(back.data[i] == Catch::Approx(expect).margin(1e-6));
    }
    CHECK_THROWS_AS(read_png((dir / "missing.png").string()), FormatError);
}

TEST_CASE("manifest resolves relative paths and loads back") {
    const fs::path dir = temp_dir("manifest");
    write_synth_dataset(dir.string(), 3, 2, 32, 77);
    Manifest m = load_manifest((dir / "manifest.json").string());
    REQUIRE(m.labeled.size() == 3);
    REQUIRE(m.unlabeled.size() == 2);
    for (const auto& e : m.labeled) {
        CHECK(fs::exists(e.rainy));
        CHECK(fs::exists(e.clean));
    }
    Dataset d = load_dataset(m);
    CHECK(d.labeled.size() == 3);
    CHECK(d.unlabeled.size() == 2);
    CHECK(d.labeled[0].rainy.h() == 32);
}

TEST_CASE("synthetic dataset generation is bit-deterministic") {
    const fs::path d1 = temp_dir("synth-a");
    const fs::path d2 = temp_dir("synth-b");
    write_synth_dataset(d1.string(), 2, 1, 32, 9);
    write_synth_dataset(d2.string(), 2, 1, 32, 9);
    for (const auto& entry : fs::directory_iterator(d1)) {
        const fs::path other = d2 / entry.path().filename();
        REQUIRE(fs::exists(other));
        std::ifstream a(entry.path(), std::ios::binary), b(other, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), {});
        std::string sb((std::istreambuf_iterator<char>(b)), {});
        CHECK(sa == sb);
    }
}

namespace {
Dataset tiny_pools(int n_labeled, int n_unlabeled, int64_t size, uint64_t seed) {
    Dataset d;
    for (int i = 0; i < n_labeled; ++i) {
        Rng rng(Rng::mix(seed, i));
        Tensor<float> clean = make_clean_scene(size, size, rng);
        StreakParams p;
        p.seed = Rng::mix(seed, 1000 + i);
        d.labeled.push_back(LabeledSample::from_pair(composite(clean, synthesize_streaks(size, size, p)), clean));
    }
    for (int i = 0; i < n_unlabeled; ++i) {
        Rng rng(Rng::mix(seed, 2000 + i));
        Tensor<float> clean = make_clean_scene(size, size, rng);
        StreakParams p;
        p.seed = Rng::mix(seed, 3000 + i);
        d.unlabeled.push_back(UnlabeledSample{composite(clean, synthesize_streaks(size, size, p)), {}});
    }
    return d;
}
}  // namespace

TEST_CASE("supervised-only streams emit labeled batches only") {
    Dataset d = tiny_pools(4, 0, 24, 1);
    BatchStream s(d.labeled, d.unlabeled, 2, 16, 42, /*semi=*/false);
    CHECK(s.total_batches() == 2);
    int labeled = 0;
    while (auto b = s.next()) {
        CHECK(std::holds_alternative<LabeledBatch>(*b));
        ++labeled;
    }
    CHECK(labeled == 2);
}

TEST_CASE("labeled batches hold batch_size patches of the patch size") {
    Dataset d = tiny_pools(16, 0, 24, 2);
    BatchStream s(d.labeled, d.unlabeled, 8, 16, 0, false);
    auto b = s.next();
    REQUIRE(b.has_value());
    const LabeledBatch& lb = std::get<LabeledBatch>(*b);
    CHECK(lb.rainy.n() == 8);
    CHECK(lb.rainy.h() == 16);
    CHECK(lb.clean.w() == 16);
    CHECK(lb.streaks.n() == 8);
}

TEST_CASE("streams alternate labeled/unlabeled deterministically") {
    Dataset d = tiny_pools(16, 16, 24, 3);
    auto run = [&]() {
        BatchStream s(d.labeled, d.unlabeled, 8, 16, 99, true);
        std::vector<char> phases;
        std::vector<float> first_pixels;
        while (auto b = s.next()) {
            if (std::holds_alternative<LabeledBatch>(*b)) {
                phases.push_back('L');
                first_pixels.push_back(std::get<LabeledBatch>(*b).rainy.data[0]);
            } else {
                phases.push_back('U');
                first_pixels.push_back(std::get<UnlabeledBatch>(*b).rainy.data[0]);
                // pseudo-clean must come from the labeled clean pool
                CHECK(std::get<UnlabeledBatch>(*b).pseudo_clean.n() == 8);
            }
        }
        return std::make_pair(phases, first_pixels);
    };
    auto [p1, v1] = run();
    auto [p2, v2] = run();
    CHECK(p1 == std::vector<char>{'L', 'U', 'L', 'U'});
    CHECK(p1 == p2);
    CHECK(v1 == v2);
}

TEST_CASE("empty required pools are configuration errors") {
    Dataset d = tiny_pools(2, 0, 24, 4);
    CHECK_THROWS_AS(BatchStream(d.labeled, d.unlabeled, 2, 16, 0, /*semi=*/true), ConfigError);
    std::vector<LabeledSample> empty;
    CHECK_THROWS_AS(BatchStream(empty, d.unlabeled, 2, 16, 0, false), ConfigError);
    CHECK_THROWS_AS(BatchStream(d.labeled, d.unlabeled, 0, 16, 0, false), ConfigError);
}

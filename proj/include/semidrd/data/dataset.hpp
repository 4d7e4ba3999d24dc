#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "semidrd/core/errors.hpp"
#include "semidrd/data/image_io.hpp"
#include "semidrd/data/synth.hpp"

namespace semidrd {

/// Paired synthetic sample. The stored streak layer is always the clamp-aware
/// difference rainy - clean, so rainy == clamp(clean + streaks) holds exactly.
struct LabeledSample {
    Tensor<float> rainy;
    Tensor<float> clean;
    Tensor<float> streaks;

    static LabeledSample from_pair(Tensor<float> rainy_, Tensor<float> clean_) {
        check_same_shape(rainy_, clean_, "LabeledSample");
        Tensor<float> r = sub(rainy_, clean_);
        for (float& v : r.data) v = std::max(0.0f, v);
        return LabeledSample{std::move(rainy_), std::move(clean_), std::move(r)};
    }
};

/// Unpaired rainy sample; pseudo_clean is attached by the batch stream from
/// the labeled clean pool.
struct UnlabeledSample {
    Tensor<float> rainy;
    Tensor<float> pseudo_clean;  // empty until paired
};

struct ManifestEntryPair {
    std::string rainy;
    std::string clean;
};

struct Manifest {
    std::vector<ManifestEntryPair> labeled;
    std::vector<std::string> unlabeled;
};

/// Manifest file: JSON with "labeled" [{rainy, clean}] and "unlabeled" [path]
/// lists; relative paths are resolved against the manifest's directory.
inline Manifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw FormatError("manifest parse error in " + path + ": " + e.what());
    }
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    Manifest m;
    for (const auto& e : j.value("labeled", nlohmann::json::array()))
        m.labeled.push_back({resolve(e.at("rainy").get<std::string>()), resolve(e.at("clean").get<std::string>())});
    for (const auto& e : j.value("unlabeled", nlohmann::json::array()))
        m.unlabeled.push_back(resolve(e.get<std::string>()));
    return m;
}

inline void save_manifest(const std::string& path, const Manifest& m) {
    nlohmann::json j;
    j["labeled"] = nlohmann::json::array();
    for (const auto& e : m.labeled) j["labeled"].push_back({{"rainy", e.rainy}, {"clean", e.clean}});
    j["unlabeled"] = m.unlabeled;
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write manifest: " + path);
    f << j.dump(2) << "\n";
}

struct Dataset {
    std::vector<LabeledSample> labeled;
    std::vector<UnlabeledSample> unlabeled;
};

inline Dataset load_dataset(const Manifest& m) {
    Dataset d;
    for (const auto& e : m.labeled) d.labeled.push_back(LabeledSample::from_pair(read_png(e.rainy), read_png(e.clean)));
    for (const auto& e : m.unlabeled) d.unlabeled.push_back(UnlabeledSample{read_png(e), {}});
    return d;
}

inline Dataset load_dataset(const std::string& manifest_path) { return load_dataset(load_manifest(manifest_path)); }

/// Writes a synthetic dataset: n_labeled (rainy, clean) pairs plus
/// n_unlabeled rainy-only images under out_dir, with a manifest.json of
/// relative paths. The unlabeled pool gets its own scenes, denser rain and a
/// mild color cast, standing in for out-of-domain data. Deterministic in
/// (args, seed): reruns produce bit-identical files.
inline Manifest write_synth_dataset(const std::string& out_dir, int n_labeled, int n_unlabeled, int64_t size,
                                    uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Manifest m;
    char name[64];
    for (int i = 0; i < n_labeled; ++i) {
        Rng rng(Rng::mix(seed, 0x1abe1ULL, static_cast<uint64_t>(i)));
        Tensor<float> clean = make_clean_scene(size, size, rng);
        StreakParams p;
        p.angle_deg = rng.uniform(-30.0, 30.0);
        p.length = 8 + static_cast<int>(rng.below(9));
        p.density = rng.uniform(0.06, 0.14);
        p.intensity = rng.uniform(0.45, 0.85);
        p.seed = Rng::mix(seed, 0x5eedULL, static_cast<uint64_t>(i));
        Tensor<float> rainy = composite(clean, synthesize_streaks(size, size, p));
        std::snprintf(name, sizeof(name), "clean-%03d.png", i);
        const std::string cpath = name;
        std::snprintf(name, sizeof(name), "rainy-%03d.png", i);
        const std::string rpath = name;
        write_png((fs::path(out_dir) / cpath).string(), clean);
        write_png((fs::path(out_dir) / rpath).string(), rainy);
        m.labeled.push_back({rpath, cpath});
    }
    for (int i = 0; i < n_unlabeled; ++i) {
        Rng rng(Rng::mix(seed, 0xab31ULL, static_cast<uint64_t>(i)));
        Tensor<float> clean = make_clean_scene(size, size, rng);
        // mild appearance shift: gamma and a color cast
        const double gamma = rng.uniform(0.8, 1.2);
        double cast[3] = {rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1)};
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) {
                    double v = std::pow(static_cast<double>(clean.at(0, c, y, x)), gamma) * cast[c];
                    clean.at(0, c, y, x) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
                }
        StreakParams p;
        p.angle_deg = rng.uniform(-45.0, 45.0);
        p.length = 10 + static_cast<int>(rng.below(13));
        p.density = rng.uniform(0.08, 0.2);
        p.intensity = rng.uniform(0.5, 0.95);
        p.seed = Rng::mix(seed, 0xfee1ULL, static_cast<uint64_t>(i));
        Tensor<float> rainy = composite(clean, synthesize_streaks(size, size, p));
        std::snprintf(name, sizeof(name), "unlabeled-%03d.png", i);
        write_png((fs::path(out_dir) / name).string(), rainy);
        m.unlabeled.push_back(name);
    }
    save_manifest((fs::path(out_dir) / "manifest.json").string(), m);
    return m;
}

}  // namespace semidrd

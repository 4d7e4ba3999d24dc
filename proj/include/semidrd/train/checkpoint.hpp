#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "semidrd/contrastive/memory_bank.hpp"
#include "semidrd/core/errors.hpp"
#include "semidrd/train/adam.hpp"
#include "semidrd/train/models.hpp"

namespace semidrd {

constexpr uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training exactly: model parameters and
/// buffers, optimizer moments, progress counters, the config that built the
/// run, and (optionally) the memory-bank contents. Parameters are stored as
/// row-major float32, matching the in-memory representation, so a round trip
/// is bit-exact.
struct Checkpoint {
    uint32_t version = kCheckpointVersion;
    std::string config_text;
    uint64_t config_hash = 0;
    std::string encoder_ref;  // "seed:<n>" or "file:<fnv64 of the weight file>"
    int64_t epoch = 0;  // completed epochs
    int64_t step = 0;   // global optimizer-visible steps
    uint64_t rng_state = 0;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
    std::vector<Tensor<float>> adam_m, adam_v;
    int64_t adam_t = 0;
    bool has_bank = false;
    uint64_t bank_capacity = 0;
    std::vector<std::pair<uint8_t, Tensor<float>>> bank_entries;
};

namespace detail {

inline void wr_u32(std::ostream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
inline void wr_u64(std::ostream& f, uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
inline void wr_i64(std::ostream& f, int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
inline void wr_str(std::ostream& f, const std::string& s) {
    wr_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void wr_tensor(std::ostream& f, const Tensor<float>& t) {
    for (int64_t d : t.dims) wr_i64(f, d);
    f.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
}

inline uint32_t rd_u32(std::istream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw FormatError("truncated checkpoint");
    return v;
}
inline uint64_t rd_u64(std::istream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw FormatError("truncated checkpoint");
    return v;
}
inline int64_t rd_i64(std::istream& f) {
    int64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw FormatError("truncated checkpoint");
    return v;
}
inline std::string rd_str(std::istream& f) {
    const uint32_t n = rd_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw FormatError("truncated checkpoint");
    return s;
}
inline Tensor<float> rd_tensor(std::istream& f) {
    int64_t d[4];
    for (int64_t& x : d) x = rd_i64(f);
    if (d[0] < 0 || d[1] < 0 || d[2] < 0 || d[3] < 0 || d[0] * d[1] * d[2] * d[3] > (int64_t(1) << 34))
        throw FormatError("corrupt tensor header in checkpoint");
    Tensor<float> t(d[0], d[1], d[2], d[3]);
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
    if (!f) throw FormatError("truncated checkpoint");
    return t;
}

}  // namespace detail

/// Atomic write: serialize to <path>.tmp, then rename over the target.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    namespace d = detail;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw FormatError("cannot write checkpoint: " + tmp);
        f.write("SDRDCKP1", 8);
        d::wr_u32(f, ck.version);
        d::wr_u64(f, ck.config_hash);
        d::wr_i64(f, ck.epoch);
        d::wr_i64(f, ck.step);
        d::wr_u64(f, ck.rng_state);
        d::wr_str(f, ck.config_text);
        d::wr_str(f, ck.encoder_ref);
        d::wr_u32(f, static_cast<uint32_t>(ck.tensors.size()));
        for (const auto& [name, t] : ck.tensors) {
            d::wr_str(f, name);
            d::wr_tensor(f, t);
        }
        d::wr_u32(f, static_cast<uint32_t>(ck.adam_m.size()));
        for (const auto& t : ck.adam_m) d::wr_tensor(f, t);
        for (const auto& t : ck.adam_v) d::wr_tensor(f, t);
        d::wr_i64(f, ck.adam_t);
        d::wr_u32(f, ck.has_bank ? 1 : 0);
        if (ck.has_bank) {
            d::wr_u64(f, ck.bank_capacity);
            d::wr_u32(f, static_cast<uint32_t>(ck.bank_entries.size()));
            for (const auto& [tag, t] : ck.bank_entries) {
                d::wr_u32(f, tag);
                d::wr_tensor(f, t);
            }
        }
        if (!f) throw FormatError("checkpoint write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    namespace d = detail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != "SDRDCKP1") throw FormatError("not a checkpoint file: " + path);
    Checkpoint ck;
    ck.version = d::rd_u32(f);
    if (ck.version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(ck.version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    ck.config_hash = d::rd_u64(f);
    ck.epoch = d::rd_i64(f);
    ck.step = d::rd_i64(f);
    ck.rng_state = d::rd_u64(f);
    ck.config_text = d::rd_str(f);
    ck.encoder_ref = d::rd_str(f);
    const uint32_t nt = d::rd_u32(f);
    ck.tensors.reserve(nt);
    for (uint32_t i = 0; i < nt; ++i) {
        std::string name = d::rd_str(f);
        ck.tensors.emplace_back(std::move(name), d::rd_tensor(f));
    }
    const uint32_t na = d::rd_u32(f);
    ck.adam_m.reserve(na);
    ck.adam_v.reserve(na);
    for (uint32_t i = 0; i < na; ++i) ck.adam_m.push_back(d::rd_tensor(f));
    for (uint32_t i = 0; i < na; ++i) ck.adam_v.push_back(d::rd_tensor(f));
    ck.adam_t = d::rd_i64(f);
    ck.has_bank = d::rd_u32(f) != 0;
    if (ck.has_bank) {
        ck.bank_capacity = d::rd_u64(f);
        const uint32_t nb = d::rd_u32(f);
        for (uint32_t i = 0; i < nb; ++i) {
            const uint8_t tag = static_cast<uint8_t>(d::rd_u32(f));
            ck.bank_entries.emplace_back(tag, d::rd_tensor(f));
        }
    }
    return ck;
}

inline std::string encoder_reference(const TrainConfig& cfg) {
    if (cfg.encoder_weights.empty()) return "seed:" + std::to_string(Rng::mix(cfg.seed, 0x764716ULL));
    std::ifstream f(cfg.encoder_weights, std::ios::binary);
    uint64_t h = 1469598103934665603ULL;
    char c;
    while (f.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return "file:" + std::to_string(h);
}

inline Checkpoint snapshot(const TrainConfig& cfg, DerainModels<float>& models, Adam<float>& adam,
                           const MemoryBank& bank, int64_t epoch, int64_t step, uint64_t rng_state) {
    Checkpoint ck;
    ck.config_text = config_to_ini(cfg);
    ck.config_hash = config_hash(cfg);
    ck.encoder_ref = encoder_reference(cfg);
    ck.epoch = epoch;
    ck.step = step;
    ck.rng_state = rng_state;
    for (const auto& p : models.param_list()) ck.tensors.emplace_back(p.name, p.param->value);
    ck.adam_m = adam.moments1();
    ck.adam_v = adam.moments2();
    ck.adam_t = adam.steps();
    if (cfg.checkpoint_bank) {
        ck.has_bank = true;
        ck.bank_capacity = bank.capacity();
        for (size_t i = 0; i < bank.size(); ++i)
            ck.bank_entries.emplace_back(static_cast<uint8_t>(bank.entry(i).tag), bank.entry(i).rain);
    }
    return ck;
}

/// Load model parameters and buffers only (enough for inference).
inline void restore_models(const Checkpoint& ck, DerainModels<float>& models) {
    ParamList<float> params = models.param_list();
    if (ck.tensors.size() != params.size())
        throw FormatError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = ck.tensors[i];
        if (name != params[i].name) throw FormatError("checkpoint tensor order mismatch at " + name);
        if (!t.same_shape(params[i].param->value))
            throw FormatError("checkpoint tensor shape mismatch at " + name + ": " + shape_str(t));
        params[i].param->value = t;
    }
}

/// Load full training state into freshly built models/optimizer. Throws
/// FormatError on any name or shape mismatch.
inline void restore_into(const Checkpoint& ck, DerainModels<float>& models, Adam<float>& adam, MemoryBank& bank) {
    restore_models(ck, models);
    ParamList<float> params = models.param_list();
    size_t k = 0;
    for (const auto& p : params) {
        if (!p.trainable) continue;
        if (k >= ck.adam_m.size()) throw FormatError("checkpoint optimizer state too short");
        adam.moments1()[k] = ck.adam_m[k];
        adam.moments2()[k] = ck.adam_v[k];
        ++k;
    }
    adam.set_steps(ck.adam_t);
    if (ck.has_bank) {
        bank = MemoryBank(ck.bank_capacity);
        for (const auto& [tag, t] : ck.bank_entries) bank.push(t, static_cast<RainOrigin>(tag));
    }
}

}  // namespace semidrd

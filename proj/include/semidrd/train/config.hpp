#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "semidrd/core/errors.hpp"
#include "semidrd/nn/detail_repair_net.hpp"

namespace semidrd {

/// Every knob of the system in one structure, serialized as key=value
/// sections. The config plus the seed fully determine a run.
struct TrainConfig {
    // [data]
    int batch = 8;
    int64_t patch = 100;
    uint64_t seed = 0;

    // [model]
    int64_t channels = 64;
    int rrn_blocks = 16;
    int drn_blocks = 16;
    bool se = true;
    int64_t se_reduction = 16;
    std::string block_kind = "sdcab";
    std::vector<int> dilations = {1, 3, 5};
    double bn_eps = 1e-5;

    // [contrastive]
    std::string encoder = "vgg16";
    std::string encoder_weights;  // optional weight file; empty = seeded init
    std::vector<double> encoder_norm_mean;  // optional input normalization
    std::vector<double> encoder_norm_std;
    size_t bank_capacity = 64;
    int m = 4;
    std::vector<double> omega = {0.2, 0.5, 1.0};
    double eps = 1e-7;

    // [optim]
    double lr = 1e-3;
    double decay_factor = 0.2;
    std::vector<int> decay_epochs = {30, 50, 80};
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_grad = 0.0;  // 0 disables clipping

    // [train]
    int epochs = 150;
    double lambda_unsup = 1.0;
    double lambda_r = 0.5;
    double lambda_dual = 0.5;
    bool semi_supervised = true;
    bool checkpoint_bank = false;

    void validate() const {
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (patch < 9) throw ConfigError("patch must be >= 9");
        if (channels < 1) throw ConfigError("channels must be >= 1");
        if (rrn_blocks < 0 || drn_blocks < 0) throw ConfigError("block counts must be >= 0");
        if (se && (se_reduction < 1 || channels % se_reduction != 0))
            throw ConfigError("se_reduction must divide channels");
        block_kind_from_string(block_kind);
        if (dilations.empty()) throw ConfigError("dilations must be non-empty");
        for (int d : dilations)
            if (d < 1) throw ConfigError("dilations must be >= 1");
        if (lambda_unsup < 0 || lambda_r < 0 || lambda_dual < 0) throw ConfigError("loss weights must be >= 0");
        if (lr <= 0) throw ConfigError("lr must be > 0");
        if (decay_factor <= 0 || decay_factor >= 1) throw ConfigError("decay_factor must be in (0,1)");
        for (size_t i = 1; i < decay_epochs.size(); ++i)
            if (decay_epochs[i] <= decay_epochs[i - 1]) throw ConfigError("decay_epochs must be strictly increasing");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (m < 1) throw ConfigError("m must be >= 1");
        if (eps <= 0) throw ConfigError("eps must be > 0");
        if (encoder_norm_mean.size() != encoder_norm_std.size())
            throw ConfigError("encoder normalization needs matching mean/std lists");
        if (!encoder_norm_mean.empty() && encoder_norm_mean.size() != 3)
            throw ConfigError("encoder normalization expects 3 channels");
        for (double s : encoder_norm_std)
            if (s <= 0) throw ConfigError("encoder normalization stds must be > 0");
        for (double w : omega)
            if (w < 0) throw ConfigError("omega must be nonnegative");
        if (bank_capacity < 1) throw ConfigError("bank_capacity must be >= 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
}

template <class F>
std::string join(const std::vector<F>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

}  // namespace detail

/// Apply one "section.key = value" override. Used both by the file parser and
/// by command-line --set flags.
inline void config_set(TrainConfig& c, const std::string& section, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::split_list;
    const std::string k = section + "." + key;
    try {
        if (k == "data.batch") c.batch = std::stoi(value);
        else if (k == "data.patch") c.patch = std::stoll(value);
        else if (k == "data.seed") c.seed = std::stoull(value);
        else if (k == "model.channels") c.channels = std::stoll(value);
        else if (k == "model.rrn_blocks") c.rrn_blocks = std::stoi(value);
        else if (k == "model.drn_blocks") c.drn_blocks = std::stoi(value);
        else if (k == "model.se") c.se = parse_bool(value);
        else if (k == "model.se_reduction") c.se_reduction = std::stoll(value);
        else if (k == "model.block_kind") c.block_kind = value;
        else if (k == "model.dilations") {
            c.dilations.clear();
            for (const auto& s : split_list(value)) c.dilations.push_back(std::stoi(s));
        } else if (k == "model.bn_eps") c.bn_eps = std::stod(value);
        else if (k == "contrastive.encoder") c.encoder = value;
        else if (k == "contrastive.encoder_weights") c.encoder_weights = value;
        else if (k == "contrastive.encoder_norm_mean") {
            c.encoder_norm_mean.clear();
            for (const auto& s : split_list(value)) c.encoder_norm_mean.push_back(std::stod(s));
        } else if (k == "contrastive.encoder_norm_std") {
            c.encoder_norm_std.clear();
            for (const auto& s : split_list(value)) c.encoder_norm_std.push_back(std::stod(s));
        } else if (k == "contrastive.bank_capacity") c.bank_capacity = std::stoull(value);
        else if (k == "contrastive.m") c.m = std::stoi(value);
        else if (k == "contrastive.omega") {
            c.omega.clear();
            for (const auto& s : split_list(value)) c.omega.push_back(std::stod(s));
        } else if (k == "contrastive.eps") c.eps = std::stod(value);
        else if (k == "optim.lr") c.lr = std::stod(value);
        else if (k == "optim.decay_factor") c.decay_factor = std::stod(value);
        else if (k == "optim.decay_epochs") {
            c.decay_epochs.clear();
            for (const auto& s : split_list(value)) c.decay_epochs.push_back(std::stoi(s));
        } else if (k == "optim.adam_beta1") c.adam_beta1 = std::stod(value);
        else if (k == "optim.adam_beta2") c.adam_beta2 = std::stod(value);
        else if (k == "optim.adam_eps") c.adam_eps = std::stod(value);
        else if (k == "optim.clip_grad") c.clip_grad = std::stod(value);
        else if (k == "train.epochs") c.epochs = std::stoi(value);
        else if (k == "train.lambda_unsup") c.lambda_unsup = std::stod(value);
        else if (k == "train.lambda_r") c.lambda_r = std::stod(value);
        else if (k == "train.lambda_dual") c.lambda_dual = std::stod(value);
        else if (k == "train.semi_supervised") c.semi_supervised = parse_bool(value);
        else if (k == "train.checkpoint_bank") c.checkpoint_bank = parse_bool(value);
        else throw ConfigError("unknown config key: " + k);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + k + ": '" + value + "'");
    }
}

inline std::string config_to_ini(const TrainConfig& c) {
    using detail::join;
    std::ostringstream os;
    os.precision(17);
    os << "[data]\n";
    os << "batch = " << c.batch << "\n";
    os << "patch = " << c.patch << "\n";
    os << "seed = " << c.seed << "\n\n";
    os << "[model]\n";
    os << "channels = " << c.channels << "\n";
    os << "rrn_blocks = " << c.rrn_blocks << "\n";
    os << "drn_blocks = " << c.drn_blocks << "\n";
    os << "se = " << (c.se ? "true" : "false") << "\n";
    os << "se_reduction = " << c.se_reduction << "\n";
    os << "block_kind = " << c.block_kind << "\n";
    os << "dilations = " << join(c.dilations) << "\n";
    os << "bn_eps = " << c.bn_eps << "\n\n";
    os << "[contrastive]\n";
    os << "encoder = " << c.encoder << "\n";
    os << "encoder_weights = " << c.encoder_weights << "\n";
    os << "encoder_norm_mean = " << join(c.encoder_norm_mean) << "\n";
    os << "encoder_norm_std = " << join(c.encoder_norm_std) << "\n";
    os << "bank_capacity = " << c.bank_capacity << "\n";
    os << "m = " << c.m << "\n";
    os << "omega = " << join(c.omega) << "\n";
    os << "eps = " << c.eps << "\n\n";
    os << "[optim]\n";
    os << "lr = " << c.lr << "\n";
    os << "decay_factor = " << c.decay_factor << "\n";
    os << "decay_epochs = " << join(c.decay_epochs) << "\n";
    os << "adam_beta1 = " << c.adam_beta1 << "\n";
    os << "adam_beta2 = " << c.adam_beta2 << "\n";
    os << "adam_eps = " << c.adam_eps << "\n";
    os << "clip_grad = " << c.clip_grad << "\n\n";
    os << "[train]\n";
    os << "epochs = " << c.epochs << "\n";
    os << "lambda_unsup = " << c.lambda_unsup << "\n";
    os << "lambda_r = " << c.lambda_r << "\n";
    os << "lambda_dual = " << c.lambda_dual << "\n";
    os << "semi_supervised = " << (c.semi_supervised ? "true" : "false") << "\n";
    os << "checkpoint_bank = " << (c.checkpoint_bank ? "true" : "false") << "\n";
    return os.str();
}

inline TrainConfig config_from_ini(const std::string& text) {
    TrainConfig c;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value at line " + std::to_string(lineno));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError("key outside any section at line " + std::to_string(lineno));
        config_set(c, section, key, value);
    }
    return c;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_ini(ss.str());
}

/// FNV-1a over the canonical serialization.
inline uint64_t config_hash(const TrainConfig& c) {
    const std::string s = config_to_ini(c);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace semidrd

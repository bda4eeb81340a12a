#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cids/config.hpp"
#include "cids/errors.hpp"
#include "cids/hash.hpp"

namespace cids {

inline uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file for digest: " + path);
    Fnv1a64 h;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h.update(buf, static_cast<size_t>(in.gcount()));
    return h.digest();
}

inline std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Written next to every mutating command's output: config snapshot, input
// digests, seeds, version, thread count, stage timings. Everything except
// the timings is deterministic.
class RunManifest {
public:
    RunManifest(std::string command, nlohmann::json config_snapshot)
        : command_(std::move(command)), config_(std::move(config_snapshot)) {}

    void add_input(const std::string& path) { inputs_.push_back({path, hex64(file_digest(path))}); }

    void add_timing(const std::string& stage, double seconds) { timings_.push_back({stage, seconds}); }

    void set_threads(int threads) { threads_ = threads; }

    nlohmann::json to_json() const {
        nlohmann::json inputs = nlohmann::json::array();
        for (const auto& [path, digest] : inputs_)
            inputs.push_back({{"path", path}, {"fnv1a64", digest}});
        nlohmann::json timings = nlohmann::json::array();
        for (const auto& [stage, seconds] : timings_)
            timings.push_back({{"stage", stage}, {"seconds", seconds}});
        return nlohmann::json{{"command", command_}, {"version", std::string(kVersion)},
                              {"threads", threads_},  {"config", config_},
                              {"inputs", inputs},     {"timings", timings}};
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw InputError("cannot write manifest: " + path);
        out << to_json().dump(2) << '\n';
    }

private:
    std::string command_;
    nlohmann::json config_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::pair<std::string, double>> timings_;
    int threads_ = 1;
};

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace cids

#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cobso/errors.hpp"
#include "cobso/grid.hpp"

namespace cobso {

/// FNV-1a 64-bit digest, hex-encoded.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write file: " + path);
    out.write(bytes.data(), long(bytes.size()));
}

/// Every CLI run writes one manifest: the command, its effective config,
/// seeds, digests of the inputs and outputs, and wall-clock timings. Reruns
/// with identical inputs reproduce every output byte for byte (timings are
/// informational and live only here).
class RunManifest {
public:
    RunManifest(std::string command, std::uint64_t seed) : command_(std::move(command)) {
        j_["command"] = command_;
        j_["seed"] = seed;
        j_["config"] = nlohmann::ordered_json::object();
        j_["inputs"] = nlohmann::ordered_json::object();
        j_["outputs"] = nlohmann::ordered_json::object();
        start_ = std::chrono::steady_clock::now();
    }

    void set_config(const nlohmann::ordered_json& cfg) { j_["config"] = cfg; }

    void add_input(const std::string& label, const std::string& path) {
        j_["inputs"][label] = {{"path", path}, {"fnv1a64", fnv1a_hex(read_file_bytes(path))}};
    }

    /// Writes the payload and records its digest.
    void write_output(const std::string& label, const std::string& path,
                      const std::string& bytes) {
        write_file_bytes(path, bytes);
        j_["outputs"][label] = {{"path", path}, {"fnv1a64", fnv1a_hex(bytes)}};
    }

    void note(const std::string& key, const nlohmann::ordered_json& value) { j_[key] = value; }

    void save(const std::string& path) {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        j_["timing_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        write_file_bytes(path, j_.dump(2) + "\n");
    }

    const nlohmann::ordered_json& json() const { return j_; }

private:
    std::string command_;
    nlohmann::ordered_json j_;
    std::chrono::steady_clock::time_point start_;
};

/// Deterministic CSV serialization of a surface: one row per cell, cell
/// centers in meters, shortest round-trip float formatting.
inline std::string surface_csv(const Surface& s, const std::string& value_column = "value") {
    auto fmt = [](double v) {
        char buf[40];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        return std::string(buf, ptr);
    };
    std::string out = "x,y," + value_column + "\n";
    for (int iy = 0; iy < s.pitch.ny; ++iy)
        for (int ix = 0; ix < s.pitch.nx; ++ix) {
            const Vec2 c = s.pitch.cell_center(ix, iy);
            out += fmt(c.x) + "," + fmt(c.y) + "," + fmt(s.at(ix, iy)) + "\n";
        }
    return out;
}

} // namespace cobso

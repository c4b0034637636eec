#include "coastal/sim/csf.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "coastal/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace coastal::sim {

namespace {

std::string frame_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d.bin", k);
    return buf;
}

void write_f32(const std::string& path, const std::vector<float>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(data.data()), (std::streamsize)(data.size() * sizeof(float)));
}

std::vector<float> read_f32(const std::string& path, size_t expect) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    std::vector<float> data(expect);
    f.read(reinterpret_cast<char*>(data.data()), (std::streamsize)(expect * sizeof(float)));
    if ((size_t)f.gcount() != expect * sizeof(float)) throw ConfigError("truncated file " + path);
    return data;
}

std::vector<float> to_f32(const Field& f) {
    std::vector<float> out(f.v.size());
    for (size_t k = 0; k < f.v.size(); ++k) out[k] = (float)f.v[k];
    return out;
}

}  // namespace

void write_csf(const std::string& dir, const SimConfig& cfg, const std::vector<SimState>& frames, uint64_t seed) {
    if (frames.empty()) throw ConfigError("refusing to write CSF with no frames");
    fs::create_directories(dir);

    json cons = json::array();
    for (const auto& c : cfg.constituents)
        cons.push_back({{"amplitude", c.amplitude}, {"divisor", c.divisor}, {"phase", c.phase}});
    json meta = {{"ny", cfg.ny},
                 {"nx", cfg.nx},
                 {"dx", cfg.dx},
                 {"dy", cfg.dy},
                 {"dt", cfg.dt},
                 {"t_end", cfg.t_end},
                 {"output_stride", cfg.output_stride},
                 {"g", cfg.g},
                 {"f_c", cfg.f_c},
                 {"C_f", cfg.c_f},
                 {"H_min", cfg.h_min},
                 {"basin", cfg.basin},
                 {"frame_count", (int)frames.size()},
                 {"seed", seed},
                 {"constituents", cons},
                 {"dtype", "f32"},
                 {"endianness", "little"}};
    std::ofstream mf(dir + "/meta.json");
    mf << meta.dump(2) << "\n";

    const auto& first = frames.front();
    std::vector<float> maskf(first.mask.size());
    for (size_t k = 0; k < maskf.size(); ++k) maskf[k] = first.mask[k] ? 1.0f : 0.0f;
    write_f32(dir + "/mask.bin", maskf);
    write_f32(dir + "/bathy.bin", to_f32(first.h_b));

    for (size_t k = 0; k < frames.size(); ++k) {
        std::vector<float> plane = to_f32(frames[k].xi);
        const auto u = to_f32(frames[k].u);
        const auto v = to_f32(frames[k].v);
        plane.insert(plane.end(), u.begin(), u.end());
        plane.insert(plane.end(), v.begin(), v.end());
        write_f32(dir + "/" + frame_name((int)k), plane);
    }
}

CsfReader::CsfReader(const std::string& dir) : dir_(dir) {
    std::ifstream mf(dir + "/meta.json");
    if (!mf) throw ConfigError("missing meta.json in " + dir);
    json meta = json::parse(mf, nullptr, /*allow_exceptions=*/false);
    if (meta.is_discarded()) throw ConfigError("malformed meta.json in " + dir);
    meta_.ny = meta.at("ny");
    meta_.nx = meta.at("nx");
    meta_.dx = meta.at("dx");
    meta_.dy = meta.at("dy");
    meta_.dt = meta.at("dt");
    meta_.t_end = meta.value("t_end", 0.0);
    meta_.output_stride = meta.at("output_stride");
    meta_.g = meta.value("g", 9.81);
    meta_.f_c = meta.value("f_c", 0.0);
    meta_.c_f = meta.value("C_f", 0.0);
    meta_.h_min = meta.value("H_min", 0.05);
    meta_.basin = meta.value("basin", "");
    meta_.frame_count = meta.at("frame_count");
    meta_.seed = meta.value("seed", 0ull);
    meta_.dtype = meta.value("dtype", "f32");
    meta_.endianness = meta.value("endianness", "little");
    if (meta_.dtype != "f32" || meta_.endianness != "little")
        throw ConfigError("unsupported CSF encoding in " + dir);
    for (const auto& c : meta.value("constituents", json::array()))
        meta_.constituents.push_back({c.at("amplitude"), c.at("divisor"), c.at("phase")});

    const size_t n = (size_t)meta_.ny * meta_.nx;
    mask_ = read_f32(dir + "/mask.bin", n);
    bathy_ = read_f32(dir + "/bathy.bin", n);
}

std::vector<float> CsfReader::frame(int k) const {
    if (k < 0 || k >= meta_.frame_count)
        throw ConfigError("frame index " + std::to_string(k) + " out of range in " + dir_);
    return read_f32(dir_ + "/" + frame_name(k), 3 * (size_t)meta_.ny * meta_.nx);
}

}  // namespace coastal::sim

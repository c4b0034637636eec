#include "coastal/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace coastal::model {

namespace {
constexpr char kMagic[8] = {'C', 'D', 'N', 'C', 'K', 'P', 'T', '1'};

json config_json(const ModelConfig& c) {
    return {{"feat", c.feat},     {"n_rcab", c.n_rcab}, {"reduction", c.reduction},
            {"window", c.window}, {"n_heads", c.n_heads}, {"in_ch", c.in_ch},
            {"t_in", c.t_in},     {"t_out", c.t_out}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.feat = j.at("feat");
    c.n_rcab = j.at("n_rcab");
    c.reduction = j.at("reduction");
    c.window = j.at("window");
    c.n_heads = j.at("n_heads");
    c.in_ch = j.at("in_ch");
    c.t_in = j.at("t_in");
    c.t_out = j.at("t_out");
    return c;
}
}  // namespace

void save_checkpoint(const std::string& path, const Params<float>& params, int64_t iteration) {
    json hdr = {{"config", config_json(params.cfg)}, {"seed", params.seed}, {"iteration", iteration}};
    json plist = json::array();
    for (size_t i = 0; i < params.names.size(); ++i)
        plist.push_back({{"name", params.names[i]}, {"shape", params.values[i].shape}});
    hdr["params"] = plist;
    const std::string hs = hdr.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write checkpoint " + path);
    f.write(kMagic, 8);
    const uint32_t len = (uint32_t)hs.size();
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), (std::streamsize)hs.size());
    for (const auto& t : params.values)
        f.write(reinterpret_cast<const char*>(t.data()), (std::streamsize)(t.size() * sizeof(float)));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read checkpoint " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw ConfigError("not a checkpoint file: " + path);
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    json hdr = json::parse(hs, nullptr, false);
    if (hdr.is_discarded()) throw ConfigError("corrupt checkpoint header in " + path);

    Checkpoint ck;
    ck.params.cfg = config_from_json(hdr.at("config"));
    ck.params.seed = hdr.at("seed");
    ck.iteration = hdr.at("iteration");
    for (const auto& p : hdr.at("params")) {
        nn::Shape shape = p.at("shape").get<nn::Shape>();
        nn::Tensor<float> t(shape);
        f.read(reinterpret_cast<char*>(t.data()), (std::streamsize)(t.size() * sizeof(float)));
        if (!f) throw ConfigError("truncated checkpoint " + path);
        ck.params.add(p.at("name"), std::move(t));
    }
    return ck;
}

}  // namespace coastal::model

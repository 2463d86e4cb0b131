// SPDX-License-Identifier: Apache-2.0
#include "fairmib/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fairmib/errors.hpp"

using nlohmann::json;

namespace fairmib {

namespace {
constexpr char kMagic[8] = {'F', 'M', 'I', 'B', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["meta"] = ckpt.meta_json;
    json plist = json::array();
    for (const auto& [name, m] : ckpt.params)
        plist.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
    header["params"] = plist;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, m] : ckpt.params)
        out.write(reinterpret_cast<const char*>(m.data.data()),
                  static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!out) throw IoError("short write to checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError("'" + path + "' is not a checkpoint file");
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen > (1ull << 30))
        throw ValidationError("checkpoint '" + path + "' has a corrupt header length");
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw ValidationError("checkpoint '" + path + "' is truncated");

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint '" + path + "' header is malformed: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.meta_json = header.value("meta", std::string{});
    for (const auto& p : header.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        const int rows = p.at("rows").get<int>();
        const int cols = p.at("cols").get<int>();
        if (rows < 0 || cols < 0 || static_cast<int64_t>(rows) * cols > (1ll << 32))
            throw ValidationError("checkpoint parameter '" + name + "' has absurd shape");
        Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data.data()),
                static_cast<std::streamsize>(m.data.size() * sizeof(double)));
        if (!in)
            throw ValidationError("checkpoint '" + path + "' payload is truncated at '" + name +
                                  "'");
        ckpt.params.emplace(name, std::move(m));
    }
    return ckpt;
}

}  // namespace fairmib

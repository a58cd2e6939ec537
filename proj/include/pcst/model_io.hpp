#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "errors.hpp"
#include "mini_denoiser.hpp"
#include "tensor_io.hpp"

namespace pcst {

/// Writes `path` (JSON header) plus two PCRF weight files next to it:
/// <stem>.layer1.pcrf with shape [filters, channels, 3, 3] and
/// <stem>.layer2.pcrf with shape [channels, filters, 3, 3].
inline void save_model(const MiniDenoiser& m, const std::filesystem::path& path) {
    const std::string stem = path.stem().string();
    const auto to_tensor = [](const std::vector<double>& w, std::uint32_t a, std::uint32_t b) {
        Tensor t({a, b, 3, 3});
        for (std::size_t i = 0; i < w.size(); ++i) t.data[i] = static_cast<float>(w[i]);
        return t;
    };
    const auto f = static_cast<std::uint32_t>(m.filters), c = static_cast<std::uint32_t>(m.channels);
    save_tensor(to_tensor(m.layer1, f, c), path.parent_path() / (stem + ".layer1.pcrf"));
    save_tensor(to_tensor(m.layer2, c, f), path.parent_path() / (stem + ".layer2.pcrf"));

    nlohmann::json header = {{"format", "pcst-mini-denoiser"}, {"version", 1},
                             {"channels", m.channels},      {"filters", m.filters},
                             {"layer1", stem + ".layer1.pcrf"}, {"layer2", stem + ".layer2.pcrf"}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write model header " + path.string());
    out << header.dump(2) << "\n";
}

inline MiniDenoiser load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open model " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("model header: ") + e.what(), 0);
    }
    if (header.value("format", "") != "pcst-mini-denoiser") throw format_error("model header: wrong format tag", 0);
    MiniDenoiser m(header.at("channels").get<int>(), header.at("filters").get<int>());
    const Tensor l1 = load_tensor(path.parent_path() / header.at("layer1").get<std::string>());
    const Tensor l2 = load_tensor(path.parent_path() / header.at("layer2").get<std::string>());
    if (l1.size() != m.layer1.size() || l2.size() != m.layer2.size())
        throw format_error("model weights do not match header dimensions", 0);
    for (std::size_t i = 0; i < l1.size(); ++i) m.layer1[i] = l1.data[i];
    for (std::size_t i = 0; i < l2.size(); ++i) m.layer2[i] = l2.data[i];
    return m;
}

} // namespace pcst
